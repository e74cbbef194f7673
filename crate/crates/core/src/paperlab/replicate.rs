//! The replication table: every claimed constant or bound, measured.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::Rng;
use serde::Serialize;

use super::generators::{
    gen_fractional_beats_integral_pair, gen_single_query_gap, gen_single_query_gap_randomtie, gen_uniform_ipoa,
};
use super::search::{
    log_uniform, random_instance, run_suite, sample_rng, worst_case_search, InstanceShape, SuiteConfig,
};
use crate::bestresponse::{verify_equilibrium, DeviationFamily};
use crate::bounds::{
    certify_rfpa, qp_local_optimality_bid_lb, qp_poa_bound, qp_spend_lowerbound, qp_stationary_bid, DEFAULT_BETA_GRID,
};
use crate::error::{Error, Result};
use crate::mechanisms::{qp_column, Mechanism};
use crate::model::{liquid_welfare, BidProfile, Budget, Instance};
use crate::optimum::{opt_fractional, opt_fractional_bruteforce, opt_integral, single_query_fractional_greedy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// `measured >= claimed - tolerance`.
    AtLeast,
    /// `measured <= claimed + tolerance`.
    AtMost,
    /// `|measured - claimed| <= tolerance`.
    Equal,
    /// Reported only; always passes.
    Info,
}

impl Direction {
    pub fn holds(self, claimed: f64, measured: f64, tolerance: f64) -> bool {
        match self {
            Direction::AtLeast => measured >= claimed - tolerance,
            Direction::AtMost => measured <= claimed + tolerance,
            Direction::Equal => (measured - claimed).abs() <= tolerance,
            Direction::Info => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationRow {
    pub name: String,
    pub group: String,
    pub claimed: f64,
    #[serde(serialize_with = "crate::model::serialize_extended_f64")]
    pub measured: f64,
    pub direction: Direction,
    pub tolerance: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub runtime_ms: Option<u64>,
    pub note: String,
}

/// Sample counts of the randomized rows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteSizes {
    pub fpa: usize,
    pub fpa_within_budgets: usize,
    pub uniform_fpa: usize,
    pub rfpa: usize,
    pub qp_profiles: usize,
    pub greedy_instances: usize,
    pub grid_instances: usize,
    pub determinism_samples: usize,
}

impl Default for SuiteSizes {
    fn default() -> Self {
        Self {
            fpa: 10_000,
            fpa_within_budgets: 10_000,
            uniform_fpa: 1_000,
            rfpa: 1_000,
            qp_profiles: 1_000,
            greedy_instances: 1_000,
            grid_instances: 200,
            determinism_samples: 500,
        }
    }
}

impl SuiteSizes {
    /// Small counts for smoke runs.
    pub fn quick() -> Self {
        Self {
            fpa: 200,
            fpa_within_budgets: 200,
            uniform_fpa: 100,
            rfpa: 50,
            qp_profiles: 100,
            greedy_instances: 100,
            grid_instances: 20,
            determinism_samples: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ReplicationConfig {
    pub seed: u64,
    /// Keep only rows whose name or group is listed.
    pub rows: Option<Vec<String>>,
    /// Per-row tolerance overrides by row name.
    pub tolerances: BTreeMap<String, f64>,
    pub sizes: SuiteSizes,
    /// Record wall-clock time per row.
    pub timings: bool,
}

struct Row {
    name: String,
    claimed: f64,
    measured: f64,
    direction: Direction,
    tolerance: f64,
    note: String,
}

fn row(name: impl Into<String>, claimed: f64, measured: f64, direction: Direction, tolerance: f64) -> Row {
    Row {
        name: name.into(),
        claimed,
        measured,
        direction,
        tolerance,
        note: String::new(),
    }
}

impl Row {
    fn note(mut self, note: impl Into<String>) -> Self {
        self.note = note.into();
        self
    }
}

type Group = fn(&ReplicationConfig) -> Result<Vec<Row>>;

const GROUPS: &[(&str, Group)] = &[
    ("gap", gap_rows),
    ("pair", pair_rows),
    ("random_tie", random_tie_rows),
    ("fpa_random", fpa_random_rows),
    ("fpa_within_budgets", fpa_within_budgets_rows),
    ("uniform_construction", uniform_construction_rows),
    ("uniform_random", uniform_random_rows),
    ("rfpa_certificate", rfpa_certificate_rows),
    ("rfpa_random", rfpa_random_rows),
    ("uniform_rfpa_certificate", uniform_rfpa_certificate_rows),
    ("qp_bound", qp_bound_rows),
    ("qp_spend", qp_spend_rows),
    ("oracle", oracle_rows),
    ("determinism", determinism_rows),
];

/// Names of the row groups, in table order.
pub fn replication_groups() -> Vec<&'static str> {
    GROUPS.iter().map(|(g, _)| *g).collect()
}

fn wanted_group(cfg: &ReplicationConfig, group: &str) -> bool {
    match &cfg.rows {
        None => true,
        Some(list) => list
            .iter()
            .any(|f| f == group || f.strip_prefix(group).is_some_and(|rest| rest.starts_with('_'))),
    }
}

fn wanted_row(cfg: &ReplicationConfig, group: &str, name: &str) -> bool {
    match &cfg.rows {
        None => true,
        Some(list) => list.iter().any(|f| f == group || f == name),
    }
}

/// Runs every selected group. A group that errors contributes one failing
/// row named `<group>_error` instead of aborting the table.
pub fn replicate_all(cfg: &ReplicationConfig) -> Vec<ReplicationRow> {
    let mut out = Vec::new();
    for (group, run) in GROUPS {
        if !wanted_group(cfg, group) {
            continue;
        }
        let start = Instant::now();
        let rows = run(cfg).unwrap_or_else(|e| {
            vec![row(format!("{group}_error"), 0.0, f64::NAN, Direction::Equal, 0.0).note(e.to_string())]
        });
        let elapsed = start.elapsed().as_millis() as u64;
        for r in rows {
            if !wanted_row(cfg, group, &r.name) {
                continue;
            }
            let tolerance = cfg.tolerances.get(&r.name).copied().unwrap_or(r.tolerance);
            out.push(ReplicationRow {
                pass: r.direction.holds(r.claimed, r.measured, tolerance),
                name: r.name,
                group: group.to_string(),
                claimed: r.claimed,
                measured: r.measured,
                direction: r.direction,
                tolerance,
                runtime_ms: cfg.timings.then_some(elapsed),
                note: r.note,
            });
        }
    }
    out
}

fn group_seed(cfg: &ReplicationConfig, group: u64) -> u64 {
    cfg.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(group)
}

fn gap_rows(_: &ReplicationConfig) -> Result<Vec<Row>> {
    let mut rows = Vec::new();
    for n in 2..=8 {
        let inst = gen_single_query_gap(n)?;
        rows.push(row(
            format!("gap_opt_n{n}"),
            n as f64,
            opt_fractional(&inst)?.value,
            Direction::Equal,
            1e-7,
        ));
        rows.push(row(
            format!("gap_iopt_n{n}"),
            1.0,
            opt_integral(&inst)?.value,
            Direction::Equal,
            1e-7,
        ));
    }
    Ok(rows)
}

fn pair_rows(_: &ReplicationConfig) -> Result<Vec<Row>> {
    let inst = gen_fractional_beats_integral_pair();
    Ok(vec![
        row("pair_opt", 2.0, opt_fractional(&inst)?.value, Direction::Equal, 1e-7),
        row("pair_iopt", 1.0, opt_integral(&inst)?.value, Direction::Equal, 1e-7),
    ])
}

fn random_tie_rows(_: &ReplicationConfig) -> Result<Vec<Row>> {
    let (n, eps) = (4, 0.01);
    let (inst, bids) = gen_single_query_gap_randomtie(n, eps)?;
    let mech = Mechanism::fpa();
    let report = verify_equilibrium(&inst, &mech, &bids, &DeviationFamily::FpaSubset, inst.default_epsilon())?;
    let lw = liquid_welfare(&inst, mech.allocate(&inst, &bids)?.allocation())?;
    let ratio = opt_fractional(&inst)?.value / lw;
    Ok(vec![
        row(
            "random_tie_verified_n4",
            1.0,
            f64::from(u8::from(report.is_equilibrium)),
            Direction::Equal,
            0.0,
        ),
        row(
            "random_tie_ratio_n4",
            n as f64 / 2.0,
            ratio,
            Direction::AtLeast,
            n as f64 * eps,
        )
        .note("Opt / LW against n/2, slack n*eps"),
    ])
}

fn suite(
    cfg: &ReplicationConfig,
    group: u64,
    mechanism: Mechanism,
    uniform: bool,
    shape: InstanceShape,
    target: usize,
) -> Result<super::SuiteSummary> {
    run_suite(&SuiteConfig {
        mechanism,
        uniform,
        shape,
        target,
        max_attempts: target.saturating_mul(20),
        max_rounds: 200,
        seed: group_seed(cfg, group),
    })
}

fn small_shape(within: bool) -> InstanceShape {
    InstanceShape {
        bidders: (2, 4),
        queries: (1, 4),
        zero_prob: 0.2,
        values_within_budgets: within,
    }
}

fn common_suite_rows(prefix: &str, target: usize, s: &super::SuiteSummary) -> Vec<Row> {
    vec![
        row(
            format!("{prefix}_equilibria"),
            target as f64,
            s.equilibria as f64,
            Direction::AtLeast,
            0.0,
        )
        .note(format!("{} attempts", s.attempts)),
        row(
            format!("{prefix}_unverified"),
            0.0,
            s.unverified as f64,
            Direction::Equal,
            0.0,
        ),
        row(
            format!("{prefix}_diagnostic_failures"),
            0.0,
            s.failed_checks as f64,
            Direction::Equal,
            0.0,
        )
        .note(format!("{:?}", s.failed_check_names)),
    ]
}

fn fpa_random_rows(cfg: &ReplicationConfig) -> Result<Vec<Row>> {
    let target = cfg.sizes.fpa;
    let s = suite(cfg, 1, Mechanism::fpa(), false, small_shape(false), target)?;
    let mut rows = common_suite_rows("fpa_random", target, &s);
    rows.push(row("fpa_random_poa_excess", 0.0, s.max_poa_excess, Direction::AtMost, 1e-6).note("max Opt/LW - n"));
    rows.push(row("fpa_random_ipoa", 2.0, s.max_ipoa, Direction::AtMost, 1e-6));
    Ok(rows)
}

fn fpa_within_budgets_rows(cfg: &ReplicationConfig) -> Result<Vec<Row>> {
    let target = cfg.sizes.fpa_within_budgets;
    let s = suite(cfg, 2, Mechanism::fpa(), false, small_shape(true), target)?;
    let mut rows = common_suite_rows("fpa_within_budgets", target, &s);
    rows.push(row(
        "fpa_within_budgets_poa",
        2.0,
        s.max_poa_within_budgets,
        Direction::AtMost,
        1e-6,
    ));
    rows.push(row("fpa_within_budgets_ipoa", 2.0, s.max_ipoa, Direction::AtMost, 1e-6));
    Ok(rows)
}

fn uniform_construction_rows(_: &ReplicationConfig) -> Result<Vec<Row>> {
    let (n, eps) = (4, 0.01);
    let (inst, bids) = gen_uniform_ipoa(n, eps)?;
    let mech = Mechanism::fpa();
    let report = verify_equilibrium(
        &inst,
        &mech,
        &bids,
        &DeviationFamily::UniformScan,
        inst.default_epsilon(),
    )?;
    let lw = liquid_welfare(&inst, mech.allocate(&inst, &bids)?.allocation())?;
    let iopt = opt_integral(&inst)?.value;
    let nf = n as f64;
    Ok(vec![
        row(
            "uniform_construction_verified",
            1.0,
            f64::from(u8::from(report.is_equilibrium)),
            Direction::Equal,
            0.0,
        ),
        row(
            "uniform_construction_lw",
            1.0 + eps + 2.0 * (nf - 1.0) * eps,
            lw,
            Direction::Equal,
            1e-9,
        ),
        row("uniform_construction_iopt", nf + eps, iopt, Direction::Equal, 1e-9),
        row(
            "uniform_construction_ratio",
            1.0 / nf + 3.0 * eps,
            lw / (nf + eps),
            Direction::AtMost,
            0.0,
        )
        .note("LW / (n + eps)"),
    ])
}

fn uniform_random_rows(cfg: &ReplicationConfig) -> Result<Vec<Row>> {
    let target = cfg.sizes.uniform_fpa;
    let s = suite(cfg, 3, Mechanism::fpa(), true, small_shape(false), target)?;
    let mut rows = common_suite_rows("uniform_random", target, &s);
    rows.push(
        row(
            "uniform_random_poa_excess",
            0.0,
            s.max_poa_excess,
            Direction::AtMost,
            1e-4,
        )
        .note("max Opt/LW - n"),
    );
    Ok(rows)
}

fn rfpa_certificate_rows(_: &ReplicationConfig) -> Result<Vec<Row>> {
    let c = certify_rfpa(1.4, 0.44, Some(0.56), false, DEFAULT_BETA_GRID)?;
    Ok(vec![row(
        "rfpa_certificate",
        1.0 / 1.8,
        c.value,
        Direction::AtLeast,
        1e-4,
    )
    .note(format!("argmin beta {:.6}", c.argmin_beta))])
}

fn rfpa_random_rows(cfg: &ReplicationConfig) -> Result<Vec<Row>> {
    let target = cfg.sizes.rfpa;
    let shape = InstanceShape {
        bidders: (2, 2),
        queries: (1, 4),
        zero_prob: 0.2,
        values_within_budgets: false,
    };
    let s = suite(cfg, 4, Mechanism::Rfpa { alpha: 1.4 }, false, shape, target)?;
    let mut rows = common_suite_rows("rfpa_random", target, &s);
    rows.push(
        row("rfpa_random_poa", 1.8, s.max_poa, Direction::AtMost, 1e-6).note("equilibria relative to the grid family"),
    );
    Ok(rows)
}

fn uniform_rfpa_certificate_rows(_: &ReplicationConfig) -> Result<Vec<Row>> {
    let target = 1.0 / 1.5;
    let mut rows = Vec::new();
    let mut best = (f64::NEG_INFINITY, 0.0);
    for alpha in [7.62, 7.63] {
        let c = certify_rfpa(alpha, 0.33, None, true, DEFAULT_BETA_GRID)?;
        if c.value > best.0 {
            best = (c.value, alpha);
        }
        rows.push(
            row(
                format!("uniform_rfpa_certificate_alpha_{alpha}"),
                target,
                c.value,
                Direction::Info,
                1e-3,
            )
            .note(if c.value >= target - 1e-3 {
                "clears"
            } else {
                "does not clear"
            }),
        );
    }
    let passing: Vec<String> = rows
        .iter()
        .filter(|r| r.note == "clears")
        .map(|r| r.name.clone())
        .collect();
    rows.push(
        row("uniform_rfpa_certificate", target, best.0, Direction::AtLeast, 1e-3)
            .note(format!("gamma = 1 - eta; clearing: {}", passing.join(", "))),
    );
    Ok(rows)
}

fn qp_bound_rows(_: &ReplicationConfig) -> Result<Vec<Row>> {
    let mut rows = Vec::new();
    for eta in [0.25, 0.5, 0.9] {
        for n in [2, 10] {
            rows.push(row(
                format!("qp_bound_eta{eta}_n{n}"),
                1.0 / eta + 1.0,
                qp_poa_bound(eta, 1e6, n)?,
                Direction::Equal,
                1e-3,
            ));
        }
    }
    Ok(rows)
}

/// Locally optimal single-query bids from the first-order condition, with
/// `eta` drawn between the realized win probability and 1.
fn qp_spend_rows(cfg: &ReplicationConfig) -> Result<Vec<Row>> {
    let seed = group_seed(cfg, 5);
    let mut min_spend_ratio = f64::INFINITY;
    let mut min_bid_ratio = f64::INFINITY;
    for k in 0..cfg.sizes.qp_profiles {
        let mut rng = sample_rng(seed, k as u64);
        let alpha = rng.gen_range(1.0..16.0);
        let n = rng.gen_range(2..=6);
        let v = log_uniform(&mut rng, 1e-2, 1e2);
        let others: Vec<f64> = (1..n).map(|_| log_uniform(&mut rng, 1e-2, 1e2)).collect();
        let b = qp_stationary_bid(v, alpha, &others)?;
        let mut column = vec![b];
        column.extend(&others);
        let p = qp_column(&column, alpha)[0];
        if !(p > 0.0 && p < 1.0) {
            continue;
        }
        let eta = (p + rng.gen_range(0.0..1.0) * (1.0 - p)).min(1.0 - 1e-9).max(p);
        let values = column
            .iter()
            .enumerate()
            .map(|(i, &c)| vec![if i == 0 { v } else { 2.0 * c }])
            .collect();
        let inst = Instance::new(vec![Budget::INFINITE; n], values)?;
        let bids = BidProfile::per_query(column.iter().map(|&c| vec![c]).collect())?;
        let spend = Mechanism::Qpfpa { alpha }.allocate(&inst, &bids)?.spend_of_query(0);
        min_spend_ratio = min_spend_ratio.min(spend / qp_spend_lowerbound(v, eta, alpha, n)?);
        min_bid_ratio = min_bid_ratio.min(b / qp_local_optimality_bid_lb(v, eta, alpha)?);
    }
    Ok(vec![
        row("qp_spend_floor", 1.0, min_spend_ratio, Direction::AtLeast, 1e-9).note("min Spend / floor"),
        row("qp_bid_floor", 1.0, min_bid_ratio, Direction::AtLeast, 1e-9).note("min bid / floor"),
    ])
}

fn oracle_rows(cfg: &ReplicationConfig) -> Result<Vec<Row>> {
    let seed = group_seed(cfg, 6);
    let single = InstanceShape {
        bidders: (1, 8),
        queries: (1, 1),
        zero_prob: 0.1,
        values_within_budgets: false,
    };
    let mut greedy_gap = 0.0f64;
    for k in 0..cfg.sizes.greedy_instances {
        let inst = random_instance(&mut sample_rng(seed, k as u64), &single);
        let diff = (opt_fractional(&inst)?.value - single_query_fractional_greedy(&inst)?.value).abs();
        greedy_gap = greedy_gap.max(diff);
    }
    let tiny = InstanceShape {
        bidders: (1, 4),
        queries: (1, 4),
        zero_prob: 0.1,
        values_within_budgets: false,
    };
    let steps = 24u32;
    let mut grid_violation = f64::NEG_INFINITY;
    for k in 0..cfg.sizes.grid_instances {
        let mut rng = sample_rng(seed, (1u64 << 32) + k as u64);
        let inst = loop {
            let inst = random_instance(&mut rng, &tiny);
            if inst.num_bidders() * inst.num_queries() <= 4 {
                break inst;
            }
        };
        let lp = opt_fractional(&inst)?.value;
        let grid = opt_fractional_bruteforce(&inst, steps)?;
        let resolution: f64 = inst.values().iter().flatten().sum::<f64>() / steps as f64;
        grid_violation = grid_violation.max(grid - lp).max(lp - grid - resolution);
    }
    Ok(vec![
        row("oracle_greedy_max_diff", 0.0, greedy_gap, Direction::AtMost, 1e-9),
        row("oracle_grid_violation", 0.0, grid_violation, Direction::AtMost, 1e-9)
            .note(format!("grid of {steps} steps; resolution bound sum(v)/steps")),
    ])
}

fn determinism_rows(cfg: &ReplicationConfig) -> Result<Vec<Row>> {
    let run = |threads: usize| -> Result<String> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Unsupported(e.to_string()))?;
        pool.install(|| {
            let r = worst_case_search(&Mechanism::fpa(), false, 2, 2, cfg.sizes.determinism_samples, cfg.seed)?;
            serde_json::to_string(&r).map_err(Error::from)
        })
    };
    let one = run(1)?;
    let four = run(4)?;
    Ok(vec![row(
        "determinism_threads",
        1.0,
        f64::from(u8::from(one == four)),
        Direction::Equal,
        0.0,
    )
    .note("search output at 1 and 4 threads")])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_filter_gives_empty_table() {
        let cfg = ReplicationConfig {
            rows: Some(vec!["no_such_row".into()]),
            ..Default::default()
        };
        assert!(replicate_all(&cfg).is_empty());
    }

    #[test]
    fn filter_by_row_name() {
        let cfg = ReplicationConfig {
            rows: Some(vec!["gap_opt_n3".into()]),
            ..Default::default()
        };
        let rows = replicate_all(&cfg);
        assert_eq!(rows.len(), 1);
        assert!(rows[0].pass);
        assert!(rows[0].runtime_ms.is_none());
    }

    #[test]
    fn tolerance_override_applies() {
        let mut tolerances = BTreeMap::new();
        tolerances.insert("pair_opt".to_string(), 0.5);
        let cfg = ReplicationConfig {
            rows: Some(vec!["pair".into()]),
            tolerances,
            ..Default::default()
        };
        let rows = replicate_all(&cfg);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].tolerance, 0.5);
        assert_eq!(rows[1].tolerance, 1e-7);
    }
}
