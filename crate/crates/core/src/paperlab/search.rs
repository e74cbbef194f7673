//! Random instances, suites of equilibria found by best-response dynamics,
//! and the worst-case ratio search.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::bestresponse::{best_response_dynamics, equilibrium_diagnostics, verify_equilibrium, DeviationFamily};
use crate::error::{Error, Result};
use crate::mechanisms::Mechanism;
use crate::model::{liquid_welfare, BidProfile, Budget, Instance};
use crate::optimum::{opt_fractional, opt_integral};

pub const VALUE_RANGE: (f64, f64) = (1e-2, 1e2);
const CHUNK: usize = 256;

/// Independent stream `index` of a seeded generator.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub fn log_uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    (rng.gen_range(lo.ln()..hi.ln())).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstanceShape {
    pub bidders: (usize, usize),
    pub queries: (usize, usize),
    /// Chance that a value is exactly zero.
    pub zero_prob: f64,
    /// Raise every finite budget to at least the bidder's largest value.
    pub values_within_budgets: bool,
}

impl InstanceShape {
    pub fn fixed(n: usize, q: usize) -> Self {
        Self {
            bidders: (n, n),
            queries: (q, q),
            zero_prob: 0.2,
            values_within_budgets: false,
        }
    }
}

/// Values log-uniform on [`VALUE_RANGE`] (zero with `zero_prob`); budgets
/// infinite with probability one half and log-uniform on the same range
/// otherwise.
pub fn random_instance(rng: &mut impl Rng, shape: &InstanceShape) -> Instance {
    let n = rng.gen_range(shape.bidders.0..=shape.bidders.1);
    let q = rng.gen_range(shape.queries.0..=shape.queries.1);
    let (lo, hi) = VALUE_RANGE;
    let values: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            (0..q)
                .map(|_| {
                    if rng.gen_bool(shape.zero_prob) {
                        0.0
                    } else {
                        log_uniform(rng, lo, hi)
                    }
                })
                .collect()
        })
        .collect();
    let budgets = values
        .iter()
        .map(|row| {
            if rng.gen_bool(0.5) {
                Budget::INFINITE
            } else {
                let mut b = log_uniform(rng, lo, hi);
                if shape.values_within_budgets {
                    b = b.max(row.iter().copied().fold(0.0, f64::max));
                }
                Budget::finite(b).expect("positive finite budget")
            }
        })
        .collect();
    Instance::new(budgets, values).expect("generated instance is valid")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteConfig {
    pub mechanism: Mechanism,
    pub uniform: bool,
    pub shape: InstanceShape,
    /// Stop after this many verified equilibria.
    pub target: usize,
    pub max_attempts: usize,
    pub max_rounds: usize,
    pub seed: u64,
}

/// One verified equilibrium and its welfare ratios.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumSample {
    pub index: u64,
    pub instance: Instance,
    pub bids: BidProfile,
    pub lw: f64,
    pub opt: f64,
    pub iopt: f64,
    #[serde(serialize_with = "crate::model::serialize_extended_f64")]
    pub poa: f64,
    #[serde(serialize_with = "crate::model::serialize_extended_f64")]
    pub ipoa: f64,
    pub failed_checks: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteSummary {
    pub attempts: usize,
    pub equilibria: usize,
    /// Converged runs that failed verification (dynamics/verification disagreement).
    pub unverified: usize,
    /// Largest `Opt / LW - n`.
    #[serde(serialize_with = "crate::model::serialize_extended_f64")]
    pub max_poa_excess: f64,
    #[serde(serialize_with = "crate::model::serialize_extended_f64")]
    pub max_poa: f64,
    #[serde(serialize_with = "crate::model::serialize_extended_f64")]
    pub max_ipoa: f64,
    /// Largest `Opt / LW` among instances whose values never exceed budgets.
    #[serde(serialize_with = "crate::model::serialize_extended_f64")]
    pub max_poa_within_budgets: f64,
    pub failed_checks: usize,
    pub failed_check_names: BTreeMap<String, usize>,
    pub worst_poa: Option<EquilibriumSample>,
    pub worst_ipoa: Option<EquilibriumSample>,
}

enum Attempt {
    NoEquilibrium,
    Unverified,
    Found(Box<EquilibriumSample>),
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else if num > 0.0 {
        f64::INFINITY
    } else {
        1.0
    }
}

fn initial_profile(rng: &mut impl Rng, instance: &Instance, uniform: bool) -> Result<BidProfile> {
    let n = instance.num_bidders();
    if uniform {
        let ms = (0..n).map(|_| rng.gen_range(0.0..=1.0)).collect();
        BidProfile::uniform(instance, ms)
    } else {
        let bids = instance
            .values()
            .iter()
            .map(|row| row.iter().map(|v| v * rng.gen_range(0.0..=1.0)).collect())
            .collect();
        BidProfile::per_query(bids)
    }
}

fn attempt(cfg: &SuiteConfig, index: u64) -> Result<Attempt> {
    let mut rng = sample_rng(cfg.seed, index);
    let mut instance = random_instance(&mut rng, &cfg.shape);
    if matches!(cfg.mechanism, Mechanism::Rfpa { .. }) && instance.num_bidders() != 2 {
        let mut shape = cfg.shape.clone();
        shape.bidders = (2, 2);
        instance = random_instance(&mut rng, &shape);
    }
    let init = initial_profile(&mut rng, &instance, cfg.uniform)?;
    let family = DeviationFamily::default_for(&cfg.mechanism, &init);
    let eps = instance.default_epsilon();
    let run = best_response_dynamics(&instance, &cfg.mechanism, &family, &init, cfg.max_rounds, eps)?;
    if !run.converged {
        return Ok(Attempt::NoEquilibrium);
    }
    let report = verify_equilibrium(&instance, &cfg.mechanism, &run.bids, &family, eps)?;
    if !report.is_equilibrium {
        return Ok(Attempt::Unverified);
    }
    let outcome = cfg.mechanism.allocate(&instance, &run.bids)?;
    let lw = liquid_welfare(&instance, outcome.allocation())?;
    let opt = opt_fractional(&instance)?;
    let iopt = opt_integral(&instance)?;
    let checks = equilibrium_diagnostics(
        &instance,
        &cfg.mechanism,
        &run.bids,
        &outcome,
        &opt.allocation,
        Some(&iopt.allocation),
        eps,
    );
    let failed_checks = checks.into_iter().filter(|c| !c.passed).map(|c| c.name).collect();
    Ok(Attempt::Found(Box::new(EquilibriumSample {
        index,
        poa: ratio(opt.value, lw),
        ipoa: ratio(iopt.value, lw),
        instance,
        bids: run.bids,
        lw,
        opt: opt.value,
        iopt: iopt.value,
        failed_checks,
    })))
}

/// Runs dynamics from random starts on random instances until `target`
/// verified equilibria are found. Samples are processed in index order in
/// parallel chunks, so the summary does not depend on the thread count.
pub fn run_suite(cfg: &SuiteConfig) -> Result<SuiteSummary> {
    let mut summary = SuiteSummary {
        attempts: 0,
        equilibria: 0,
        unverified: 0,
        max_poa_excess: f64::NEG_INFINITY,
        max_poa: 0.0,
        max_ipoa: 0.0,
        max_poa_within_budgets: 0.0,
        failed_checks: 0,
        failed_check_names: BTreeMap::new(),
        worst_poa: None,
        worst_ipoa: None,
    };
    let mut next = 0usize;
    while summary.equilibria < cfg.target && next < cfg.max_attempts {
        let end = (next + CHUNK).min(cfg.max_attempts);
        let results: Vec<Result<Attempt>> = (next..end).into_par_iter().map(|k| attempt(cfg, k as u64)).collect();
        next = end;
        for r in results {
            if summary.equilibria >= cfg.target {
                break;
            }
            summary.attempts += 1;
            match r? {
                Attempt::NoEquilibrium => {}
                Attempt::Unverified => summary.unverified += 1,
                Attempt::Found(s) => {
                    summary.equilibria += 1;
                    let n = s.instance.num_bidders() as f64;
                    summary.max_poa_excess = summary.max_poa_excess.max(s.poa - n);
                    if s.instance.values_within_budgets() {
                        summary.max_poa_within_budgets = summary.max_poa_within_budgets.max(s.poa);
                    }
                    summary.failed_checks += s.failed_checks.len();
                    for name in &s.failed_checks {
                        *summary.failed_check_names.entry(name.clone()).or_default() += 1;
                    }
                    if s.ipoa > summary.max_ipoa {
                        summary.max_ipoa = s.ipoa;
                        summary.worst_ipoa = Some((*s).clone());
                    }
                    if s.poa > summary.max_poa {
                        summary.max_poa = s.poa;
                        summary.worst_poa = Some(*s);
                    }
                }
            }
        }
    }
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchResult {
    pub mechanism: Mechanism,
    pub uniform: bool,
    pub n: usize,
    pub q: usize,
    pub samples: usize,
    pub seed: u64,
    pub equilibria: usize,
    #[serde(serialize_with = "crate::model::serialize_extended_f64")]
    pub best_poa: f64,
    #[serde(serialize_with = "crate::model::serialize_extended_f64")]
    pub best_ipoa: f64,
    pub witness_poa: Option<EquilibriumSample>,
    pub witness_ipoa: Option<EquilibriumSample>,
    /// Ratios above the proven upper bounds; empty unless something is wrong.
    pub violations: Vec<String>,
}

/// Largest ratios over `samples` random `n x q` instances, one equilibrium
/// each, found by dynamics and checked against the known upper bounds.
pub fn worst_case_search(
    mechanism: &Mechanism,
    uniform: bool,
    n: usize,
    q: usize,
    samples: usize,
    seed: u64,
) -> Result<SearchResult> {
    if n == 0 || q == 0 {
        return Err(Error::Domain("need at least one bidder and one query".into()));
    }
    if matches!(mechanism, Mechanism::Rfpa { .. }) && n != 2 {
        return Err(Error::Unsupported(
            "randomized first price is defined for two bidders".into(),
        ));
    }
    let cfg = SuiteConfig {
        mechanism: mechanism.clone(),
        uniform,
        shape: InstanceShape::fixed(n, q),
        target: usize::MAX,
        max_attempts: samples,
        max_rounds: 200,
        seed,
    };
    let s = run_suite(&cfg)?;
    let mut violations = Vec::new();
    if mechanism.is_deterministic() {
        let tol = 1e-6;
        if s.max_poa > n as f64 + tol {
            violations.push(format!("Opt/LW = {} exceeds n = {n}", s.max_poa));
        }
        if !uniform && s.max_ipoa > 2.0 + tol {
            violations.push(format!("I-Opt/LW = {} exceeds 2", s.max_ipoa));
        }
        if !uniform && s.max_poa_within_budgets > 2.0 + tol {
            violations.push(format!(
                "Opt/LW = {} exceeds 2 with values within budgets",
                s.max_poa_within_budgets
            ));
        }
    }
    if s.failed_checks > 0 {
        violations.push(format!(
            "{} equilibrium checks failed: {:?}",
            s.failed_checks, s.failed_check_names
        ));
    }
    if s.unverified > 0 {
        violations.push(format!("{} converged profiles failed verification", s.unverified));
    }
    Ok(SearchResult {
        mechanism: mechanism.clone(),
        uniform,
        n,
        q,
        samples,
        seed,
        equilibria: s.equilibria,
        best_poa: s.max_poa,
        best_ipoa: s.max_ipoa,
        witness_poa: s.worst_poa,
        witness_ipoa: s.worst_ipoa,
        violations,
    })
}
