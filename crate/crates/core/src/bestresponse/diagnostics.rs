//! Inequalities every (epsilon-)equilibrium must satisfy. Each check is
//! evaluated only where an improving deviation worth more than epsilon would
//! exist otherwise, and carries the slack of that argument: epsilon plus the
//! outbid margin per query.

use serde::Serialize;

use crate::mechanisms::Mechanism;
use crate::model::{liquid_welfare_of_subset, Allocation, BidProfile, Instance, Outcome};
use crate::tolerance;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticCheck {
    pub name: String,
    pub passed: bool,
    /// Smallest `lhs - rhs + tolerance` over all evaluations; negative on failure.
    #[serde(serialize_with = "crate::model::serialize_extended_f64")]
    pub worst_slack: f64,
    pub evaluated: usize,
}

/// Bidder classes by whether equilibrium value reaches the budget, plus the
/// won and benchmark-assigned query sets.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumPartition {
    pub capped: Vec<usize>,
    pub uncapped: Vec<usize>,
    /// `N(i)`: queries won with certainty.
    pub won: Vec<Vec<usize>>,
    /// `O(i)`: queries assigned by an integral benchmark, when given.
    pub assigned: Option<Vec<Vec<usize>>>,
}

impl EquilibriumPartition {
    pub fn new(instance: &Instance, outcome: &Outcome, integral: Option<&Allocation>) -> Self {
        let n = instance.num_bidders();
        let q = instance.num_queries();
        let (capped, uncapped) = (0..n).partition(|&i| instance.budget(i).amount() <= outcome.value_of_bidder(i));
        let won = (0..n)
            .map(|i| (0..q).filter(|&j| outcome.allocation().prob(i, j) >= 1.0).collect())
            .collect();
        let assigned = integral.map(|pi| {
            (0..n)
                .map(|i| (0..q).filter(|&j| pi.prob(i, j) >= 0.5).collect())
                .collect()
        });
        Self {
            capped,
            uncapped,
            won,
            assigned,
        }
    }
}

#[derive(Default)]
struct Ledger {
    checks: Vec<DiagnosticCheck>,
}

impl Ledger {
    fn entry(&mut self, name: &str) -> &mut DiagnosticCheck {
        if let Some(k) = self.checks.iter().position(|c| c.name == name) {
            &mut self.checks[k]
        } else {
            self.checks.push(DiagnosticCheck {
                name: name.to_string(),
                passed: true,
                worst_slack: f64::INFINITY,
                evaluated: 0,
            });
            self.checks.last_mut().unwrap()
        }
    }

    fn touch(&mut self, name: &str) {
        self.entry(name);
    }

    /// Records `lhs >= rhs - tol`.
    fn ge(&mut self, name: &str, lhs: f64, rhs: f64, tol: f64) {
        let slack = if rhs == f64::INFINITY {
            f64::NEG_INFINITY
        } else {
            lhs - rhs + tol
        };
        let e = self.entry(name);
        e.evaluated += 1;
        e.worst_slack = e.worst_slack.min(slack);
        e.passed &= slack >= 0.0;
    }

    fn truth(&mut self, name: &str, ok: bool) {
        self.ge(name, if ok { 0.0 } else { -1.0 }, 0.0, 0.0);
    }
}

struct Context<'a> {
    instance: &'a Instance,
    outcome: &'a Outcome,
    epsilon: f64,
    n: usize,
    q: usize,
    lw: f64,
    total_spend: f64,
    spend_q: Vec<f64>,
    margin_max: f64,
    abs: f64,
}

impl<'a> Context<'a> {
    fn new(instance: &'a Instance, outcome: &'a Outcome, epsilon: f64) -> Self {
        let n = instance.num_bidders();
        let q = instance.num_queries();
        let spend_q: Vec<f64> = (0..q).map(|j| outcome.spend_of_query(j)).collect();
        let lw = (0..n).map(|i| instance.budget(i).cap(outcome.value_of_bidder(i))).sum();
        let margin_max = spend_q
            .iter()
            .map(|&s| tolerance::bid_margin(s))
            .fold(tolerance::bid_margin(0.0), f64::max);
        Self {
            instance,
            outcome,
            epsilon,
            n,
            q,
            lw,
            total_spend: outcome.total_spend(),
            spend_q,
            margin_max,
            abs: tolerance::WELFARE_ABS * (1.0 + instance.welfare_cap()),
        }
    }

    /// Per-query slack: epsilon, the outbid margin and rounding.
    fn per_query(&self, j: usize) -> f64 {
        self.epsilon + tolerance::bid_margin(self.spend_q[j]) + self.abs
    }

    /// Slack of an assembled chain: one per-query slack for every bidder-query pair.
    fn chain(&self) -> f64 {
        (self.n * (self.q + 1)) as f64 * (self.epsilon + self.margin_max) + self.n as f64 * self.abs
    }

    fn value(&self, i: usize) -> f64 {
        self.outcome.value_of_bidder(i)
    }

    fn budget(&self, i: usize) -> f64 {
        self.instance.budget(i).amount()
    }

    fn bench(&self, pi: &Allocation, i: usize) -> f64 {
        self.instance.budget(i).cap(pi.value_of(self.instance, i))
    }

    fn lw_of(&self, set: &[usize]) -> f64 {
        liquid_welfare_of_subset(self.instance, self.outcome.allocation(), set).unwrap_or(f64::NAN)
    }
}

/// Checks for deterministic first price with per-query bids.
pub fn fpa_diagnostics(
    instance: &Instance,
    outcome: &Outcome,
    benchmark: &Allocation,
    integral: Option<&Allocation>,
    epsilon: f64,
) -> Vec<DiagnosticCheck> {
    let cx = Context::new(instance, outcome, epsilon);
    let part = EquilibriumPartition::new(instance, outcome, integral);
    let mut led = Ledger::default();
    let opt: f64 = (0..cx.n).map(|i| cx.bench(benchmark, i)).sum();

    led.touch("capped_bidders_dominate_benchmark");
    for &i in &part.capped {
        led.ge(
            "capped_bidders_dominate_benchmark",
            instance.budget(i).cap(cx.value(i)),
            cx.bench(benchmark, i),
            cx.abs,
        );
    }
    led.ge("spend_within_welfare", cx.lw, cx.total_spend, cx.abs);

    // Against the fractional benchmark, over all lost queries.
    let lost = |i: usize| -> Vec<usize> { (0..cx.q).filter(|j| !part.won[i].contains(j)).collect() };
    group_checks(&cx, &part, &mut led, "", &lost, |i| cx.bench(benchmark, i));
    led.ge(
        "welfare_spend_chain",
        cx.lw + (cx.n as f64 - 1.0) * cx.total_spend,
        opt,
        cx.chain(),
    );
    led.ge(
        "benchmark_at_most_n_times_welfare",
        cx.n as f64 * cx.lw,
        opt,
        cx.chain(),
    );

    // Against the integral benchmark, over assigned-but-lost queries.
    if let (Some(pi_int), Some(assigned)) = (integral, part.assigned.as_ref()) {
        let iopt: f64 = (0..cx.n).map(|i| cx.bench(pi_int, i)).sum();
        let lost_assigned = |i: usize| -> Vec<usize> {
            assigned[i]
                .iter()
                .copied()
                .filter(|j| !part.won[i].contains(j))
                .collect()
        };
        group_checks(&cx, &part, &mut led, "integral_", &lost_assigned, |i| {
            cx.bench(pi_int, i)
        });
        led.ge(
            "integral_benchmark_at_most_twice_welfare",
            2.0 * cx.lw,
            iopt,
            cx.chain(),
        );
    }

    // Queries a bidder values above their price, gated by epsilon.
    let under_priced = |i: usize| -> Vec<usize> {
        (0..cx.q)
            .filter(|j| !part.won[i].contains(j))
            .filter(|&j| {
                let v = instance.value(i, j);
                v > epsilon && cx.spend_q[j] + tolerance::bid_margin(cx.spend_q[j]) < v
            })
            .collect()
    };
    led.touch("underpriced_query_exhausts_budget");
    for i in 0..cx.n {
        for j in under_priced(i) {
            led.ge(
                "underpriced_query_exhausts_budget",
                cx.spend_q[j] + outcome.spend_of_bidder(i),
                cx.budget(i),
                cx.per_query(j),
            );
        }
    }

    if instance.values_within_budgets() {
        led.touch("underpriced_query_value_below_welfare");
        led.touch("saturated_group_bound");
        led.touch("unsaturated_group_bound");
        for i in 0..cx.n {
            for j in under_priced(i) {
                led.ge(
                    "underpriced_query_value_below_welfare",
                    cx.value(i),
                    instance.value(i, j),
                    cx.epsilon + cx.abs,
                );
            }
        }
        for &i in &part.uncapped {
            let d = under_priced(i);
            let mass: f64 = d.iter().map(|&j| benchmark.prob(i, j)).sum();
            let own = instance.budget(i).cap(cx.value(i));
            let per_bidder = (cx.q + 1) as f64 * (cx.epsilon + cx.margin_max) + cx.abs;
            if mass >= 1.0 {
                let lhs: f64 = d.iter().map(|&j| benchmark.prob(i, j) * cx.spend_q[j]).sum::<f64>() + own;
                led.ge("saturated_group_bound", lhs, cx.bench(benchmark, i), per_bidder);
            } else {
                let lhs: f64 = (0..cx.q).map(|j| benchmark.prob(i, j) * cx.spend_q[j]).sum::<f64>() + own;
                led.ge("unsaturated_group_bound", lhs, cx.bench(benchmark, i), per_bidder);
            }
        }
        led.ge("benchmark_at_most_twice_welfare", 2.0 * cx.lw, opt, cx.chain());
    }
    led.checks
}

/// The two inequality families shared by the fractional and integral arguments:
/// a spend floor per lost query and the per-group welfare bound.
fn group_checks(
    cx: &Context,
    part: &EquilibriumPartition,
    led: &mut Ledger,
    prefix: &str,
    lost: &dyn Fn(usize) -> Vec<usize>,
    bench: impl Fn(usize) -> f64,
) {
    let gap_name = format!("{prefix}spend_covers_budget_gap");
    let value_name = format!("{prefix}spend_covers_value");
    let gap_group = format!("{prefix}budget_gap_group_bound");
    let value_group = format!("{prefix}value_group_bound");
    for name in [&gap_name, &value_name, &gap_group, &value_group] {
        led.touch(name);
    }
    let mut gap_members = Vec::new();
    let mut value_members = Vec::new();
    let mut gap_spend = 0.0;
    let mut value_spend = 0.0;
    let mut gap_bench = 0.0;
    let mut value_bench = 0.0;
    for &i in &part.uncapped {
        let v_now = cx.value(i);
        let b = cx.budget(i);
        let lost_i = lost(i);
        let reaches_budget = lost_i.iter().any(|&j| cx.instance.value(i, j) + v_now >= b);
        let lost_spend: f64 = lost_i.iter().map(|&j| cx.spend_q[j]).sum();
        for &j in &lost_i {
            let v = cx.instance.value(i, j);
            if v <= cx.epsilon {
                continue;
            }
            if reaches_budget {
                if v + v_now >= b {
                    led.ge(&gap_name, cx.spend_q[j], b - v_now, cx.per_query(j));
                }
            } else {
                led.ge(&value_name, cx.spend_q[j], v, cx.per_query(j));
            }
        }
        if reaches_budget {
            gap_members.push(i);
            gap_spend += lost_spend;
            gap_bench += bench(i);
        } else {
            value_members.push(i);
            value_spend += lost_spend;
            value_bench += bench(i);
        }
    }
    led.ge(&gap_group, gap_spend + cx.lw_of(&gap_members), gap_bench, cx.chain());
    led.ge(
        &value_group,
        value_spend + cx.lw_of(&value_members),
        value_bench,
        cx.chain(),
    );
}

/// Checks for deterministic first price under uniform bidding.
pub fn uniform_fpa_diagnostics(
    instance: &Instance,
    outcome: &Outcome,
    bids: &BidProfile,
    benchmark: &Allocation,
    epsilon: f64,
) -> Vec<DiagnosticCheck> {
    let cx = Context::new(instance, outcome, epsilon);
    let part = EquilibriumPartition::new(instance, outcome, None);
    let mut led = Ledger::default();
    let opt: f64 = (0..cx.n).map(|i| cx.bench(benchmark, i)).sum();
    let multipliers = bids.multipliers().unwrap_or(&[]);

    led.touch("large_multiplier_wins_nothing");
    led.touch("large_multiplier_prices_above_value");
    for (i, &m) in multipliers.iter().enumerate() {
        if m > 1.0 {
            led.truth("large_multiplier_wins_nothing", cx.value(i) <= cx.abs);
            for j in 0..cx.q {
                let v = instance.value(i, j);
                if v > 0.0 {
                    led.ge("large_multiplier_prices_above_value", cx.spend_q[j], v, cx.abs);
                }
            }
        }
    }
    led.ge("spend_within_welfare", cx.lw, cx.total_spend, cx.abs);
    let lost_spend = |i: usize| -> f64 {
        (0..cx.q)
            .filter(|j| !part.won[i].contains(j))
            .map(|j| cx.spend_q[j])
            .sum()
    };
    let uncapped_bench: f64 = part.uncapped.iter().map(|&i| cx.bench(benchmark, i)).sum();
    let uncapped_rhs: f64 = cx.lw_of(&part.uncapped) + part.uncapped.iter().map(|&i| lost_spend(i)).sum::<f64>();
    led.ge("uncapped_group_bound", uncapped_rhs, uncapped_bench, cx.chain());
    led.ge(
        "benchmark_at_most_n_times_welfare",
        cx.n as f64 * cx.lw,
        opt,
        cx.chain(),
    );
    led.checks
}

/// Checks for the two-bidder randomized first price.
pub fn rfpa_diagnostics(
    instance: &Instance,
    outcome: &Outcome,
    bids: &BidProfile,
    alpha: f64,
    epsilon: f64,
) -> Vec<DiagnosticCheck> {
    let cx = Context::new(instance, outcome, epsilon);
    let mut led = Ledger::default();
    let ln_a = alpha.ln();
    let guard = 2.0 * epsilon + cx.abs;
    led.ge("spend_within_welfare", cx.lw, cx.total_spend, cx.abs);
    led.touch("certain_win_bid_floor");
    led.touch("interior_bid_floor");
    led.touch("uniform_interior_multiplier_is_one");
    for i in 0..2 {
        let other = 1 - i;
        let other_slack = cx.budget(other) - cx.value(other) > guard;
        let own_slack = cx.budget(i) - cx.value(i) > guard;
        for j in 0..cx.q {
            let p = outcome.allocation().prob(i, j);
            let b = bids.bid(i, j);
            if p >= 1.0 && other_slack {
                let v_other = instance.value(other, j);
                if v_other > 0.0 {
                    led.ge(
                        "certain_win_bid_floor",
                        b,
                        alpha * v_other,
                        2.0 * alpha * epsilon * ln_a + cx.abs * (1.0 + b),
                    );
                }
            }
            let v = instance.value(i, j);
            if p > 0.0 && p < 1.0 && own_slack && v > 0.0 && (1.0 - p) * v > guard {
                let beta = b / bids.bid(other, j);
                let l0 = 1.0 + ln_a + beta.ln();
                let t = 2.0 * epsilon * ln_a / v;
                let tol = b * (l0 * t.exp_m1() + t * t.exp()) + cx.abs * (1.0 + v);
                led.ge("interior_bid_floor", b * l0, v, tol);
                if let Some(ms) = bids.multipliers() {
                    led.ge("uniform_interior_multiplier_is_one", ms[i], (-t).exp(), 1e-12);
                    led.ge("uniform_interior_multiplier_is_one", 1.0, ms[i], 1e-12);
                }
            }
        }
    }
    led.checks
}

/// Dispatches on mechanism and bidding mode. Quasi-proportional profiles get
/// only the spend check.
pub fn equilibrium_diagnostics(
    instance: &Instance,
    mechanism: &Mechanism,
    bids: &BidProfile,
    outcome: &Outcome,
    benchmark: &Allocation,
    integral: Option<&Allocation>,
    epsilon: f64,
) -> Vec<DiagnosticCheck> {
    match mechanism {
        Mechanism::Fpa { .. } if bids.is_uniform() => {
            uniform_fpa_diagnostics(instance, outcome, bids, benchmark, epsilon)
        }
        Mechanism::Fpa { .. } => fpa_diagnostics(instance, outcome, benchmark, integral, epsilon),
        Mechanism::Rfpa { alpha } => rfpa_diagnostics(instance, outcome, bids, *alpha, epsilon),
        Mechanism::Qpfpa { .. } => {
            let cx = Context::new(instance, outcome, epsilon);
            let mut led = Ledger::default();
            led.ge("spend_within_welfare", cx.lw, cx.total_spend, cx.abs);
            led.checks
        }
    }
}
