//! Best responses, equilibrium verification, best-response dynamics and the
//! price-of-anarchy ratios of a verified profile.
//!
//! A deviation is any change of one bidder's bids that keeps both the budget
//! and the ROS constraint. A profile is an epsilon-equilibrium relative to a
//! [`DeviationFamily`] when it is feasible and no bidder gains more than
//! epsilon by a deviation from that family.

mod diagnostics;
pub mod fpa;
pub mod smooth;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use diagnostics::{
    equilibrium_diagnostics, fpa_diagnostics, rfpa_diagnostics, uniform_fpa_diagnostics, DiagnosticCheck,
    EquilibriumPartition,
};
pub use fpa::{best_response_subset, best_response_uniform_scan, query_prices, QueryPrice, SubsetResponse};
pub use smooth::{BidderView, RowResponse};

use crate::error::{Error, Result};
use crate::mechanisms::{Mechanism, TieBreak};
use crate::model::{liquid_welfare, BidProfile, Instance};
use crate::optimum::{opt_fractional, opt_integral};
use crate::tolerance;

/// Dynamics stop climbing a grid after this many improving moves per turn.
const MAX_ASCENT_MOVES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DeviationFamily {
    /// Every winnable query subset at the cheapest winning price (first price only).
    FpaSubset,
    /// Every breakpoint of a single multiplier (uniform bidding).
    UniformScan,
    /// One query at a time over a geometric grid around the current bid.
    GridPerQuery { steps: usize },
    /// A common rescaling of the whole bid row.
    ScaleAll { steps: usize },
    /// The better of [`DeviationFamily::GridPerQuery`] and [`DeviationFamily::ScaleAll`].
    GridAndScale { grid_steps: usize, scale_steps: usize },
}

impl DeviationFamily {
    pub const DEFAULT_GRID_STEPS: usize = 64;
    pub const DEFAULT_SCALE_STEPS: usize = 128;

    /// The family used when none is requested.
    pub fn default_for(mechanism: &Mechanism, bids: &BidProfile) -> Self {
        if bids.is_uniform() {
            DeviationFamily::UniformScan
        } else if mechanism.is_deterministic() {
            DeviationFamily::FpaSubset
        } else {
            DeviationFamily::GridAndScale {
                grid_steps: Self::DEFAULT_GRID_STEPS,
                scale_steps: Self::DEFAULT_SCALE_STEPS,
            }
        }
    }

    /// Whether the verdict is exact up to epsilon rather than family-relative.
    pub fn is_exact_for(&self, mechanism: &Mechanism) -> bool {
        mechanism.is_deterministic() && matches!(self, DeviationFamily::FpaSubset | DeviationFamily::UniformScan)
    }

    fn check(&self, mechanism: &Mechanism, bids: &BidProfile) -> Result<()> {
        let ok = match self {
            DeviationFamily::FpaSubset => mechanism.is_deterministic(),
            DeviationFamily::UniformScan => bids.is_uniform(),
            DeviationFamily::GridPerQuery { steps } | DeviationFamily::ScaleAll { steps } => {
                !mechanism.is_deterministic() && !bids.is_uniform() && *steps > 0
            }
            DeviationFamily::GridAndScale {
                grid_steps,
                scale_steps,
            } => !mechanism.is_deterministic() && !bids.is_uniform() && *grid_steps > 0 && *scale_steps > 0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Unsupported(format!(
                "deviation family {self:?} does not apply to {} with {} bids",
                mechanism.name(),
                if bids.is_uniform() { "uniform" } else { "per-query" }
            )))
        }
    }
}

/// A best deviation within a family.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BestResponse {
    pub value: f64,
    /// The deviating bid row.
    pub bids: Vec<f64>,
    /// Set for uniform deviations.
    pub multiplier: Option<f64>,
}

fn tie_of(mechanism: &Mechanism) -> Option<&TieBreak> {
    match mechanism {
        Mechanism::Fpa { tie } => Some(tie),
        _ => None,
    }
}

/// Best deviation of `bidder` against the rest of `bids`.
pub fn best_response(
    instance: &Instance,
    mechanism: &Mechanism,
    bids: &BidProfile,
    bidder: usize,
    family: &DeviationFamily,
) -> Result<BestResponse> {
    mechanism.validate(instance)?;
    bids.check_against(instance)?;
    instance.check_bidder(bidder)?;
    family.check(mechanism, bids)?;
    let view = BidderView::new(instance, mechanism, bids, bidder);
    let from_row = |r: Option<RowResponse>| {
        // The current row is always a candidate; it is only absent when infeasible,
        // and zero bids are always feasible.
        let r = r.unwrap_or_else(|| RowResponse {
            value: view.evaluate(&vec![0.0; instance.num_queries()]).0,
            bids: vec![0.0; instance.num_queries()],
        });
        BestResponse {
            value: r.value,
            bids: r.bids,
            multiplier: None,
        }
    };
    Ok(match family {
        DeviationFamily::FpaSubset => {
            let r = best_response_subset(instance, bids, bidder, tie_of(mechanism).unwrap())?;
            BestResponse {
                value: r.value,
                bids: r.bids,
                multiplier: None,
            }
        }
        DeviationFamily::UniformScan => {
            let (value, m) = match tie_of(mechanism) {
                Some(tie) => {
                    let r = best_response_uniform_scan(instance, bids, bidder, tie)?;
                    (r.value, r.multiplier)
                }
                None => {
                    let r = smooth::best_response_uniform(instance, mechanism, bids, bidder)?;
                    (r.value, r.multiplier)
                }
            };
            BestResponse {
                value,
                bids: instance.values()[bidder].iter().map(|v| m * v).collect(),
                multiplier: Some(m),
            }
        }
        DeviationFamily::GridPerQuery { steps } => from_row(smooth::best_per_query(&view, *steps)),
        DeviationFamily::ScaleAll { steps } => from_row(smooth::best_scale_all(&view, *steps)),
        DeviationFamily::GridAndScale {
            grid_steps,
            scale_steps,
        } => {
            let a = smooth::best_per_query(&view, *grid_steps);
            let b = smooth::best_scale_all(&view, *scale_steps);
            from_row(match (a, b) {
                (Some(a), Some(b)) if b.value > a.value => Some(b),
                (Some(a), _) => Some(a),
                (None, b) => b,
            })
        }
    })
}

/// Exact first-price best response over query subsets.
pub fn best_response_fpa(
    instance: &Instance,
    bids: &BidProfile,
    bidder: usize,
    tie: &TieBreak,
) -> Result<SubsetResponse> {
    instance.check_bidder(bidder)?;
    bids.check_against(instance)?;
    best_response_subset(instance, bids, bidder, tie)
}

/// Best uniform multiplier, returned as `(value, multiplier)`.
pub fn best_response_uniform(
    instance: &Instance,
    mechanism: &Mechanism,
    bids: &BidProfile,
    bidder: usize,
) -> Result<(f64, f64)> {
    let r = best_response(instance, mechanism, bids, bidder, &DeviationFamily::UniformScan)?;
    Ok((r.value, r.multiplier.unwrap_or(0.0)))
}

/// Per bidder: whether spend stays within both budget and value.
pub fn check_feasibility(instance: &Instance, mechanism: &Mechanism, bids: &BidProfile) -> Result<Vec<bool>> {
    let outcome = mechanism.allocate(instance, bids)?;
    Ok((0..instance.num_bidders())
        .map(|i| {
            let cap = instance.budget(i).cap(outcome.value_of_bidder(i));
            outcome.spend_of_bidder(i) <= cap + tolerance::FEASIBILITY
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Binding {
    None,
    Budget,
    Ros,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BidderReport {
    pub value: f64,
    pub spend: f64,
    pub feasible: bool,
    pub binding: Binding,
    pub best_response_value: f64,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumReport {
    pub feasible: bool,
    pub best_deviation_gain: f64,
    pub epsilon: f64,
    pub is_equilibrium: bool,
    /// Whether the verdict is exact rather than relative to the family.
    pub exact: bool,
    pub family: DeviationFamily,
    pub liquid_welfare: f64,
    pub per_bidder: Vec<BidderReport>,
    pub diagnostics: Vec<DiagnosticCheck>,
}

/// Feasibility plus the largest gain of any bidder's best deviation.
pub fn verify_equilibrium(
    instance: &Instance,
    mechanism: &Mechanism,
    bids: &BidProfile,
    family: &DeviationFamily,
    epsilon: f64,
) -> Result<EquilibriumReport> {
    mechanism.validate(instance)?;
    bids.check_against(instance)?;
    family.check(mechanism, bids)?;
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::Domain(format!(
            "epsilon must be finite and non-negative, got {epsilon}"
        )));
    }
    let outcome = mechanism.allocate(instance, bids)?;
    let per_bidder = (0..instance.num_bidders())
        .into_par_iter()
        .map(|i| {
            let value = outcome.value_of_bidder(i);
            let spend = outcome.spend_of_bidder(i);
            let budget = instance.budget(i).amount();
            let tol = tolerance::FEASIBILITY;
            let br = best_response(instance, mechanism, bids, i, family)?;
            let on_budget = spend >= budget - tol;
            let on_ros = spend > tol && spend >= value - tol;
            Ok(BidderReport {
                value,
                spend,
                feasible: spend <= budget.min(value) + tol,
                binding: match (on_budget, on_ros) {
                    (true, true) => Binding::Both,
                    (true, false) => Binding::Budget,
                    (false, true) => Binding::Ros,
                    (false, false) => Binding::None,
                },
                best_response_value: br.value,
                gain: br.value - value,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let feasible = per_bidder.iter().all(|b| b.feasible);
    let best_deviation_gain = per_bidder
        .iter()
        .map(|b| b.gain)
        .fold(f64::NEG_INFINITY, f64::max)
        .max(0.0);
    Ok(EquilibriumReport {
        feasible,
        best_deviation_gain,
        epsilon,
        is_equilibrium: feasible && best_deviation_gain <= epsilon,
        exact: family.is_exact_for(mechanism),
        family: *family,
        liquid_welfare: liquid_welfare(instance, outcome.allocation())?,
        per_bidder,
        diagnostics: Vec::new(),
    })
}

/// Verification followed by the inequality checks against the optimal
/// fractional allocation and, when tractable, the optimal integral one.
pub fn diagnose_equilibrium(
    instance: &Instance,
    mechanism: &Mechanism,
    bids: &BidProfile,
    family: &DeviationFamily,
    epsilon: f64,
) -> Result<EquilibriumReport> {
    let mut report = verify_equilibrium(instance, mechanism, bids, family, epsilon)?;
    let outcome = mechanism.allocate(instance, bids)?;
    let opt = opt_fractional(instance)?;
    let integral = match opt_integral(instance) {
        Ok(r) => Some(r.allocation),
        Err(Error::TooLarge(_)) => None,
        Err(e) => return Err(e),
    };
    report.diagnostics = equilibrium_diagnostics(
        instance,
        mechanism,
        bids,
        &outcome,
        &opt.allocation,
        integral.as_ref(),
        epsilon,
    );
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DynamicsResult {
    pub bids: BidProfile,
    pub converged: bool,
    pub rounds: usize,
}

/// Round-robin best responses by bidder index. Every bidder adopts their
/// best response in the first round; afterwards a bidder moves only when
/// their row is infeasible or the family offers a gain above `epsilon`;
/// convergence means every bidder was checked in turn with nobody moving
/// since, so a converged profile passes [`verify_equilibrium`] with the same
/// family and epsilon.
pub fn best_response_dynamics(
    instance: &Instance,
    mechanism: &Mechanism,
    family: &DeviationFamily,
    init: &BidProfile,
    max_rounds: usize,
    epsilon: f64,
) -> Result<DynamicsResult> {
    mechanism.validate(instance)?;
    init.check_against(instance)?;
    family.check(mechanism, init)?;
    let n = instance.num_bidders();
    let mut bids = init.clone();
    let mut stable = 0usize;
    for round in 1..=max_rounds {
        for i in 0..n {
            let outcome = mechanism.allocate(instance, &bids)?;
            let value = outcome.value_of_bidder(i);
            let spend = outcome.spend_of_bidder(i);
            let feasible = spend <= instance.budget(i).cap(value) + tolerance::FEASIBILITY;
            let br = best_response(instance, mechanism, &bids, i, family)?;
            if round > 1 && feasible && br.value - value <= epsilon {
                stable += 1;
            } else {
                let settled = match (family, br.multiplier) {
                    (_, Some(m)) => {
                        bids = bids.with_multiplier(instance, i, m)?;
                        true
                    }
                    (DeviationFamily::FpaSubset, None) => {
                        bids = bids.with_row(i, br.bids);
                        true
                    }
                    (_, None) => {
                        let (grid, scale) = match *family {
                            DeviationFamily::GridPerQuery { steps } => (steps, 0),
                            DeviationFamily::ScaleAll { steps } => (0, steps),
                            DeviationFamily::GridAndScale {
                                grid_steps,
                                scale_steps,
                            } => (grid_steps, scale_steps),
                            _ => unreachable!("exact families handled above"),
                        };
                        let start = bids.with_row(i, br.bids);
                        let (climb, settled) = if grid > 0 {
                            smooth::ascend(instance, mechanism, &start, i, grid, scale, epsilon, MAX_ASCENT_MOVES)
                        } else {
                            (
                                RowResponse {
                                    value: br.value,
                                    bids: start.row(i).to_vec(),
                                },
                                false,
                            )
                        };
                        bids = bids.with_row(i, climb.bids);
                        settled
                    }
                };
                stable = usize::from(settled);
            }
            if stable >= n {
                return Ok(DynamicsResult {
                    bids,
                    converged: true,
                    rounds: round,
                });
            }
        }
    }
    Ok(DynamicsResult {
        bids,
        converged: false,
        rounds: max_rounds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoaReport {
    #[serde(serialize_with = "crate::model::serialize_extended_f64")]
    pub poa: f64,
    #[serde(serialize_with = "crate::model::serialize_extended_f64")]
    pub ipoa: f64,
    pub lw: f64,
    pub opt: f64,
    pub iopt: f64,
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

/// `Opt / LW` and `I-Opt / LW` for the outcome of `bids`.
pub fn poa_ratio(instance: &Instance, mechanism: &Mechanism, bids: &BidProfile) -> Result<PoaReport> {
    mechanism.validate(instance)?;
    let outcome = mechanism.allocate(instance, bids)?;
    let lw = liquid_welfare(instance, outcome.allocation())?;
    let opt = opt_fractional(instance)?.value;
    let iopt = opt_integral(instance)?.value;
    Ok(PoaReport {
        poa: ratio(opt, lw),
        ipoa: ratio(iopt, lw),
        lw,
        opt,
        iopt,
    })
}
