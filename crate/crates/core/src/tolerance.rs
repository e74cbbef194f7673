//! Numerical tolerances used across the crate.
//!
//! Every comparison against an exact-real statement goes through one of these
//! knobs, so a test failure can always be traced back to a single number.

use serde::{Deserialize, Serialize};

/// Absolute tolerance for welfare comparisons.
pub const WELFARE_ABS: f64 = 1e-9;
/// Slack allowed on `sum_i pi_ij <= 1`.
pub const ALLOCATION_SUM: f64 = 1e-9;
/// Slack allowed on the budget and ROS constraints.
pub const FEASIBILITY: f64 = 1e-9;
/// Pivot tolerance of the simplex solver.
pub const PIVOT: f64 = 1e-9;
/// Uniform-mode bids must equal `m_i * v_ij` to this absolute tolerance.
pub const UNIFORM_BIDS: f64 = 1e-12;
/// Relative outbid margin: beating a price `p` costs `p + BID_MARGIN * (1 + p)`.
pub const BID_MARGIN: f64 = 1e-6;
/// Default equilibrium epsilon, relative to `sum_i min(B_i, sum_j v_ij)`.
pub const EQUILIBRIUM_REL: f64 = 1e-6;
/// Relative agreement required between an LP optimum and the welfare of its allocation.
pub const LP_CONSISTENCY_REL: f64 = 1e-7;

/// Outbid margin for a price `p`.
pub fn bid_margin(price: f64) -> f64 {
    BID_MARGIN * (1.0 + price)
}

/// The complete tolerance record, for callers that need to override defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub welfare_abs: f64,
    pub allocation_sum: f64,
    pub feasibility: f64,
    pub pivot: f64,
    pub bid_margin: f64,
    pub equilibrium_rel: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            welfare_abs: WELFARE_ABS,
            allocation_sum: ALLOCATION_SUM,
            feasibility: FEASIBILITY,
            pivot: PIVOT,
            bid_margin: BID_MARGIN,
            equilibrium_rel: EQUILIBRIUM_REL,
        }
    }
}
