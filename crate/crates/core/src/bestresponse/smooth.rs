//! Deviation search for the randomized mechanisms, where the win probability
//! is a continuous, non-decreasing function of the own bid.

use crate::error::{Error, Result};
use crate::mechanisms::Mechanism;
use crate::model::{BidProfile, Instance};

const BISECTION_STEPS: usize = 200;
/// Rounding allowance in feasibility tests, relative to value.
const ROUNDING: f64 = 1e-12;
/// Geometric grids never span more than this factor on either side.
const MAX_GRID_SPREAD: f64 = 1e4;

/// Own value and spend given the rest of the profile.
#[derive(Debug, Clone)]
pub struct BidderView<'a> {
    instance: &'a Instance,
    mechanism: &'a Mechanism,
    bids: &'a BidProfile,
    bidder: usize,
    budget: f64,
}

impl<'a> BidderView<'a> {
    pub fn new(instance: &'a Instance, mechanism: &'a Mechanism, bids: &'a BidProfile, bidder: usize) -> Self {
        Self {
            instance,
            mechanism,
            bids,
            bidder,
            budget: instance.budget(bidder).amount(),
        }
    }

    /// Win probability on query `j` if the bidder bids `b` there.
    pub fn prob(&self, j: usize, b: f64) -> f64 {
        let column: Vec<f64> = (0..self.instance.num_bidders())
            .map(|k| if k == self.bidder { b } else { self.bids.bid(k, j) })
            .collect();
        self.mechanism.query_probabilities(&column)[self.bidder]
    }

    fn alpha(&self) -> f64 {
        match self.mechanism {
            Mechanism::Rfpa { alpha } | Mechanism::Qpfpa { alpha } => *alpha,
            Mechanism::Fpa { .. } => 1.0,
        }
    }

    fn max_other(&self, j: usize) -> f64 {
        (0..self.instance.num_bidders())
            .filter(|&k| k != self.bidder)
            .map(|k| self.bids.bid(k, j))
            .fold(0.0, f64::max)
    }

    /// `(value, spend)` of an arbitrary own bid row.
    pub fn evaluate(&self, row: &[f64]) -> (f64, f64) {
        let mut value = 0.0;
        let mut spend = 0.0;
        for (j, &b) in row.iter().enumerate() {
            let p = self.prob(j, b);
            value += p * self.instance.value(self.bidder, j);
            spend += p * b;
        }
        (value, spend)
    }

    /// Both constraints, up to rounding relative to the value.
    fn feasible(&self, value: f64, spend: f64) -> bool {
        spend <= self.budget.min(value) + ROUNDING * (1.0 + value)
    }

    /// Supremum of the feasible bids on query `j` above a feasible base: the
    /// current bid when it is feasible, zero otherwise. `None` when neither is.
    /// Every bid between the base and the returned one that the bisection
    /// probes is feasible, so the value there is at least that of any bid
    /// reachable from the base through feasible bids.
    pub fn sup_bid(&self, row: &[f64], j: usize) -> Option<f64> {
        let v = self.instance.value(self.bidder, j);
        let p_now = self.prob(j, row[j]);
        let (value, spend) = self.evaluate(row);
        let rest_value = value - p_now * v;
        let rest_spend = spend - p_now * row[j];
        let at = |b: f64| {
            let p = self.prob(j, b);
            (rest_value + p * v, rest_spend + p * b)
        };
        // Probes are exact so that the result passes the rounding-tolerant test.
        let ok = |b: f64| {
            let (value, spend) = at(b);
            spend <= self.budget.min(value)
        };
        let ok_loose = |b: f64| {
            let (value, spend) = at(b);
            self.feasible(value, spend)
        };
        let mut lo = if ok_loose(row[j]) {
            row[j]
        } else if ok_loose(0.0) {
            0.0
        } else {
            return None;
        };
        let mut hi = (self.alpha() * self.max_other(j))
            .max(v + (rest_value - rest_spend).max(0.0))
            .max(2.0 * lo)
            .max(f64::MIN_POSITIVE);
        let mut doublings = 0;
        while ok(hi) {
            lo = hi;
            hi *= 2.0;
            doublings += 1;
            if doublings > 2000 || !hi.is_finite() {
                return Some(lo);
            }
        }
        for _ in 0..BISECTION_STEPS {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if ok(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(lo)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RowResponse {
    pub value: f64,
    pub bids: Vec<f64>,
}

fn geometric(lo: f64, hi: f64, steps: usize) -> impl Iterator<Item = f64> {
    let ratio = (hi / lo).ln();
    (0..steps).map(move |k| {
        let t = if steps > 1 { k as f64 / (steps - 1) as f64 } else { 0.0 };
        lo * (ratio * t).exp()
    })
}

/// Best single-query deviation: per query, a geometric grid around the
/// current bid plus 0, the value, and the feasible supremum.
pub fn best_per_query(view: &BidderView, steps: usize) -> Option<RowResponse> {
    let row = view.bids.row(view.bidder).to_vec();
    let mut best: Option<RowResponse> = consider(view, &row, None);
    let spread = (view.alpha() * view.alpha()).min(MAX_GRID_SPREAD);
    for j in 0..row.len() {
        let v = view.instance.value(view.bidder, j);
        let mut cands = vec![0.0, v];
        if let Some(s) = view.sup_bid(&row, j) {
            cands.push(s);
            if let Mechanism::Rfpa { alpha } = view.mechanism {
                let other = view.max_other(j);
                if other > 0.0 {
                    cands.push(s.min(alpha * other));
                }
            }
        }
        let reference = if row[j] > 0.0 {
            row[j]
        } else if view.max_other(j) > 0.0 {
            view.max_other(j)
        } else {
            v
        };
        if reference > 0.0 {
            cands.extend(geometric(reference / spread, reference * spread, steps));
        }
        let mut trial = row.clone();
        for b in cands {
            trial[j] = b;
            best = consider(view, &trial, best);
        }
    }
    best
}

/// Best common rescaling of the current bids.
pub fn best_scale_all(view: &BidderView, steps: usize) -> Option<RowResponse> {
    let row = view.bids.row(view.bidder).to_vec();
    let mut best = consider(view, &row, None);
    let spread = (view.alpha() * view.alpha()).min(MAX_GRID_SPREAD);
    let scales = std::iter::once(0.0).chain(geometric(1.0 / spread, spread, steps));
    for s in scales {
        let trial: Vec<f64> = row.iter().map(|b| b * s).collect();
        best = consider(view, &trial, best);
    }
    best
}

fn consider(view: &BidderView, row: &[f64], best: Option<RowResponse>) -> Option<RowResponse> {
    let (value, spend) = view.evaluate(row);
    if !view.feasible(value, spend) {
        return best;
    }
    match best {
        Some(b) if b.value >= value => Some(b),
        _ => Some(RowResponse {
            value,
            bids: row.to_vec(),
        }),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniformResponse {
    pub value: f64,
    pub multiplier: f64,
}

/// Largest multiplier in `[0, 1]` within budget. Value and spend are both
/// non-decreasing in the multiplier and ROS always holds below 1, so this is
/// the value-maximizing uniform bid.
pub fn best_response_uniform(
    instance: &Instance,
    mechanism: &Mechanism,
    bids: &BidProfile,
    bidder: usize,
) -> Result<UniformResponse> {
    if bids.multipliers().is_none() {
        return Err(Error::Unsupported(
            "uniform best response needs a uniform-mode profile".into(),
        ));
    }
    let view = BidderView::new(instance, mechanism, bids, bidder);
    let values = &instance.values()[bidder];
    let at = |m: f64| {
        let row: Vec<f64> = values.iter().map(|v| m * v).collect();
        view.evaluate(&row)
    };
    let (v1, s1) = at(1.0);
    if s1 <= view.budget {
        return Ok(UniformResponse {
            value: v1,
            multiplier: 1.0,
        });
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if at(mid).1 <= view.budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(UniformResponse {
        value: at(lo).0,
        multiplier: lo,
    })
}

/// Repeated best single-query and rescaling moves, used by dynamics. Starts
/// from the current row when it is feasible and from zero bids otherwise.
/// The flag reports whether the climb stopped before `max_moves`.
#[allow(clippy::too_many_arguments)]
pub fn ascend(
    instance: &Instance,
    mechanism: &Mechanism,
    bids: &BidProfile,
    bidder: usize,
    grid_steps: usize,
    scale_steps: usize,
    min_gain: f64,
    max_moves: usize,
) -> (RowResponse, bool) {
    let view = BidderView::new(instance, mechanism, bids, bidder);
    let (v0, s0) = view.evaluate(bids.row(bidder));
    let mut profile = if view.feasible(v0, s0) {
        bids.clone()
    } else {
        bids.with_row(bidder, vec![0.0; instance.num_queries()])
    };
    let mut current = view_value(instance, mechanism, &profile, bidder);
    let mut settled = false;
    for _ in 0..max_moves {
        let view = BidderView::new(instance, mechanism, &profile, bidder);
        let mut best = best_per_query(&view, grid_steps);
        if scale_steps > 0 {
            if let Some(s) = best_scale_all(&view, scale_steps) {
                if best.as_ref().is_none_or(|b| s.value > b.value) {
                    best = Some(s);
                }
            }
        }
        match best {
            Some(b) if b.value > current + min_gain => {
                current = b.value;
                profile = profile.with_row(bidder, b.bids);
            }
            _ => {
                settled = true;
                break;
            }
        }
    }
    let row = RowResponse {
        value: current,
        bids: profile.row(bidder).to_vec(),
    };
    (row, settled)
}

fn view_value(instance: &Instance, mechanism: &Mechanism, bids: &BidProfile, bidder: usize) -> f64 {
    BidderView::new(instance, mechanism, bids, bidder)
        .evaluate(bids.row(bidder))
        .0
}
