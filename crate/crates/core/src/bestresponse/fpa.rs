//! Exact best responses in the deterministic first-price auction.

use crate::error::{Error, Result};
use crate::mechanisms::TieBreak;
use crate::model::{BidProfile, Instance};
use crate::tolerance;

/// Largest query count accepted by the subset search.
pub const MAX_SUBSET_QUERIES: usize = 24;

/// What bidder `i` faces on one query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueryPrice {
    /// Highest opposing bid.
    pub price: f64,
    /// Whether `i` wins a tie at `price`.
    pub favourable: bool,
    /// Cheapest bid that wins.
    pub win_cost: f64,
    /// Highest bid that still loses.
    pub lose_cap: f64,
}

pub fn query_prices(bids: &BidProfile, bidder: usize, tie: &TieBreak) -> Vec<QueryPrice> {
    let n = bids.bids().len();
    let q = bids.row(bidder).len();
    (0..q)
        .map(|j| {
            let mut price = 0.0f64;
            for k in (0..n).filter(|&k| k != bidder) {
                price = price.max(bids.bid(k, j));
            }
            let favourable = price > 0.0
                && (0..n)
                    .filter(|&k| k != bidder && bids.bid(k, j) == price)
                    .all(|k| tie.prefers(bidder, k, n));
            let margin = tolerance::bid_margin(price);
            let win_cost = if favourable { price } else { price + margin };
            let lose_cap = if price == 0.0 {
                0.0
            } else if favourable {
                (price - margin).max(0.0)
            } else {
                price
            };
            QueryPrice {
                price,
                favourable,
                win_cost,
                lose_cap,
            }
        })
        .collect()
}

/// Whether a bid of `b` on a query with these prices wins.
pub fn wins_at(b: f64, qp: &QueryPrice) -> bool {
    b > 0.0 && (b > qp.price || (b == qp.price && qp.favourable))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsetResponse {
    pub value: f64,
    pub subset: Vec<usize>,
    /// Canonical bids realizing the subset.
    pub bids: Vec<f64>,
}

/// Maximizes value over winnable query subsets subject to budget and ROS.
pub fn best_response_subset(
    instance: &Instance,
    bids: &BidProfile,
    bidder: usize,
    tie: &TieBreak,
) -> Result<SubsetResponse> {
    let q = instance.num_queries();
    if q > MAX_SUBSET_QUERIES {
        return Err(Error::TooLarge(format!(
            "subset best response supports at most {MAX_SUBSET_QUERIES} queries, got {q}"
        )));
    }
    let prices = query_prices(bids, bidder, tie);
    let budget = instance.budget(bidder).amount();
    let current = bids.row(bidder);
    let cost: Vec<f64> = (0..q)
        .map(|j| {
            let c = prices[j].win_cost;
            if wins_at(current[j], &prices[j]) {
                c.min(current[j])
            } else {
                c
            }
        })
        .collect();

    let mut items: Vec<usize> = (0..q)
        .filter(|&j| instance.value(bidder, j) > 0.0 && cost[j] <= budget)
        .collect();
    items.sort_by(|&a, &b| {
        instance
            .value(bidder, b)
            .total_cmp(&instance.value(bidder, a))
            .then(a.cmp(&b))
    });
    let values: Vec<f64> = items.iter().map(|&j| instance.value(bidder, j)).collect();
    let costs: Vec<f64> = items.iter().map(|&j| cost[j]).collect();
    let mut suffix = vec![0.0; items.len() + 1];
    for k in (0..items.len()).rev() {
        suffix[k] = suffix[k + 1] + values[k];
    }

    let mut search = SubsetSearch {
        values: &values,
        costs: &costs,
        suffix: &suffix,
        budget,
        chosen: Vec::new(),
        best_value: 0.0,
        best_cost: 0.0,
        best: Vec::new(),
    };
    search.dfs(0, 0.0, 0.0);

    let mut subset: Vec<usize> = search.best.iter().map(|&k| items[k]).collect();
    subset.sort_unstable();
    let value = search.best_value;
    let spent = search.best_cost;
    let slack = (budget.min(value) - spent).max(0.0);
    let weight: f64 = subset
        .iter()
        .map(|&j| (instance.value(bidder, j) - cost[j]).max(0.0))
        .sum();
    let mut out = vec![0.0; q];
    for j in 0..q {
        let v = instance.value(bidder, j);
        out[j] = if subset.binary_search(&j).is_ok() {
            let w = (v - cost[j]).max(0.0);
            if weight > 0.0 {
                cost[j] + slack * w / weight
            } else {
                cost[j]
            }
        } else {
            v.min(budget).min(prices[j].lose_cap)
        };
    }
    Ok(SubsetResponse {
        value,
        subset,
        bids: out,
    })
}

struct SubsetSearch<'a> {
    values: &'a [f64],
    costs: &'a [f64],
    suffix: &'a [f64],
    budget: f64,
    chosen: Vec<usize>,
    best_value: f64,
    best_cost: f64,
    best: Vec<usize>,
}

impl SubsetSearch<'_> {
    fn dfs(&mut self, k: usize, value: f64, cost: f64) {
        if cost <= self.budget.min(value)
            && (value > self.best_value || (value == self.best_value && cost < self.best_cost))
        {
            self.best_value = value;
            self.best_cost = cost;
            self.best.clone_from(&self.chosen);
        }
        if k == self.values.len() || value + self.suffix[k] < self.best_value {
            return;
        }
        let c = cost + self.costs[k];
        if c <= self.budget {
            self.chosen.push(k);
            self.dfs(k + 1, value + self.values[k], c);
            self.chosen.pop();
        }
        self.dfs(k + 1, value, cost);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniformResponse {
    pub value: f64,
    pub multiplier: f64,
}

fn uniform_outcome(instance: &Instance, bidder: usize, prices: &[QueryPrice], m: f64) -> (f64, f64) {
    let mut value = 0.0;
    let mut spend = 0.0;
    for (j, qp) in prices.iter().enumerate() {
        let v = instance.value(bidder, j);
        let b = m * v;
        if wins_at(b, qp) {
            value += v;
            spend += b;
        }
    }
    (value, spend)
}

fn uniform_feasible(budget: f64, value: f64, spend: f64) -> bool {
    spend <= budget.min(value) + tolerance::FEASIBILITY * 0.1
}

/// Scans multiplier breakpoints; the returned multiplier is the largest one that
/// wins the same queries and stays feasible, capped at 1.
pub fn best_response_uniform_scan(
    instance: &Instance,
    bids: &BidProfile,
    bidder: usize,
    tie: &TieBreak,
) -> Result<UniformResponse> {
    let current = bids
        .multipliers()
        .ok_or_else(|| Error::Unsupported("uniform scan needs a uniform-mode profile".into()))?[bidder];
    let prices = query_prices(bids, bidder, tie);
    let budget = instance.budget(bidder).amount();

    let mut candidates = vec![0.0, current];
    for (j, qp) in prices.iter().enumerate() {
        let v = instance.value(bidder, j);
        if v > 0.0 {
            let mut t = qp.win_cost / v;
            let mut tries = 0;
            while !wins_at(t * v, qp) && tries < 8 {
                t = t * (1.0 + f64::EPSILON) + f64::MIN_POSITIVE;
                tries += 1;
            }
            candidates.push(t);
        }
    }
    let mut best: Option<(f64, f64)> = None;
    for &m in &candidates {
        let (value, spend) = uniform_outcome(instance, bidder, &prices, m);
        if !uniform_feasible(budget, value, spend) {
            continue;
        }
        best = match best {
            Some((bv, bm)) if bv > value || (bv == value && bm <= m) => Some((bv, bm)),
            _ => Some((value, m)),
        };
    }
    let (value, m_star) = best.expect("zero multiplier is always feasible");

    let mut upper = 1.0f64;
    for (j, qp) in prices.iter().enumerate() {
        let v = instance.value(bidder, j);
        if v > 0.0 && !wins_at(m_star * v, qp) {
            upper = upper.min(qp.lose_cap / v);
        }
    }
    if value > 0.0 && budget.is_finite() {
        upper = upper.min(budget / value);
    }
    let mut multiplier = m_star;
    if upper > m_star {
        let (v2, s2) = uniform_outcome(instance, bidder, &prices, upper);
        if v2 == value && uniform_feasible(budget, v2, s2) {
            multiplier = upper;
        }
    }
    Ok(UniformResponse { value, multiplier })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unopposed_single_query() {
        let inst = Instance::from_raw(&[f64::INFINITY, 1.0], vec![vec![1.0], vec![0.0]]).unwrap();
        let bids = BidProfile::per_query(vec![vec![0.0], vec![0.5]]).unwrap();
        let r = best_response_subset(&inst, &bids, 0, &TieBreak::LowestIndex).unwrap();
        assert_eq!(r.value, 1.0);
        assert_eq!(r.subset, vec![0]);
        assert_eq!(r.bids, vec![1.0]);
    }

    #[test]
    fn unaffordable_queries() {
        let inst = Instance::from_raw(&[1.0, 1.0], vec![vec![5.0, 5.0], vec![1.0, 1.0]]).unwrap();
        let bids = BidProfile::per_query(vec![vec![0.0, 0.0], vec![2.0, 3.0]]).unwrap();
        let r = best_response_subset(&inst, &bids, 0, &TieBreak::LowestIndex).unwrap();
        assert_eq!(r.value, 0.0);
        assert!(r.subset.is_empty());
    }

    #[test]
    fn loser_of_gap_pair_cannot_afford() {
        let inst = Instance::from_raw(&[1.0, 1.0], vec![vec![2.0], vec![2.0]]).unwrap();
        let bids = BidProfile::per_query(vec![vec![1.0], vec![1.0]]).unwrap();
        let r = best_response_subset(&inst, &bids, 1, &TieBreak::LowestIndex).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(r.bids, vec![1.0]);
        let w = best_response_subset(&inst, &bids, 0, &TieBreak::LowestIndex).unwrap();
        assert_eq!(w.value, 2.0);
        assert_eq!(w.bids, vec![1.0]);
    }

    #[test]
    fn knapsack_prefers_value() {
        // Budget 3 over costs (2, 2, 1): best is {0, 2} with value 9.
        let inst = Instance::from_raw(&[3.0, f64::INFINITY], vec![vec![5.0, 4.0, 4.0], vec![1.0, 1.0, 1.0]]).unwrap();
        let bids = BidProfile::per_query(vec![vec![0.0; 3], vec![2.0, 2.0, 1.0]]).unwrap();
        let r = best_response_subset(&inst, &bids, 0, &TieBreak::LowestIndex).unwrap();
        assert_eq!(r.subset, vec![0, 2]);
        assert_eq!(r.value, 9.0);
        let spend: f64 = r.subset.iter().map(|&j| r.bids[j]).sum();
        assert!(spend <= 3.0 + 1e-12);
    }

    #[test]
    fn ros_allows_overpaying_when_subsidized() {
        // Query 1 is cheap and subsidizes overpaying on query 0.
        let inst = Instance::from_raw(&[f64::INFINITY, f64::INFINITY], vec![vec![1.0, 3.0], vec![1.0, 1.0]]).unwrap();
        let bids = BidProfile::per_query(vec![vec![0.0, 0.0], vec![2.0, 1.0]]).unwrap();
        let r = best_response_subset(&inst, &bids, 0, &TieBreak::LowestIndex).unwrap();
        assert_eq!(r.value, 4.0);
    }
}
