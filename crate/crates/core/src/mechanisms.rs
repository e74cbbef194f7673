//! Allocation and payment rules. Every mechanism is pay-your-bid: the winner of
//! a query pays their own bid, so `expected_payment[i][j] = pi[i][j] * b[i][j]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Allocation, BidProfile, Instance, Outcome};

/// Deterministic tie-breaking among equal highest bids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    #[default]
    LowestIndex,
    HighestIndex,
    /// Earlier in the list wins.
    Permutation(Vec<usize>),
}

impl TieBreak {
    pub fn validate(&self, num_bidders: usize) -> Result<()> {
        if let TieBreak::Permutation(order) = self {
            let mut seen = vec![false; num_bidders];
            if order.len() != num_bidders {
                return Err(Error::DimensionMismatch {
                    what: "tie-break permutation",
                    expected: num_bidders,
                    found: order.len(),
                });
            }
            for &i in order {
                if i >= num_bidders || seen[i] {
                    return Err(Error::InvalidBids(format!(
                        "tie-break order is not a permutation of 0..{num_bidders}"
                    )));
                }
                seen[i] = true;
            }
        }
        Ok(())
    }

    /// Priority rank; lower wins.
    pub fn rank(&self, bidder: usize, num_bidders: usize) -> usize {
        match self {
            TieBreak::LowestIndex => bidder,
            TieBreak::HighestIndex => num_bidders - 1 - bidder,
            TieBreak::Permutation(order) => order.iter().position(|&k| k == bidder).expect("validated permutation"),
        }
    }

    /// Whether `bidder` beats `other` at equal bids.
    pub fn prefers(&self, bidder: usize, other: usize, num_bidders: usize) -> bool {
        self.rank(bidder, num_bidders) < self.rank(other, num_bidders)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mechanism {
    Fpa {
        tie: TieBreak,
    },
    /// Two-bidder randomized first price.
    Rfpa {
        alpha: f64,
    },
    /// Quasi-proportional first price.
    Qpfpa {
        alpha: f64,
    },
}

impl Mechanism {
    pub fn fpa() -> Self {
        Mechanism::Fpa {
            tie: TieBreak::LowestIndex,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Mechanism::Fpa { .. } => "fpa",
            Mechanism::Rfpa { .. } => "rfpa",
            Mechanism::Qpfpa { .. } => "qpfpa",
        }
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self, Mechanism::Fpa { .. })
    }

    pub fn validate(&self, instance: &Instance) -> Result<()> {
        match self {
            Mechanism::Fpa { tie } => tie.validate(instance.num_bidders()),
            Mechanism::Rfpa { alpha } => {
                if !(*alpha > 1.0 && alpha.is_finite()) {
                    return Err(Error::Domain(format!("rFPA requires alpha > 1, got {alpha}")));
                }
                if instance.num_bidders() != 2 {
                    return Err(Error::Unsupported(format!(
                        "rFPA is defined for exactly 2 bidders, got {}",
                        instance.num_bidders()
                    )));
                }
                Ok(())
            }
            Mechanism::Qpfpa { alpha } => {
                if !(*alpha >= 1.0 && alpha.is_finite()) {
                    Err(Error::Domain(format!(
                        "quasi-proportional FPA requires alpha >= 1, got {alpha}"
                    )))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Win probabilities on one query given the column of bids.
    pub fn query_probabilities(&self, column: &[f64]) -> Vec<f64> {
        match self {
            Mechanism::Fpa { tie } => fpa_column(column, tie),
            Mechanism::Rfpa { alpha } => {
                let p = rfpa_win_probability(column[0], column[1], *alpha);
                if column[0] == 0.0 && column[1] == 0.0 {
                    vec![0.0, 0.0]
                } else {
                    vec![p, 1.0 - p]
                }
            }
            Mechanism::Qpfpa { alpha } => qp_column(column, *alpha),
        }
    }

    pub fn allocate(&self, instance: &Instance, bids: &BidProfile) -> Result<Outcome> {
        self.validate(instance)?;
        instance.check_matrix("bids", bids.bids())?;
        let n = instance.num_bidders();
        let q = instance.num_queries();
        let mut pi = vec![vec![0.0; q]; n];
        let mut pay = vec![vec![0.0; q]; n];
        let mut column = vec![0.0; n];
        for j in 0..q {
            for (i, c) in column.iter_mut().enumerate() {
                *c = bids.bid(i, j);
            }
            let probs = self.query_probabilities(&column);
            for i in 0..n {
                pi[i][j] = probs[i];
                pay[i][j] = if probs[i] > 0.0 { probs[i] * column[i] } else { 0.0 };
            }
        }
        Outcome::new(instance, Allocation::new(pi)?, pay)
    }
}

/// Index of the first-price winner of a bid column, if any bid is positive.
pub fn fpa_winner(column: &[f64], tie: &TieBreak) -> Option<usize> {
    let n = column.len();
    let mut best: Option<usize> = None;
    for (i, &b) in column.iter().enumerate() {
        if b <= 0.0 {
            continue;
        }
        best = match best {
            None => Some(i),
            Some(k) if b > column[k] || (b == column[k] && tie.prefers(i, k, n)) => Some(i),
            keep => keep,
        };
    }
    best
}

fn fpa_column(column: &[f64], tie: &TieBreak) -> Vec<f64> {
    let mut probs = vec![0.0; column.len()];
    if let Some(w) = fpa_winner(column, tie) {
        probs[w] = 1.0;
    }
    probs
}

/// Probability that the bidder bidding `own` beats `other` under rFPA(alpha).
pub fn rfpa_win_probability(own: f64, other: f64, alpha: f64) -> f64 {
    if own <= 0.0 {
        return if other <= 0.0 { 0.5 } else { 0.0 };
    }
    if other <= 0.0 || own >= alpha * other {
        return 1.0;
    }
    if other >= alpha * own {
        return 0.0;
    }
    0.5 * (1.0 + (own / other).ln() / alpha.ln())
}

/// Quasi-proportional probabilities `b_i^alpha / sum_k b_k^alpha`, computed in log space.
pub fn qp_column(column: &[f64], alpha: f64) -> Vec<f64> {
    let logs: Vec<Option<f64>> = column.iter().map(|&b| (b > 0.0).then(|| alpha * b.ln())).collect();
    let Some(max) = logs.iter().flatten().copied().reduce(f64::max) else {
        return vec![0.0; column.len()];
    };
    let weights: Vec<f64> = logs.iter().map(|l| l.map_or(0.0, |l| (l - max).exp())).collect();
    let total: f64 = weights.iter().sum();
    weights.iter().map(|w| w / total).collect()
}

pub fn fpa_allocate(instance: &Instance, bids: &BidProfile, tie: &TieBreak) -> Result<Outcome> {
    Mechanism::Fpa { tie: tie.clone() }.allocate(instance, bids)
}

pub fn rfpa_allocate(instance: &Instance, bids: &BidProfile, alpha: f64) -> Result<Outcome> {
    Mechanism::Rfpa { alpha }.allocate(instance, bids)
}

pub fn qpfpa_allocate(instance: &Instance, bids: &BidProfile, alpha: f64) -> Result<Outcome> {
    Mechanism::Qpfpa { alpha }.allocate(instance, bids)
}
