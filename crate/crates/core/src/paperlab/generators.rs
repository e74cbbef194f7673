//! The explicit extremal instances.

use crate::error::{Error, Result};
use crate::model::{BidProfile, Budget, Instance};

/// `n` bidders with budget 1 and value `n` on a single query: fractional
/// optimum `n`, integral optimum 1.
pub fn gen_single_query_gap(n: usize) -> Result<Instance> {
    if n == 0 {
        return Err(Error::Domain("need at least one bidder".into()));
    }
    Instance::new(vec![Budget::finite(1.0)?; n], vec![vec![n as f64]; n])
}

/// The gap instance with bidder 0's budget raised to `2 + eps`, so that it
/// wins without relying on the tie-break, together with the profile where
/// everybody bids their budget. For `n = 2` that profile overspends.
pub fn gen_single_query_gap_randomtie(n: usize, eps: f64) -> Result<(Instance, BidProfile)> {
    if n < 2 {
        return Err(Error::Domain(format!("need at least two bidders, got {n}")));
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Domain(format!("eps must be positive, got {eps}")));
    }
    let mut budgets = vec![Budget::finite(1.0)?; n];
    budgets[0] = Budget::finite(2.0 + eps)?;
    let bids = budgets.iter().map(|b| vec![b.amount()]).collect();
    let instance = Instance::new(budgets, vec![vec![n as f64]; n])?;
    Ok((instance, BidProfile::per_query(bids)?))
}

/// Uniform-bidding construction whose equilibrium welfare is about `1/n` of
/// the integral optimum. Query 0 is contested by everyone; query `i` is
/// bidder `i`'s private query, which bidder 0 values at `2 eps`.
/// Bidder 0 bids truthfully; every other bidder uses the multiplier that ties
/// bidder 0 on query 0, and loses that tie under lowest-index tie-breaking.
pub fn gen_uniform_ipoa(n: usize, eps: f64) -> Result<(Instance, BidProfile)> {
    if n < 2 {
        return Err(Error::Domain(format!("need at least two bidders, got {n}")));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Domain(format!("eps must lie in (0, 1), got {eps}")));
    }
    let mut values = vec![vec![0.0; n]; n];
    values[0][0] = 1.0 + eps;
    for v in values[0].iter_mut().skip(1) {
        *v = 2.0 * eps;
    }
    for (i, row) in values.iter_mut().enumerate().skip(1) {
        row[0] = 1.0 / eps;
        row[i] = 1.0;
    }
    let mut budgets = vec![Budget::finite(1.0)?; n];
    budgets[0] = Budget::INFINITE;
    let instance = Instance::new(budgets, values)?;

    let top = 1.0 + eps;
    let mut m = eps * (1.0 + eps);
    while m * instance.value(1, 0) > top {
        m = f64::from_bits(m.to_bits() - 1);
    }
    let mut multipliers = vec![m; n];
    multipliers[0] = 1.0;
    let bids = BidProfile::uniform(&instance, multipliers)?;
    Ok((instance, bids))
}

/// Two bidders with budget 1 and value 2 on one query: splitting it earns
/// welfare 2, any deterministic assignment earns 1.
pub fn gen_fractional_beats_integral_pair() -> Instance {
    Instance::from_raw(&[1.0, 1.0], vec![vec![2.0], vec![2.0]]).expect("constant instance is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanisms::Mechanism;
    use crate::model::liquid_welfare;

    #[test]
    fn uniform_construction_ties_on_the_shared_query() {
        for &eps in &[0.1, 0.01, 0.003] {
            for n in 2..=8 {
                let (inst, bids) = gen_uniform_ipoa(n, eps).unwrap();
                let out = Mechanism::fpa().allocate(&inst, &bids).unwrap();
                for j in 0..n {
                    assert_eq!(out.allocation().prob(0, j), 1.0);
                }
                let lw = liquid_welfare(&inst, out.allocation()).unwrap();
                let expect = 1.0 + eps + 2.0 * (n - 1) as f64 * eps;
                assert!((lw - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn random_tie_profile_bids_budgets() {
        let (inst, bids) = gen_single_query_gap_randomtie(4, 0.01).unwrap();
        assert_eq!(inst.budget(0).amount(), 2.01);
        assert_eq!(bids.bid(0, 0), 2.01);
        assert_eq!(bids.bid(3, 0), 1.0);
    }
}
