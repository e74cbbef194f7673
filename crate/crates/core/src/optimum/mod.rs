//! Welfare benchmarks: the fractional optimum `Opt` (an LP), the integral
//! optimum `I-Opt` (branch and bound) and two independent oracles.

mod integral;
mod oracles;
pub mod simplex;

use serde::Serialize;

pub use integral::{opt_integral, opt_integral_with_cap, DEFAULT_NODE_CAP};
pub use oracles::{opt_fractional_bruteforce, single_query_fractional_greedy, BRUTEFORCE_MAX_CELLS};

use crate::error::{Error, Result};
use crate::model::{liquid_welfare, Allocation, Instance};
use crate::tolerance;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptResult {
    pub value: f64,
    pub allocation: Allocation,
    /// False for LP solutions, which carry pivot tolerance.
    pub exact: bool,
}

/// Maximum liquid welfare over fractional allocations.
pub fn opt_fractional(instance: &Instance) -> Result<OptResult> {
    let n = instance.num_bidders();
    let q = instance.num_queries();
    let nv = n * q + n;
    let pi_var = |i: usize, j: usize| i * q + j;
    let u_var = |i: usize| n * q + i;

    let mut c = vec![0.0; nv];
    for i in 0..n {
        c[u_var(i)] = 1.0;
    }
    let mut a = Vec::new();
    let mut b = Vec::new();
    for i in 0..n {
        let budget = instance.budget(i);
        if !budget.is_infinite() {
            let mut row = vec![0.0; nv];
            row[u_var(i)] = 1.0;
            a.push(row);
            b.push(budget.amount());
        }
        let mut row = vec![0.0; nv];
        row[u_var(i)] = 1.0;
        for j in 0..q {
            row[pi_var(i, j)] = -instance.value(i, j);
        }
        a.push(row);
        b.push(0.0);
    }
    for j in 0..q {
        let mut row = vec![0.0; nv];
        for i in 0..n {
            row[pi_var(i, j)] = 1.0;
        }
        a.push(row);
        b.push(1.0);
    }

    let sol = simplex::maximize(&c, &a, &b)?;
    let mut pi = vec![vec![0.0; q]; n];
    for (i, row) in pi.iter_mut().enumerate() {
        for (j, p) in row.iter_mut().enumerate() {
            *p = sol.x[pi_var(i, j)].clamp(0.0, 1.0);
        }
    }
    for j in 0..q {
        let total: f64 = pi.iter().map(|r| r[j]).sum();
        if total > 1.0 {
            for row in pi.iter_mut() {
                row[j] /= total;
            }
        }
    }
    let allocation = Allocation::new(pi)?;
    let value = liquid_welfare(instance, &allocation)?;
    let scale = value.abs().max(sol.objective.abs()).max(1.0);
    if (value - sol.objective).abs() > tolerance::LP_CONSISTENCY_REL * scale {
        return Err(Error::LpFailure {
            iterations: sol.iterations,
            reason: format!(
                "objective {} disagrees with welfare {} of the recovered allocation",
                sol.objective, value
            ),
        });
    }
    Ok(OptResult {
        value,
        allocation,
        exact: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gap(n: usize) -> Instance {
        Instance::from_raw(&vec![1.0; n], vec![vec![n as f64]; n]).unwrap()
    }

    #[test]
    fn single_query_gap_family() {
        for n in 1..=8 {
            let frac = opt_fractional(&gap(n)).unwrap();
            assert!((frac.value - n as f64).abs() < 1e-9, "n={n}");
            let int = opt_integral(&gap(n)).unwrap();
            assert!((int.value - 1.0).abs() < 1e-12);
            assert!(int.exact);
        }
    }

    #[test]
    fn pair_and_unconstrained_examples() {
        let pair = Instance::from_raw(&[1.0, 1.0], vec![vec![2.0], vec![2.0]]).unwrap();
        assert!((opt_fractional(&pair).unwrap().value - 2.0).abs() < 1e-9);
        assert_eq!(opt_integral(&pair).unwrap().value, 1.0);
        let solo = Instance::from_raw(&[f64::INFINITY], vec![vec![3.0, 4.0]]).unwrap();
        let r = opt_fractional(&solo).unwrap();
        assert!((r.value - 7.0).abs() < 1e-9);
        assert_eq!(r.allocation.pi(), &[vec![1.0, 1.0]]);
        let capped = Instance::from_raw(&[5.0], vec![vec![3.0, 4.0]]).unwrap();
        assert_eq!(opt_integral(&capped).unwrap().value, 5.0);
    }

    #[test]
    fn all_zero_values() {
        let z = Instance::from_raw(&[1.0, 2.0], vec![vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        assert_eq!(opt_fractional(&z).unwrap().value, 0.0);
        assert_eq!(opt_integral(&z).unwrap().value, 0.0);
    }
}
