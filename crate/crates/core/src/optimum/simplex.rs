//! Dense tableau simplex for `max c.x  s.t.  A x <= b, x >= 0` with `b >= 0`.
//!
//! The slack basis is feasible from the start, so no phase one is needed.
//! Bland's rule picks both the entering and the leaving variable.

use crate::error::{Error, Result};
use crate::tolerance;

#[derive(Debug)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

/// Solves the LP. `a` is row-major with one row per constraint.
pub fn maximize(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> Result<LpSolution> {
    let nv = c.len();
    let m = a.len();
    if b.len() != m {
        return Err(Error::DimensionMismatch {
            what: "LP right-hand side",
            expected: m,
            found: b.len(),
        });
    }
    if let Some(&r) = b.iter().find(|&&r| !(r >= 0.0 && r.is_finite())) {
        return Err(Error::LpFailure {
            iterations: 0,
            reason: format!("right-hand side {r} breaks the slack basis"),
        });
    }
    let width = nv + m + 1;
    let rhs = nv + m;
    // Rows 0..m are constraints; row m is the objective (reduced costs, negated).
    let mut t = vec![vec![0.0; width]; m + 1];
    for (r, row) in a.iter().enumerate() {
        if row.len() != nv {
            return Err(Error::DimensionMismatch {
                what: "LP constraint row",
                expected: nv,
                found: row.len(),
            });
        }
        t[r][..nv].copy_from_slice(row);
        t[r][nv + r] = 1.0;
        t[r][rhs] = b[r];
    }
    for (k, &ck) in c.iter().enumerate() {
        t[m][k] = -ck;
    }
    let mut basis: Vec<usize> = (nv..nv + m).collect();
    let max_iter = 50 * (nv + m).max(20) * (m.max(1));
    let mut iterations = 0;
    while let Some(enter) = (0..nv + m).find(|&k| t[m][k] < -tolerance::PIVOT) {
        let mut leave: Option<(usize, f64)> = None;
        for r in 0..m {
            let coef = t[r][enter];
            if coef > tolerance::PIVOT {
                let ratio = t[r][rhs] / coef;
                leave = match leave {
                    None => Some((r, ratio)),
                    Some((lr, lratio)) => {
                        if ratio < lratio - 1e-12 || (ratio <= lratio + 1e-12 && basis[r] < basis[lr]) {
                            Some((r, ratio))
                        } else {
                            Some((lr, lratio))
                        }
                    }
                };
            }
        }
        let Some((pr, _)) = leave else {
            return Err(Error::LpFailure {
                iterations,
                reason: "objective is unbounded".into(),
            });
        };
        pivot(&mut t, pr, enter);
        basis[pr] = enter;
        iterations += 1;
        if iterations > max_iter {
            return Err(Error::LpFailure {
                iterations,
                reason: "iteration cap reached".into(),
            });
        }
    }
    let mut x = vec![0.0; nv];
    for (r, &var) in basis.iter().enumerate() {
        if var < nv {
            x[var] = t[r][rhs].max(0.0);
        }
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::LpFailure {
            iterations,
            reason: "non-finite primal solution".into(),
        });
    }
    Ok(LpSolution {
        objective: t[m][rhs],
        x,
        iterations,
    })
}

fn pivot(t: &mut [Vec<f64>], pr: usize, pc: usize) {
    let p = t[pr][pc];
    for v in t[pr].iter_mut() {
        *v /= p;
    }
    t[pr][pc] = 1.0;
    let prow = t[pr].clone();
    for (r, row) in t.iter_mut().enumerate() {
        if r == pr {
            continue;
        }
        let f = row[pc];
        if f != 0.0 {
            for (v, pv) in row.iter_mut().zip(&prow) {
                *v -= f * pv;
            }
            row[pc] = 0.0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_problem() {
        // max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6), 36
        let s = maximize(
            &[3.0, 5.0],
            &[vec![1.0, 0.0], vec![0.0, 2.0], vec![3.0, 2.0]],
            &[4.0, 12.0, 18.0],
        )
        .unwrap();
        assert!((s.objective - 36.0).abs() < 1e-12);
        assert!((s.x[0] - 2.0).abs() < 1e-12 && (s.x[1] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn unbounded_is_reported() {
        let err = maximize(&[1.0, 0.0], &[vec![-1.0, 1.0]], &[1.0]).unwrap_err();
        assert!(matches!(err, Error::LpFailure { .. }));
    }

    #[test]
    fn degenerate_rows_terminate() {
        let s = maximize(
            &[1.0, 1.0, 1.0],
            &[
                vec![1.0, -1.0, 0.0],
                vec![0.0, 1.0, -1.0],
                vec![-1.0, 0.0, 1.0],
                vec![1.0, 1.0, 1.0],
            ],
            &[0.0, 0.0, 0.0, 3.0],
        )
        .unwrap();
        assert!((s.objective - 3.0).abs() < 1e-12);
    }
}
