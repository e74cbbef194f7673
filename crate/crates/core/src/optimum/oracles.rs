use super::OptResult;
use crate::error::{Error, Result};
use crate::model::{Allocation, Instance};

/// Largest `n * |Q|` accepted by the grid oracle.
pub const BRUTEFORCE_MAX_CELLS: usize = 6;
const BRUTEFORCE_MAX_POINTS: f64 = 5e7;

/// Maximum liquid welfare over allocations whose entries are multiples of `1 / grid_steps`.
pub fn opt_fractional_bruteforce(instance: &Instance, grid_steps: u32) -> Result<f64> {
    let n = instance.num_bidders();
    let q = instance.num_queries();
    if n * q > BRUTEFORCE_MAX_CELLS {
        return Err(Error::TooLarge(format!(
            "grid oracle needs n*|Q| <= {BRUTEFORCE_MAX_CELLS}, got {}",
            n * q
        )));
    }
    if grid_steps == 0 {
        return Err(Error::Domain("grid_steps must be positive".into()));
    }
    let g = grid_steps as usize;
    let columns = compositions(n, g);
    let points = (columns.len() as f64).powi(q as i32);
    if points > BRUTEFORCE_MAX_POINTS {
        return Err(Error::TooLarge(format!(
            "grid oracle would enumerate {points:.0} points"
        )));
    }
    let step = 1.0 / g as f64;
    let mut choice = vec![0usize; q];
    let mut best = 0.0f64;
    let mut value = vec![0.0; n];
    loop {
        value.iter_mut().for_each(|v| *v = 0.0);
        for (j, &c) in choice.iter().enumerate() {
            for (i, &k) in columns[c].iter().enumerate() {
                value[i] += k as f64 * step * instance.value(i, j);
            }
        }
        let lw: f64 = value.iter().enumerate().map(|(i, &v)| instance.budget(i).cap(v)).sum();
        best = best.max(lw);

        let mut pos = 0;
        loop {
            if pos == q {
                return Ok(best);
            }
            choice[pos] += 1;
            if choice[pos] < columns.len() {
                break;
            }
            choice[pos] = 0;
            pos += 1;
        }
    }
}

/// All `(k_0..k_{n-1})` with nonnegative entries summing to at most `g`.
fn compositions(n: usize, g: usize) -> Vec<Vec<usize>> {
    fn rec(n: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == n {
            out.push(cur.clone());
            return;
        }
        for k in 0..=left {
            cur.push(k);
            rec(n, left - k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, g, &mut Vec::with_capacity(n), &mut out);
    out
}

/// Exact fractional optimum for a single query: fill highest values first, each
/// up to the fraction that exhausts its budget.
pub fn single_query_fractional_greedy(instance: &Instance) -> Result<OptResult> {
    if instance.num_queries() != 1 {
        return Err(Error::Unsupported(format!(
            "greedy oracle needs exactly one query, got {}",
            instance.num_queries()
        )));
    }
    let n = instance.num_bidders();
    let mut order: Vec<usize> = (0..n).filter(|&i| instance.value(i, 0) > 0.0).collect();
    order.sort_by(|&a, &b| instance.value(b, 0).total_cmp(&instance.value(a, 0)).then(a.cmp(&b)));
    let mut pi = vec![vec![0.0]; n];
    let mut left = 1.0f64;
    let mut value = 0.0;
    for i in order {
        if left <= 0.0 {
            break;
        }
        let v = instance.value(i, 0);
        let budget = instance.budget(i);
        let frac = if budget.is_infinite() {
            left
        } else {
            left.min(budget.amount() / v)
        };
        pi[i][0] = frac;
        value += budget.cap(frac * v);
        left -= frac;
    }
    Ok(OptResult {
        value,
        allocation: Allocation::new(pi)?,
        exact: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_examples() {
        let gap2 = Instance::from_raw(&[1.0, 1.0], vec![vec![2.0], vec![2.0]]).unwrap();
        assert!((opt_fractional_bruteforce(&gap2, 100).unwrap() - 2.0).abs() <= 0.02);
        let one = Instance::from_raw(&[1.0], vec![vec![2.0]]).unwrap();
        assert_eq!(opt_fractional_bruteforce(&one, 2).unwrap(), 1.0);
        assert_eq!(opt_fractional_bruteforce(&one, 1).unwrap(), 1.0);
        let big = Instance::from_raw(&[1.0; 7], vec![vec![1.0]; 7]).unwrap();
        assert!(matches!(opt_fractional_bruteforce(&big, 2), Err(Error::TooLarge(_))));
    }

    #[test]
    fn greedy_examples() {
        let gap4 = Instance::from_raw(&[1.0; 4], vec![vec![4.0]; 4]).unwrap();
        assert!((single_query_fractional_greedy(&gap4).unwrap().value - 4.0).abs() < 1e-12);
        let mixed = Instance::from_raw(&[1.0, 10.0], vec![vec![3.0], vec![2.0]]).unwrap();
        let r = single_query_fractional_greedy(&mixed).unwrap();
        assert!((r.value - (1.0 + 4.0 / 3.0)).abs() < 1e-12);
        assert!((r.allocation.prob(0, 0) - 1.0 / 3.0).abs() < 1e-12);
        assert!((r.allocation.prob(1, 0) - 2.0 / 3.0).abs() < 1e-12);
        let zero = Instance::from_raw(&[1.0, 1.0], vec![vec![0.0], vec![0.0]]).unwrap();
        assert_eq!(single_query_fractional_greedy(&zero).unwrap().value, 0.0);
        let two = Instance::from_raw(&[1.0], vec![vec![1.0, 1.0]]).unwrap();
        assert!(single_query_fractional_greedy(&two).is_err());
    }
}
