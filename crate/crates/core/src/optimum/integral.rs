use super::OptResult;
use crate::error::{Error, Result};
use crate::model::{Allocation, Instance};

pub const DEFAULT_NODE_CAP: u64 = 100_000_000;

/// Maximum liquid welfare over deterministic allocations.
pub fn opt_integral(instance: &Instance) -> Result<OptResult> {
    opt_integral_with_cap(instance, DEFAULT_NODE_CAP)
}

/// Depth-first branch and bound over each query's owner (or nobody).
pub fn opt_integral_with_cap(instance: &Instance, node_cap: u64) -> Result<OptResult> {
    let n = instance.num_bidders();
    let q = instance.num_queries();
    let budgets: Vec<f64> = instance.budgets().iter().map(|b| b.amount()).collect();

    // remaining[j][i] = sum of v_i over queries j.. (suffix sums).
    let mut remaining = vec![vec![0.0; n]; q + 1];
    for j in (0..q).rev() {
        let (head, tail) = remaining.split_at_mut(j + 1);
        for (i, r) in head[j].iter_mut().enumerate() {
            *r = tail[0][i] + instance.value(i, j);
        }
    }
    let options: Vec<Vec<usize>> = (0..q)
        .map(|j| {
            let mut opts: Vec<usize> = (0..n).filter(|&i| instance.value(i, j) > 0.0).collect();
            opts.sort_by(|&a, &b| instance.value(b, j).total_cmp(&instance.value(a, j)).then(a.cmp(&b)));
            opts
        })
        .collect();

    let mut search = Search {
        instance,
        budgets: &budgets,
        remaining: &remaining,
        options: &options,
        acc: vec![0.0; n],
        assign: vec![None; q],
        best: -1.0,
        best_assign: vec![None; q],
        nodes: 0,
        node_cap,
    };
    search.dfs(0)?;

    let mut pi = vec![vec![0.0; q]; n];
    for (j, owner) in search.best_assign.iter().enumerate() {
        if let Some(i) = owner {
            pi[*i][j] = 1.0;
        }
    }
    Ok(OptResult {
        value: search.best.max(0.0),
        allocation: Allocation::new(pi)?,
        exact: true,
    })
}

struct Search<'a> {
    instance: &'a Instance,
    budgets: &'a [f64],
    remaining: &'a [Vec<f64>],
    options: &'a [Vec<usize>],
    acc: Vec<f64>,
    assign: Vec<Option<usize>>,
    best: f64,
    best_assign: Vec<Option<usize>>,
    nodes: u64,
    node_cap: u64,
}

impl Search<'_> {
    fn welfare(&self, j: usize) -> (f64, f64) {
        let mut now = 0.0;
        let mut bound = 0.0;
        for (i, &b) in self.budgets.iter().enumerate() {
            now += self.acc[i].min(b);
            bound += (self.acc[i] + self.remaining[j][i]).min(b);
        }
        (now, bound)
    }

    fn dfs(&mut self, j: usize) -> Result<()> {
        self.nodes += 1;
        if self.nodes > self.node_cap {
            return Err(Error::TooLarge(format!(
                "integral search exceeded {} nodes",
                self.node_cap
            )));
        }
        let (now, bound) = self.welfare(j);
        if now > self.best {
            self.best = now;
            self.best_assign.clone_from(&self.assign);
        }
        if j == self.assign.len() || bound <= self.best {
            return Ok(());
        }
        for k in 0..self.options[j].len() {
            let i = self.options[j][k];
            let v = self.instance.value(i, j);
            self.acc[i] += v;
            self.assign[j] = Some(i);
            self.dfs(j + 1)?;
            self.acc[i] -= v;
        }
        self.assign[j] = None;
        self.dfs(j + 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn node_cap_is_enforced() {
        let inst = Instance::from_raw(
            &[1.0; 4],
            (0..4)
                .map(|i| (0..8).map(|j| 1.0 + (i * 8 + j) as f64 * 0.01).collect())
                .collect(),
        )
        .unwrap();
        assert!(matches!(opt_integral_with_cap(&inst, 10), Err(Error::TooLarge(_))));
        assert!(opt_integral(&inst).is_ok());
    }
}
