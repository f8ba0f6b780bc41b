use ndarray::Array2;

use crate::error::{Error, Result};

/// Optimal one-to-one matching of ground-truth rows to slot columns.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    /// `(gt_index, slot_index)`, sorted by `gt_index`.
    pub assignment: Vec<(usize, usize)>,
    pub total_cost: f64,
    pub cost_matrix: Array2<f64>,
}

impl MatchResult {
    pub fn slot_for(&self, gt: usize) -> Option<usize> {
        self.assignment.iter().find(|(g, _)| *g == gt).map(|(_, s)| *s)
    }

    pub fn mean_cost(&self) -> f64 {
        if self.assignment.is_empty() {
            0.0
        } else {
            self.total_cost / self.assignment.len() as f64
        }
    }
}

/// Minimum-cost assignment of every row to a distinct column (`n <= K`).
///
/// Shortest augmenting paths with row/column potentials, `O(n^2 K)`.
pub fn hungarian(cost: &Array2<f64>) -> Result<MatchResult> {
    let (n, k) = cost.dim();
    if n > k {
        return Err(Error::invalid(format!("cannot match {n} rows to {k} columns")));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::invalid("cost matrix has non-finite entries"));
    }
    // 1-based; column 0 is the virtual source
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; k + 1];
    let mut owner = vec![0usize; k + 1];
    let mut way = vec![0usize; k + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; k + 1];
        let mut used = vec![false; k + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=k {
                if used[j] {
                    continue;
                }
                let reduced = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                if reduced < minv[j] {
                    minv[j] = reduced;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=k {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment: Vec<(usize, usize)> = (1..=k)
        .filter(|&j| owner[j] != 0)
        .map(|j| (owner[j] - 1, j - 1))
        .collect();
    assignment.sort_unstable();
    let total_cost = assignment.iter().map(|&(i, j)| cost[(i, j)]).sum();
    Ok(MatchResult { assignment, total_cost, cost_matrix: cost.clone() })
}

/// Maximum-score assignment, solved by negating the scores.
pub fn hungarian_max(score: &Array2<f64>) -> Result<MatchResult> {
    let mut m = hungarian(&score.mapv(|s| -s))?;
    m.total_cost = -m.total_cost;
    m.cost_matrix = score.clone();
    Ok(m)
}
