//! Minimum-cost rectangular linear assignment (Hungarian method with
//! row/column potentials, O(n²m)).

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Dense non-negative cost matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct CostMatrix<T: Real> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> CostMatrix<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidParameter(format!(
                "cost matrix {rows}×{cols} needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite() || **v < T::zero()) {
            return Err(Error::InvalidParameter(format!(
                "cost entries must be finite and non-negative, found {bad}"
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl FnMut(usize, usize) -> T) -> Result<Self> {
        let mut f = f;
        let data = (0..rows * cols).map(|k| f(k / cols.max(1), k % cols.max(1))).collect();
        Self::new(rows, cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Assignment<T: Real> {
    /// Column assigned to each row, if any.
    pub row_to_col: Vec<Option<usize>>,
    /// Sum of the costs of the kept pairs.
    pub total_cost: T,
}

impl<T: Real> Assignment<T> {
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.row_to_col
            .iter()
            .enumerate()
            .filter_map(|(r, c)| c.map(|c| (r, c)))
            .collect()
    }
}

/// Minimum-total-cost matching of `min(rows, cols)` pairs; pairs whose cost
/// exceeds `reject_above` are then dropped.
pub fn hungarian<T: Real>(cost: &CostMatrix<T>, reject_above: Option<T>) -> Assignment<T> {
    let (n, m) = (cost.rows, cost.cols);
    let mut row_to_col = vec![None; n];
    if n == 0 || m == 0 {
        return Assignment {
            row_to_col,
            total_cost: T::zero(),
        };
    }
    if n <= m {
        for (r, c) in solve(n, m, |i, j| cost.get(i, j)).into_iter().enumerate() {
            row_to_col[r] = Some(c);
        }
    } else {
        for (c, r) in solve(m, n, |i, j| cost.get(j, i)).into_iter().enumerate() {
            row_to_col[r] = Some(c);
        }
    }
    let mut total = T::zero();
    for (r, slot) in row_to_col.iter_mut().enumerate() {
        if let Some(c) = *slot {
            let v = cost.get(r, c);
            if reject_above.is_some_and(|limit| v > limit) {
                *slot = None;
            } else {
                total += v;
            }
        }
    }
    Assignment {
        row_to_col,
        total_cost: total,
    }
}

/// Potentials-based Hungarian for `n ≤ m`; returns the column of each row.
fn solve<T: Real>(n: usize, m: usize, a: impl Fn(usize, usize) -> T) -> Vec<usize> {
    let inf = T::max_value().unwrap();
    let mut u = vec![T::zero(); n + 1];
    let mut v = vec![T::zero(); m + 1];
    let mut p = vec![0usize; m + 1]; // row matched to column j (1-based, 0 = none)
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = a(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0usize; n];
    for j in 1..=m {
        if p[j] != 0 {
            out[p[j] - 1] = j - 1;
        }
    }
    out
}

/// Matches rows to columns maximising first the number of pairs with
/// `score ≥ gate`, then their summed score; sub-gate pairs are never returned.
///
/// Used for IoU-based association and ground-truth matching.
pub fn gated_max_score_matching<T: Real>(
    rows: usize,
    cols: usize,
    score: impl Fn(usize, usize) -> T,
    gate: T,
) -> Vec<(usize, usize)> {
    if rows == 0 || cols == 0 {
        return Vec::new();
    }
    // Any sub-gate pair costs more than every gated pair together.
    let penalty = T::from_usize(rows.min(cols) + 1).unwrap();
    let scores: Vec<T> = (0..rows * cols).map(|k| score(k / cols, k % cols)).collect();
    let cost = CostMatrix::from_fn(rows, cols, |r, c| {
        let s = scores[r * cols + c];
        if s >= gate {
            (T::one() - s).max(T::zero())
        } else {
            penalty
        }
    })
    .expect("finite costs");
    hungarian(&cost, None)
        .pairs()
        .into_iter()
        .filter(|&(r, c)| scores[r * cols + c] >= gate)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, n - 1);
                out.push(q);
            }
        }
        out
    }

    #[test]
    fn identity_like_matrix() {
        let c = CostMatrix::from_fn(3, 3, |i, j| if i == j { 0.0 } else { 1.0 }).unwrap();
        let a = hungarian(&c, None);
        assert_eq!(a.row_to_col, vec![Some(0), Some(1), Some(2)]);
        assert_eq!(a.total_cost, 0.0);
    }

    #[test]
    fn single_entry() {
        let c = CostMatrix::new(1, 1, vec![4.2]).unwrap();
        assert_eq!(hungarian(&c, None).row_to_col, vec![Some(0)]);
    }

    #[test]
    fn random_square_matrices_match_permutation_minimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let perms = permutations(6);
        for _ in 0..30 {
            let c = CostMatrix::from_fn(6, 6, |_, _| rng.random_range(0.0..10.0)).unwrap();
            let best = perms
                .iter()
                .map(|p| p.iter().enumerate().map(|(r, &col)| c.get(r, col)).sum::<f64>())
                .fold(f64::INFINITY, f64::min);
            assert!((hungarian(&c, None).total_cost - best).abs() < 1e-9);
        }
    }

    #[test]
    fn rectangular_leaves_extra_unmatched() {
        let c = CostMatrix::new(3, 2, vec![1.0f64, 9.0, 9.0, 1.0, 0.5, 0.5]).unwrap();
        let a = hungarian(&c, None);
        assert_eq!(a.pairs().len(), 2);
        assert!((a.total_cost - 1.5).abs() < 1e-12);
        let wide = CostMatrix::new(2, 3, vec![5.0, 1.0, 3.0, 1.0, 5.0, 3.0]).unwrap();
        assert_eq!(hungarian(&wide, None).row_to_col, vec![Some(1), Some(0)]);
    }

    #[test]
    fn rejection_threshold_drops_expensive_pairs() {
        let c = CostMatrix::new(2, 2, vec![0.1f64, 5.0, 5.0, 0.9]).unwrap();
        let a = hungarian(&c, Some(0.5));
        assert_eq!(a.row_to_col, vec![Some(0), None]);
        assert!((a.total_cost - 0.1).abs() < 1e-12);
    }

    #[test]
    fn invalid_entries_rejected() {
        assert!(CostMatrix::new(1, 1, vec![f64::NAN]).is_err());
        assert!(CostMatrix::new(1, 1, vec![-1.0]).is_err());
        assert!(CostMatrix::<f64>::new(2, 2, vec![0.0]).is_err());
    }

    #[test]
    fn gated_matching_prefers_cardinality() {
        // greedy on best score would take (0,0) and strand row 1
        let s = [[0.9, 0.5], [0.6, 0.0]];
        let pairs = gated_max_score_matching(2, 2, |r, c| s[r][c], 0.3);
        assert_eq!(pairs, vec![(0, 1), (1, 0)]);
    }

    proptest! {
        #[test]
        fn never_worse_than_random_permutation(seed in 0u64..10_000, n in 1usize..8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let c = CostMatrix::from_fn(n, n, |_, _| rng.random_range(0.0..1.0)).unwrap();
            let a = hungarian(&c, None);
            let mut perm: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                perm.swap(i, rng.random_range(0..=i));
            }
            let alt: f64 = perm.iter().enumerate().map(|(r, &col)| c.get(r, col)).sum();
            prop_assert!(a.total_cost <= alt + 1e-12);
        }
    }
}
