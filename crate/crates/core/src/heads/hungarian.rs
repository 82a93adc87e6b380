//! Minimum-cost assignment of rows to distinct columns.

use serde::{Deserialize, Serialize};

use crate::nn::{Matrix, NnError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    /// `perm[row] = column`.
    pub perm: Vec<usize>,
    pub total_cost: f64,
}

/// Shortest augmenting path solver with row and column potentials. Returns the
/// column of every row of the `rows × cols` submatrix.
fn solve(cost: &Matrix, rows: &[usize], cols: &[usize]) -> Vec<usize> {
    let n = rows.len();
    let m = cols.len();
    let a = |i: usize, j: usize| cost.get(rows[i - 1], cols[j - 1]);
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = a(i0, j) - u[i0] - v[j];
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
    let mut out = vec![0; n];
    for j in 1..=m {
        if p[j] != 0 {
            out[p[j] - 1] = j - 1;
        }
    }
    out
}

fn total(cost: &Matrix, rows: &[usize], cols: &[usize]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    let a = solve(cost, rows, cols);
    rows.iter().zip(&a).map(|(&r, &c)| cost.get(r, cols[c])).sum()
}

/// Optimal assignment of every row of an `n × m` cost matrix (`n ≤ m`) to a
/// distinct column. Among optimal assignments the lexicographically smallest
/// `perm` is returned.
pub fn hungarian(cost: &Matrix) -> Result<Assignment, NnError> {
    let (n, m) = cost.shape();
    if n > m {
        return Err(NnError::Shape(format!("assignment needs rows <= columns, got {n}x{m}")));
    }
    if !cost.is_finite() {
        return Err(NnError::Shape("assignment costs must be finite".into()));
    }
    let all_rows: Vec<usize> = (0..n).collect();
    let mut free: Vec<usize> = (0..m).collect();
    let mut best = total(cost, &all_rows, &free);
    let mut perm = Vec::with_capacity(n);
    // Fix rows in order, each to the smallest column that still admits an optimum.
    for i in 0..n {
        let rest: Vec<usize> = (i + 1..n).collect();
        let tol = 1e-12 * best.abs().max(1.0);
        let mut chosen = None;
        for (k, &j) in free.iter().enumerate() {
            let cols: Vec<usize> = free.iter().copied().filter(|&c| c != j).collect();
            let sub = total(cost, &rest, &cols);
            if cost.get(i, j) + sub <= best + tol {
                chosen = Some((k, sub));
                break;
            }
        }
        // Rounding can hide every candidate only if the tolerance is too tight;
        // fall back to the solver's own choice.
        let (k, sub) = chosen.unwrap_or_else(|| {
            let rows: Vec<usize> = (i..n).collect();
            let j = free[solve(cost, &rows, &free)[0]];
            let k = free.iter().position(|&c| c == j).unwrap();
            let cols: Vec<usize> = free.iter().copied().filter(|&c| c != j).collect();
            (k, total(cost, &rest, &cols))
        });
        perm.push(free.remove(k));
        best = sub;
    }
    let total_cost = perm.iter().enumerate().map(|(i, &j)| cost.get(i, j)).sum();
    Ok(Assignment { perm, total_cost })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use itertools::Itertools;

    fn m(rows: &[Vec<f64>]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    /// Lexicographically first minimum over all injective maps.
    fn brute(cost: &Matrix) -> (Vec<usize>, f64) {
        let (n, mm) = cost.shape();
        let mut best: Option<(Vec<usize>, f64)> = None;
        for p in (0..mm).permutations(n) {
            let c: f64 = p.iter().enumerate().map(|(i, &j)| cost.get(i, j)).sum();
            if best.as_ref().is_none_or(|b| c < b.1) {
                best = Some((p, c));
            }
        }
        best.unwrap()
    }

    #[test]
    fn small_examples() {
        let a = hungarian(&m(&[vec![0.0, 1.0], vec![1.0, 0.0]])).unwrap();
        assert_eq!((a.perm, a.total_cost), (vec![0, 1], 0.0));
        let a = hungarian(&m(&[vec![1.0, 2.0], vec![2.0, 1.0]])).unwrap();
        assert_eq!((a.perm, a.total_cost), (vec![0, 1], 2.0));
        let a = hungarian(&m(&[vec![5.0, 1.0, 3.0]])).unwrap();
        assert_eq!(a.perm, vec![1]);
        assert!(matches!(hungarian(&Matrix::zeros(3, 2)), Err(NnError::Shape(_))));
    }

    #[test]
    fn ties_resolve_to_lexicographic_minimum() {
        assert_eq!(hungarian(&Matrix::zeros(3, 3)).unwrap().perm, vec![0, 1, 2]);
        assert_eq!(hungarian(&Matrix::filled(2, 4, 1.0)).unwrap().perm, vec![0, 1]);
        let mut rng = SplitMix64::new(8);
        for _ in 0..300 {
            let n = 1 + rng.below(5) as usize;
            let mm = n + rng.below(3) as usize;
            let data = (0..n * mm).map(|_| rng.below(3) as f64).collect();
            let c = Matrix::from_vec(n, mm, data).unwrap();
            let a = hungarian(&c).unwrap();
            let (p, total) = brute(&c);
            assert_eq!(a.perm, p);
            assert_eq!(a.total_cost, total);
        }
    }

    #[test]
    fn random_matrices_match_brute_force() {
        let mut rng = SplitMix64::new(21);
        for n in 2..=6 {
            for _ in 0..100 {
                let mm = n + rng.below(2) as usize;
                let data = (0..n * mm).map(|_| rng.uniform(-1.0, 1.0)).collect();
                let c = Matrix::from_vec(n, mm, data).unwrap();
                let a = hungarian(&c).unwrap();
                assert_eq!(a.total_cost, brute(&c).1);
                let mut seen = a.perm.clone();
                seen.sort_unstable();
                seen.dedup();
                assert_eq!(seen.len(), n);
            }
        }
    }
}
