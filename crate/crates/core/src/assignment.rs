//! Rectangular min-cost assignment (Kuhn-Munkres with potentials).
//!
//! `+inf` marks a forbidden pair. The solver returns the cheapest assignment
//! among those using the largest possible number of allowed pairs: it pads the
//! problem to a square, prices forbidden pairs above any achievable swing in
//! finite cost, and drops them from the result.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AssignmentError {
    #[error("cost matrix is empty")]
    Empty,
    #[error("cost matrix holds NaN or -inf at ({0}, {1})")]
    InvalidCost(usize, usize),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AssignmentResult {
    /// `(row, column)` pairs sorted by row.
    pub pairs: Vec<(usize, usize)>,
    pub total_cost: f64,
}

impl AssignmentResult {
    pub fn column_for_row(&self, row: usize) -> Option<usize> {
        self.pairs.iter().find(|p| p.0 == row).map(|p| p.1)
    }
}

pub fn solve_assignment(cost: &Matrix) -> Result<AssignmentResult, AssignmentError> {
    let (n, m) = cost.shape();
    if n == 0 || m == 0 {
        return Err(AssignmentError::Empty);
    }
    let mut swing = 0.0;
    for i in 0..n {
        for j in 0..m {
            let c = cost[(i, j)];
            if c.is_nan() || c == f64::NEG_INFINITY {
                return Err(AssignmentError::InvalidCost(i, j));
            }
            if c.is_finite() {
                swing += c.abs();
            }
        }
    }
    let forbidden = 2.0 * swing + 1.0;
    let k = n.max(m);
    let mut square = vec![0.0; k * k];
    for i in 0..n {
        for j in 0..m {
            let c = cost[(i, j)];
            square[i * k + j] = if c.is_finite() { c } else { forbidden };
        }
    }
    let row_of_col = hungarian_square(&square, k);

    let mut pairs: Vec<(usize, usize)> = row_of_col
        .iter()
        .enumerate()
        .filter(|&(j, &i)| i < n && j < m && cost[(i, j)].is_finite())
        .map(|(j, &i)| (i, j))
        .collect();
    pairs.sort_unstable();
    let total_cost = pairs.iter().map(|&(i, j)| cost[(i, j)]).sum();
    Ok(AssignmentResult { pairs, total_cost })
}

/// Shortest augmenting path Hungarian on a dense `k x k` matrix.
/// Returns the row assigned to each column.
fn hungarian_square(a: &[f64], k: usize) -> Vec<usize> {
    // 1-based with column 0 as the virtual start
    let mut u = vec![0.0; k + 1];
    let mut v = vec![0.0; k + 1];
    let mut p = vec![0usize; k + 1];
    let mut way = vec![0usize; k + 1];
    for i in 1..=k {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; k + 1];
        let mut used = vec![false; k + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=k {
                if used[j] {
                    continue;
                }
                let cur = a[(i0 - 1) * k + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=k {
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
    (1..=k).map(|j| p[j] - 1).collect()
}
