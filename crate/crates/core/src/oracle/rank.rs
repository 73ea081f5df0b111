//! Bellman-error matrices and their numerical rank.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::policy::SuffixPolicy;

use super::{MomentMatchingPolicy, Oracle, QFunction};

/// Relative singular-value threshold.
pub const DEFAULT_RANK_TOLERANCE: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct RankReport {
    /// Descending.
    pub singular_values: Vec<f64>,
    /// Count of `sigma_k > tol * sigma_1`.
    pub numerical_rank: usize,
}

pub fn numerical_rank(matrix: &[Vec<f64>], tol: f64) -> Result<RankReport> {
    let rows = matrix.len();
    let cols = matrix.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidArgument("empty matrix".into()));
    }
    if matrix.iter().any(|r| r.len() != cols) {
        return Err(Error::InvalidArgument("ragged matrix".into()));
    }
    let m = DMatrix::from_fn(rows, cols, |i, j| matrix[i][j]);
    let mut singular_values: Vec<f64> = m.singular_values().iter().copied().collect();
    singular_values.sort_by(|a, b| b.total_cmp(a));
    let top = singular_values[0];
    let numerical_rank = if top > 0.0 { singular_values.iter().filter(|s| **s > tol * top).count() } else { 0 };
    Ok(RankReport { singular_values, numerical_rank })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    /// `E_h(pi_i, f_j)`.
    Bellman,
    /// `E*_h(pi_i, f_j)`.
    Surrogate,
}

/// `M[i][j]` = the chosen error of function `j` under roll-in policy `i` at step `h`.
pub fn bellman_error_matrix(
    oracle: &Oracle<'_>,
    policies: &[SuffixPolicy],
    functions: &[QFunction],
    h: usize,
    kind: ErrorKind,
) -> Result<Vec<Vec<f64>>> {
    if policies.is_empty() || functions.is_empty() {
        return Err(Error::InvalidArgument("rank matrix needs at least one policy and one function".into()));
    }
    match kind {
        ErrorKind::Bellman => policies
            .par_iter()
            .map(|pi| {
                let dist = oracle.exact_distribution(pi, h)?;
                functions.iter().map(|f| oracle.expected_residual(f, dist.suffixes())).collect()
            })
            .collect(),
        ErrorKind::Surrogate => {
            let mus: Vec<MomentMatchingPolicy> = functions
                .par_iter()
                .map(|f| oracle.moment_matching(&f.greedy_policy(), h))
                .collect::<Result<_>>()?;
            policies
                .par_iter()
                .map(|pi| {
                    functions
                        .iter()
                        .zip(&mus)
                        .map(|(f, mu)| oracle.surrogate_bellman_error_with(pi, f, mu))
                        .collect()
                })
                .collect()
        }
    }
}

impl Oracle<'_> {
    /// Matrix of errors plus its singular values and numerical rank.
    pub fn bellman_rank(
        &self,
        policies: &[SuffixPolicy],
        functions: &[QFunction],
        h: usize,
        tol: f64,
        kind: ErrorKind,
    ) -> Result<(Vec<Vec<f64>>, RankReport)> {
        let matrix = bellman_error_matrix(self, policies, functions, h, kind)?;
        let report = numerical_rank(&matrix, tol)?;
        Ok((matrix, report))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scaled_identity_has_full_rank() {
        let m: Vec<Vec<f64>> = (0..5).map(|i| (0..5).map(|j| if i == j { 0.25 } else { 0.0 }).collect()).collect();
        let r = numerical_rank(&m, DEFAULT_RANK_TOLERANCE).unwrap();
        assert_eq!(r.numerical_rank, 5);
        assert!(r.singular_values.iter().all(|s| (s - 0.25).abs() < 1e-14));
    }

    #[test]
    fn outer_product_has_rank_one_and_zero_has_rank_zero() {
        let m: Vec<Vec<f64>> = (0..4).map(|i| (0..6).map(|j| (i + 1) as f64 * (j as f64 - 2.5)).collect()).collect();
        assert_eq!(numerical_rank(&m, DEFAULT_RANK_TOLERANCE).unwrap().numerical_rank, 1);
        assert_eq!(numerical_rank(&vec![vec![0.0; 3]; 3], DEFAULT_RANK_TOLERANCE).unwrap().numerical_rank, 0);
        assert!(numerical_rank(&[], DEFAULT_RANK_TOLERANCE).is_err());
    }
}
