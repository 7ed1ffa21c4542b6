//! Temporal smoothness operators and the dense block-matrix forms used as
//! reference oracles.
//!
//! The production solver never materializes the `(T*m) x (T*n)` block
//! matrices; it works per slice through algebraic identities. The dense
//! assembly here exists so tests can check those identities against the
//! literal block construction.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::dataset::{HoldoutSplit, TemporalDataset};

#[derive(Debug, Error)]
pub enum OperatorsError {
    #[error("second-difference operator needs at least 3 time steps, got {0}")]
    TooFewSteps(usize),
    #[error("factor {index} has shape {got_rows}x{got_cols}, expected {rows}x{cols}")]
    ShapeMismatch {
        index: usize,
        rows: usize,
        cols: usize,
        got_rows: usize,
        got_cols: usize,
    },
}

/// Gram matrix `L = D2' * D2` of the second-difference operator.
///
/// `L` is symmetric positive semidefinite with a two-dimensional null space
/// spanned by constant and linear sequences.
#[derive(Debug, Clone)]
pub struct SecondDiffGram {
    gram: DMatrix<f64>,
}

impl SecondDiffGram {
    /// Number of time steps `T`.
    pub fn len(&self) -> usize {
        self.gram.nrows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// The `T x T` Gram matrix.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.gram
    }
}

/// The `(T-2) x T` second-difference matrix with rows `(..., 1, -2, 1, ...)`.
///
/// Returns a `0 x T` matrix for `T < 3`, matching the empty penalty sums.
pub fn second_difference_matrix(t: usize) -> DMatrix<f64> {
    let rows = t.saturating_sub(2);
    let mut d2 = DMatrix::zeros(rows, t);
    for i in 0..rows {
        d2[(i, i)] = 1.0;
        d2[(i, i + 1)] = -2.0;
        d2[(i, i + 2)] = 1.0;
    }
    d2
}

/// Builds `L = D2' * D2` for `T >= 3` time steps.
pub fn second_difference_gram(t: usize) -> Result<SecondDiffGram, OperatorsError> {
    if t < 3 {
        return Err(OperatorsError::TooFewSteps(t));
    }
    let d2 = second_difference_matrix(t);
    Ok(SecondDiffGram { gram: d2.transpose() * d2 })
}

/// Sum of squared second differences of a factor trajectory,
/// `sum_t ||(X_{t+1} - X_t) - (X_t - X_{t-1})||_F^2`.
///
/// Zero for fewer than 3 time steps (the sum is empty).
pub fn curvature_penalty(factors: &[DMatrix<f64>]) -> Result<f64, OperatorsError> {
    if factors.is_empty() {
        return Ok(0.0);
    }
    let rows = factors[0].nrows();
    let cols = factors[0].ncols();
    for (index, f) in factors.iter().enumerate() {
        if f.nrows() != rows || f.ncols() != cols {
            return Err(OperatorsError::ShapeMismatch {
                index,
                rows,
                cols,
                got_rows: f.nrows(),
                got_cols: f.ncols(),
            });
        }
    }
    let mut total = 0.0;
    for t in 1..factors.len().saturating_sub(1) {
        let second = &factors[t + 1] - &factors[t] * 2.0 + &factors[t - 1];
        total += second.norm_squared();
    }
    Ok(total)
}

/// Dense block pair: `F` with every row-block equal to `[F_1, ..., F_T]` and
/// block-diagonal `W`, both over the split's observed entries.
#[derive(Debug, Clone)]
pub struct BlockAssembly {
    pub f_block: DMatrix<f64>,
    pub w_block: DMatrix<u8>,
}

/// Materializes the `(T*m) x (T*n)` block matrices with unobserved entries
/// of `F` filled with zero.
pub fn assemble_blocks(dataset: &TemporalDataset, split: &HoldoutSplit) -> BlockAssembly {
    let t_count = dataset.time_steps();
    let m = dataset.rows();
    let n = dataset.cols();
    let mut f_block = DMatrix::zeros(t_count * m, t_count * n);
    let mut w_block = DMatrix::zeros(t_count * m, t_count * n);

    for (t, (slice, mask)) in dataset.slices().iter().zip(split.observed_mask()).enumerate() {
        let mut filled = DMatrix::zeros(m, n);
        for j in 0..n {
            for i in 0..m {
                if mask[(i, j)] == 1 {
                    filled[(i, j)] = slice[(i, j)];
                }
            }
        }
        for s in 0..t_count {
            f_block.view_mut((s * m, t * n), (m, n)).copy_from(&filled);
        }
        w_block.view_mut((t * m, t * n), (m, n)).copy_from(mask);
    }
    BlockAssembly { f_block, w_block }
}
