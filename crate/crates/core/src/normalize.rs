//! Unit-length and iterative normalization of embedding matrices.

use ndarray::{Array1, Array2, Axis};
use serde::Serialize;

use crate::embedding::EmbeddingMatrix;
use crate::{Error, Result};

pub const DEFAULT_ITERS: usize = 5;
pub const DEFAULT_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormalizationReport {
    pub iterations: usize,
    /// Largest `| ||x_i|| - 1 |` after the last centering step.
    pub max_norm_deviation: f64,
    /// Norm of the mean vector of the emitted matrix.
    pub mean_norm: f64,
}

impl NormalizationReport {
    /// `key=value` lines, one per field.
    pub fn to_kv(&self) -> String {
        format!(
            "iterations={}\nmax_norm_deviation={:e}\nmean_norm={:e}\n",
            self.iterations, self.max_norm_deviation, self.mean_norm
        )
    }
}

fn normalize_rows(vectors: &mut Array2<f64>, words: &[String]) -> Result<()> {
    for (i, mut row) in vectors.axis_iter_mut(Axis(0)).enumerate() {
        let norm = row.dot(&row).sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::ZeroNorm(words[i].clone()));
        }
        row.mapv_inplace(|v| v / norm);
    }
    Ok(())
}

fn mean_row(vectors: &Array2<f64>) -> Array1<f64> {
    let mut mean = Array1::zeros(vectors.ncols());
    for row in vectors.axis_iter(Axis(0)) {
        mean += &row;
    }
    mean / vectors.nrows().max(1) as f64
}

/// Scales every row to unit Euclidean norm.
pub fn unit_normalize(matrix: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    let mut vectors = matrix.vectors().clone();
    normalize_rows(&mut vectors, matrix.words())?;
    let mut out = matrix.with_vectors(vectors)?;
    out.mark_normalized()?;
    Ok(out)
}

/// Alternates unit-length scaling and mean-centering.
///
/// Stops after `max_iters` rounds, or earlier once the centered matrix has a
/// mean norm and a worst row-norm deviation both at most `tol`. The emitted
/// matrix is unit-normalized once more so every row has unit length.
pub fn iterative_normalize(
    matrix: &EmbeddingMatrix,
    max_iters: usize,
    tol: f64,
) -> Result<(EmbeddingMatrix, NormalizationReport)> {
    if matrix.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "iterative normalization needs at least 2 rows, got {}",
            matrix.len()
        )));
    }
    if max_iters == 0 {
        return Err(Error::InvalidArgument("max_iters must be at least 1".into()));
    }
    let words = matrix.words();
    let mut vectors = matrix.vectors().clone();
    let mut iterations = 0;
    let mut max_dev = f64::INFINITY;
    for _ in 0..max_iters {
        iterations += 1;
        normalize_rows(&mut vectors, words)?;
        let mean = mean_row(&vectors);
        vectors -= &mean;
        // mean of the centered rows is zero up to round-off
        let centered_mean = mean_row(&vectors);
        max_dev = vectors
            .axis_iter(Axis(0))
            .map(|r| (r.dot(&r).sqrt() - 1.0).abs())
            .fold(0.0, f64::max);
        if centered_mean.dot(&centered_mean).sqrt() <= tol && max_dev <= tol {
            break;
        }
    }
    normalize_rows(&mut vectors, words)?;
    let mean = mean_row(&vectors);
    let mut out = matrix.with_vectors(vectors)?;
    out.mark_normalized()?;
    Ok((
        out,
        NormalizationReport {
            iterations,
            max_norm_deviation: max_dev,
            mean_norm: mean.dot(&mean).sqrt(),
        },
    ))
}
