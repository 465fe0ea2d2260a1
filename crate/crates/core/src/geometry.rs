//! Isotropy, isometry and isomorphism diagnostics for aligned spaces.
//!
//! Pair sums are averages over unordered pairs `i < j` of the sampled rows.

use ndarray::{Array2, Axis};
use rand::seq::index;
use serde::Serialize;

use crate::embedding::{EmbeddingMatrix, UNIT_NORM_TOL};
use crate::normalize::unit_normalize;
use crate::rng;
use crate::{Error, Result};

pub const DEFAULT_SAMPLE: usize = 1000;
pub const DEFAULT_RS_PAIRS: usize = 1500;

/// `r` distinct row indices out of `n`, drawn with a seeded generator.
pub fn sample_rows(n: usize, r: usize, seed: u64) -> Result<Vec<usize>> {
    if r > n {
        return Err(Error::OutOfRange {
            what: "sample size r",
            got: r,
            available: n,
        });
    }
    if r < 2 {
        return Err(Error::InvalidArgument(format!("sample size must be at least 2, got {r}")));
    }
    let mut g = rng::seeded(seed);
    Ok(index::sample(&mut g, n, r).into_vec())
}

fn gram(m: &EmbeddingMatrix, rows: &[usize]) -> Array2<f64> {
    let s = m.vectors().select(Axis(0), rows);
    s.dot(&s.t())
}

fn upper_mean(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> f64 {
    let mut sum = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            sum += f(i, j);
        }
    }
    sum / (n * (n - 1) / 2) as f64
}

/// Mean pairwise cosine `v_iᵀ v_j` over the given rows of a unit-normalized matrix.
pub fn isotropy_of_rows(matrix: &EmbeddingMatrix, rows: &[usize]) -> Result<f64> {
    matrix.check_unit_rows(UNIT_NORM_TOL)?;
    if rows.len() < 2 {
        return Err(Error::InvalidArgument("need at least 2 rows".into()));
    }
    let g = gram(matrix, rows);
    Ok(upper_mean(rows.len(), |i, j| g[[i, j]]))
}

/// Isotropy `D^t`: mean pairwise cosine of `r` sampled rows. 0 is isotropic,
/// 1 means all sampled vectors coincide.
pub fn isotropy(matrix: &EmbeddingMatrix, r: usize, seed: u64) -> Result<f64> {
    let rows = sample_rows(matrix.len(), r, seed)?;
    isotropy_of_rows(matrix, &rows)
}

fn check_aligned(x: &EmbeddingMatrix, y: &EmbeddingMatrix) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Misaligned(format!("{} vs {} rows", x.len(), y.len())));
    }
    Ok(())
}

/// Isometry `D^m` over given aligned rows: mean of
/// `| ‖x_i − x_j‖² − ‖y_i − y_j‖² |`.
pub fn isometry_of_rows(x: &EmbeddingMatrix, y: &EmbeddingMatrix, rows: &[usize]) -> Result<f64> {
    check_aligned(x, y)?;
    if rows.len() < 2 {
        return Err(Error::InvalidArgument("need at least 2 rows".into()));
    }
    let sq = |m: &EmbeddingMatrix, a: usize, b: usize| -> f64 {
        m.row(a)
            .iter()
            .zip(m.row(b).iter())
            .map(|(p, q)| (p - q) * (p - q))
            .sum()
    };
    Ok(upper_mean(rows.len(), |i, j| {
        let (a, b) = (rows[i], rows[j]);
        (sq(x, a, b) - sq(y, a, b)).abs()
    }))
}

/// The unit-vector form of [`isometry_of_rows`]: mean of `2 |x_iᵀx_j − y_iᵀy_j|`.
pub fn isometry_unit_of_rows(
    x: &EmbeddingMatrix,
    y: &EmbeddingMatrix,
    rows: &[usize],
) -> Result<f64> {
    check_aligned(x, y)?;
    x.check_unit_rows(UNIT_NORM_TOL)?;
    y.check_unit_rows(UNIT_NORM_TOL)?;
    if rows.len() < 2 {
        return Err(Error::InvalidArgument("need at least 2 rows".into()));
    }
    let gx = gram(x, rows);
    let gy = gram(y, rows);
    Ok(upper_mean(rows.len(), |i, j| 2.0 * (gx[[i, j]] - gy[[i, j]]).abs()))
}

/// Isometry `D^m` of aligned translation-pair matrices on `r` sampled pairs.
pub fn isometry(x: &EmbeddingMatrix, y: &EmbeddingMatrix, r: usize, seed: u64) -> Result<f64> {
    check_aligned(x, y)?;
    let rows = sample_rows(x.len(), r, seed)?;
    isometry_of_rows(x, y, &rows)
}

/// Pearson correlation coefficient. Errors when either list is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "pearson needs two equal-length lists of at least 2 values ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::ZeroVariance("all pairwise similarities are equal".into()));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

fn pairwise_cosines(m: &EmbeddingMatrix, count: usize) -> Result<Vec<f64>> {
    let rows: Vec<usize> = (0..count).collect();
    let mut s = m.vectors().select(Axis(0), &rows);
    for (i, mut row) in s.axis_iter_mut(Axis(0)).enumerate() {
        let n = row.dot(&row).sqrt();
        if n == 0.0 {
            return Err(Error::ZeroNorm(m.words()[i].clone()));
        }
        row.mapv_inplace(|v| v / n);
    }
    let g = s.dot(&s.t());
    let mut out = Vec::with_capacity(count * (count - 1) / 2);
    for i in 0..count {
        for j in i + 1..count {
            out.push(g[[i, j]]);
        }
    }
    Ok(out)
}

/// Relational similarity: Pearson correlation between the pairwise cosine
/// lists of the first `m` source rows and the first `m` target rows.
pub fn relational_similarity(x: &EmbeddingMatrix, y: &EmbeddingMatrix, m: usize) -> Result<f64> {
    check_aligned(x, y)?;
    if m > x.len() {
        return Err(Error::OutOfRange {
            what: "RS pair count M",
            got: m,
            available: x.len(),
        });
    }
    if m < 3 {
        return Err(Error::InvalidArgument(format!("RS needs M >= 3, got {m}")));
    }
    pearson(&pairwise_cosines(x, m)?, &pairwise_cosines(y, m)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeometryReport {
    pub d_t_source: f64,
    pub d_t_target: f64,
    pub d_m: f64,
    pub rs: f64,
    pub r: usize,
    pub m: usize,
    pub seed: u64,
}

impl GeometryReport {
    /// Header plus one row laid out as `D_s^t D_t^t D^m RS`.
    pub fn table(&self) -> String {
        format!(
            "{:>8} {:>8} {:>8} {:>8}\n{:>8.4} {:>8.4} {:>8.4} {:>8.4}\n",
            "D_s^t", "D_t^t", "D^m", "RS", self.d_t_source, self.d_t_target, self.d_m, self.rs
        )
    }
}

/// Computes every diagnostic on row-aligned matrices. Both inputs are
/// unit-normalized first. With `shared_sample` one sample of `r` rows is used
/// for `D^t` on both sides and for `D^m`; otherwise each gets its own
/// sample derived from `seed`.
pub fn geometry_report(
    x: &EmbeddingMatrix,
    y: &EmbeddingMatrix,
    r: usize,
    m: usize,
    seed: u64,
    shared_sample: bool,
) -> Result<GeometryReport> {
    check_aligned(x, y)?;
    let x = unit_normalize(x)?;
    let y = unit_normalize(y)?;
    let n = x.len();
    let (rows_s, rows_t, rows_m) = if shared_sample {
        let s = sample_rows(n, r, seed)?;
        (s.clone(), s.clone(), s)
    } else {
        (
            sample_rows(n, r, rng::mix(seed ^ 1))?,
            sample_rows(n, r, rng::mix(seed ^ 2))?,
            sample_rows(n, r, rng::mix(seed ^ 3))?,
        )
    };
    Ok(GeometryReport {
        d_t_source: isotropy_of_rows(&x, &rows_s)?,
        d_t_target: isotropy_of_rows(&y, &rows_t)?,
        d_m: isometry_of_rows(&x, &y, &rows_m)?,
        rs: relational_similarity(&x, &y, m)?,
        r,
        m,
        seed,
    })
}
