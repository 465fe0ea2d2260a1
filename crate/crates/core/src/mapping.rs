//! Linear maps between aligned embedding matrices.
//!
//! Matrices store one vector per row, so with `X` and `Y` holding aligned
//! rows `x_i`, `y_i` the fitted `W` satisfies `W x_i ≈ y_i`.

use std::collections::HashSet;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, SVD};
use ndarray::{Array2, Axis};
use serde::Serialize;

use crate::corpus::BilingualDictionary;
use crate::embedding::EmbeddingMatrix;
use crate::{Error, Result};

/// Orthogonality tolerance on `max |WᵀW - I|`.
pub const ORTHO_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TrainedOn {
    pub pairs: usize,
    pub level: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MappingMatrix {
    /// `d × d`, applied as `W x`.
    pub w: Array2<f64>,
    pub orthogonal: bool,
    pub trained_on: Option<TrainedOn>,
}

impl MappingMatrix {
    pub fn identity(dim: usize) -> Self {
        Self {
            w: Array2::eye(dim),
            orthogonal: true,
            trained_on: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.w.nrows()
    }

    /// `max |WᵀW - I|`.
    pub fn orthogonality_error(&self) -> f64 {
        let wtw = self.w.t().dot(&self.w);
        let eye = Array2::<f64>::eye(self.dim());
        (&wtw - &eye).iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn with_level(mut self, level: impl Into<String>, pairs: usize) -> Self {
        self.trained_on = Some(TrainedOn {
            pairs,
            level: level.into(),
        });
        self
    }
}

fn check_pair(x: &EmbeddingMatrix, y: &EmbeddingMatrix) -> Result<()> {
    if x.dim() != y.dim() {
        return Err(Error::Dimension {
            expected: x.dim(),
            got: y.dim(),
        });
    }
    if x.len() != y.len() {
        return Err(Error::Misaligned(format!(
            "{} source rows vs {} target rows",
            x.len(),
            y.len()
        )));
    }
    if x.is_empty() {
        return Err(Error::Empty("no training pairs".into()));
    }
    Ok(())
}

fn to_na(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

fn from_na(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// Unconstrained minimizer of `‖WX − Y‖_F` with minimum Frobenius norm,
/// `W = Y X⁺` (column-vector convention), via the SVD pseudoinverse.
pub fn fit_least_squares(x: &EmbeddingMatrix, y: &EmbeddingMatrix) -> Result<MappingMatrix> {
    check_pair(x, y)?;
    // columns are vectors
    let xc = to_na(&x.vectors().t().to_owned());
    let yc = to_na(&y.vectors().t().to_owned());
    let svd = SVD::try_new(xc, true, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::Linalg("SVD did not converge".into()))?;
    let smax = svd.singular_values.iter().fold(0.0f64, |m, &s| m.max(s));
    let (rows, cols) = (x.dim(), x.len());
    let eps = smax * rows.max(cols) as f64 * f64::EPSILON;
    let pinv = svd
        .pseudo_inverse(eps)
        .map_err(|e| Error::Linalg(e.to_string()))?;
    let w = &yc * pinv;
    Ok(MappingMatrix {
        w: from_na(&w),
        orthogonal: false,
        trained_on: Some(TrainedOn {
            pairs: x.len(),
            level: String::new(),
        }),
    })
}

/// Orthogonal Procrustes: `W = U Vᵀ` where `U Σ Vᵀ = svd(Y Xᵀ)`.
///
/// Singular vector pairs are sign-normalized so each left singular vector's
/// largest-magnitude entry is positive.
pub fn fit_procrustes(x: &EmbeddingMatrix, y: &EmbeddingMatrix) -> Result<MappingMatrix> {
    check_pair(x, y)?;
    // Y Xᵀ with column vectors equals Yᵀ X with row vectors
    let cross = y.vectors().t().dot(x.vectors());
    if cross.iter().any(|v| !v.is_finite()) {
        return Err(Error::Linalg("non-finite cross-covariance".into()));
    }
    let svd = SVD::try_new(to_na(&cross), true, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::Linalg("SVD did not converge".into()))?;
    let mut u = svd.u.ok_or_else(|| Error::Linalg("missing U".into()))?;
    let mut vt = svd.v_t.ok_or_else(|| Error::Linalg("missing Vᵀ".into()))?;
    for k in 0..u.ncols() {
        let col = u.column(k);
        let (mut best, mut sign) = (0.0f64, 1.0);
        for &v in col.iter() {
            if v.abs() > best {
                best = v.abs();
                sign = v.signum();
            }
        }
        if sign < 0.0 {
            u.column_mut(k).neg_mut();
            vt.row_mut(k).neg_mut();
        }
    }
    let w = u * vt;
    Ok(MappingMatrix {
        w: from_na(&w),
        orthogonal: true,
        trained_on: Some(TrainedOn {
            pairs: x.len(),
            level: String::new(),
        }),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Procrustes,
    Lstsq,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Procrustes => "procrustes",
            Method::Lstsq => "lstsq",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "procrustes" => Ok(Method::Procrustes),
            "lstsq" => Ok(Method::Lstsq),
            _ => Err(Error::InvalidArgument(format!("unknown method {s:?} (procrustes|lstsq)"))),
        }
    }
}

pub fn fit(method: Method, x: &EmbeddingMatrix, y: &EmbeddingMatrix) -> Result<MappingMatrix> {
    match method {
        Method::Procrustes => fit_procrustes(x, y),
        Method::Lstsq => fit_least_squares(x, y),
    }
}

/// Maps every row as `W x`. Rows are re-normalized to unit length when the
/// map is not orthogonal.
pub fn apply_mapping(mapping: &MappingMatrix, matrix: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    if mapping.dim() != matrix.dim() {
        return Err(Error::Dimension {
            expected: mapping.dim(),
            got: matrix.dim(),
        });
    }
    let mut mapped = matrix.vectors().dot(&mapping.w.t());
    if !mapping.orthogonal {
        for (i, mut row) in mapped.axis_iter_mut(Axis(0)).enumerate() {
            let n = row.dot(&row).sqrt();
            if n == 0.0 {
                return Err(Error::ZeroNorm(matrix.words()[i].clone()));
            }
            row.mapv_inplace(|v| v / n);
        }
    }
    let mut out = matrix.with_vectors(mapped)?;
    if !mapping.orthogonal || matrix.is_normalized() {
        out.mark_normalized()?;
    }
    Ok(out)
}

/// Frobenius residual `‖WX − Y‖_F`.
pub fn residual(mapping: &MappingMatrix, x: &EmbeddingMatrix, y: &EmbeddingMatrix) -> Result<f64> {
    check_pair(x, y)?;
    let diff = x.vectors().dot(&mapping.w.t()) - y.vectors();
    Ok(diff.iter().map(|v| v * v).sum::<f64>().sqrt())
}

/// Training keys: the first `train_size` frequency-ordered keys, restricted
/// to sources present in `dict` when one is supplied.
pub fn training_keys<'a>(
    keys: &'a [String],
    train_size: usize,
    dict: Option<&BilingualDictionary>,
) -> Vec<&'a str> {
    keys.iter()
        .take(train_size)
        .filter(|k| dict.is_none_or(|d| d.contains_source(k)))
        .map(String::as_str)
        .collect()
}

/// Row indices of `matrix` whose type (the key itself, or the part before
/// the last `#` for sense keys) is in `types`.
pub fn rows_for_types(matrix: &EmbeddingMatrix, types: &[&str], sense_keys: bool) -> Vec<usize> {
    let set: HashSet<&str> = types.iter().copied().collect();
    matrix
        .words()
        .iter()
        .enumerate()
        .filter(|(_, k)| {
            let t = if sense_keys {
                k.rsplit_once('#').map_or(k.as_str(), |(t, _)| t)
            } else {
                k.as_str()
            };
            set.contains(t)
        })
        .map(|(i, _)| i)
        .collect()
}

/// Text format: header `d orthogonal=<0|1>` then `d` rows of `d` values.
pub fn write_mapping(mapping: &MappingMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut s = String::new();
    writeln!(s, "{} orthogonal={}", mapping.dim(), u8::from(mapping.orthogonal)).unwrap();
    for row in mapping.w.axis_iter(Axis(0)) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn read_mapping(path: impl AsRef<Path>) -> Result<MappingMatrix> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::parse(path, 1, "missing header"))?;
    let (d, flag) = header
        .split_once(' ')
        .ok_or_else(|| Error::parse(path, 1, "header must be `d orthogonal=<0|1>`"))?;
    let d: usize = d
        .parse()
        .map_err(|_| Error::parse(path, 1, format!("bad dimension {d:?}")))?;
    let orthogonal = match flag.trim() {
        "orthogonal=1" => true,
        "orthogonal=0" => false,
        other => return Err(Error::parse(path, 1, format!("bad flag {other:?}"))),
    };
    if d == 0 {
        return Err(Error::parse(path, 1, "dimension must be positive"));
    }
    let mut data = Vec::with_capacity(d * d);
    for i in 0..d {
        let line = lines
            .next()
            .ok_or_else(|| Error::format(path, format!("expected {d} rows, found {i}")))?;
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::parse(path, i + 2, "bad float"))?;
        if row.len() != d {
            return Err(Error::parse(
                path,
                i + 2,
                format!("expected {d} values, found {}", row.len()),
            ));
        }
        data.extend(row);
    }
    let w = Array2::from_shape_vec((d, d), data).expect("shape checked");
    let m = MappingMatrix {
        w,
        orthogonal,
        trained_on: None,
    };
    if orthogonal && m.orthogonality_error() > ORTHO_TOL {
        return Err(Error::format(path, "flagged orthogonal but WᵀW ≠ I"));
    }
    Ok(m)
}
