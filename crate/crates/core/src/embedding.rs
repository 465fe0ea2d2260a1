//! Vocabulary-indexed embedding matrices and the word2vec-style text format.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1, Axis};

use crate::{Error, Result};

/// Row norm tolerance used for the `normalized` flag.
pub const UNIT_NORM_TOL: f64 = 1e-6;

/// `N` words, each with a `d`-dimensional vector stored as one row.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    words: Vec<String>,
    index: HashMap<String, usize>,
    vectors: Array2<f64>,
    normalized: bool,
}

impl EmbeddingMatrix {
    pub fn new(words: Vec<String>, vectors: Array2<f64>) -> Result<Self> {
        if vectors.nrows() != words.len() {
            return Err(Error::Misaligned(format!(
                "{} words but {} vector rows",
                words.len(),
                vectors.nrows()
            )));
        }
        if vectors.ncols() == 0 {
            return Err(Error::InvalidArgument("embedding dimension must be positive".into()));
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::DuplicateWord(w.clone()));
            }
            if vectors.row(i).iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(w.clone()));
            }
        }
        Ok(Self {
            words,
            index,
            vectors,
            normalized: false,
        })
    }

    /// An empty matrix of dimension `dim`.
    pub fn empty(dim: usize) -> Result<Self> {
        Self::new(Vec::new(), Array2::zeros((0, dim)))
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn vectors(&self) -> &Array2<f64> {
        &self.vectors
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.vectors.row(i)
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn get(&self, word: &str) -> Option<ArrayView1<'_, f64>> {
        self.index_of(word).map(|i| self.vectors.row(i))
    }

    /// Whether every row is known to have unit norm.
    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Sets the `normalized` flag after checking every row norm.
    pub fn mark_normalized(&mut self) -> Result<()> {
        self.check_unit_rows(UNIT_NORM_TOL)?;
        self.normalized = true;
        Ok(())
    }

    /// Returns an error naming the first row whose norm is off by more than `tol`.
    pub fn check_unit_rows(&self, tol: f64) -> Result<()> {
        for (i, row) in self.vectors.axis_iter(Axis(0)).enumerate() {
            let norm = row.dot(&row).sqrt();
            if (norm - 1.0).abs() > tol {
                return Err(Error::NotNormalized { row: i, norm });
            }
        }
        Ok(())
    }

    /// Replaces the vectors, keeping the vocabulary. Clears the normalized flag.
    pub fn with_vectors(&self, vectors: Array2<f64>) -> Result<Self> {
        Self::new(self.words.clone(), vectors)
    }

    /// A new matrix holding the given rows, in the given order.
    pub fn select(&self, rows: &[usize]) -> Self {
        let words = rows.iter().map(|&i| self.words[i].clone()).collect::<Vec<_>>();
        let index = words
            .iter()
            .enumerate()
            .map(|(j, w)| (w.clone(), j))
            .collect();
        Self {
            words,
            index,
            vectors: self.vectors.select(Axis(0), rows),
            normalized: self.normalized,
        }
    }

    /// The first `n` rows (or all of them when `n >= len`).
    pub fn prefix(&self, n: usize) -> Self {
        let rows: Vec<usize> = (0..n.min(self.len())).collect();
        self.select(&rows)
    }

    pub fn into_parts(self) -> (Vec<String>, Array2<f64>) {
        (self.words, self.vectors)
    }
}

/// Parses the text format: a header line `N d`, then `N` lines of
/// `word v1 ... vd`.
pub fn read_embedding_text(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());

    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(path, 1, "missing header"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 2 {
        return Err(Error::parse(path, 1, "header must be `N d`"));
    }
    let n: usize = fields[0]
        .parse()
        .map_err(|_| Error::parse(path, 1, format!("bad row count {:?}", fields[0])))?;
    let d: usize = fields[1]
        .parse()
        .map_err(|_| Error::parse(path, 1, format!("bad dimension {:?}", fields[1])))?;
    if d == 0 {
        return Err(Error::parse(path, 1, "dimension must be positive"));
    }

    let mut words = Vec::with_capacity(n);
    let mut data = Vec::with_capacity(n * d);
    let mut seen = HashMap::with_capacity(n);
    for (lineno, line) in lines {
        let lineno = lineno + 1;
        if words.len() == n {
            return Err(Error::parse(path, lineno, format!("more than {n} rows")));
        }
        let mut parts = line.split_whitespace();
        let word = parts.next().expect("non-empty line");
        let values: Vec<&str> = parts.collect();
        if values.len() != d {
            return Err(Error::parse(
                path,
                lineno,
                format!("expected {d} values, found {}", values.len()),
            ));
        }
        if seen.insert(word.to_owned(), lineno).is_some() {
            return Err(Error::DuplicateWord(word.to_owned()));
        }
        for v in values {
            let x: f64 = v
                .parse()
                .map_err(|_| Error::parse(path, lineno, format!("bad float {v:?}")))?;
            if !x.is_finite() {
                return Err(Error::NonFinite(word.to_owned()));
            }
            data.push(x);
        }
        words.push(word.to_owned());
    }
    if words.len() != n {
        return Err(Error::format(
            path,
            format!("header declares {n} rows, found {}", words.len()),
        ));
    }
    let vectors = Array2::from_shape_vec((n, d), data).expect("shape checked");
    let mut m = EmbeddingMatrix::new(words, vectors)?;
    if n > 0 && m.check_unit_rows(UNIT_NORM_TOL).is_ok() {
        m.normalized = true;
    }
    Ok(m)
}

/// Writes the text format read by [`read_embedding_text`]. Values use the
/// shortest representation that parses back to the same `f64`.
pub fn write_embedding_text(matrix: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut buf = String::new();
    writeln!(buf, "{} {}", matrix.len(), matrix.dim()).unwrap();
    for (word, row) in matrix.words.iter().zip(matrix.vectors.axis_iter(Axis(0))) {
        buf.push_str(word);
        for v in row {
            write!(buf, " {v}").unwrap();
        }
        buf.push('\n');
        if buf.len() > 1 << 16 {
            w.write_all(buf.as_bytes()).map_err(|e| Error::io(path, e))?;
            buf.clear();
        }
    }
    w.write_all(buf.as_bytes()).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}
