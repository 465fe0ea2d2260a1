//! Nearest-neighbour and CSLS retrieval, and bilingual dictionary induction
//! scoring.
//!
//! CSLS rescales cosine similarity with the mean similarity of each point to
//! its `K` nearest neighbours in the other space:
//!
//! ```text
//! csls(x, y) = 2 cos(x, y) - r_T(x) - r_S(y)
//! ```
//!
//! which demotes hubs (targets close to many queries).

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::Serialize;

use crate::corpus::BilingualDictionary;
use crate::embedding::EmbeddingMatrix;
use crate::mapping::{apply_mapping, MappingMatrix};
use crate::{Error, Result};

pub const DEFAULT_CSLS_K: usize = 10;

/// Rows per similarity block; bounds memory at `BLOCK × n_targets` floats.
const BLOCK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Nn,
    Csls,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Nn => "nn",
            Metric::Csls => "csls",
        })
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nn" => Ok(Metric::Nn),
            "csls" => Ok(Metric::Csls),
            _ => Err(Error::InvalidArgument(format!("unknown metric {s:?} (nn|csls)"))),
        }
    }
}

/// Per query, `(target row, score)` sorted by score descending, ties by row.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalResult {
    pub ranked: Vec<Vec<(usize, f64)>>,
}

fn unit_rows(m: &EmbeddingMatrix) -> Result<Array2<f64>> {
    let mut v = m.vectors().clone();
    for (i, mut row) in v.axis_iter_mut(Axis(0)).enumerate() {
        let n = row.dot(&row).sqrt();
        if n == 0.0 {
            return Err(Error::ZeroNorm(m.words()[i].clone()));
        }
        row.mapv_inplace(|x| x / n);
    }
    Ok(v)
}

fn better(a: (usize, f64), b: (usize, f64)) -> bool {
    match a.1.partial_cmp(&b.1) {
        Some(Ordering::Greater) => true,
        Some(Ordering::Less) => false,
        _ => a.0 < b.0,
    }
}

/// Top `k` of `scores` by score (desc), ties by ascending index.
fn top_k(scores: impl Iterator<Item = f64>, k: usize) -> Vec<(usize, f64)> {
    let mut best: Vec<(usize, f64)> = Vec::with_capacity(k + 1);
    for (j, s) in scores.enumerate() {
        if best.len() == k && !better((j, s), best[k - 1]) {
            continue;
        }
        let pos = best.partition_point(|&b| better(b, (j, s)));
        best.insert(pos, (j, s));
        best.truncate(k);
    }
    best
}

/// Mean of the `k` largest cosines from each row of `a` to the rows of `b`.
fn neighbourhood_means(a: &Array2<f64>, b: &Array2<f64>, k: usize) -> Array1<f64> {
    let mut out = Array1::zeros(a.nrows());
    for start in (0..a.nrows()).step_by(BLOCK) {
        let end = (start + BLOCK).min(a.nrows());
        let sims = a.slice(s![start..end, ..]).dot(&b.t());
        let means: Vec<f64> = (0..end - start)
            .into_par_iter()
            .map(|r| top_k(sims.row(r).iter().copied(), k).iter().map(|p| p.1).sum::<f64>() / k as f64)
            .collect();
        out.slice_mut(s![start..end]).assign(&Array1::from(means));
    }
    out
}

fn rank(
    queries: &Array2<f64>,
    targets: &Array2<f64>,
    k: usize,
    score: impl Fn(usize, usize, f64) -> f64 + Sync,
) -> RetrievalResult {
    let mut ranked = Vec::with_capacity(queries.nrows());
    for start in (0..queries.nrows()).step_by(BLOCK) {
        let end = (start + BLOCK).min(queries.nrows());
        let sims: Array2<f64> = queries.slice(s![start..end, ..]).dot(&targets.t());
        let view: ArrayView2<f64> = sims.view();
        let block: Vec<Vec<(usize, f64)>> = (0..end - start)
            .into_par_iter()
            .map(|r| {
                let q = start + r;
                top_k(view.row(r).iter().enumerate().map(|(t, &c)| score(q, t, c)), k)
            })
            .collect();
        ranked.extend(block);
    }
    RetrievalResult { ranked }
}

fn check(queries: &EmbeddingMatrix, targets: &EmbeddingMatrix, k: usize) -> Result<()> {
    if queries.dim() != targets.dim() {
        return Err(Error::Dimension {
            expected: targets.dim(),
            got: queries.dim(),
        });
    }
    if k == 0 || k > targets.len() {
        return Err(Error::OutOfRange {
            what: "k",
            got: k,
            available: targets.len(),
        });
    }
    Ok(())
}

/// For each query, the `k` targets with the largest cosine similarity.
pub fn nn_retrieve(
    queries: &EmbeddingMatrix,
    targets: &EmbeddingMatrix,
    k: usize,
) -> Result<RetrievalResult> {
    check(queries, targets, k)?;
    let q = unit_rows(queries)?;
    let t = unit_rows(targets)?;
    Ok(rank(&q, &t, k, |_, _, c| c))
}

/// For each query, the `k` targets with the largest CSLS score, using
/// neighbourhoods of size `csls_k` in both directions.
pub fn csls_retrieve(
    queries: &EmbeddingMatrix,
    targets: &EmbeddingMatrix,
    k: usize,
    csls_k: usize,
) -> Result<RetrievalResult> {
    check(queries, targets, k)?;
    if csls_k == 0 || csls_k > targets.len() || csls_k > queries.len() {
        return Err(Error::OutOfRange {
            what: "CSLS neighbourhood K",
            got: csls_k,
            available: targets.len().min(queries.len()),
        });
    }
    let q = unit_rows(queries)?;
    let t = unit_rows(targets)?;
    let r_t = neighbourhood_means(&q, &t, csls_k);
    let r_s = neighbourhood_means(&t, &q, csls_k);
    Ok(rank(&q, &t, k, |qi, ti, c| 2.0 * c - r_t[qi] - r_s[ti]))
}

pub fn retrieve(
    metric: Metric,
    queries: &EmbeddingMatrix,
    targets: &EmbeddingMatrix,
    k: usize,
    csls_k: usize,
) -> Result<RetrievalResult> {
    match metric {
        Metric::Nn => nn_retrieve(queries, targets, k),
        Metric::Csls => csls_retrieve(queries, targets, k, csls_k),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrecisionAt {
    pub k: usize,
    /// Percentage in `[0, 100]`.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub metric: Metric,
    /// CSLS neighbourhood size; `None` for NN.
    pub csls_k: Option<usize>,
    pub precision: Vec<PrecisionAt>,
    pub queries: usize,
    /// Queries dropped because no gold target is in the target vocabulary.
    pub excluded_queries: usize,
    pub target_vocab: usize,
}

impl EvalReport {
    pub fn p_at(&self, k: usize) -> Option<f64> {
        self.precision.iter().find(|p| p.k == k).map(|p| p.value)
    }

    /// Two-line human-readable table.
    pub fn table(&self) -> String {
        let mut head = format!("{:<6}{:>6}", "metric", "K");
        let mut row = format!(
            "{:<6}{:>6}",
            self.metric.to_string(),
            self.csls_k.map_or("-".to_string(), |k| k.to_string())
        );
        for p in &self.precision {
            head.push_str(&format!("{:>9}", format!("P@{}", p.k)));
            row.push_str(&format!("{:>9.2}", p.value));
        }
        head.push_str(&format!("{:>9}{:>10}{:>9}", "queries", "excluded", "targets"));
        row.push_str(&format!(
            "{:>9}{:>10}{:>9}",
            self.queries, self.excluded_queries, self.target_vocab
        ));
        format!("{head}\n{row}\n")
    }
}

/// Bilingual dictionary induction: maps the queries, retrieves targets and
/// counts a query as correct at `k` when any of its gold translations is
/// among the top `k`.
pub fn evaluate_bdi(
    mapping: &MappingMatrix,
    queries: &EmbeddingMatrix,
    targets: &EmbeddingMatrix,
    gold: &BilingualDictionary,
    metric: Metric,
    csls_k: usize,
    topk: &[usize],
) -> Result<EvalReport> {
    if topk.is_empty() || topk.contains(&0) {
        return Err(Error::InvalidArgument("top-k list must hold positive values".into()));
    }
    let mut keep = Vec::new();
    let mut excluded = 0;
    for (i, w) in queries.words().iter().enumerate() {
        if gold.targets(w).iter().any(|t| targets.index_of(t).is_some()) {
            keep.push(i);
        } else {
            excluded += 1;
        }
    }
    if keep.is_empty() {
        return Err(Error::Empty(
            "no query has a gold translation in the target vocabulary".into(),
        ));
    }
    let kept = queries.select(&keep);
    let mapped = apply_mapping(mapping, &kept)?;
    let kmax = topk.iter().copied().max().unwrap().min(targets.len());
    let result = retrieve(metric, &mapped, targets, kmax, csls_k)?;

    let mut precision = Vec::with_capacity(topk.len());
    for &k in topk {
        let hits = result
            .ranked
            .iter()
            .zip(kept.words())
            .filter(|(ranked, w)| {
                let gold_t = gold.targets(w);
                ranked
                    .iter()
                    .take(k)
                    .any(|(t, _)| gold_t.iter().any(|g| g == &targets.words()[*t]))
            })
            .count();
        precision.push(PrecisionAt {
            k,
            value: 100.0 * hits as f64 / keep.len() as f64,
        });
    }
    Ok(EvalReport {
        metric,
        csls_k: (metric == Metric::Csls).then_some(csls_k),
        precision,
        queries: keep.len(),
        excluded_queries: excluded,
        target_vocab: targets.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn m(rows: Array2<f64>, prefix: &str) -> EmbeddingMatrix {
        let words = (0..rows.nrows()).map(|i| format!("{prefix}{i}")).collect();
        EmbeddingMatrix::new(words, rows).unwrap()
    }

    #[test]
    fn top_k_tie_break_by_index() {
        let r = top_k([0.5, 0.9, 0.9, 0.1].into_iter(), 3);
        assert_eq!(r, vec![(1, 0.9), (2, 0.9), (0, 0.5)]);
    }

    #[test]
    fn exact_match_ranks_first() {
        let t = m(array![[1.0, 0.0, 0.0], [0.0, 0.6, 0.8], [0.0, 0.0, 1.0]], "t");
        let q = m(array![[0.0, 0.6, 0.8]], "q");
        let r = nn_retrieve(&q, &t, 3).unwrap();
        assert_eq!(r.ranked[0][0].0, 1);
        assert!((r.ranked[0][0].1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn orthonormal_targets() {
        let t = m(Array2::eye(4), "t");
        let q = m(array![[0.0, 1.0, 0.0, 0.0]], "q");
        let r = nn_retrieve(&q, &t, 4).unwrap();
        assert_eq!(r.ranked[0][0], (1, 1.0));
        assert!(r.ranked[0][1..].iter().all(|&(_, s)| s == 0.0));
    }

    #[test]
    fn single_query_single_target_csls() {
        let t = m(array![[0.3, 0.4]], "t");
        let q = m(array![[1.0, 0.0]], "q");
        let r = csls_retrieve(&q, &t, 1, 1).unwrap();
        assert_eq!(r.ranked[0][0].0, 0);
    }

    #[test]
    fn k_out_of_range() {
        let t = m(array![[1.0, 0.0]], "t");
        let q = m(array![[1.0, 0.0]], "q");
        assert!(nn_retrieve(&q, &t, 2).is_err());
        assert!(csls_retrieve(&q, &t, 1, 2).is_err());
        assert!(nn_retrieve(&q, &t, 0).is_err());
    }

    #[test]
    fn identity_mapping_scores_hundred() {
        let x = m(Array2::eye(6), "w");
        let gold = BilingualDictionary::from_entries(x.words().iter().map(|w| (w.clone(), w.clone())));
        for metric in [Metric::Nn, Metric::Csls] {
            let r = evaluate_bdi(&MappingMatrix::identity(6), &x, &x, &gold, metric, 3, &[1, 5]).unwrap();
            assert_eq!(r.p_at(1), Some(100.0));
            assert_eq!(r.p_at(5), Some(100.0));
        }
    }

    #[test]
    fn second_gold_target_counts() {
        let t = m(array![[1.0, 0.0], [0.0, 1.0]], "t");
        let q = EmbeddingMatrix::new(vec!["bank".into()], array![[0.0, 1.0]]).unwrap();
        let gold = BilingualDictionary::from_entries([("bank", "t0"), ("bank", "t1")]);
        let r = evaluate_bdi(&MappingMatrix::identity(2), &q, &t, &gold, Metric::Nn, 1, &[1]).unwrap();
        assert_eq!(r.p_at(1), Some(100.0));
    }

    #[test]
    fn out_of_vocabulary_gold_is_excluded() {
        let t = m(array![[1.0, 0.0], [0.0, 1.0]], "t");
        let q = EmbeddingMatrix::new(vec!["a".into(), "b".into()], array![[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let gold = BilingualDictionary::from_entries([("a", "t0"), ("b", "zzz")]);
        let r = evaluate_bdi(&MappingMatrix::identity(2), &q, &t, &gold, Metric::Nn, 1, &[1, 5]).unwrap();
        assert_eq!((r.queries, r.excluded_queries), (1, 1));
        assert_eq!(r.p_at(5), Some(100.0));
        let none = BilingualDictionary::from_entries([("a", "zzz")]);
        assert!(matches!(
            evaluate_bdi(&MappingMatrix::identity(2), &q, &t, &none, Metric::Nn, 1, &[1]),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn metric_parsing() {
        assert_eq!("CSLS".parse::<Metric>().unwrap(), Metric::Csls);
        assert!("knn".parse::<Metric>().is_err());
    }
}
