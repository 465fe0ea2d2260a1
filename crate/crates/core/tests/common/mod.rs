//! Synthetic fixtures shared by the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use ctxalign::corpus::{BilingualDictionary, ParallelCorpus};
use ctxalign::embedding::EmbeddingMatrix;
use ctxalign::represent::{Occurrence, OccurrenceCollection, Side};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(g: &mut impl Rng, n: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, d), |_| g.sample(StandardNormal))
}

pub fn unit_rows(mut a: Array2<f64>) -> Array2<f64> {
    for mut row in a.axis_iter_mut(Axis(0)) {
        let n = row.dot(&row).sqrt();
        row.mapv_inplace(|v| v / n);
    }
    a
}

pub fn unit(v: Array1<f64>) -> Array1<f64> {
    let n = v.dot(&v).sqrt();
    v / n
}

/// Random orthogonal matrix by modified Gram-Schmidt on Gaussian columns.
pub fn random_orthogonal(g: &mut impl Rng, d: usize) -> Array2<f64> {
    let mut q = gaussian(g, d, d);
    for j in 0..d {
        for k in 0..j {
            let c = q.column(k).to_owned();
            let proj = c.dot(&q.column(j));
            let mut col = q.column_mut(j);
            col.scaled_add(-proj, &c);
        }
        let n = q.column(j).dot(&q.column(j)).sqrt();
        q.column_mut(j).mapv_inplace(|v| v / n);
    }
    q
}

pub fn keys(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

pub fn matrix(prefix: &str, rows: Array2<f64>) -> EmbeddingMatrix {
    EmbeddingMatrix::new(keys(prefix, rows.nrows()), rows).unwrap()
}

/// Rows mapped as `R x`.
pub fn rotate(x: &Array2<f64>, r: &Array2<f64>) -> Array2<f64> {
    x.dot(&r.t())
}

pub fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    (a - b).iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Bijective lexicon `s<i>` ↔ `t<i>` with distinct words per sentence; the
/// target side keeps source order except for occasional adjacent swaps.
/// Returns the corpus and the gold links of every sentence.
pub fn lexicon_corpus(
    vocab: usize,
    sentences: usize,
    max_len: usize,
    swap_rate: f64,
    seed: u64,
) -> (ParallelCorpus, Vec<Vec<(usize, usize)>>) {
    let mut g = rng(seed);
    let mut pairs = Vec::new();
    let mut gold = Vec::new();
    for _ in 0..sentences {
        let len = g.random_range(1..=max_len.min(vocab));
        let mut words: Vec<usize> = Vec::new();
        while words.len() < len {
            let w = g.random_range(0..vocab);
            if !words.contains(&w) {
                words.push(w);
            }
        }
        let mut perm: Vec<usize> = (0..len).collect();
        if len > 1 && g.random::<f64>() < swap_rate {
            let i = g.random_range(0..len - 1);
            perm.swap(i, i + 1);
        }
        let src: Vec<String> = words.iter().map(|w| format!("s{w}")).collect();
        let tgt: Vec<String> = perm.iter().map(|&p| format!("t{}", words[p])).collect();
        let mut links: Vec<(usize, usize)> =
            perm.iter().enumerate().map(|(j, &p)| (p, j)).collect();
        links.sort_unstable();
        pairs.push((src, tgt));
        gold.push(links);
    }
    (ParallelCorpus::from_pairs(pairs, 150).unwrap(), gold)
}

/// Queries `q_i = unit(c + 0.6 e_i)`, targets `t_i = unit(0.3 c + e_i)` and a
/// hub target equal to `c`. Every query's nearest neighbour is the hub, while
/// its gold translation `t_i` is its mutual nearest neighbour among the rest.
pub fn hub_fixture(n: usize) -> (EmbeddingMatrix, EmbeddingMatrix, BilingualDictionary) {
    let d = n + 1;
    let mut q = Array2::zeros((n, d));
    let mut t = Array2::zeros((n + 1, d));
    for i in 0..n {
        q[[i, 0]] = 1.0;
        q[[i, i + 1]] = 0.6;
        t[[i, 0]] = 0.3;
        t[[i, i + 1]] = 1.0;
    }
    t[[n, 0]] = 1.0;
    let mut tk = keys("t", n);
    tk.push("hub".into());
    let queries = EmbeddingMatrix::new(keys("q", n), unit_rows(q)).unwrap();
    let targets = EmbeddingMatrix::new(tk, unit_rows(t)).unwrap();
    let gold = BilingualDictionary::from_entries((0..n).map(|i| (format!("q{i}"), format!("t{i}"))));
    (queries, targets, gold)
}

/// `n` unit rows `unit(g_i + bias · u)` with a shared random direction `u`.
pub fn anisotropic(g: &mut impl Rng, n: usize, d: usize, bias: f64) -> Array2<f64> {
    let u = unit(gaussian(g, 1, d).row(0).to_owned());
    let mut x = unit_rows(gaussian(g, n, d));
    for mut row in x.axis_iter_mut(Axis(0)) {
        row.scaled_add(bias, &u);
    }
    unit_rows(x)
}

/// Paired spaces sharing latent structure `z` up to a rotation, each with
/// its own common bias direction: `X = unit(z + b_x u)`,
/// `Y = unit(R z + noise + b_y v)`.
pub fn paired_anisotropic(
    g: &mut impl Rng,
    n: usize,
    d: usize,
    b_x: f64,
    b_y: f64,
    noise: f64,
) -> (EmbeddingMatrix, EmbeddingMatrix) {
    let z = unit_rows(gaussian(g, n, d));
    let r = random_orthogonal(g, d);
    let u = unit(gaussian(g, 1, d).row(0).to_owned());
    let v = unit(gaussian(g, 1, d).row(0).to_owned());
    let mut x = z.clone();
    let mut y = rotate(&z, &r) + gaussian(g, n, d) * noise;
    for mut row in x.axis_iter_mut(Axis(0)) {
        row.scaled_add(b_x, &u);
    }
    for mut row in y.axis_iter_mut(Axis(0)) {
        row.scaled_add(b_y, &v);
    }
    (matrix("w", unit_rows(x)), matrix("w", unit_rows(y)))
}

fn to_f32(v: ndarray::ArrayView1<f64>) -> Vec<f32> {
    v.iter().map(|&x| x as f32).collect()
}

/// A collection whose occurrences are `unit(center_c + sigma · noise)`,
/// cycling through `centers`. Partners are the same vectors.
pub fn clustered_collection(
    word: &str,
    centers: &[Array1<f64>],
    per_center: usize,
    sigma: f64,
    seed: u64,
) -> OccurrenceCollection {
    let mut g = rng(seed);
    let d = centers[0].len();
    let mut occurrences = Vec::new();
    for i in 0..per_center * centers.len() {
        let c = &centers[i % centers.len()];
        let v = unit(c + &(gaussian(&mut g, 1, d).row(0).to_owned() * sigma));
        occurrences.push(Occurrence {
            sentence: i as u32,
            position: 0,
            vector: to_f32(v.view()),
            partner: to_f32(v.view()),
        });
    }
    OccurrenceCollection {
        word: word.into(),
        side: Side::Source,
        total: occurrences.len(),
        occurrences,
    }
}

pub fn toy_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/toy")
}
