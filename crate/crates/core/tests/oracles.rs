//! Results checked against independent recomputations.

mod common;

use std::collections::{HashMap, HashSet};

use approx::assert_abs_diff_eq;
use ndarray::{Array1, Array2, Axis};

use common::*;
use ctxalign::align::{train_aligner, AlignerConfig, Direction};
use ctxalign::corpus::{load_parallel_corpus, BilingualDictionary, ParallelCorpus};
use ctxalign::geometry::{isometry_of_rows, isometry_unit_of_rows, relational_similarity};
use ctxalign::normalize::iterative_normalize;
use ctxalign::mapping::{fit_least_squares, fit_procrustes, residual, MappingMatrix};
use ctxalign::represent::{
    build_type_level, cluster_senses, collect_occurrences, detect_knee, inertia_curve, kmeans,
    CollectConfig, Occurrence, OccurrenceCollection, SenseConfig, Side,
};
use ctxalign::retrieval::{evaluate_bdi, nn_retrieve, Metric};
use ctxalign::stream::{TokenEmbeddingStream, TokenRecord};

#[test]
fn nn_matches_exhaustive_cosines() {
    let mut g = rng(1);
    let q = gaussian(&mut g, 20, 12);
    let t = gaussian(&mut g, 30, 12);
    let got = nn_retrieve(&matrix("q", q.clone()), &matrix("t", t.clone()), 30).unwrap();
    for i in 0..20 {
        let mut all: Vec<(usize, f64)> = (0..30)
            .map(|j| {
                let (a, b) = (q.row(i), t.row(j));
                (j, a.dot(&b) / (a.dot(&a).sqrt() * b.dot(&b).sqrt()))
            })
            .collect();
        all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        for (got, want) in got.ranked[i].iter().zip(&all) {
            assert_eq!(got.0, want.0);
            assert_abs_diff_eq!(got.1, want.1, epsilon = 1e-12);
        }
    }
}

#[test]
fn procrustes_beats_random_orthogonal_candidates() {
    let mut g = rng(2);
    let x = matrix("w", gaussian(&mut g, 500, 10));
    let y = matrix("w", gaussian(&mut g, 500, 10));
    let w = fit_procrustes(&x, &y).unwrap();
    let best = residual(&w, &x, &y).unwrap();
    for _ in 0..10_000 {
        let q = MappingMatrix {
            w: random_orthogonal(&mut g, 10),
            orthogonal: true,
            trained_on: None,
        };
        assert!(best <= residual(&q, &x, &y).unwrap() + 1e-9);
    }
}

#[test]
fn least_squares_beats_random_candidates() {
    let mut g = rng(3);
    let (d, n) = (50, 200);
    let x = gaussian(&mut g, n, d);
    let a = gaussian(&mut g, d, d);
    let y = rotate(&x, &a) + gaussian(&mut g, n, d) * 0.1;
    let (xm, ym) = (matrix("w", x), matrix("w", y));
    let w = fit_least_squares(&xm, &ym).unwrap();
    let best = residual(&w, &xm, &ym).unwrap();
    for i in 0..1000 {
        let scale = [1.0, 1e-1, 1e-3, 1e-6][i % 4];
        let cand = MappingMatrix {
            w: &w.w + &(gaussian(&mut g, d, d) * scale),
            orthogonal: false,
            trained_on: None,
        };
        assert!(best <= residual(&cand, &xm, &ym).unwrap() + 1e-9);
    }
    // normal equations: (W X - Y) Xᵀ = 0 in column form
    let grad = (xm.vectors().dot(&w.w.t()) - ym.vectors()).t().dot(xm.vectors());
    assert!(grad.iter().all(|v| v.abs() < 1e-8));
}

#[test]
fn least_squares_trivial_cases() {
    let mut g = rng(4);
    let x = matrix("w", gaussian(&mut g, 40, 6));
    let w = fit_least_squares(&x, &x).unwrap();
    assert!(max_abs_diff(&w.w, &Array2::eye(6)) < 1e-9);
    let x2 = matrix("w", x.vectors() * 2.0);
    let w = fit_least_squares(&x, &x2).unwrap();
    assert!(max_abs_diff(&w.w, &(Array2::eye(6) * 2.0)) < 1e-9);
    let p = fit_procrustes(&x, &x2).unwrap();
    assert!(residual(&p, &x, &x2).unwrap() >= residual(&w, &x, &x2).unwrap() - 1e-9);
}

fn pearson_oracle(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (mut sa, mut sb) = (0.0, 0.0);
    for i in 0..a.len() {
        sa += a[i];
        sb += b[i];
    }
    let (ma, mb) = (sa / n, sb / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn cosine_list(m: &Array2<f64>) -> Vec<f64> {
    let mut out = Vec::new();
    for i in 0..m.nrows() {
        for j in i + 1..m.nrows() {
            let (a, b) = (m.row(i), m.row(j));
            out.push(a.dot(&b) / (a.dot(&a) * b.dot(&b)).sqrt());
        }
    }
    out
}

#[test]
fn rs_matches_materialized_pearson() {
    let mut g = rng(5);
    let x = gaussian(&mut g, 100, 8);
    let y = &x + &(gaussian(&mut g, 100, 8) * 0.7);
    let want = pearson_oracle(&cosine_list(&x), &cosine_list(&y));
    let got = relational_similarity(&matrix("w", x), &matrix("w", y), 100).unwrap();
    assert_abs_diff_eq!(got, want, epsilon = 1e-12);
}

#[test]
fn isometry_forms_agree() {
    let mut g = rng(6);
    let x = matrix("w", unit_rows(gaussian(&mut g, 200, 16)));
    let y = matrix("w", unit_rows(gaussian(&mut g, 200, 16)));
    let all: Vec<usize> = (0..200).collect();
    let general = isometry_of_rows(&x, &y, &all).unwrap();
    let unit_form = isometry_unit_of_rows(&x, &y, &all).unwrap();
    assert_abs_diff_eq!(general, unit_form, epsilon = 1e-9);
    assert_abs_diff_eq!(general, isometry_of_rows(&y, &x, &all).unwrap(), epsilon = 1e-12);
}

/// Two EM epochs of the aligner's model, written out directly over strings.
fn em_oracle(corpus: &[(&[&str], &[&str])], epochs: usize, cfg: AlignerConfig) -> HashMap<(String, String), f64> {
    let null = "<null>".to_string();
    let mut t: HashMap<(String, String), f64> = HashMap::new();
    let mut support: HashMap<String, HashSet<String>> = HashMap::new();
    for (f, e) in corpus {
        for w in *f {
            support.entry(null.clone()).or_default().insert(w.to_string());
            for c in *e {
                support.entry(c.to_string()).or_default().insert(w.to_string());
            }
        }
    }
    for (c, ws) in &support {
        for w in ws {
            t.insert((c.clone(), w.clone()), 1.0 / ws.len() as f64);
        }
    }
    for _ in 0..epochs {
        let mut counts: HashMap<(String, String), f64> = HashMap::new();
        for (f, e) in corpus {
            let (m, n) = (f.len() as f64, e.len() as f64);
            for (i, w) in f.iter().enumerate() {
                let a = (i + 1) as f64 / m;
                let prior: Vec<f64> = (0..e.len())
                    .map(|j| (-cfg.tension * (a - (j + 1) as f64 / n).abs()).exp())
                    .collect();
                let z: f64 = prior.iter().sum();
                let p_null = cfg.null_prob * t[&(null.clone(), w.to_string())];
                let ps: Vec<f64> = e
                    .iter()
                    .enumerate()
                    .map(|(j, c)| (1.0 - cfg.null_prob) * prior[j] / z * t[&(c.to_string(), w.to_string())])
                    .collect();
                let total = p_null + ps.iter().sum::<f64>();
                *counts.entry((null.clone(), w.to_string())).or_default() += p_null / total;
                for (j, c) in e.iter().enumerate() {
                    *counts.entry((c.to_string(), w.to_string())).or_default() += ps[j] / total;
                }
            }
        }
        for (c, ws) in &support {
            let total: f64 = ws.iter().map(|w| counts[&(c.clone(), w.clone())]).sum();
            for w in ws {
                t.insert((c.clone(), w.clone()), counts[&(c.clone(), w.clone())] / total);
            }
        }
    }
    t
}

#[test]
fn two_sentence_em_matches_hand_oracle() {
    let pairs: [(&[&str], &[&str]); 2] = [(&["a", "b"], &["x", "y"]), (&["b", "a"], &["y", "x"])];
    let corpus = ParallelCorpus::from_pairs(pairs.iter().map(|(s, t)| (s.to_vec(), t.to_vec())), 150).unwrap();
    let cfg = AlignerConfig {
        epochs: 2,
        ..AlignerConfig::default()
    };
    // backward: t(target | source)
    let model = train_aligner(&corpus, Direction::Backward, cfg).unwrap();
    let flipped: Vec<(&[&str], &[&str])> = pairs.iter().map(|(s, t)| (*t, *s)).collect();
    let oracle = em_oracle(&flipped, 2, cfg);
    for (c, w) in [("a", "x"), ("a", "y"), ("b", "x"), ("b", "y")] {
        assert_abs_diff_eq!(model.prob(Some(c), w), oracle[&(c.to_string(), w.to_string())], epsilon = 1e-12);
    }
    assert!(model.prob(Some("a"), "x") > model.prob(Some("a"), "y"));
    assert!(model.prob(Some("b"), "y") > model.prob(Some("b"), "x"));

    let fwd = train_aligner(&corpus, Direction::Forward, cfg).unwrap();
    let oracle = em_oracle(&pairs, 2, cfg);
    for (c, w) in [("x", "a"), ("y", "a"), ("x", "b"), ("y", "b")] {
        assert_abs_diff_eq!(fwd.prob(Some(c), w), oracle[&(c.to_string(), w.to_string())], epsilon = 1e-12);
    }
}

/// Kahan-compensated running mean.
fn kahan_mean(rows: &[Vec<f32>]) -> Vec<f64> {
    let d = rows[0].len();
    let mut sum = vec![0.0f64; d];
    let mut comp = vec![0.0f64; d];
    for r in rows {
        for k in 0..d {
            let y = f64::from(r[k]) - comp[k];
            let t = sum[k] + y;
            comp[k] = (t - sum[k]) - y;
            sum[k] = t;
        }
    }
    sum.iter().map(|s| s / rows.len() as f64).collect()
}

#[test]
fn type_mean_matches_compensated_sum() {
    let mut g = rng(7);
    let rows: Vec<Vec<f32>> = unit_rows(gaussian(&mut g, 50, 32))
        .axis_iter(Axis(0))
        .map(|r| r.iter().map(|&v| v as f32).collect())
        .collect();
    let partners: Vec<Vec<f32>> = rows.iter().rev().cloned().collect();
    let c = OccurrenceCollection {
        word: "w".into(),
        side: Side::Source,
        total: 50,
        occurrences: rows
            .iter()
            .zip(&partners)
            .enumerate()
            .map(|(i, (v, p))| Occurrence {
                sentence: i as u32,
                position: 0,
                vector: v.clone(),
                partner: p.clone(),
            })
            .collect(),
    };
    let m = build_type_level(&[c]).unwrap();
    for (a, b) in m.x.row(0).iter().zip(kahan_mean(&rows)) {
        assert_abs_diff_eq!(*a, b, epsilon = 1e-9);
    }
    for (a, b) in m.y.row(0).iter().zip(kahan_mean(&partners)) {
        assert_abs_diff_eq!(*a, b, epsilon = 1e-9);
    }
}

fn silhouette(points: &Array2<f64>, labels: &[usize]) -> f64 {
    let n = points.nrows();
    let dist = |i: usize, j: usize| {
        let d = &points.row(i) - &points.row(j);
        d.dot(&d).sqrt()
    };
    let k = labels.iter().max().unwrap() + 1;
    let mut total = 0.0;
    for i in 0..n {
        let mut sums = vec![0.0; k];
        let mut counts = vec![0usize; k];
        for j in 0..n {
            if j != i {
                sums[labels[j]] += dist(i, j);
                counts[labels[j]] += 1;
            }
        }
        let own = labels[i];
        if counts[own] == 0 {
            continue;
        }
        let a = sums[own] / counts[own] as f64;
        let b = (0..k)
            .filter(|&c| c != own && counts[c] > 0)
            .map(|c| sums[c] / counts[c] as f64)
            .fold(f64::INFINITY, f64::min);
        total += (b - a) / a.max(b);
    }
    total / n as f64
}

fn points_of(c: &OccurrenceCollection) -> Array2<f64> {
    let d = c.occurrences[0].vector.len();
    Array2::from_shape_fn((c.occurrences.len(), d), |(i, j)| f64::from(c.occurrences[i].vector[j]))
}

#[test]
fn knee_agrees_with_silhouette_on_two_gaussians() {
    let mut g = rng(8);
    let a = unit(gaussian(&mut g, 1, 8).row(0).to_owned());
    let b = unit(gaussian(&mut g, 1, 8).row(0).to_owned());
    let c = clustered_collection("w", &[a, b], 200, 0.1, 9);
    let points = points_of(&c);
    let runs = inertia_curve(&points, 8, 5);
    let curve: Vec<(usize, f64)> = runs.iter().map(|(p, _)| *p).collect();
    assert_eq!(detect_knee(&curve, 1.0), Some(2));
    let best = (2..=8)
        .max_by(|&p, &q| {
            let s = |k: usize| silhouette(&points, &kmeans(&points, k, 5).labels);
            s(p).partial_cmp(&s(q)).unwrap()
        })
        .unwrap();
    assert_eq!(best, 2);
}

#[test]
fn single_gaussian_has_no_knee() {
    let mut g = rng(10);
    let a = unit(gaussian(&mut g, 1, 8).row(0).to_owned());
    let c = clustered_collection("w", &[a], 400, 0.3, 11);
    let curve: Vec<(usize, f64)> = inertia_curve(&points_of(&c), 8, 5).iter().map(|(p, _)| *p).collect();
    assert_eq!(detect_knee(&curve, 1.0), None);
}

#[test]
fn sense_centroids_reduce_representation_bias() {
    let mut g = rng(12);
    let a = unit(gaussian(&mut g, 1, 8).row(0).to_owned());
    let b = unit(gaussian(&mut g, 1, 8).row(0).to_owned());
    // a frequent and a rarer meaning
    let mut c = clustered_collection("bank", std::slice::from_ref(&a), 300, 0.1, 13);
    let rare = clustered_collection("bank", &[b], 100, 0.1, 14);
    c.occurrences.extend(rare.occurrences);
    c.total = c.occurrences.len();
    let senses = cluster_senses(&c, &SenseConfig::default(), &HashSet::new());
    assert_eq!(senses.len(), 2);
    assert_eq!(senses[0].members.len(), 300);
    let points = points_of(&c);
    let type_mean = points.mean_axis(Axis(0)).unwrap();
    let dist = |p: &Array1<f64>, q: &[f64]| p.iter().zip(q).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    for s in &senses {
        assert!(dist(&type_mean, &s.centroid) > 0.05);
        let own = s.members.iter().map(|&i| dist(&points.row(i).to_owned(), &s.centroid)).sum::<f64>();
        let via_type = s.members.iter().map(|&i| dist(&points.row(i).to_owned(), type_mean.as_slice().unwrap())).sum::<f64>();
        assert!(own < via_type);
    }
    let mut all: Vec<usize> = senses.iter().flat_map(|s| s.members.clone()).collect();
    all.sort_unstable();
    assert_eq!(all, (0..400).collect::<Vec<_>>());
}

#[test]
fn cap_keeps_exactly_cap_deterministically() {
    let mut src = TokenEmbeddingStream::new(2);
    let mut tgt = TokenEmbeddingStream::new(2);
    let mut links = Vec::new();
    for s in 0..12_000 {
        let angle = s as f32 * 0.001;
        src.sentences.push(vec![TokenRecord::present("w", vec![angle.cos(), angle.sin()])]);
        tgt.sentences.push(vec![TokenRecord::present("v", vec![1.0, 0.0])]);
        links.push(ctxalign::align::SentenceAlignment {
            sentence_index: s,
            links: vec![(0, 0)],
        });
    }
    let cfg = CollectConfig {
        seed: 5,
        ..CollectConfig::default()
    };
    let a = collect_occurrences(&src, &tgt, &links, Side::Source, cfg).unwrap();
    let b = collect_occurrences(&src, &tgt, &links, Side::Source, cfg).unwrap();
    assert_eq!(a[0].occurrences.len(), 10_000);
    assert_eq!(a[0].total, 12_000);
    assert_eq!(a, b);
    let c = collect_occurrences(&src, &tgt, &links, Side::Source, CollectConfig { seed: 6, ..cfg }).unwrap();
    assert_ne!(a, c);
    // roughly uniform: the kept share of the last 2000 sentences is near 10/12
    let late = a[0].occurrences.iter().filter(|o| o.sentence >= 10_000).count();
    assert!((1400..1900).contains(&late), "{late}");
}

#[test]
fn rotated_benchmark_is_perfect() {
    let mut g = rng(15);
    let x = unit_rows(gaussian(&mut g, 2000, 64));
    let r = random_orthogonal(&mut g, 64);
    let xs = matrix("w", x.clone());
    let ys = matrix("w", rotate(&x, &r));
    let train: Vec<usize> = (0..500).collect();
    let test: Vec<usize> = (500..1000).collect();
    let w = fit_procrustes(&xs.select(&train), &ys.select(&train)).unwrap();
    let gold = BilingualDictionary::from_entries(xs.words().iter().map(|k| (k.clone(), k.clone())));
    let report = evaluate_bdi(&w, &xs.select(&test), &ys, &gold, Metric::Nn, 10, &[1, 5]).unwrap();
    assert_eq!(report.p_at(1), Some(100.0));
    assert_eq!(report.queries, 500);
}

#[test]
fn polysemous_gold_counts_any_target() {
    let t = matrix("t", Array2::eye(3));
    let q = EmbeddingMatrixExt::single("bank", &[0.0, 1.0, 0.0]);
    let gold = BilingualDictionary::from_entries([("bank", "t0"), ("bank", "t1")]);
    let r = evaluate_bdi(&MappingMatrix::identity(3), &q, &t, &gold, Metric::Nn, 1, &[1]).unwrap();
    assert_eq!(r.p_at(1), Some(100.0));
}

struct EmbeddingMatrixExt;

impl EmbeddingMatrixExt {
    fn single(word: &str, v: &[f64]) -> ctxalign::embedding::EmbeddingMatrix {
        ctxalign::embedding::EmbeddingMatrix::new(
            vec![word.to_string()],
            Array2::from_shape_vec((1, v.len()), v.to_vec()).unwrap(),
        )
        .unwrap()
    }
}

#[test]
fn long_line_is_truncated_not_dropped() {
    let dir = tempfile::tempdir().unwrap();
    let long: Vec<String> = (0..200).map(|i| format!("w{i}")).collect();
    std::fs::write(dir.path().join("a"), format!("x y\n{}\n", long.join(" "))).unwrap();
    std::fs::write(dir.path().join("b"), "u v\nz\n").unwrap();
    let c = load_parallel_corpus(dir.path().join("a"), dir.path().join("b"), 150).unwrap();
    assert_eq!(c.len(), 2);
    assert_eq!(c.pairs[1].source.len(), 150);
    assert_eq!(c.pairs[1].source[149], "w149");
}

#[test]
fn words_below_min_count_are_excluded() {
    let mut src = TokenEmbeddingStream::new(2);
    let mut tgt = TokenEmbeddingStream::new(2);
    let mut links = Vec::new();
    for s in 0..9 {
        let (a, b) = if s < 5 { ("five", "funf") } else { ("four", "vier") };
        src.sentences.push(vec![TokenRecord::present(a, vec![1.0, 0.0])]);
        tgt.sentences.push(vec![TokenRecord::present(b, vec![0.0, 1.0])]);
        links.push(ctxalign::align::SentenceAlignment {
            sentence_index: s,
            links: vec![(0, 0)],
        });
    }
    let got = collect_occurrences(&src, &tgt, &links, Side::Source, CollectConfig::default()).unwrap();
    let words: Vec<&str> = got.iter().map(|c| c.word.as_str()).collect();
    assert_eq!(words, ["five"]);
    let got = collect_occurrences(&src, &tgt, &links, Side::Target, CollectConfig::default()).unwrap();
    assert_eq!(got[0].word, "funf");
    assert_eq!(got.len(), 1);
}

#[test]
fn centered_unit_matrix_is_a_fixed_point() {
    // rows ±e_k: unit length and zero mean already
    let mut v = Array2::zeros((8, 4));
    for k in 0..4 {
        v[[2 * k, k]] = 1.0;
        v[[2 * k + 1, k]] = -1.0;
    }
    let m = matrix("w", v.clone());
    let (out, report) = iterative_normalize(&m, 5, 1e-3).unwrap();
    assert_eq!(report.iterations, 1);
    assert!(max_abs_diff(out.vectors(), &v) < 1e-15);
}
