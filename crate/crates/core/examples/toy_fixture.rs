//! Writes the toy bilingual fixture bundle used by the end-to-end tests.
//!
//! ```text
//! cargo run -p ctxalign --example toy_fixture -- crates/core/tests/data/toy
//! ```
//!
//! 100 sentence pairs over a 30-word bijective lexicon. Every source word
//! has a random base direction `b`; its translation has `R b` for a fixed
//! random rotation `R`. Each occurrence vector is the base plus small noise,
//! unit-normalized. A few tokens are written without vectors.

use std::fs;
use std::path::PathBuf;

use ndarray::{Array1, Array2};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use ctxalign::stream::{write_token_stream, TokenEmbeddingStream, TokenRecord};

const LEXICON: [(&str, &str); 30] = [
    ("house", "haus"),
    ("water", "wasser"),
    ("tree", "baum"),
    ("dog", "hund"),
    ("cat", "katze"),
    ("bread", "brot"),
    ("night", "nacht"),
    ("sun", "sonne"),
    ("moon", "mond"),
    ("book", "buch"),
    ("hand", "hand"),
    ("milk", "milch"),
    ("door", "tuer"),
    ("school", "schule"),
    ("garden", "garten"),
    ("apple", "apfel"),
    ("bird", "vogel"),
    ("fish", "fisch"),
    ("street", "strasse"),
    ("window", "fenster"),
    ("chair", "stuhl"),
    ("table", "tisch"),
    ("winter", "winter"),
    ("summer", "sommer"),
    ("river", "fluss"),
    ("mountain", "berg"),
    ("friend", "freund"),
    ("child", "kind"),
    ("letter", "brief"),
    ("city", "stadt"),
];

const DIM: usize = 16;
const SENTENCES: usize = 100;
const NOISE: f64 = 0.05;
const ABSENT_RATE: f64 = 0.02;

fn gaussian(g: &mut ChaCha8Rng, n: usize) -> Array1<f64> {
    Array1::from_shape_fn(n, |_| g.sample(StandardNormal))
}

fn unit(v: Array1<f64>) -> Array1<f64> {
    let n = v.dot(&v).sqrt();
    v / n
}

/// Random orthogonal matrix by Gram-Schmidt on Gaussian columns.
fn rotation(g: &mut ChaCha8Rng) -> Array2<f64> {
    let mut q = Array2::<f64>::zeros((DIM, DIM));
    for j in 0..DIM {
        let mut v = gaussian(g, DIM);
        for k in 0..j {
            let c = q.column(k).to_owned();
            v = &v - &(&c * c.dot(&v));
        }
        q.column_mut(j).assign(&unit(v));
    }
    q
}

fn record(g: &mut ChaCha8Rng, token: &str, base: &Array1<f64>) -> TokenRecord {
    if g.random::<f64>() < ABSENT_RATE {
        return TokenRecord::absent(token);
    }
    let v = unit(base + &(gaussian(g, DIM) * NOISE));
    TokenRecord::present(token, v.iter().map(|&x| x as f32).collect())
}

fn main() {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "crates/core/tests/data/toy".into()));
    fs::create_dir_all(&out).unwrap();
    let mut g = ChaCha8Rng::seed_from_u64(2021);

    let r = rotation(&mut g);
    let src_base: Vec<Array1<f64>> = (0..LEXICON.len()).map(|_| unit(gaussian(&mut g, DIM))).collect();
    let tgt_base: Vec<Array1<f64>> = src_base.iter().map(|b| r.dot(b)).collect();

    let ids: Vec<usize> = (0..LEXICON.len()).collect();
    let weights: Vec<f64> = ids.iter().map(|&i| 1.0 / (i as f64 + 5.0)).collect();
    let mut src_lines = Vec::new();
    let mut tgt_lines = Vec::new();
    let mut src_stream = TokenEmbeddingStream::new(DIM);
    let mut tgt_stream = TokenEmbeddingStream::new(DIM);
    for _ in 0..SENTENCES {
        let len = g.random_range(4..=7);
        let mut words: Vec<usize> = Vec::with_capacity(len);
        while words.len() < len {
            let w = *ids.choose_weighted(&mut g, |&i| weights[i]).unwrap();
            if !words.contains(&w) {
                words.push(w);
            }
        }
        let mut order = words.clone();
        if g.random::<f64>() < 0.3 {
            let i = g.random_range(0..len - 1);
            order.swap(i, i + 1);
        }
        src_lines.push(words.iter().map(|&w| LEXICON[w].0).collect::<Vec<_>>().join(" "));
        tgt_lines.push(order.iter().map(|&w| LEXICON[w].1).collect::<Vec<_>>().join(" "));
        src_stream
            .sentences
            .push(words.iter().map(|&w| record(&mut g, LEXICON[w].0, &src_base[w])).collect());
        tgt_stream
            .sentences
            .push(order.iter().map(|&w| record(&mut g, LEXICON[w].1, &tgt_base[w])).collect());
    }

    fs::write(out.join("corpus.src"), src_lines.join("\n") + "\n").unwrap();
    fs::write(out.join("corpus.tgt"), tgt_lines.join("\n") + "\n").unwrap();
    write_token_stream(&src_stream, out.join("stream.src.cemb")).unwrap();
    write_token_stream(&tgt_stream, out.join("stream.tgt.cemb")).unwrap();
    let dict: String = LEXICON.iter().map(|(s, t)| format!("{s} {t}\n")).collect();
    fs::write(out.join("dictionary.txt"), dict).unwrap();
    fs::write(
        out.join("toy.cfg"),
        "\
source_corpus = corpus.src
target_corpus = corpus.tgt
source_stream = stream.src.cemb
target_stream = stream.tgt.cemb
dictionary = dictionary.txt
output_dir = run
train_size = 20
test_size = 10
metrics_r = 25
metrics_m = 25
seed = 7
",
    )
    .unwrap();
}
