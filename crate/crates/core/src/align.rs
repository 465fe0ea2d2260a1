//! Silver token alignment: an EM-trained IBM Model 2 with a log-linear
//! diagonal prior (the fast_align parameterization), intersection
//! symmetrization and Pharaoh-format I/O.
//!
//! In a model of direction [`Direction::Forward`] every source token is
//! generated from one target token or from NULL, so the translation table
//! holds `t(source | target)` and links come out as `(source, target)`.
//! A [`Direction::Backward`] model does the reverse: it holds
//! `t(target | source)` and emits `(target, source)` links, which
//! [`symmetrize_one_to_one`] transposes.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::corpus::ParallelCorpus;
use crate::{Error, Result};

/// Sentences per E-step shard. Fixed so that count merging is independent of
/// the thread count.
const SHARD: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignerConfig {
    pub epochs: usize,
    /// Diagonal tension λ.
    pub tension: f64,
    /// Prior mass p0 of aligning to NULL.
    pub null_prob: f64,
    /// Probability used for pairs absent from the table.
    pub floor: f64,
}

impl Default for AlignerConfig {
    fn default() -> Self {
        Self {
            epochs: 5,
            tension: 4.0,
            null_prob: 0.08,
            floor: 1e-9,
        }
    }
}

impl AlignerConfig {
    fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be at least 1".into()));
        }
        if !(self.tension > 0.0 && self.tension.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "diagonal tension must be positive, got {}",
                self.tension
            )));
        }
        if !(0.0..1.0).contains(&self.null_prob) {
            return Err(Error::InvalidArgument(format!(
                "null probability must be in [0, 1), got {}",
                self.null_prob
            )));
        }
        if !(self.floor > 0.0 && self.floor < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "translation floor must be in (0, 1), got {}",
                self.floor
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
struct Vocab {
    ids: HashMap<String, u32>,
    words: Vec<String>,
}

impl Vocab {
    fn intern(&mut self, w: &str) -> u32 {
        if let Some(&id) = self.ids.get(w) {
            return id;
        }
        let id = self.words.len() as u32;
        self.ids.insert(w.to_owned(), id);
        self.words.push(w.to_owned());
        id
    }

    fn get(&self, w: &str) -> Option<u32> {
        self.ids.get(w).copied()
    }
}

/// Translation table in compressed-row form. Row 0 is NULL; row `e + 1`
/// holds the conditioning word with id `e`. Within a row the generated word
/// ids are sorted.
#[derive(Debug, Clone)]
struct Table {
    offsets: Vec<usize>,
    words: Vec<u32>,
    probs: Vec<f64>,
}

impl Table {
    fn slot(&self, row: usize, word: u32) -> Option<usize> {
        let (lo, hi) = (self.offsets[row], self.offsets[row + 1]);
        self.words[lo..hi].binary_search(&word).ok().map(|k| lo + k)
    }
}

/// A trained single-direction alignment model.
#[derive(Debug, Clone)]
pub struct AlignmentModel {
    direction: Direction,
    config: AlignerConfig,
    generated: Vocab,
    conditioning: Vocab,
    table: Table,
    log_likelihoods: Vec<f64>,
}

/// Sentences as (generated ids, conditioning ids).
type Encoded = Vec<(Vec<u32>, Vec<u32>)>;

impl AlignmentModel {
    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn tension(&self) -> f64 {
        self.config.tension
    }

    pub fn config(&self) -> &AlignerConfig {
        &self.config
    }

    /// Corpus log-likelihood computed in each epoch's E-step.
    pub fn log_likelihoods(&self) -> &[f64] {
        &self.log_likelihoods
    }

    /// `t(word | given)`; `given = None` is NULL. Words are in the model's
    /// orientation (see the module docs). Pairs never observed together get
    /// the floor probability.
    pub fn prob(&self, given: Option<&str>, word: &str) -> f64 {
        let Some(f) = self.generated.get(word) else {
            return self.config.floor;
        };
        let row = match given {
            None => 0,
            Some(g) => match self.conditioning.get(g) {
                Some(e) => e as usize + 1,
                None => return self.config.floor,
            },
        };
        self.lookup(row, f)
    }

    /// Translation probability between a corpus source word and target word,
    /// in the model's orientation: `t(source | target)` for a forward model,
    /// `t(target | source)` for a backward one.
    pub fn pair_prob(&self, source: &str, target: &str) -> f64 {
        match self.direction {
            Direction::Forward => self.prob(Some(target), source),
            Direction::Backward => self.prob(Some(source), target),
        }
    }

    /// Sum of probabilities in the row for `given` (1 for every trained row).
    pub fn row_mass(&self, given: Option<&str>) -> f64 {
        let row = match given {
            None => 0,
            Some(g) => match self.conditioning.get(g) {
                Some(e) => e as usize + 1,
                None => return 0.0,
            },
        };
        let t = &self.table;
        t.probs[t.offsets[row]..t.offsets[row + 1]].iter().sum()
    }

    /// Every `(given, word, probability)` entry; `given` is `None` for NULL.
    pub fn entries(&self) -> impl Iterator<Item = (Option<&str>, &str, f64)> + '_ {
        let t = &self.table;
        (0..t.offsets.len() - 1).flat_map(move |row| {
            let given = if row == 0 {
                None
            } else {
                Some(self.conditioning.words[row - 1].as_str())
            };
            (t.offsets[row]..t.offsets[row + 1])
                .map(move |k| (given, self.generated.words[t.words[k] as usize].as_str(), t.probs[k]))
        })
    }

    fn lookup(&self, row: usize, f: u32) -> f64 {
        match self.table.slot(row, f) {
            Some(k) => self.table.probs[k].max(self.config.floor),
            None => self.config.floor,
        }
    }

    fn lookup_ids(&self, row: usize, f: Option<u32>) -> f64 {
        match f {
            Some(f) => self.lookup(row, f),
            None => self.config.floor,
        }
    }

    fn oriented<'a>(&self, src: &'a [String], tgt: &'a [String]) -> (&'a [String], &'a [String]) {
        match self.direction {
            Direction::Forward => (src, tgt),
            Direction::Backward => (tgt, src),
        }
    }
}

/// Unnormalized diagonal prior weights `exp(-λ |i/m - j/n|)` for generated
/// position `i` (0-based) over all `n` conditioning positions, plus their sum.
fn diagonal_weights(i: usize, m: usize, n: usize, tension: f64, out: &mut Vec<f64>) -> f64 {
    out.clear();
    let a = (i + 1) as f64 / m as f64;
    let mut z = 0.0;
    for j in 0..n {
        let b = (j + 1) as f64 / n as f64;
        let w = (-tension * (a - b).abs()).exp();
        out.push(w);
        z += w;
    }
    z
}

/// Trains a single-direction model with EM.
///
/// The diagonal tension stays fixed during training.
pub fn train_aligner(
    corpus: &ParallelCorpus,
    direction: Direction,
    config: AlignerConfig,
) -> Result<AlignmentModel> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(Error::Empty("parallel corpus has no sentences".into()));
    }

    let mut generated = Vocab::default();
    let mut conditioning = Vocab::default();
    let mut encoded: Encoded = Vec::with_capacity(corpus.len());
    for p in &corpus.pairs {
        let (g, c) = match direction {
            Direction::Forward => (&p.source, &p.target),
            Direction::Backward => (&p.target, &p.source),
        };
        let g: Vec<u32> = g.iter().map(|w| generated.intern(w)).collect();
        let c: Vec<u32> = c.iter().map(|w| conditioning.intern(w)).collect();
        encoded.push((g, c));
    }

    let table = initial_table(&encoded, conditioning.words.len());
    let mut model = AlignmentModel {
        direction,
        config,
        generated,
        conditioning,
        table,
        log_likelihoods: Vec::with_capacity(config.epochs),
    };

    for _ in 0..config.epochs {
        let (counts, ll) = expected_counts(&model, &encoded);
        model.log_likelihoods.push(ll);
        renormalize(&mut model.table, counts);
    }
    Ok(model)
}

/// Support = observed co-occurrences (plus every generated word under NULL),
/// initialized uniform per row.
fn initial_table(encoded: &Encoded, n_cond: usize) -> Table {
    let mut rows: Vec<Vec<u32>> = vec![Vec::new(); n_cond + 1];
    for (g, c) in encoded {
        rows[0].extend_from_slice(g);
        for &e in c {
            rows[e as usize + 1].extend_from_slice(g);
        }
    }
    let mut offsets = Vec::with_capacity(rows.len() + 1);
    let mut words = Vec::new();
    let mut probs = Vec::new();
    offsets.push(0);
    for mut r in rows {
        r.sort_unstable();
        r.dedup();
        let p = if r.is_empty() { 0.0 } else { 1.0 / r.len() as f64 };
        probs.extend(std::iter::repeat_n(p, r.len()));
        words.extend(r);
        offsets.push(words.len());
    }
    Table {
        offsets,
        words,
        probs,
    }
}

fn expected_counts(model: &AlignmentModel, encoded: &Encoded) -> (Vec<f64>, f64) {
    let cfg = &model.config;
    let table = &model.table;
    let shards: Vec<(HashMap<usize, f64>, f64)> = encoded
        .par_chunks(SHARD)
        .map(|chunk| {
            let mut counts: HashMap<usize, f64> = HashMap::new();
            let mut ll = 0.0;
            let mut prior = Vec::new();
            let mut post = Vec::new();
            for (g, c) in chunk {
                let (m, n) = (g.len(), c.len());
                for (i, &f) in g.iter().enumerate() {
                    let z = diagonal_weights(i, m, n, cfg.tension, &mut prior);
                    post.clear();
                    let null_slot = table.slot(0, f).expect("NULL row covers every word");
                    let null_p = cfg.null_prob * table.probs[null_slot];
                    let mut total = null_p;
                    for (j, &e) in c.iter().enumerate() {
                        let slot = table.slot(e as usize + 1, f).expect("co-occurrence in support");
                        let p = (1.0 - cfg.null_prob) * prior[j] / z * table.probs[slot];
                        post.push((slot, p));
                        total += p;
                    }
                    if total <= 0.0 {
                        continue;
                    }
                    ll += total.ln();
                    *counts.entry(null_slot).or_insert(0.0) += null_p / total;
                    for &(slot, p) in &post {
                        *counts.entry(slot).or_insert(0.0) += p / total;
                    }
                }
            }
            (counts, ll)
        })
        .collect();

    let mut dense = vec![0.0; table.probs.len()];
    let mut ll = 0.0;
    for (counts, shard_ll) in shards {
        for (slot, v) in counts {
            dense[slot] += v;
        }
        ll += shard_ll;
    }
    (dense, ll)
}

fn renormalize(table: &mut Table, counts: Vec<f64>) {
    for row in 0..table.offsets.len() - 1 {
        let (lo, hi) = (table.offsets[row], table.offsets[row + 1]);
        let total: f64 = counts[lo..hi].iter().sum();
        if total > 0.0 {
            for k in lo..hi {
                table.probs[k] = counts[k] / total;
            }
        }
    }
}

/// One sentence's links as `(position, position)` pairs, 0-based.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SentenceAlignment {
    pub sentence_index: usize,
    pub links: Vec<(usize, usize)>,
}

impl SentenceAlignment {
    /// True when no position appears twice on either side.
    pub fn is_one_to_one(&self) -> bool {
        let mut a = BTreeSet::new();
        let mut b = BTreeSet::new();
        self.links.iter().all(|&(i, j)| a.insert(i) && b.insert(j))
    }
}

/// Links every generated token to its most probable conditioning position,
/// or to nothing when NULL wins. Ties go to the smaller position.
pub fn viterbi_align(model: &AlignmentModel, corpus: &ParallelCorpus) -> Vec<SentenceAlignment> {
    let cfg = &model.config;
    corpus
        .pairs
        .par_iter()
        .enumerate()
        .map(|(s, pair)| {
            let (g, c) = model.oriented(&pair.source, &pair.target);
            let (m, n) = (g.len(), c.len());
            let gids: Vec<Option<u32>> = g.iter().map(|w| model.generated.get(w)).collect();
            let rows: Vec<usize> = c
                .iter()
                .map(|w| model.conditioning.get(w).map_or(usize::MAX, |e| e as usize + 1))
                .collect();
            let mut prior = Vec::with_capacity(n);
            let mut links = Vec::new();
            for (i, &f) in gids.iter().enumerate() {
                let z = diagonal_weights(i, m, n, cfg.tension, &mut prior);
                let mut best = cfg.null_prob * model.lookup_ids(0, f);
                let mut best_j = None;
                for j in 0..n {
                    let t = if rows[j] == usize::MAX {
                        cfg.floor
                    } else {
                        model.lookup_ids(rows[j], f)
                    };
                    let p = (1.0 - cfg.null_prob) * prior[j] / z * t;
                    if p > best {
                        best = p;
                        best_j = Some(j);
                    }
                }
                if let Some(j) = best_j {
                    links.push((i, j));
                }
            }
            SentenceAlignment {
                sentence_index: s,
                links,
            }
        })
        .collect()
}

/// Intersects forward `(source, target)` links with transposed backward
/// `(target, source)` links, keeping only one-to-one links.
pub fn symmetrize_one_to_one(
    forward: &[SentenceAlignment],
    backward: &[SentenceAlignment],
) -> Result<Vec<SentenceAlignment>> {
    if forward.len() != backward.len() {
        return Err(Error::Misaligned(format!(
            "{} forward vs {} backward sentence alignments",
            forward.len(),
            backward.len()
        )));
    }
    forward
        .iter()
        .zip(backward)
        .map(|(f, b)| {
            if f.sentence_index != b.sentence_index {
                return Err(Error::Misaligned(format!(
                    "sentence index {} paired with {}",
                    f.sentence_index, b.sentence_index
                )));
            }
            let back: BTreeSet<(usize, usize)> = b.links.iter().map(|&(t, s)| (s, t)).collect();
            let common: Vec<(usize, usize)> = f
                .links
                .iter()
                .copied()
                .filter(|l| back.contains(l))
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            let mut src_uses: HashMap<usize, usize> = HashMap::new();
            let mut tgt_uses: HashMap<usize, usize> = HashMap::new();
            for &(s, t) in &common {
                *src_uses.entry(s).or_default() += 1;
                *tgt_uses.entry(t).or_default() += 1;
            }
            let links = common
                .into_iter()
                .filter(|(s, t)| src_uses[s] == 1 && tgt_uses[t] == 1)
                .collect();
            Ok(SentenceAlignment {
                sentence_index: f.sentence_index,
                links,
            })
        })
        .collect()
}

/// Trains both directions and returns symmetrized one-to-one alignments.
pub fn align_corpus(corpus: &ParallelCorpus, config: AlignerConfig) -> Result<Vec<SentenceAlignment>> {
    let fwd = train_aligner(corpus, Direction::Forward, config)?;
    let bwd = train_aligner(corpus, Direction::Backward, config)?;
    symmetrize_one_to_one(&viterbi_align(&fwd, corpus), &viterbi_align(&bwd, corpus))
}

/// Checks that every link lies within its sentence's bounds.
pub fn check_bounds(alignments: &[SentenceAlignment], corpus: &ParallelCorpus) -> Result<()> {
    if alignments.len() != corpus.len() {
        return Err(Error::Misaligned(format!(
            "{} alignments for {} sentences",
            alignments.len(),
            corpus.len()
        )));
    }
    for (a, p) in alignments.iter().zip(&corpus.pairs) {
        for &(s, t) in &a.links {
            if s >= p.source.len() || t >= p.target.len() {
                return Err(Error::Misaligned(format!(
                    "link {s}-{t} out of bounds in sentence {}",
                    a.sentence_index
                )));
            }
        }
    }
    Ok(())
}

/// Pharaoh format: one line per sentence, `i-j` pairs separated by spaces.
pub fn format_pharaoh(alignments: &[SentenceAlignment]) -> String {
    let mut out = String::new();
    for a in alignments {
        for (k, (i, j)) in a.links.iter().enumerate() {
            if k > 0 {
                out.push(' ');
            }
            write!(out, "{i}-{j}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn write_alignments(alignments: &[SentenceAlignment], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_pharaoh(alignments)).map_err(|e| Error::io(path, e))
}

pub fn read_alignments(path: impl AsRef<Path>) -> Result<Vec<SentenceAlignment>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let mut links = Vec::new();
        for tok in line.split_whitespace() {
            let parsed = tok
                .split_once('-')
                .and_then(|(a, b)| Some((a.parse().ok()?, b.parse().ok()?)));
            match parsed {
                Some(l) => links.push(l),
                None => return Err(Error::parse(path, i + 1, format!("bad link {tok:?}"))),
            }
        }
        out.push(SentenceAlignment {
            sentence_index: i,
            links,
        });
    }
    Ok(out)
}
