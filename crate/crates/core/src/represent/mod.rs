//! Type-level and sense-level representations built from aligned
//! contextual occurrences.
//!
//! Every aligned link whose two tokens both carry a vector contributes one
//! occurrence: the source vector plus its partner target vector. A type's
//! representation is the mean of its source vectors and the partner
//! representation is the mean of the linked target vectors. Sense-level
//! representations split a type's occurrences with k-means first.

pub mod kmeans;
pub mod knee;

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::align::SentenceAlignment;
use crate::embedding::EmbeddingMatrix;
use crate::rng;
use crate::stream::TokenEmbeddingStream;
use crate::{Error, Result};

pub use kmeans::{kmeans, KMeansFit};
pub use knee::{detect_knee, DEFAULT_SENSITIVITY};

pub const DEFAULT_MIN_COUNT: usize = 5;
pub const DEFAULT_CAP: usize = 10_000;
pub const DEFAULT_SENSE_MIN_COUNT: usize = 100;
pub const DEFAULT_K_MAX: usize = 8;

/// Stream vectors must be unit length within this tolerance.
const STREAM_UNIT_TOL: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Source,
    Target,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Type,
    Sense,
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Level::Type => "type",
            Level::Sense => "sense",
        })
    }
}

impl FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "type" => Ok(Level::Type),
            "sense" => Ok(Level::Sense),
            _ => Err(Error::InvalidArgument(format!("unknown level {s:?} (type|sense)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Occurrence {
    pub sentence: u32,
    pub position: u32,
    pub vector: Vec<f32>,
    /// The vector of the linked token on the other side.
    pub partner: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OccurrenceCollection {
    pub word: String,
    pub side: Side,
    /// Aligned occurrences seen in the corpus, before capping.
    pub total: usize,
    pub occurrences: Vec<Occurrence>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CollectConfig {
    pub min_count: usize,
    pub cap: usize,
    pub seed: u64,
}

impl Default for CollectConfig {
    fn default() -> Self {
        Self {
            min_count: DEFAULT_MIN_COUNT,
            cap: DEFAULT_CAP,
            seed: 0,
        }
    }
}

struct Reservoir {
    total: usize,
    kept: Vec<Occurrence>,
    rng: ChaCha8Rng,
}

fn check_unit(v: &[f32], sentence: usize, position: usize) -> Result<()> {
    let n = v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt();
    if (n - 1.0).abs() > STREAM_UNIT_TOL {
        return Err(Error::InvalidArgument(format!(
            "sentence {sentence} token {position}: vector norm {n} is not unit"
        )));
    }
    Ok(())
}

/// Gathers aligned occurrences per type on `side`, in descending order of
/// `total`, ties by type string.
///
/// Types with fewer than `min_count` aligned occurrences are dropped; types
/// with more than `cap` are subsampled uniformly by seeded reservoir
/// sampling. Links where either token lacks a vector are skipped.
pub fn collect_occurrences(
    source: &TokenEmbeddingStream,
    target: &TokenEmbeddingStream,
    alignments: &[SentenceAlignment],
    side: Side,
    config: CollectConfig,
) -> Result<Vec<OccurrenceCollection>> {
    if config.cap == 0 || config.min_count == 0 {
        return Err(Error::InvalidArgument("min_count and cap must be positive".into()));
    }
    if source.len() != alignments.len() || target.len() != alignments.len() {
        return Err(Error::Misaligned(format!(
            "streams have {} and {} sentences but there are {} alignments",
            source.len(),
            target.len(),
            alignments.len()
        )));
    }
    if source.dim != target.dim {
        return Err(Error::Dimension {
            expected: source.dim,
            got: target.dim,
        });
    }

    let mut by_type: HashMap<String, Reservoir> = HashMap::new();
    for (s, al) in alignments.iter().enumerate() {
        let (src, tgt) = (&source.sentences[s], &target.sentences[s]);
        for &(i, j) in &al.links {
            if i >= src.len() || j >= tgt.len() {
                return Err(Error::Misaligned(format!(
                    "link {i}-{j} outside sentence {s} ({} x {} tokens)",
                    src.len(),
                    tgt.len()
                )));
            }
            let (own, other, pos) = match side {
                Side::Source => (&src[i], &tgt[j], i),
                Side::Target => (&tgt[j], &src[i], j),
            };
            let (Some(v), Some(p)) = (&own.vector, &other.vector) else {
                continue;
            };
            check_unit(v, s, pos)?;
            check_unit(p, s, if side == Side::Source { j } else { i })?;
            let res = by_type.entry(own.token.clone()).or_insert_with(|| Reservoir {
                total: 0,
                kept: Vec::new(),
                rng: rng::seeded(rng::derive_seed(config.seed, &own.token)),
            });
            res.total += 1;
            let occ = || Occurrence {
                sentence: s as u32,
                position: pos as u32,
                vector: v.clone(),
                partner: p.clone(),
            };
            if res.kept.len() < config.cap {
                res.kept.push(occ());
            } else {
                let r = res.rng.random_range(0..res.total);
                if r < config.cap {
                    res.kept[r] = occ();
                }
            }
        }
    }

    let mut out: Vec<OccurrenceCollection> = by_type
        .into_iter()
        .filter(|(_, r)| r.total >= config.min_count)
        .map(|(word, r)| OccurrenceCollection {
            word,
            side,
            total: r.total,
            occurrences: r.kept,
        })
        .collect();
    sort_by_frequency(&mut out);
    Ok(out)
}

fn sort_by_frequency(c: &mut [OccurrenceCollection]) {
    c.sort_by(|a, b| b.total.cmp(&a.total).then_with(|| a.word.cmp(&b.word)));
}

/// Arithmetic mean of `f32` rows, accumulated in `f64` in iteration order.
fn mean_rows<'a>(rows: impl Iterator<Item = &'a [f32]>, dim: usize) -> Vec<f64> {
    let mut sum = vec![0.0f64; dim];
    let mut n = 0usize;
    for r in rows {
        for (s, &v) in sum.iter_mut().zip(r) {
            *s += f64::from(v);
        }
        n += 1;
    }
    let n = n.max(1) as f64;
    sum.iter().map(|s| s / n).collect()
}

/// Row-aligned source and target matrices sharing one key order.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedPairMatrices {
    pub x: EmbeddingMatrix,
    pub y: EmbeddingMatrix,
    pub level: Level,
}

fn dim_of(collections: &[OccurrenceCollection]) -> Result<usize> {
    collections
        .iter()
        .flat_map(|c| c.occurrences.first())
        .map(|o| o.vector.len())
        .next()
        .ok_or_else(|| Error::Empty("no occurrences".into()))
}

/// One row per type: the mean of its vectors (`x`) and of their partners (`y`).
pub fn build_type_level(collections: &[OccurrenceCollection]) -> Result<AlignedPairMatrices> {
    let mut sorted: Vec<&OccurrenceCollection> = collections.iter().collect();
    sorted.sort_by(|a, b| b.total.cmp(&a.total).then_with(|| a.word.cmp(&b.word)));
    let dim = dim_of(collections)?;
    let n = sorted.len();
    let mut xs = Vec::with_capacity(n * dim);
    let mut ys = Vec::with_capacity(n * dim);
    let mut words = Vec::with_capacity(n);
    for c in sorted {
        if c.occurrences.is_empty() {
            return Err(Error::Empty(format!("type {:?} has no occurrences", c.word)));
        }
        xs.extend(mean_rows(c.occurrences.iter().map(|o| o.vector.as_slice()), dim));
        ys.extend(mean_rows(c.occurrences.iter().map(|o| o.partner.as_slice()), dim));
        words.push(c.word.clone());
    }
    Ok(AlignedPairMatrices {
        x: EmbeddingMatrix::new(words.clone(), Array2::from_shape_vec((n, dim), xs).unwrap())?,
        y: EmbeddingMatrix::new(words, Array2::from_shape_vec((n, dim), ys).unwrap())?,
        level: Level::Type,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sense {
    /// Indices into the collection's occurrences.
    pub members: Vec<usize>,
    pub centroid: Vec<f64>,
    pub partner: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TypeSenses {
    pub word: String,
    pub total: usize,
    pub senses: Vec<Sense>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SenseInventory {
    pub dim: usize,
    pub types: Vec<TypeSenses>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SenseConfig {
    pub k_max: usize,
    /// Types with at most this many occurrences keep a single sense.
    pub sense_min_count: usize,
    pub sensitivity: f64,
    pub seed: u64,
}

impl Default for SenseConfig {
    fn default() -> Self {
        Self {
            k_max: DEFAULT_K_MAX,
            sense_min_count: DEFAULT_SENSE_MIN_COUNT,
            sensitivity: DEFAULT_SENSITIVITY,
            seed: 0,
        }
    }
}

fn sense_of(c: &OccurrenceCollection, members: Vec<usize>, dim: usize) -> Sense {
    let centroid = mean_rows(members.iter().map(|&i| c.occurrences[i].vector.as_slice()), dim);
    let partner = mean_rows(members.iter().map(|&i| c.occurrences[i].partner.as_slice()), dim);
    Sense {
        members,
        centroid,
        partner,
    }
}

/// The inertia curve `(k, inertia)` for `k = 1..=k_max`, made non-increasing
/// by a running minimum (k-means only finds local optima), together with
/// each `k`'s clustering.
pub fn inertia_curve(points: &Array2<f64>, k_max: usize, seed: u64) -> Vec<((usize, f64), KMeansFit)> {
    let k_max = k_max.min(points.nrows()).max(1);
    let mut best = f64::INFINITY;
    (1..=k_max)
        .map(|k| {
            let fit = kmeans(points, k, rng::mix(seed ^ k as u64));
            best = best.min(fit.inertia);
            ((k, best), fit)
        })
        .collect()
}

/// Splits one type's occurrences into senses.
///
/// Stopwords and types seen at most `sense_min_count` times keep one sense
/// (the type-level mean). Otherwise k-means runs for `k = 1..=k_max` and the
/// knee of the inertia curve picks the sense count, falling back to one
/// sense when no knee is found.
pub fn cluster_senses(
    collection: &OccurrenceCollection,
    config: &SenseConfig,
    stopwords: &HashSet<String>,
) -> Vec<Sense> {
    let n = collection.occurrences.len();
    if n == 0 {
        return Vec::new();
    }
    let dim = collection.occurrences[0].vector.len();
    let single = || vec![sense_of(collection, (0..n).collect(), dim)];
    if stopwords.contains(&collection.word) || collection.total <= config.sense_min_count || config.k_max < 2 {
        return single();
    }

    let points = Array2::from_shape_fn((n, dim), |(i, j)| f64::from(collection.occurrences[i].vector[j]));
    let seed = rng::derive_seed(config.seed, &collection.word);
    let runs = inertia_curve(&points, config.k_max, seed);
    let curve: Vec<(usize, f64)> = runs.iter().map(|(p, _)| *p).collect();
    let Some(k) = detect_knee(&curve, config.sensitivity) else {
        return single();
    };
    if k < 2 {
        return single();
    }
    let fit = &runs[k - 1].1;
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); fit.centroids.nrows()];
    for (i, &l) in fit.labels.iter().enumerate() {
        groups[l].push(i);
    }
    groups.retain(|g| !g.is_empty());
    groups.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
    groups.into_iter().map(|g| sense_of(collection, g, dim)).collect()
}

/// Clusters every type (in parallel; results do not depend on thread count).
pub fn build_inventory(
    collections: &[OccurrenceCollection],
    config: &SenseConfig,
    stopwords: &HashSet<String>,
) -> Result<SenseInventory> {
    let dim = dim_of(collections)?;
    let mut sorted: Vec<&OccurrenceCollection> = collections.iter().collect();
    sorted.sort_by(|a, b| b.total.cmp(&a.total).then_with(|| a.word.cmp(&b.word)));
    let types = sorted
        .par_iter()
        .map(|c| TypeSenses {
            word: c.word.clone(),
            total: c.total,
            senses: cluster_senses(c, config, stopwords),
        })
        .collect();
    Ok(SenseInventory { dim, types })
}

/// Concatenates every sense centroid (`x`) and partner centroid (`y`); keys
/// are `type#index` with 0-based sense indices.
pub fn build_sense_level(inventory: &SenseInventory) -> Result<AlignedPairMatrices> {
    let dim = inventory.dim;
    let mut words = Vec::new();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for t in &inventory.types {
        for (j, s) in t.senses.iter().enumerate() {
            words.push(format!("{}#{j}", t.word));
            xs.extend_from_slice(&s.centroid);
            ys.extend_from_slice(&s.partner);
        }
    }
    let n = words.len();
    Ok(AlignedPairMatrices {
        x: EmbeddingMatrix::new(words.clone(), Array2::from_shape_vec((n, dim), xs).unwrap())?,
        y: EmbeddingMatrix::new(words, Array2::from_shape_vec((n, dim), ys).unwrap())?,
        level: Level::Sense,
    })
}

const INVENTORY_MAGIC: &[u8; 4] = b"CSNS";
const OCCURRENCE_MAGIC: &[u8; 4] = b"COCC";
const SIDECAR_VERSION: u32 = 1;

/// Binary sidecar: magic `CSNS`, u32 version, u32 dim, u32 type count; per
/// type a u16-length word, u64 total, u32 sense count, then per sense a u32
/// member count and `dim` f64 centroid and partner values (little-endian).
pub fn write_inventory(inv: &SenseInventory, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = BufWriter::new(fs::File::create(path).map_err(|e| Error::io(path, e))?);
    let mut put = |b: &[u8]| w.write_all(b).map_err(|e| Error::io(path, e));
    put(INVENTORY_MAGIC)?;
    put(&SIDECAR_VERSION.to_le_bytes())?;
    put(&(inv.dim as u32).to_le_bytes())?;
    put(&(inv.types.len() as u32).to_le_bytes())?;
    for t in &inv.types {
        put(&(t.word.len() as u16).to_le_bytes())?;
        put(t.word.as_bytes())?;
        put(&(t.total as u64).to_le_bytes())?;
        put(&(t.senses.len() as u32).to_le_bytes())?;
        for s in &t.senses {
            put(&(s.members.len() as u32).to_le_bytes())?;
            for v in s.centroid.iter().chain(&s.partner) {
                put(&v.to_le_bytes())?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Summary of an inventory read back from disk: member indices are not
/// persisted, only their counts.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredSense {
    pub members: usize,
    pub centroid: Vec<f64>,
    pub partner: Vec<f64>,
}

pub type StoredInventory = Vec<(String, usize, Vec<StoredSense>)>;

struct ByteReader<R> {
    r: R,
    path: std::path::PathBuf,
}

impl<R: Read> ByteReader<R> {
    fn bytes(&mut self, n: usize) -> Result<Vec<u8>> {
        let mut b = vec![0; n];
        self.r
            .read_exact(&mut b)
            .map_err(|_| Error::format(&self.path, "unexpected end of file"))?;
        Ok(b)
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.bytes(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }
    fn word(&mut self) -> Result<String> {
        let n = self.u16()? as usize;
        String::from_utf8(self.bytes(n)?).map_err(|_| Error::format(&self.path, "invalid UTF-8"))
    }
    fn header(&mut self, magic: &[u8; 4]) -> Result<(usize, usize)> {
        if &self.bytes(4)?[..] != magic {
            return Err(Error::format(&self.path, "bad magic"));
        }
        if self.u32()? != SIDECAR_VERSION {
            return Err(Error::format(&self.path, "unsupported version"));
        }
        Ok((self.u32()? as usize, self.u32()? as usize))
    }
}

fn open(path: &Path) -> Result<ByteReader<BufReader<fs::File>>> {
    Ok(ByteReader {
        r: BufReader::new(fs::File::open(path).map_err(|e| Error::io(path, e))?),
        path: path.to_owned(),
    })
}

pub fn read_inventory(path: impl AsRef<Path>) -> Result<(usize, StoredInventory)> {
    let mut r = open(path.as_ref())?;
    let (dim, n) = r.header(INVENTORY_MAGIC)?;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let word = r.word()?;
        let total = r.u64()? as usize;
        let k = r.u32()? as usize;
        let mut senses = Vec::with_capacity(k);
        for _ in 0..k {
            let members = r.u32()? as usize;
            let mut vals = Vec::with_capacity(2 * dim);
            for _ in 0..2 * dim {
                vals.push(f64::from_le_bytes(r.bytes(8)?.try_into().unwrap()));
            }
            let partner = vals.split_off(dim);
            senses.push(StoredSense {
                members,
                centroid: vals,
                partner,
            });
        }
        out.push((word, total, senses));
    }
    Ok((dim, out))
}

/// Occurrence file: magic `COCC`, u32 version, u32 dim, u32 type count; per
/// type a u8 side, u16-length word, u64 total, u32 occurrence count, then per
/// occurrence u32 sentence, u32 position and `2 × dim` f32 values.
pub fn write_occurrences(collections: &[OccurrenceCollection], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let dim = dim_of(collections).unwrap_or(0);
    let mut w = BufWriter::new(fs::File::create(path).map_err(|e| Error::io(path, e))?);
    let mut put = |b: &[u8]| w.write_all(b).map_err(|e| Error::io(path, e));
    put(OCCURRENCE_MAGIC)?;
    put(&SIDECAR_VERSION.to_le_bytes())?;
    put(&(dim as u32).to_le_bytes())?;
    put(&(collections.len() as u32).to_le_bytes())?;
    for c in collections {
        put(&[u8::from(c.side == Side::Target)])?;
        put(&(c.word.len() as u16).to_le_bytes())?;
        put(c.word.as_bytes())?;
        put(&(c.total as u64).to_le_bytes())?;
        put(&(c.occurrences.len() as u32).to_le_bytes())?;
        for o in &c.occurrences {
            put(&o.sentence.to_le_bytes())?;
            put(&o.position.to_le_bytes())?;
            for v in o.vector.iter().chain(&o.partner) {
                put(&v.to_le_bytes())?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_occurrences(path: impl AsRef<Path>) -> Result<Vec<OccurrenceCollection>> {
    let mut r = open(path.as_ref())?;
    let (dim, n) = r.header(OCCURRENCE_MAGIC)?;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let side = if r.bytes(1)?[0] == 1 { Side::Target } else { Side::Source };
        let word = r.word()?;
        let total = r.u64()? as usize;
        let count = r.u32()? as usize;
        let mut occurrences = Vec::with_capacity(count);
        for _ in 0..count {
            let sentence = r.u32()?;
            let position = r.u32()?;
            let raw = r.bytes(8 * dim)?;
            let mut vals: Vec<f32> = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let partner = vals.split_off(dim);
            occurrences.push(Occurrence {
                sentence,
                position,
                vector: vals,
                partner,
            });
        }
        out.push(OccurrenceCollection {
            word,
            side,
            total,
            occurrences,
        });
    }
    Ok(out)
}
