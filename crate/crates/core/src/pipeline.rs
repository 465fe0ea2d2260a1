//! Config-driven end-to-end runs.
//!
//! Stages run in order and talk to each other only through files in the
//! output directory:
//!
//! ```text
//! align     alignments.txt
//! collect   occurrences.src.bin occurrences.tgt.bin
//! build     x.emb y.emb queries.emb targets.emb [inventory.bin]
//! normalize x.in.emb y.in.emb queries.in.emb targets.in.emb normalization.json
//! fit       mapping.txt
//! evaluate  eval.json
//! metrics   metrics.json
//! ```
//!
//! `manifest.json` records the config, input and output digests and stage
//! timings. On failure it names the failing stage and marks its outputs,
//! and any later stage's files left over from earlier runs, as stale.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::align::{align_corpus, check_bounds, read_alignments, write_alignments, AlignerConfig};
use crate::corpus::{load_dictionary, load_parallel_corpus, BilingualDictionary, DEFAULT_MAX_LEN};
use crate::embedding::{read_embedding_text, write_embedding_text, EmbeddingMatrix};
use crate::geometry::{geometry_report, DEFAULT_RS_PAIRS, DEFAULT_SAMPLE};
use crate::mapping::{fit, read_mapping, rows_for_types, training_keys, write_mapping, Method};
use crate::normalize::{iterative_normalize, DEFAULT_ITERS, DEFAULT_TOL};
use crate::represent::{
    build_inventory, build_sense_level, build_type_level, collect_occurrences, read_occurrences,
    write_inventory, write_occurrences, CollectConfig, Level, SenseConfig, Side, DEFAULT_CAP,
    DEFAULT_K_MAX, DEFAULT_MIN_COUNT, DEFAULT_SENSE_MIN_COUNT, DEFAULT_SENSITIVITY,
};
use crate::retrieval::{evaluate_bdi, Metric, DEFAULT_CSLS_K};
use crate::rng;
use crate::stream::{match_corpus, read_token_stream};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub source_corpus: PathBuf,
    pub target_corpus: PathBuf,
    pub source_stream: PathBuf,
    pub target_stream: PathBuf,
    /// Gold dictionary, used for evaluation and (optionally) to restrict
    /// training pairs.
    pub dictionary: PathBuf,
    pub stopwords: Option<PathBuf>,
    pub output_dir: PathBuf,

    pub max_len: usize,
    pub min_count: usize,
    pub cap: usize,
    pub sense_min_count: usize,
    pub k_max: usize,
    pub knee_sensitivity: f64,

    pub align_epochs: usize,
    pub align_tension: f64,
    pub align_null_prob: f64,

    pub level: Level,
    pub method: Method,
    pub train_size: usize,
    pub restrict_training: bool,
    pub test_size: usize,

    pub normalize: bool,
    pub in_iters: usize,
    pub in_tol: f64,

    pub metric: Metric,
    pub csls_k: usize,
    pub topk: Vec<usize>,

    pub metrics_r: usize,
    pub metrics_m: usize,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let a = AlignerConfig::default();
        Self {
            source_corpus: PathBuf::new(),
            target_corpus: PathBuf::new(),
            source_stream: PathBuf::new(),
            target_stream: PathBuf::new(),
            dictionary: PathBuf::new(),
            stopwords: None,
            output_dir: PathBuf::from("run"),
            max_len: DEFAULT_MAX_LEN,
            min_count: DEFAULT_MIN_COUNT,
            cap: DEFAULT_CAP,
            sense_min_count: DEFAULT_SENSE_MIN_COUNT,
            k_max: DEFAULT_K_MAX,
            knee_sensitivity: DEFAULT_SENSITIVITY,
            align_epochs: a.epochs,
            align_tension: a.tension,
            align_null_prob: a.null_prob,
            level: Level::Type,
            method: Method::Procrustes,
            train_size: 5000,
            restrict_training: true,
            test_size: 1500,
            normalize: false,
            in_iters: DEFAULT_ITERS,
            in_tol: DEFAULT_TOL,
            metric: Metric::Nn,
            csls_k: DEFAULT_CSLS_K,
            topk: vec![1, 5],
            metrics_r: DEFAULT_SAMPLE,
            metrics_m: DEFAULT_RS_PAIRS,
            seed: 0,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "on" | "1" | "yes" => Ok(true),
        "false" | "off" | "0" | "no" => Ok(false),
        _ => Err(Error::InvalidArgument(format!("{key}: expected a boolean, got {value:?}"))),
    }
}

impl PipelineConfig {
    /// Sets one key. Relative paths are resolved against `base`.
    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<()> {
        let path = || base.join(value);
        match key {
            "source_corpus" => self.source_corpus = path(),
            "target_corpus" => self.target_corpus = path(),
            "source_stream" => self.source_stream = path(),
            "target_stream" => self.target_stream = path(),
            "dictionary" => self.dictionary = path(),
            "stopwords" => self.stopwords = (!value.is_empty()).then(path),
            "output_dir" => self.output_dir = path(),
            "max_len" => self.max_len = parse_num(key, value)?,
            "min_count" => self.min_count = parse_num(key, value)?,
            "cap" => self.cap = parse_num(key, value)?,
            "sense_min_count" => self.sense_min_count = parse_num(key, value)?,
            "k_max" => self.k_max = parse_num(key, value)?,
            "knee_sensitivity" => self.knee_sensitivity = parse_num(key, value)?,
            "align_epochs" => self.align_epochs = parse_num(key, value)?,
            "align_tension" => self.align_tension = parse_num(key, value)?,
            "align_null_prob" => self.align_null_prob = parse_num(key, value)?,
            "level" => self.level = value.parse()?,
            "method" => self.method = value.parse()?,
            "train_size" => self.train_size = parse_num(key, value)?,
            "restrict_training" => self.restrict_training = parse_bool(key, value)?,
            "test_size" => self.test_size = parse_num(key, value)?,
            "normalize" => self.normalize = parse_bool(key, value)?,
            "in_iters" => self.in_iters = parse_num(key, value)?,
            "in_tol" => self.in_tol = parse_num(key, value)?,
            "metric" => self.metric = value.parse()?,
            "csls_k" => self.csls_k = parse_num(key, value)?,
            "topk" => {
                self.topk = value
                    .split(',')
                    .map(|v| parse_num(key, v.trim()))
                    .collect::<Result<_>>()?
            }
            "metrics_r" => self.metrics_r = parse_num(key, value)?,
            "metrics_m" => self.metrics_m = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            _ => return Err(Error::InvalidArgument(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str, base: &Path, origin: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::parse(origin, i + 1, "expected key = value"));
            };
            cfg.set(k.trim(), v.trim(), base).map_err(|e| match e {
                Error::InvalidArgument(m) => Error::parse(origin, i + 1, m),
                e => e,
            })?;
        }
        Ok(cfg)
    }

    /// Loads a config file; relative paths resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new("")), path)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("max_len", self.max_len),
            ("min_count", self.min_count),
            ("cap", self.cap),
            ("sense_min_count", self.sense_min_count),
            ("k_max", self.k_max),
            ("train_size", self.train_size),
            ("test_size", self.test_size),
            ("in_iters", self.in_iters),
            ("csls_k", self.csls_k),
            ("metrics_r", self.metrics_r),
            ("metrics_m", self.metrics_m),
        ];
        for (k, v) in positive {
            if v == 0 {
                return Err(Error::InvalidArgument(format!("{k} must be positive")));
            }
        }
        if self.topk.is_empty() || self.topk.contains(&0) {
            return Err(Error::InvalidArgument("topk must list positive values".into()));
        }
        if !(self.knee_sensitivity > 0.0) || !(self.in_tol > 0.0) {
            return Err(Error::InvalidArgument("knee_sensitivity and in_tol must be positive".into()));
        }
        for (k, p) in [
            ("source_corpus", &self.source_corpus),
            ("target_corpus", &self.target_corpus),
            ("source_stream", &self.source_stream),
            ("target_stream", &self.target_stream),
            ("dictionary", &self.dictionary),
        ] {
            if p.as_os_str().is_empty() {
                return Err(Error::InvalidArgument(format!("{k} is not set")));
            }
        }
        Ok(())
    }

    pub fn aligner(&self) -> AlignerConfig {
        AlignerConfig {
            epochs: self.align_epochs,
            tension: self.align_tension,
            null_prob: self.align_null_prob,
            ..AlignerConfig::default()
        }
    }

    /// Every setting as `key → value`.
    pub fn snapshot(&self) -> BTreeMap<String, String> {
        let p = |p: &Path| p.display().to_string();
        let topk: Vec<String> = self.topk.iter().map(ToString::to_string).collect();
        [
            ("source_corpus", p(&self.source_corpus)),
            ("target_corpus", p(&self.target_corpus)),
            ("source_stream", p(&self.source_stream)),
            ("target_stream", p(&self.target_stream)),
            ("dictionary", p(&self.dictionary)),
            ("stopwords", self.stopwords.as_deref().map(p).unwrap_or_default()),
            ("output_dir", p(&self.output_dir)),
            ("max_len", self.max_len.to_string()),
            ("min_count", self.min_count.to_string()),
            ("cap", self.cap.to_string()),
            ("sense_min_count", self.sense_min_count.to_string()),
            ("k_max", self.k_max.to_string()),
            ("knee_sensitivity", self.knee_sensitivity.to_string()),
            ("align_epochs", self.align_epochs.to_string()),
            ("align_tension", self.align_tension.to_string()),
            ("align_null_prob", self.align_null_prob.to_string()),
            ("level", self.level.to_string()),
            ("method", self.method.to_string()),
            ("train_size", self.train_size.to_string()),
            ("restrict_training", self.restrict_training.to_string()),
            ("test_size", self.test_size.to_string()),
            ("normalize", self.normalize.to_string()),
            ("in_iters", self.in_iters.to_string()),
            ("in_tol", self.in_tol.to_string()),
            ("metric", self.metric.to_string()),
            ("csls_k", self.csls_k.to_string()),
            ("topk", topk.join(",")),
            ("metrics_r", self.metrics_r.to_string()),
            ("metrics_m", self.metrics_m.to_string()),
            ("seed", self.seed.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StageOutput {
    pub path: String,
    pub sha256: String,
    pub stale: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Ok,
    Skipped,
    Failed,
    NotRun,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageRecord {
    pub name: &'static str,
    pub status: StageStatus,
    pub seconds: f64,
    pub outputs: Vec<StageOutput>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub version: String,
    pub status: String,
    pub failed_stage: Option<&'static str>,
    pub error: Option<String>,
    pub config: BTreeMap<String, String>,
    pub inputs: Vec<FileDigest>,
    pub stages: Vec<StageRecord>,
}

impl RunManifest {
    /// `path → sha256` for every non-stale output.
    pub fn artifact_digests(&self) -> BTreeMap<String, String> {
        self.stages
            .iter()
            .flat_map(|s| &s.outputs)
            .filter(|o| !o.stale)
            .map(|o| (o.path.clone(), o.sha256.clone()))
            .collect()
    }

    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.name == name)
    }
}

pub fn sha256_file(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub const STAGES: [&str; 7] = ["align", "collect", "build", "normalize", "fit", "evaluate", "metrics"];

/// Output files of a stage, relative to the output directory.
pub fn stage_outputs(stage: &str, level: Level) -> Vec<&'static str> {
    match stage {
        "align" => vec!["alignments.txt"],
        "collect" => vec!["occurrences.src.bin", "occurrences.tgt.bin"],
        "build" => match level {
            Level::Type => vec!["x.emb", "y.emb", "queries.emb", "targets.emb"],
            Level::Sense => vec!["x.emb", "y.emb", "queries.emb", "targets.emb", "inventory.bin"],
        },
        "normalize" => vec![
            "x.in.emb",
            "y.in.emb",
            "queries.in.emb",
            "targets.in.emb",
            "normalization.json",
        ],
        "fit" => vec!["mapping.txt"],
        "evaluate" => vec!["eval.json"],
        "metrics" => vec!["metrics.json"],
        _ => Vec::new(),
    }
}

struct Run<'a> {
    cfg: &'a PipelineConfig,
    out: &'a Path,
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::InvalidArgument(format!("serialization failed: {e}")))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_lines(path: &Path) -> Result<HashSet<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.split_whitespace().map(str::to_string).collect())
}

impl Run<'_> {
    fn p(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    /// Matrices feeding `fit`, `evaluate` and `metrics`: the normalized copies
    /// when normalization is on.
    fn matrix(&self, name: &str) -> Result<EmbeddingMatrix> {
        let file = if self.cfg.normalize {
            format!("{name}.in.emb")
        } else {
            format!("{name}.emb")
        };
        read_embedding_text(self.p(&file))
    }

    fn align(&self) -> Result<()> {
        let c = self.cfg;
        let corpus = load_parallel_corpus(&c.source_corpus, &c.target_corpus, c.max_len)?;
        let alignments = align_corpus(&corpus, c.aligner())?;
        write_alignments(&alignments, self.p("alignments.txt"))
    }

    fn collect(&self) -> Result<()> {
        let c = self.cfg;
        let corpus = load_parallel_corpus(&c.source_corpus, &c.target_corpus, c.max_len)?;
        let alignments = read_alignments(self.p("alignments.txt"))?;
        check_bounds(&alignments, &corpus)?;
        let mut src = read_token_stream(&c.source_stream)?;
        let mut tgt = read_token_stream(&c.target_stream)?;
        match_corpus(&mut src, corpus.pairs.iter().map(|p| p.source.as_slice()), c.max_len)?;
        match_corpus(&mut tgt, corpus.pairs.iter().map(|p| p.target.as_slice()), c.max_len)?;
        let cc = CollectConfig {
            min_count: c.min_count,
            cap: c.cap,
            seed: c.seed,
        };
        let s = collect_occurrences(&src, &tgt, &alignments, Side::Source, cc)?;
        let t = collect_occurrences(&src, &tgt, &alignments, Side::Target, cc)?;
        write_occurrences(&s, self.p("occurrences.src.bin"))?;
        write_occurrences(&t, self.p("occurrences.tgt.bin"))
    }

    fn build(&self) -> Result<()> {
        let c = self.cfg;
        let src = read_occurrences(self.p("occurrences.src.bin"))?;
        let tgt = read_occurrences(self.p("occurrences.tgt.bin"))?;
        let types = build_type_level(&src)?;
        let targets = build_type_level(&tgt)?.x;
        let pairs = match c.level {
            Level::Type => types.clone(),
            Level::Sense => {
                let stop = match &c.stopwords {
                    Some(p) => read_lines(p)?,
                    None => HashSet::new(),
                };
                let sc = SenseConfig {
                    k_max: c.k_max,
                    sense_min_count: c.sense_min_count,
                    sensitivity: c.knee_sensitivity,
                    seed: rng::mix(c.seed ^ 1),
                };
                let inv = build_inventory(&src, &sc, &stop)?;
                write_inventory(&inv, self.p("inventory.bin"))?;
                build_sense_level(&inv)?
            }
        };
        write_embedding_text(&pairs.x, self.p("x.emb"))?;
        write_embedding_text(&pairs.y, self.p("y.emb"))?;
        write_embedding_text(&types.x, self.p("queries.emb"))?;
        write_embedding_text(&targets, self.p("targets.emb"))
    }

    fn normalize(&self) -> Result<()> {
        let c = self.cfg;
        let mut reports = BTreeMap::new();
        for name in ["x", "y", "queries", "targets"] {
            let m = read_embedding_text(self.p(&format!("{name}.emb")))?;
            let (n, report) = iterative_normalize(&m, c.in_iters, c.in_tol)?;
            write_embedding_text(&n, self.p(&format!("{name}.in.emb")))?;
            reports.insert(name, report);
        }
        write_json(&reports, &self.p("normalization.json"))
    }

    fn training_types(&self, queries: &EmbeddingMatrix, dict: &BilingualDictionary) -> Vec<String> {
        let d = self.cfg.restrict_training.then_some(dict);
        training_keys(queries.words(), self.cfg.train_size, d)
            .into_iter()
            .map(str::to_string)
            .collect()
    }

    fn fit(&self) -> Result<()> {
        let c = self.cfg;
        let dict = load_dictionary(&c.dictionary)?;
        let x = self.matrix("x")?;
        let y = self.matrix("y")?;
        let queries = read_embedding_text(self.p("queries.emb"))?;
        let types = self.training_types(&queries, &dict);
        let types: Vec<&str> = types.iter().map(String::as_str).collect();
        let rows = rows_for_types(&x, &types, c.level == Level::Sense);
        let w = fit(c.method, &x.select(&rows), &y.select(&rows))?.with_level(c.level.to_string(), rows.len());
        write_mapping(&w, self.p("mapping.txt"))
    }

    fn evaluate(&self) -> Result<()> {
        let c = self.cfg;
        let dict = load_dictionary(&c.dictionary)?;
        let mapping = read_mapping(self.p("mapping.txt"))?;
        let queries = self.matrix("queries")?;
        let targets = self.matrix("targets")?;
        let test: Vec<usize> = (c.train_size..queries.len().min(c.train_size + c.test_size))
            .filter(|&i| dict.contains_source(&queries.words()[i]))
            .collect();
        if test.is_empty() {
            return Err(Error::Empty(format!(
                "no dictionary source among frequency ranks {}..{} ({} source types)",
                c.train_size,
                c.train_size + c.test_size,
                queries.len()
            )));
        }
        let report = evaluate_bdi(&mapping, &queries.select(&test), &targets, &dict, c.metric, c.csls_k, &c.topk)?;
        write_json(&report, &self.p("eval.json"))
    }

    fn metrics(&self) -> Result<()> {
        let c = self.cfg;
        let x = self.matrix("x")?;
        let y = self.matrix("y")?;
        let n = x.len();
        let report = geometry_report(&x, &y, c.metrics_r.min(n), c.metrics_m.min(n), c.seed, true)?;
        write_json(&report, &self.p("metrics.json"))
    }

    fn stage(&self, name: &str) -> Result<()> {
        match name {
            "align" => self.align(),
            "collect" => self.collect(),
            "build" => self.build(),
            "normalize" => self.normalize(),
            "fit" => self.fit(),
            "evaluate" => self.evaluate(),
            "metrics" => self.metrics(),
            _ => unreachable!(),
        }
    }
}

fn input_digests(cfg: &PipelineConfig) -> Result<Vec<FileDigest>> {
    let mut paths = vec![
        &cfg.source_corpus,
        &cfg.target_corpus,
        &cfg.source_stream,
        &cfg.target_stream,
        &cfg.dictionary,
    ];
    if let Some(s) = &cfg.stopwords {
        paths.push(s);
    }
    paths
        .into_iter()
        .map(|p| {
            Ok(FileDigest {
                path: p.display().to_string(),
                sha256: sha256_file(p)?,
            })
        })
        .collect()
}

fn outputs_of(out: &Path, stage: &str, level: Level, stale: bool) -> Result<Vec<StageOutput>> {
    stage_outputs(stage, level)
        .into_iter()
        .filter(|f| !stale || out.join(f).exists())
        .map(|f| {
            Ok(StageOutput {
                path: f.to_string(),
                sha256: sha256_file(out.join(f))?,
                stale,
            })
        })
        .collect()
}

fn tag(stage: &'static str) -> impl Fn(Error) -> Error {
    move |e| Error::Stage {
        stage,
        cause: Box::new(e),
    }
}

/// Runs every stage and writes `manifest.json` into the output directory.
///
/// On failure the manifest is still written (status `failed`) and the error
/// is returned tagged with the stage name.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunManifest> {
    cfg.validate().map_err(tag("config"))?;
    let out = cfg.output_dir.as_path();
    fs::create_dir_all(out).map_err(|e| tag("config")(Error::io(out, e)))?;
    let inputs = input_digests(cfg).map_err(tag("config"))?;
    let run = Run { cfg, out };
    let mut manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        status: "ok".into(),
        failed_stage: None,
        error: None,
        config: cfg.snapshot(),
        inputs,
        stages: Vec::new(),
    };

    let mut failure = None;
    for &name in &STAGES {
        if failure.is_some() {
            manifest.stages.push(StageRecord {
                name,
                status: StageStatus::NotRun,
                seconds: 0.0,
                outputs: outputs_of(out, name, cfg.level, true).unwrap_or_default(),
            });
            continue;
        }
        if name == "normalize" && !cfg.normalize {
            manifest.stages.push(StageRecord {
                name,
                status: StageStatus::Skipped,
                seconds: 0.0,
                outputs: Vec::new(),
            });
            continue;
        }
        let start = Instant::now();
        let result = run.stage(name).and_then(|_| outputs_of(out, name, cfg.level, false));
        let seconds = start.elapsed().as_secs_f64();
        match result {
            Ok(outputs) => manifest.stages.push(StageRecord {
                name,
                status: StageStatus::Ok,
                seconds,
                outputs,
            }),
            Err(e) => {
                manifest.stages.push(StageRecord {
                    name,
                    status: StageStatus::Failed,
                    seconds,
                    outputs: outputs_of(out, name, cfg.level, true).unwrap_or_default(),
                });
                manifest.status = "failed".into();
                manifest.failed_stage = Some(name);
                manifest.error = Some(e.to_string());
                failure = Some((name, e));
            }
        }
    }

    write_json(&manifest, &out.join("manifest.json")).map_err(tag("manifest"))?;
    match failure {
        Some((stage, e)) => Err(tag(stage)(e)),
        None => Ok(manifest),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_config() {
        let text = "# run\nsource_corpus = a.txt\nlevel = sense  # inline\ntopk = 1, 10\nnormalize = on\n";
        let c = PipelineConfig::parse(text, Path::new("/base"), Path::new("run.cfg")).unwrap();
        assert_eq!(c.source_corpus, PathBuf::from("/base/a.txt"));
        assert_eq!(c.level, Level::Sense);
        assert_eq!(c.topk, vec![1, 10]);
        assert!(c.normalize);
        assert_eq!(c.train_size, 5000);
    }

    #[test]
    fn config_errors_carry_line_numbers() {
        let e = PipelineConfig::parse("seed = 1\nlevel = word\n", Path::new(""), Path::new("c")).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }));
        let e = PipelineConfig::parse("nonsense\n", Path::new(""), Path::new("c")).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 1, .. }));
        assert!(PipelineConfig::parse("colour = red\n", Path::new(""), Path::new("c")).is_err());
    }

    #[test]
    fn zero_thresholds_are_rejected() {
        let mut c = PipelineConfig {
            source_corpus: "a".into(),
            target_corpus: "b".into(),
            source_stream: "c".into(),
            target_stream: "d".into(),
            dictionary: "e".into(),
            ..Default::default()
        };
        c.validate().unwrap();
        c.min_count = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn snapshot_round_trips() {
        let c = PipelineConfig {
            seed: 9,
            level: Level::Sense,
            ..Default::default()
        };
        let mut back = PipelineConfig::default();
        for (k, v) in c.snapshot() {
            back.set(&k, &v, Path::new("")).unwrap();
        }
        assert_eq!(back, c);
    }
}
