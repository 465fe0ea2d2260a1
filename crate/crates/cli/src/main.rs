use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use ctxalign::align::{align_corpus, write_alignments, AlignerConfig};
use ctxalign::corpus::{load_dictionary, load_parallel_corpus, DEFAULT_MAX_LEN};
use ctxalign::embedding::{read_embedding_text, write_embedding_text, EmbeddingMatrix};
use ctxalign::geometry::{geometry_report, DEFAULT_RS_PAIRS, DEFAULT_SAMPLE};
use ctxalign::mapping::{fit, read_mapping, write_mapping, Method};
use ctxalign::normalize::{iterative_normalize, DEFAULT_ITERS, DEFAULT_TOL};
use ctxalign::pipeline::{run_pipeline, PipelineConfig};
use ctxalign::represent::{
    build_inventory, build_sense_level, build_type_level, collect_occurrences, read_occurrences,
    write_inventory, write_occurrences, CollectConfig, Level, SenseConfig, Side, DEFAULT_CAP,
    DEFAULT_K_MAX, DEFAULT_MIN_COUNT, DEFAULT_SENSE_MIN_COUNT, DEFAULT_SENSITIVITY,
};
use ctxalign::retrieval::{evaluate_bdi, Metric, DEFAULT_CSLS_K};
use ctxalign::stream::{match_corpus, read_token_stream};

#[derive(Parser)]
#[command(name = "ctxalign", version, about = "Align contextual embedding spaces from parallel text")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Word-align a parallel corpus (symmetrized, one-to-one, Pharaoh output)
    Align(AlignArgs),
    /// Collect aligned occurrence vectors per type
    ExtractPairs(ExtractArgs),
    /// Build type- or sense-level aligned matrices from occurrences
    Build(BuildArgs),
    /// Iteratively normalize an embedding file
    Normalize(NormalizeArgs),
    /// Fit a linear map between row-aligned matrices
    Map(MapArgs),
    /// Score dictionary induction with a fitted map
    Evaluate(EvaluateArgs),
    /// Isotropy, isometry and relational similarity of two spaces
    Metrics(MetricsArgs),
    /// Run every stage from a config file
    Run(RunArgs),
}

#[derive(Args)]
struct CorpusArgs {
    /// Source side, one tokenized sentence per line
    #[arg(long)]
    src: PathBuf,
    /// Target side, line-aligned with --src
    #[arg(long)]
    tgt: PathBuf,
    #[arg(long, default_value_t = DEFAULT_MAX_LEN)]
    max_len: usize,
}

#[derive(Args)]
struct AlignArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 5)]
    epochs: usize,
    /// Diagonal tension
    #[arg(long, default_value_t = 4.0)]
    tension: f64,
    #[arg(long, default_value_t = 0.08)]
    null_prob: f64,
}

#[derive(Args)]
struct ExtractArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long)]
    src_stream: PathBuf,
    #[arg(long)]
    tgt_stream: PathBuf,
    #[arg(long)]
    alignments: PathBuf,
    /// Which side's types to collect (source|target)
    #[arg(long, default_value = "source", value_parser = ["source", "target"])]
    side: String,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = DEFAULT_MIN_COUNT)]
    min_count: usize,
    #[arg(long, default_value_t = DEFAULT_CAP)]
    cap: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct BuildArgs {
    /// Occurrence file written by extract-pairs
    #[arg(long)]
    occurrences: PathBuf,
    #[arg(long, default_value = "type")]
    level: String,
    #[arg(long)]
    out_x: PathBuf,
    #[arg(long)]
    out_y: PathBuf,
    /// Sense inventory sidecar (sense level only)
    #[arg(long)]
    inventory: Option<PathBuf>,
    /// Whitespace-separated stopword list; stopwords keep one sense
    #[arg(long)]
    stopwords: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_K_MAX)]
    k_max: usize,
    #[arg(long, default_value_t = DEFAULT_SENSE_MIN_COUNT)]
    sense_min_count: usize,
    #[arg(long, default_value_t = DEFAULT_SENSITIVITY)]
    sensitivity: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct NormalizeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = DEFAULT_ITERS)]
    iters: usize,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
}

#[derive(Args)]
struct MapArgs {
    #[arg(long)]
    src: PathBuf,
    #[arg(long)]
    tgt: PathBuf,
    #[arg(long, default_value = "procrustes")]
    method: String,
    #[arg(long)]
    output: PathBuf,
    /// Train on the first N paired rows only
    #[arg(long)]
    train_size: Option<usize>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    mapping: PathBuf,
    /// Source queries
    #[arg(long)]
    src: PathBuf,
    /// Target vocabulary
    #[arg(long)]
    tgt: PathBuf,
    #[arg(long)]
    dict: PathBuf,
    #[arg(long, default_value = "nn")]
    metric: String,
    #[arg(long, default_value_t = DEFAULT_CSLS_K)]
    csls_k: usize,
    #[arg(long, default_value = "1,5", value_delimiter = ',')]
    topk: Vec<usize>,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long)]
    src: PathBuf,
    #[arg(long)]
    tgt: PathBuf,
    /// Rows are already paired by position; otherwise rows are paired by
    /// shared keys in source order
    #[arg(long)]
    pairs_aligned: bool,
    #[arg(long, default_value_t = DEFAULT_SAMPLE)]
    r: usize,
    #[arg(long, default_value_t = DEFAULT_RS_PAIRS)]
    m: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Draw separate samples for each diagnostic
    #[arg(long)]
    independent_samples: bool,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Override a config key, e.g. --set level=sense (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    level: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Turn iterative normalization on
    #[arg(long)]
    normalize: bool,
}

fn align(a: AlignArgs) -> Result<()> {
    let corpus = load_parallel_corpus(&a.corpus.src, &a.corpus.tgt, a.corpus.max_len)?;
    let cfg = AlignerConfig {
        epochs: a.epochs,
        tension: a.tension,
        null_prob: a.null_prob,
        ..AlignerConfig::default()
    };
    let alignments = align_corpus(&corpus, cfg)?;
    write_alignments(&alignments, &a.output)?;
    let links: usize = alignments.iter().map(|s| s.links.len()).sum();
    println!("sentences={} links={links}", alignments.len());
    Ok(())
}

fn extract_pairs(a: ExtractArgs) -> Result<()> {
    let corpus = load_parallel_corpus(&a.corpus.src, &a.corpus.tgt, a.corpus.max_len)?;
    let alignments = ctxalign::align::read_alignments(&a.alignments)?;
    ctxalign::align::check_bounds(&alignments, &corpus)?;
    let mut src = read_token_stream(&a.src_stream)?;
    let mut tgt = read_token_stream(&a.tgt_stream)?;
    match_corpus(&mut src, corpus.pairs.iter().map(|p| p.source.as_slice()), a.corpus.max_len)
        .context("source stream does not match the corpus")?;
    match_corpus(&mut tgt, corpus.pairs.iter().map(|p| p.target.as_slice()), a.corpus.max_len)
        .context("target stream does not match the corpus")?;
    let side = if a.side == "target" { Side::Target } else { Side::Source };
    let cfg = CollectConfig {
        min_count: a.min_count,
        cap: a.cap,
        seed: a.seed,
    };
    let collections = collect_occurrences(&src, &tgt, &alignments, side, cfg)?;
    write_occurrences(&collections, &a.output)?;
    println!("types={}", collections.len());
    Ok(())
}

fn build(a: BuildArgs) -> Result<()> {
    let level: Level = a.level.parse()?;
    let collections = read_occurrences(&a.occurrences)?;
    let pairs = match level {
        Level::Type => build_type_level(&collections)?,
        Level::Sense => {
            let stop: HashSet<String> = match &a.stopwords {
                Some(p) => std::fs::read_to_string(p)
                    .with_context(|| format!("reading {}", p.display()))?
                    .split_whitespace()
                    .map(str::to_string)
                    .collect(),
                None => HashSet::new(),
            };
            let cfg = SenseConfig {
                k_max: a.k_max,
                sense_min_count: a.sense_min_count,
                sensitivity: a.sensitivity,
                seed: a.seed,
            };
            let inv = build_inventory(&collections, &cfg, &stop)?;
            if let Some(p) = &a.inventory {
                write_inventory(&inv, p)?;
            }
            build_sense_level(&inv)?
        }
    };
    write_embedding_text(&pairs.x, &a.out_x)?;
    write_embedding_text(&pairs.y, &a.out_y)?;
    println!("level={level} rows={}", pairs.x.len());
    Ok(())
}

fn normalize(a: NormalizeArgs) -> Result<()> {
    let m = read_embedding_text(&a.input)?;
    let (out, report) = iterative_normalize(&m, a.iters, a.tol)?;
    write_embedding_text(&out, &a.output)?;
    print!("{}", report.to_kv());
    Ok(())
}

/// Rows of `y` reordered to follow `x`'s keys; keys missing from either side
/// are dropped.
fn pair_by_key(x: &EmbeddingMatrix, y: &EmbeddingMatrix) -> (EmbeddingMatrix, EmbeddingMatrix) {
    let (xi, yi): (Vec<usize>, Vec<usize>) = x
        .words()
        .iter()
        .enumerate()
        .filter_map(|(i, w)| y.index_of(w).map(|j| (i, j)))
        .unzip();
    (x.select(&xi), y.select(&yi))
}

fn map(a: MapArgs) -> Result<()> {
    let method: Method = a.method.parse()?;
    let x = read_embedding_text(&a.src)?;
    let y = read_embedding_text(&a.tgt)?;
    let (mut x, mut y) = pair_by_key(&x, &y);
    if let Some(n) = a.train_size {
        x = x.prefix(n.min(x.len()));
        y = y.prefix(n.min(y.len()));
    }
    let w = fit(method, &x, &y)?.with_level("", x.len());
    write_mapping(&w, &a.output)?;
    println!(
        "method={method} pairs={} orthogonality_error={:e}",
        x.len(),
        w.orthogonality_error()
    );
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let metric: Metric = a.metric.parse()?;
    let mapping = read_mapping(&a.mapping)?;
    let queries = read_embedding_text(&a.src)?;
    let targets = read_embedding_text(&a.tgt)?;
    let dict = load_dictionary(&a.dict)?;
    let report = evaluate_bdi(&mapping, &queries, &targets, &dict, metric, a.csls_k, &a.topk)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    print!("{}", report.table());
    Ok(())
}

fn metrics(a: MetricsArgs) -> Result<()> {
    let x = read_embedding_text(&a.src)?;
    let y = read_embedding_text(&a.tgt)?;
    let (x, y) = if a.pairs_aligned {
        (x, y)
    } else {
        pair_by_key(&x, &y)
    };
    let report = geometry_report(&x, &y, a.r, a.m, a.seed, !a.independent_samples)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    print!("{}", report.table());
    Ok(())
}

fn run(a: RunArgs) -> Result<()> {
    let mut cfg = PipelineConfig::load(&a.config)?;
    let cwd = Path::new("");
    for kv in &a.overrides {
        let Some((k, v)) = kv.split_once('=') else {
            bail!("--set expects KEY=VALUE, got {kv:?}");
        };
        cfg.set(k.trim(), v.trim(), cwd)?;
    }
    if let Some(d) = a.output_dir {
        cfg.output_dir = d;
    }
    if let Some(l) = a.level {
        cfg.level = l.parse()?;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if a.normalize {
        cfg.normalize = true;
    }
    let manifest = run_pipeline(&cfg)?;
    for s in &manifest.stages {
        println!("{:<10} {:?} {:.3}s", s.name, s.status, s.seconds);
    }
    println!("manifest: {}", cfg.output_dir.join("manifest.json").display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, result) = match cli.command {
        Command::Align(a) => ("align", align(a)),
        Command::ExtractPairs(a) => ("extract-pairs", extract_pairs(a)),
        Command::Build(a) => ("build", build(a)),
        Command::Normalize(a) => ("normalize", normalize(a)),
        Command::Map(a) => ("map", map(a)),
        Command::Evaluate(a) => ("evaluate", evaluate(a)),
        Command::Metrics(a) => ("metrics", metrics(a)),
        Command::Run(a) => ("run", run(a)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error [{name}]: {e:#}");
            ExitCode::FAILURE
        }
    }
}
