//! Command-line front end.
//!
//! Exit status is 0 on success, 1 for data or validation failures and 2 for
//! I/O or configuration failures.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bucketing::{build_buckets, write_bucket_manifest};
use crate::corpus::{
    parse_records, parse_records_unchecked, split_folds, validate_record, write_records_with_folds,
    Record, TaskMode,
};
use crate::diagnostics::{
    frequency_prior_probe, lambda_sweep, word_prior_probe, write_sweep_csv, write_sweep_report,
};
use crate::error::{Error, Result};
use crate::matcher::{default_lambda, read_mcq, write_mcq, MatchConfig};
use crate::pipeline::run_match;
use crate::scoring::{
    read_matrix, relevance_matrix, similarity_matrix, write_matrix_binary, write_matrix_tsv,
    ScorerPair, ScorerSpec,
};

#[derive(Debug, Parser)]
#[command(name = "advmatch", version, about = "Build multiple-choice datasets by adversarial matching")]
pub struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
    /// Matching rounds (distractors per item).
    #[arg(long, global = true)]
    pub rounds: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub mode: Option<TaskMode>,
    /// Worker threads; output does not depend on it.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Precomputed relevance matrix (binary or TSV).
    #[arg(long, global = true)]
    pub rel_matrix: Option<PathBuf>,
    /// Precomputed similarity or entailment matrix (binary or TSV).
    #[arg(long, global = true)]
    pub sim_matrix: Option<PathBuf>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check every record and report violations.
    Validate { input: PathBuf },
    /// Assign source keys to folds; writes records with a `fold` field.
    Split { input: PathBuf },
    /// Write the bucket manifest for every fold.
    Buckets { input: PathBuf },
    /// Score the whole corpus; writes `<out>.rel.<ext>` and `<out>.sim.<ext>`.
    Score {
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = MatrixFormat::Bin)]
        format: MatrixFormat,
    },
    /// Build the multiple-choice file and its manifest.
    Match { input: PathBuf },
    /// Machine accuracy across a lambda grid; writes a JSON-lines report and `<out>.csv`.
    Sweep {
        input: PathBuf,
        /// Comma-separated lambdas; defaults to the mode's lambda.
        #[arg(long)]
        grid: Option<String>,
        /// Sweep one fold of the split instead of the whole corpus.
        #[arg(long)]
        fold: Option<usize>,
    },
    /// Answer-only baseline accuracy on matched items.
    Probe {
        #[arg(long)]
        train: PathBuf,
        /// Defaults to the training file.
        #[arg(long)]
        eval: Option<PathBuf>,
        /// Use per-word gold rates instead of whole-response rates.
        #[arg(long)]
        words: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MatrixFormat {
    Bin,
    Tsv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerName {
    Overlap,
    EmbeddingCosine,
}

/// Contents of the `--config` file. Every key is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub mode: Option<TaskMode>,
    pub lambda: Option<f64>,
    pub rounds: Option<usize>,
    pub epsilon: Option<f64>,
    pub p_reuse: Option<f64>,
    pub n_folds: Option<usize>,
    pub target_size: Option<usize>,
    pub jobs: Option<usize>,
    pub relevance: Option<ScorerName>,
    pub similarity: Option<ScorerName>,
    pub rel_matrix: Option<PathBuf>,
    pub sim_matrix: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// Configuration after merging file and flags.
#[derive(Debug, Clone)]
pub struct Settings {
    pub seed: Option<u64>,
    pub mode: TaskMode,
    pub lambda: Option<f64>,
    pub rounds: Option<usize>,
    pub file: FileConfig,
    pub jobs: Option<usize>,
    pub rel_matrix: Option<PathBuf>,
    pub sim_matrix: Option<PathBuf>,
}

impl Settings {
    pub fn resolve(cli: &Cli) -> Result<Self> {
        let file = match &cli.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };
        Ok(Settings {
            seed: cli.seed.or(file.seed),
            mode: cli.mode.or(file.mode).unwrap_or(TaskMode::Qa),
            lambda: cli.lambda.or(file.lambda),
            rounds: cli.rounds.or(file.rounds),
            jobs: cli.jobs.or(file.jobs),
            rel_matrix: cli.rel_matrix.clone().or_else(|| file.rel_matrix.clone()),
            sim_matrix: cli.sim_matrix.clone().or_else(|| file.sim_matrix.clone()),
            file,
        })
    }

    /// The matching configuration. A seed is required.
    pub fn match_config(&self) -> Result<MatchConfig> {
        let seed = self
            .seed
            .ok_or_else(|| Error::Config("a seed is required (config `seed` or --seed)".into()))?;
        let mut c = MatchConfig::new(self.mode, seed);
        c.lambda = self.lambda.unwrap_or(default_lambda(self.mode));
        if let Some(r) = self.rounds {
            c.rounds = r;
        }
        if let Some(e) = self.file.epsilon {
            c.epsilon = e;
        }
        if let Some(p) = self.file.p_reuse {
            c.p_reuse = p;
        }
        if let Some(n) = self.file.n_folds {
            c.n_folds = n;
        }
        if let Some(t) = self.file.target_size {
            c.target_size = t;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn scorers(&self, epsilon: f64) -> Result<ScorerPair> {
        let builtin = |name: Option<ScorerName>| match name.unwrap_or(ScorerName::Overlap) {
            ScorerName::Overlap => ScorerSpec::overlap(epsilon),
            ScorerName::EmbeddingCosine => ScorerSpec::embedding_cosine(epsilon),
        };
        let load = |path: &Path| -> Result<ScorerSpec> {
            Ok(ScorerSpec::external(read_matrix(BufReader::new(File::open(path)?))?, epsilon))
        };
        Ok(ScorerPair {
            relevance: match &self.rel_matrix {
                Some(p) => load(p)?,
                None => builtin(self.file.relevance),
            },
            similarity: match &self.sim_matrix {
                Some(p) => load(p)?,
                None => builtin(self.file.similarity),
            },
        })
    }

    fn scorer_labels(&self) -> BTreeMap<String, String> {
        let label = |path: &Option<PathBuf>, name: Option<ScorerName>| match path {
            Some(p) => format!("matrix:{}", p.display()),
            None => match name.unwrap_or(ScorerName::Overlap) {
                ScorerName::Overlap => "overlap".to_string(),
                ScorerName::EmbeddingCosine => "embedding_cosine".to_string(),
            },
        };
        BTreeMap::from([
            ("relevance".to_string(), label(&self.rel_matrix, self.file.relevance)),
            ("similarity".to_string(), label(&self.sim_matrix, self.file.similarity)),
        ])
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(j) = self.jobs {
            if j == 0 {
                return Err(Error::Config("--jobs must be at least 1".into()));
            }
            builder = builder.num_threads(j);
        }
        builder
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))
    }
}

/// Written beside the `match` output as `<out>.manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineManifest {
    pub version: String,
    pub config: MatchConfig,
    pub scorers: BTreeMap<String, String>,
    /// sha256 of every input file, keyed by path.
    pub inputs: BTreeMap<String, String>,
    /// sha256 of each stage's output.
    pub outputs: BTreeMap<String, String>,
    /// Wall-clock seconds per stage.
    pub timings: BTreeMap<String, f64>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Exit status for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io(_) | Error::Config(_) => 2,
        Error::Stage { source, .. } | Error::AtLambda { source, .. } => exit_code(source),
        _ => 1,
    }
}

fn read_corpus(path: &Path) -> Result<(Vec<Record>, Vec<u8>)> {
    let bytes = std::fs::read(path)?;
    let records = parse_records(&bytes[..])?;
    Ok((records, bytes))
}

fn require_out(out: &Option<PathBuf>) -> Result<&Path> {
    out.as_deref()
        .ok_or_else(|| Error::Config("--out is required for this command".into()))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Buffered writer on `--out`, or stdout when absent.
fn output(out: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

pub fn cmd_validate(input: &Path) -> Result<i32> {
    let file = BufReader::new(File::open(input)?);
    let sourced = parse_records_unchecked(file)?;
    let mut failures = 0;
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    for s in &sourced {
        let report = validate_record(&s.record);
        if !report.is_ok() {
            failures += 1;
            eprintln!("line {}: record {:?}: {report}", s.line, s.record.id);
        }
        if let Some(first) = seen.insert(&s.record.id, s.line) {
            failures += 1;
            eprintln!(
                "line {}: record {:?}: duplicate id (first on line {first})",
                s.line, s.record.id
            );
        }
    }
    if failures == 0 {
        println!("ok: {} records", sourced.len());
        Ok(0)
    } else {
        println!("{failures} problem(s) in {} records", sourced.len());
        Ok(1)
    }
}

pub fn cmd_split(input: &Path, settings: &Settings, out: &Option<PathBuf>) -> Result<()> {
    let config = settings.match_config()?;
    let (records, _) = read_corpus(input)?;
    let plan = split_folds(&records, config.n_folds, config.seed)?;
    let mut w = output(out)?;
    write_records_with_folds(&mut w, &records, &plan)?;
    w.flush()?;
    Ok(())
}

pub fn cmd_buckets(input: &Path, settings: &Settings, out: &Option<PathBuf>) -> Result<()> {
    let config = settings.match_config()?;
    let (records, _) = read_corpus(input)?;
    let plan = split_folds(&records, config.n_folds, config.seed)?;
    let mut w = output(out)?;
    for (f, members) in plan.partition(&records).iter().enumerate() {
        let buckets = build_buckets(
            members,
            f,
            config.mode,
            config.target_size,
            config.rounds,
            config.seed,
        )?;
        write_bucket_manifest(&mut w, &buckets)?;
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_score(input: &Path, settings: &Settings, out: &Path, format: MatrixFormat) -> Result<()> {
    let config = settings.match_config()?;
    let scorers = settings.scorers(config.epsilon)?;
    let (records, _) = read_corpus(input)?;
    let all: Vec<&Record> = records.iter().collect();
    let (rel, sim) = settings.pool()?.install(|| -> Result<_> {
        Ok((
            relevance_matrix(&all, &scorers.relevance, &config.remap_policy())?,
            similarity_matrix(&all, &scorers.similarity)?,
        ))
    })?;
    let ext = match format {
        MatrixFormat::Bin => "bin",
        MatrixFormat::Tsv => "tsv",
    };
    for (name, m) in [("rel", &rel), ("sim", &sim)] {
        let mut w = BufWriter::new(File::create(with_suffix(out, &format!(".{name}.{ext}")))?);
        match format {
            MatrixFormat::Bin => write_matrix_binary(&mut w, m)?,
            MatrixFormat::Tsv => write_matrix_tsv(&mut w, m)?,
        }
        w.flush()?;
    }
    Ok(())
}

pub fn cmd_match(input: &Path, settings: &Settings, out: &Path) -> Result<PipelineManifest> {
    let mut timings = BTreeMap::new();
    let mut inputs = BTreeMap::new();
    let mut outputs = BTreeMap::new();

    let started = Instant::now();
    let config = settings.match_config()?;
    let scorers = settings.scorers(config.epsilon)?;
    let (records, bytes) = read_corpus(input)?;
    inputs.insert(input.display().to_string(), sha256_hex(&bytes));
    for p in [&settings.rel_matrix, &settings.sim_matrix].into_iter().flatten() {
        inputs.insert(p.display().to_string(), sha256_hex(&std::fs::read(p)?));
    }
    timings.insert("load".to_string(), started.elapsed().as_secs_f64());

    let started = Instant::now();
    let result = settings.pool()?.install(|| run_match(&records, &config, &scorers))?;
    timings.insert("match".to_string(), started.elapsed().as_secs_f64());
    outputs.insert(
        "folds".to_string(),
        sha256_hex(&serde_json::to_vec(&result.plan.assignment)?),
    );

    let started = Instant::now();
    let mut buf = Vec::new();
    write_mcq(&mut buf, &result.items)?;
    std::fs::write(out, &buf)?;
    outputs.insert("items".to_string(), sha256_hex(&buf));
    timings.insert("write".to_string(), started.elapsed().as_secs_f64());

    let manifest = PipelineManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config,
        scorers: settings.scorer_labels(),
        inputs,
        outputs,
        timings,
    };
    let mut w = BufWriter::new(File::create(with_suffix(out, ".manifest.json"))?);
    serde_json::to_writer_pretty(&mut w, &manifest)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(manifest)
}

pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("bad lambda {s:?} in grid: {e}")))
        })
        .collect()
}

pub fn cmd_sweep(
    input: &Path,
    settings: &Settings,
    grid: Option<&str>,
    fold: Option<usize>,
    out: &Option<PathBuf>,
) -> Result<()> {
    let config = settings.match_config()?;
    let scorers = settings.scorers(config.epsilon)?;
    let grid = match grid {
        Some(g) => parse_grid(g)?,
        None => vec![config.lambda],
    };
    let (records, _) = read_corpus(input)?;
    let members: Vec<&Record> = match fold {
        None => records.iter().collect(),
        Some(f) => {
            let plan = split_folds(&records, config.n_folds, config.seed)?;
            if f >= plan.n_folds {
                return Err(Error::Config(format!("fold {f} out of range 0..{}", plan.n_folds)));
            }
            plan.partition(&records).swap_remove(f)
        }
    };
    let rows = settings
        .pool()?
        .install(|| lambda_sweep(&members, &grid, &config, &scorers))?;
    let mut w = output(out)?;
    write_sweep_report(&mut w, &rows)?;
    w.flush()?;
    if let Some(p) = out {
        let mut csv = BufWriter::new(File::create(with_suffix(p, ".csv"))?);
        write_sweep_csv(&mut csv, &rows)?;
        csv.flush()?;
    }
    Ok(())
}

pub fn cmd_probe(train: &Path, eval: Option<&Path>, words: bool) -> Result<f64> {
    let train_items = read_mcq(BufReader::new(File::open(train)?))?;
    let eval_items = match eval {
        Some(p) => read_mcq(BufReader::new(File::open(p)?))?,
        None => train_items.clone(),
    };
    if words {
        word_prior_probe(&train_items, &eval_items)
    } else {
        frequency_prior_probe(&train_items, &eval_items)
    }
}

fn dispatch(cli: &Cli) -> Result<i32> {
    let settings = Settings::resolve(cli)?;
    match &cli.command {
        Command::Validate { input } => return cmd_validate(input),
        Command::Split { input } => cmd_split(input, &settings, &cli.out)?,
        Command::Buckets { input } => cmd_buckets(input, &settings, &cli.out)?,
        Command::Score { input, format } => {
            cmd_score(input, &settings, require_out(&cli.out)?, *format)?
        }
        Command::Match { input } => {
            let out = require_out(&cli.out)?;
            let manifest = cmd_match(input, &settings, out)?;
            eprintln!(
                "wrote {} (sha256 {})",
                out.display(),
                manifest.outputs.get("items").map_or("", String::as_str)
            );
        }
        Command::Sweep { input, grid, fold } => {
            cmd_sweep(input, &settings, grid.as_deref(), *fold, &cli.out)?
        }
        Command::Probe { train, eval, words } => {
            let acc = cmd_probe(train, eval.as_deref(), *words)?;
            println!("{acc}");
        }
    }
    Ok(0)
}

/// Run a parsed command line, print any error, and return the exit status.
pub fn run(cli: &Cli) -> i32 {
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
