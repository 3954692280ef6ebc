//! `seqcert` command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or contract error. Reports go
//! to files; stdout carries only single answers (AUROC, validation summary) and
//! logs go to stderr.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use seqcert_core::data_io::{self, ReportBundle, RunManifest};
use seqcert_core::eval::{self, Metric, Referral, ScoredSentence};
use seqcert_core::simulator::{self, SimConfig};
use seqcert_core::uncertainty::{score_sample_set, Measure, SampleSet};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "seqcert", version, about = "Sequence-level uncertainty for translation outputs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Score every record of a sample file with one measure.
    Score(ScoreArgs),
    /// Performance-retention curves for one or more measures.
    Retention(RetentionArgs),
    /// Joint histogram of uncertainty over labelled populations.
    Histogram(HistogramArgs),
    /// Mean display uncertainty per output-length bin.
    Bins(BinsArgs),
    /// AUROC separating an OOD sample file from an in-distribution one.
    Separation(SeparationArgs),
    /// Write a synthetic sample file.
    Simulate(SimulateArgs),
    /// Check a sample file against the JSONL contract.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
struct ScoreArgs {
    /// Uncertainty measure: bs, sp or bleuvar.
    #[arg(long)]
    measure: Measure,
    /// JSONL sample file.
    #[arg(long)]
    samples: PathBuf,
    /// Output directory for scores.csv, density.csv and manifest.json.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct RetentionArgs {
    /// Measures to compare, comma separated (bs, sp, bleuvar).
    #[arg(long, value_delimiter = ',', required = true)]
    measure: Vec<Measure>,
    /// Retained-set metric: corpus (pooled BLEU) or mean (mean sentence BLEU).
    #[arg(long, default_value = "corpus")]
    metric: Metric,
    /// JSONL sample file with references.
    #[arg(long)]
    samples: PathBuf,
    /// Retained fractions in (0, 1], comma separated [default: 0.05, 0.10, ..., 1.00].
    #[arg(long, value_delimiter = ',')]
    fractions: Vec<f64>,
    /// Also emit sentence-length and seeded random referral curves.
    #[arg(long)]
    baselines: bool,
    /// Seed for the random referral baseline.
    #[arg(long, env = "SEQCERT_SEED", default_value_t = 0)]
    seed: u64,
    /// Output directory for retention.csv and manifest.json.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct HistogramArgs {
    /// Labelled sample files, e.g. in=de.jsonl,ood=nl.jsonl.
    #[arg(long, value_delimiter = ',', required = true)]
    populations: Vec<String>,
    /// Number of equal-width bins.
    #[arg(long, default_value_t = 20)]
    bins: usize,
    #[arg(long, default_value = "bleuvar")]
    measure: Measure,
    /// Output directory for histogram.csv and manifest.json.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct BinsArgs {
    /// JSONL sample file.
    #[arg(long)]
    samples: PathBuf,
    #[arg(long, default_value = "bleuvar")]
    measure: Measure,
    /// Output directory for length_bins.csv and manifest.json.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SeparationArgs {
    /// In-distribution sample file.
    #[arg(long = "in")]
    in_dist: PathBuf,
    /// Out-of-distribution sample file.
    #[arg(long)]
    ood: PathBuf,
    #[arg(long, default_value = "bleuvar")]
    measure: Measure,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// JSON simulator config; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output sample file (all sentences, or in-distribution only with --ood-out).
    #[arg(long)]
    out: PathBuf,
    /// Write OOD sentences here instead of into --out.
    #[arg(long)]
    ood_out: Option<PathBuf>,
    #[arg(long, env = "SEQCERT_SEED")]
    seed: Option<u64>,
    /// Per-token substitution probability.
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    sentences: Option<usize>,
    /// Samples per sentence (N).
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    vocab: Option<usize>,
    #[arg(long)]
    min_len: Option<usize>,
    #[arg(long)]
    max_len: Option<usize>,
    #[arg(long)]
    ood_fraction: Option<f64>,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    /// JSONL sample file.
    #[arg(long)]
    samples: PathBuf,
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let informational = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let text = e.render().to_string();
            if informational {
                let _ = stdout.write_all(text.as_bytes());
                return EXIT_OK;
            }
            let _ = stderr.write_all(text.as_bytes());
            return EXIT_USAGE;
        }
    };
    match dispatch(cli.command, stdout, stderr) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e:#}");
            EXIT_DATA
        }
    }
}

fn dispatch(command: Command, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32> {
    match command {
        Command::Score(a) => score(a, stderr),
        Command::Retention(a) => retention(a, stderr),
        Command::Histogram(a) => histogram(a, stderr),
        Command::Bins(a) => bins(a, stderr),
        Command::Separation(a) => separation(a, stdout),
        Command::Simulate(a) => simulate(a, stderr),
        Command::Validate(a) => validate(a, stdout),
    }
}

fn load(path: &Path) -> Result<Vec<SampleSet>> {
    data_io::read_sample_file(path).with_context(|| format!("reading {}", path.display()))
}

/// Scores in input order; scoring itself may run in parallel.
fn score_all(sets: &[SampleSet], measure: Measure, path: &Path) -> Result<Vec<ScoredSentence>> {
    sets.par_iter()
        .map(|s| score_sample_set(s, measure))
        .collect::<Result<Vec<_>, _>>()
        .with_context(|| format!("scoring {} with {measure}", path.display()))
}

fn uniform_n(sets: &[SampleSet]) -> Option<usize> {
    let n = sets.first()?.samples.len();
    sets.iter().all(|s| s.samples.len() == n).then_some(n)
}

fn manifest(command: &str, measures: Vec<Measure>, sets: &[SampleSet], inputs: &[&Path]) -> RunManifest {
    let mut m = RunManifest::new(command);
    m.measures = measures;
    m.samples_per_sentence = uniform_n(sets);
    m.inputs = inputs.iter().map(|p| p.display().to_string()).collect();
    m
}

fn finish(bundle: &ReportBundle, out: &Path, stderr: &mut dyn Write) -> Result<i32> {
    let path = data_io::write_reports(bundle, out)?;
    writeln!(stderr, "wrote {}", path.display())?;
    Ok(EXIT_OK)
}

fn score(a: ScoreArgs, stderr: &mut dyn Write) -> Result<i32> {
    let sets = load(&a.samples)?;
    let rows = score_all(&sets, a.measure, &a.samples)?;
    let mut bundle = ReportBundle::new(manifest("score", vec![a.measure], &sets, &[&a.samples]));
    if rows.iter().all(|r| r.sentence_quality.is_some()) {
        bundle.density = eval::density_pairs(&rows)?;
    }
    bundle.scores = rows;
    finish(&bundle, &a.out, stderr)
}

fn retention(a: RetentionArgs, stderr: &mut dyn Write) -> Result<i32> {
    let sets = load(&a.samples)?;
    let fractions = if a.fractions.is_empty() {
        eval::default_fractions()
    } else {
        a.fractions.clone()
    };
    let mut measures = a.measure.clone();
    measures.dedup();
    let mut curves = Vec::new();
    let mut first_rows = None;
    for &m in &measures {
        let rows = score_all(&sets, m, &a.samples)?;
        curves.push(eval::retention_curve(&rows, a.metric, &fractions)?);
        first_rows.get_or_insert(rows);
    }
    if a.baselines {
        let rows = first_rows.as_deref().unwrap_or_default();
        for referral in [Referral::SentLength, Referral::Random(a.seed)] {
            curves.push(eval::baseline_orderings(rows, referral, a.metric, &fractions)?);
        }
    }
    let mut m = manifest("retention", measures, &sets, &[&a.samples]);
    m.metric = Some(a.metric);
    m.seed = a.baselines.then_some(a.seed);
    let mut bundle = ReportBundle::new(m);
    bundle.retention = curves;
    finish(&bundle, &a.out, stderr)
}

fn histogram(a: HistogramArgs, stderr: &mut dyn Write) -> Result<i32> {
    let mut values = Vec::new();
    let mut all_sets = Vec::new();
    let mut inputs = Vec::new();
    for spec in &a.populations {
        let (label, file) = spec
            .split_once('=')
            .ok_or_else(|| anyhow!("population '{spec}' must be LABEL=FILE"))?;
        let path = PathBuf::from(file);
        let sets = load(&path)?;
        for row in score_all(&sets, a.measure, &path)? {
            values.push((label.to_owned(), row.uncertainty.display()));
        }
        all_sets.extend(sets);
        inputs.push(path);
    }
    let input_refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    let mut bundle = ReportBundle::new(manifest("histogram", vec![a.measure], &all_sets, &input_refs));
    bundle.histogram = Some(eval::histogram(&values, a.bins)?);
    finish(&bundle, &a.out, stderr)
}

fn bins(a: BinsArgs, stderr: &mut dyn Write) -> Result<i32> {
    let sets = load(&a.samples)?;
    let rows = score_all(&sets, a.measure, &a.samples)?;
    let mut bundle = ReportBundle::new(manifest("bins", vec![a.measure], &sets, &[&a.samples]));
    bundle.length_bins = eval::length_bins(&rows);
    finish(&bundle, &a.out, stderr)
}

fn separation(a: SeparationArgs, stdout: &mut dyn Write) -> Result<i32> {
    let oriented = |path: &Path| -> Result<Vec<f64>> {
        let sets = load(path)?;
        Ok(score_all(&sets, a.measure, path)?
            .iter()
            .map(|r| r.uncertainty.uncertainty())
            .collect())
    };
    let auroc = eval::ood_separation(&oriented(&a.in_dist)?, &oriented(&a.ood)?)?;
    writeln!(stdout, "{auroc}")?;
    Ok(EXIT_OK)
}

fn simulate(a: SimulateArgs, stderr: &mut dyn Write) -> Result<i32> {
    let mut cfg = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str::<SimConfig>(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => SimConfig::default(),
    };
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.noise {
        cfg.noise_rate = v;
    }
    if let Some(v) = a.sentences {
        cfg.sentence_count = v;
    }
    if let Some(v) = a.samples {
        cfg.samples = v;
    }
    if let Some(v) = a.vocab {
        cfg.vocab_size = v;
    }
    if let Some(v) = a.min_len {
        cfg.length_range.0 = v;
    }
    if let Some(v) = a.max_len {
        cfg.length_range.1 = v;
    }
    if let Some(v) = a.ood_fraction {
        cfg.ood_fraction = v;
    }
    let sims = simulator::simulate(&cfg)?;
    match &a.ood_out {
        Some(ood_path) => {
            let (ood, ind): (Vec<_>, Vec<_>) = sims.iter().partition(|s| s.ood);
            data_io::write_sample_file(&a.out, ind.iter().map(|s| &s.set))?;
            data_io::write_sample_file(ood_path, ood.iter().map(|s| &s.set))?;
            writeln!(
                stderr,
                "wrote {} in-distribution sets to {} and {} OOD sets to {}",
                ind.len(),
                a.out.display(),
                ood.len(),
                ood_path.display()
            )?;
        }
        None => {
            data_io::write_sample_file(&a.out, sims.iter().map(|s| &s.set))?;
            writeln!(stderr, "wrote {} sets to {}", sims.len(), a.out.display())?;
        }
    }
    Ok(EXIT_OK)
}

fn validate(a: ValidateArgs, stdout: &mut dyn Write) -> Result<i32> {
    let report = data_io::validate_sample_file(&a.samples)?;
    writeln!(stdout, "file: {}", a.samples.display())?;
    writeln!(stdout, "records: {}", report.records)?;
    writeln!(stdout, "with logprobs on every sample: {}", report.with_logprobs)?;
    writeln!(stdout, "with deterministic decode: {}", report.with_deterministic)?;
    writeln!(stdout, "with reference: {}", report.with_reference)?;
    writeln!(stdout, "errors: {}", report.errors.len())?;
    for e in &report.errors {
        writeln!(stdout, "  {e}")?;
    }
    if report.is_valid() {
        Ok(EXIT_OK)
    } else {
        bail!("{} contract violation(s) in {}", report.errors.len(), a.samples.display())
    }
}
