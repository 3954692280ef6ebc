//! File contracts: JSONL sample files, line-aligned parallel corpora and the
//! CSV/JSON report bundle.
//!
//! # Sample file format
//!
//! UTF-8, one JSON object per line. Blank lines are skipped.
//!
//! ```text
//! {"id": "s1",
//!  "source": "der Hund",
//!  "samples": [{"tokens": ["the", "dog"], "logprob": -0.7},
//!              {"text": "a dog", "logprob": -1.9}],
//!  "deterministic": {"tokens": ["the", "dog"], "logprob": -0.5},
//!  "reference": "the dog"}
//! ```
//!
//! * `id` must be unique within the file and `samples` nonempty.
//! * Each hypothesis carries exactly one of `tokens` (preferred) or `text`;
//!   text is split on whitespace.
//! * `logprob` is optional, a natural logarithm, finite and `<= 0`.
//! * `deterministic` and `reference` are optional. Unknown keys are ignored.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bleu::{tokenize, TokenSeq};
use crate::eval::{HistogramReport, LengthBin, Metric, RetentionCurve, ScoredSentence};
use crate::uncertainty::{Hypothesis, Measure, SampleSet};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: malformed JSON: {message}")]
    Json { line: usize, message: String },
    #[error("line {line}: duplicate id '{id}' (first seen on line {first_line})")]
    DuplicateId {
        id: String,
        first_line: usize,
        line: usize,
    },
    #[error("line {line}: record '{id}' has an empty samples array")]
    EmptySamples { line: usize, id: String },
    #[error("line {line}: record '{id}': {field} = {value} is not a valid log-probability (must be finite and <= 0)")]
    InvalidLogprob {
        line: usize,
        id: String,
        field: String,
        value: f64,
    },
    #[error("line {line}: record '{id}': {field}: {problem}")]
    BadHypothesis {
        line: usize,
        id: String,
        field: String,
        problem: String,
    },
    #[error("line count mismatch: {src_lines} source lines vs {ref_lines} reference lines")]
    LineCountMismatch { src_lines: usize, ref_lines: usize },
    #[error("{path}: line {line}: empty reference")]
    EmptyReference { path: PathBuf, line: usize },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl DataError {
    fn io(path: &Path, source: io::Error) -> Self {
        DataError::Io {
            path: path.to_owned(),
            source,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct RawHypothesis {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tokens: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    logprob: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawRecord {
    id: String,
    source: String,
    samples: Vec<RawHypothesis>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    deterministic: Option<RawHypothesis>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    reference: Option<String>,
}

impl RawHypothesis {
    fn from_hypothesis(h: &Hypothesis) -> Self {
        Self {
            tokens: Some(h.tokens.tokens().to_vec()),
            text: None,
            logprob: h.logprob,
        }
    }

    fn into_hypothesis(self, line: usize, id: &str, field: &str) -> Result<Hypothesis, DataError> {
        let bad = |problem: &str| DataError::BadHypothesis {
            line,
            id: id.to_owned(),
            field: field.to_owned(),
            problem: problem.to_owned(),
        };
        let tokens = match (self.tokens, self.text) {
            (Some(tokens), None) => {
                TokenSeq::new(tokens).map_err(|e| bad(&e.to_string()))?
            }
            (None, Some(text)) => tokenize(&text),
            (Some(_), Some(_)) => return Err(bad("has both 'tokens' and 'text'")),
            (None, None) => return Err(bad("needs 'tokens' or 'text'")),
        };
        if let Some(value) = self.logprob {
            if !(value.is_finite() && value <= 0.0) {
                return Err(DataError::InvalidLogprob {
                    line,
                    id: id.to_owned(),
                    field: format!("{field}.logprob"),
                    value,
                });
            }
        }
        Ok(Hypothesis::new(tokens, self.logprob))
    }
}

fn parse_record(text: &str, line: usize) -> Result<SampleSet, DataError> {
    let raw: RawRecord = serde_json::from_str(text).map_err(|e| DataError::Json {
        line,
        message: e.to_string(),
    })?;
    if raw.samples.is_empty() {
        return Err(DataError::EmptySamples { line, id: raw.id });
    }
    let id = raw.id;
    let samples = raw
        .samples
        .into_iter()
        .enumerate()
        .map(|(i, h)| h.into_hypothesis(line, &id, &format!("samples[{i}]")))
        .collect::<Result<Vec<_>, _>>()?;
    let deterministic = raw
        .deterministic
        .map(|h| h.into_hypothesis(line, &id, "deterministic"))
        .transpose()?;
    Ok(SampleSet {
        reference: raw.reference.as_deref().map(tokenize),
        id,
        source: raw.source,
        samples,
        deterministic,
    })
}

/// Streaming reader over a JSONL sample file. Holds one line at a time plus
/// the set of ids seen so far.
pub struct SampleReader<R> {
    input: R,
    buf: String,
    line: usize,
    seen: HashMap<String, usize>,
    path: PathBuf,
}

impl SampleReader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, DataError> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| DataError::io(path, e))?;
        Ok(Self::with_path(BufReader::new(file), path))
    }
}

impl<R: BufRead> SampleReader<R> {
    pub fn new(input: R) -> Self {
        Self::with_path(input, Path::new("<input>"))
    }

    fn with_path(input: R, path: &Path) -> Self {
        Self {
            input,
            buf: String::new(),
            line: 0,
            seen: HashMap::new(),
            path: path.to_owned(),
        }
    }

    /// 1-based number of the last line read.
    pub fn line(&self) -> usize {
        self.line
    }
}

impl<R: BufRead> Iterator for SampleReader<R> {
    type Item = Result<SampleSet, DataError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.buf.clear();
            match self.input.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => return Some(Err(DataError::io(&self.path, e))),
            }
            self.line += 1;
            let text = self.buf.trim();
            if text.is_empty() {
                continue;
            }
            let line = self.line;
            let set = match parse_record(text, line) {
                Ok(set) => set,
                Err(e) => return Some(Err(e)),
            };
            if let Some(&first_line) = self.seen.get(&set.id) {
                return Some(Err(DataError::DuplicateId {
                    id: set.id,
                    first_line,
                    line,
                }));
            }
            self.seen.insert(set.id.clone(), line);
            return Some(Ok(set));
        }
    }
}

/// Reads a whole sample file, stopping at the first contract violation.
pub fn read_sample_file(path: impl AsRef<Path>) -> Result<Vec<SampleSet>, DataError> {
    SampleReader::open(path)?.collect()
}

#[derive(Debug, Default)]
pub struct ValidationReport {
    pub records: usize,
    pub errors: Vec<DataError>,
    pub with_logprobs: usize,
    pub with_deterministic: usize,
    pub with_reference: usize,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.errors.is_empty()
    }
}

/// Checks every line of a sample file and collects all violations instead of
/// stopping at the first one.
pub fn validate_sample_file(path: impl AsRef<Path>) -> Result<ValidationReport, DataError> {
    let mut report = ValidationReport::default();
    for item in SampleReader::open(path)? {
        match item {
            Ok(set) => {
                report.records += 1;
                if set.sample_logprobs().is_some() {
                    report.with_logprobs += 1;
                }
                if set.deterministic.is_some() {
                    report.with_deterministic += 1;
                }
                if set.reference.is_some() {
                    report.with_reference += 1;
                }
            }
            Err(e @ DataError::Io { .. }) => return Err(e),
            Err(e) => report.errors.push(e),
        }
    }
    Ok(report)
}

/// Serializes one sample set as a single JSONL line (tokens form).
pub fn write_sample_set<W: Write>(out: &mut W, set: &SampleSet) -> io::Result<()> {
    let raw = RawRecord {
        id: set.id.clone(),
        source: set.source.clone(),
        samples: set.samples.iter().map(RawHypothesis::from_hypothesis).collect(),
        deterministic: set.deterministic.as_ref().map(RawHypothesis::from_hypothesis),
        reference: set.reference.as_ref().map(TokenSeq::detokenize),
    };
    serde_json::to_writer(&mut *out, &raw)?;
    out.write_all(b"\n")
}

pub fn write_sample_file<'a>(
    path: impl AsRef<Path>,
    sets: impl IntoIterator<Item = &'a SampleSet>,
) -> Result<(), DataError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| DataError::io(path, e))?;
    let mut out = io::BufWriter::new(file);
    for set in sets {
        write_sample_set(&mut out, set).map_err(|e| DataError::io(path, e))?;
    }
    out.flush().map_err(|e| DataError::io(path, e))
}

fn read_lines(path: &Path) -> Result<Vec<String>, DataError> {
    let file = File::open(path).map_err(|e| DataError::io(path, e))?;
    BufReader::new(file)
        .lines()
        .collect::<Result<_, _>>()
        .map_err(|e| DataError::io(path, e))
}

/// Pairs line `i` of the source file with line `i` of the reference file.
pub fn read_parallel_corpus(
    src_path: impl AsRef<Path>,
    ref_path: impl AsRef<Path>,
) -> Result<Vec<(String, TokenSeq)>, DataError> {
    let ref_path = ref_path.as_ref();
    let sources = read_lines(src_path.as_ref())?;
    let references = read_lines(ref_path)?;
    if sources.len() != references.len() {
        return Err(DataError::LineCountMismatch {
            src_lines: sources.len(),
            ref_lines: references.len(),
        });
    }
    sources
        .into_iter()
        .zip(references)
        .enumerate()
        .map(|(i, (src, r))| {
            let reference = tokenize(&r);
            if reference.is_empty() {
                return Err(DataError::EmptyReference {
                    path: ref_path.to_owned(),
                    line: i + 1,
                });
            }
            Ok((src, reference))
        })
        .collect()
}

/// Everything needed to reproduce a run. Written as `manifest.json` next to
/// every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub tool_version: String,
    pub command: String,
    pub measures: Vec<Measure>,
    /// Samples per sentence when uniform across the input.
    pub samples_per_sentence: Option<usize>,
    pub seed: Option<u64>,
    pub smoothing: String,
    pub bleu_max_order: usize,
    pub metric: Option<Metric>,
    pub retained_count_rule: String,
    pub log_base: String,
    pub inputs: Vec<String>,
    #[serde(default)]
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: impl Into<String>) -> Self {
        Self {
            tool: "seqcert".to_owned(),
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
            command: command.into(),
            measures: Vec::new(),
            samples_per_sentence: None,
            seed: None,
            smoothing: crate::bleu::Smoothing::AddOne.tag().to_owned(),
            bleu_max_order: crate::bleu::DEFAULT_MAX_ORDER,
            metric: None,
            retained_count_rule: crate::eval::RETAINED_COUNT_RULE.to_owned(),
            log_base: "e".to_owned(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }
}

/// A run's reports. Empty parts are not written.
#[derive(Debug, Clone)]
pub struct ReportBundle {
    pub manifest: RunManifest,
    pub scores: Vec<ScoredSentence>,
    pub retention: Vec<RetentionCurve>,
    pub histogram: Option<HistogramReport>,
    pub length_bins: Vec<LengthBin>,
    pub density: Vec<(f64, f64)>,
}

impl ReportBundle {
    pub fn new(manifest: RunManifest) -> Self {
        Self {
            manifest,
            scores: Vec::new(),
            retention: Vec::new(),
            histogram: None,
            length_bins: Vec::new(),
            density: Vec::new(),
        }
    }
}

pub const SCORES_CSV: &str = "scores.csv";
pub const RETENTION_CSV: &str = "retention.csv";
pub const HISTOGRAM_CSV: &str = "histogram.csv";
pub const LENGTH_BINS_CSV: &str = "length_bins.csv";
pub const DENSITY_CSV: &str = "density.csv";
pub const MANIFEST_JSON: &str = "manifest.json";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_bytes<F>(header: &[&str], fill: F) -> Result<Vec<u8>, DataError>
where
    F: FnOnce(&mut csv::Writer<Vec<u8>>) -> Result<(), csv::Error>,
{
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header)?;
    fill(&mut w)?;
    w.into_inner()
        .map_err(|e| DataError::Csv(csv::Error::from(e.into_error())))
}

/// Per-sentence rows: id, output text, display uncertainty, display quality.
pub fn scores_csv(rows: &[ScoredSentence]) -> Result<Vec<u8>, DataError> {
    csv_bytes(&["id", "output", "uncertainty", "quality"], |w| {
        for r in rows {
            w.write_record([
                r.id.clone(),
                r.output.detokenize(),
                r.uncertainty.display().to_string(),
                opt(r.sentence_quality.map(|q| q * 100.0)),
            ])?;
        }
        Ok(())
    })
}

pub fn retention_csv(curves: &[RetentionCurve]) -> Result<Vec<u8>, DataError> {
    csv_bytes(&["measure", "fraction", "metric", "value"], |w| {
        for c in curves {
            for p in &c.points {
                w.write_record([
                    c.label.clone(),
                    p.fraction.to_string(),
                    c.metric.name().to_owned(),
                    (p.value * 100.0).to_string(),
                ])?;
            }
        }
        Ok(())
    })
}

pub fn histogram_csv(h: &HistogramReport) -> Result<Vec<u8>, DataError> {
    csv_bytes(&["population", "bin_lo", "bin_hi", "count"], |w| {
        for (label, counts) in &h.populations {
            for (i, count) in counts.iter().enumerate() {
                w.write_record([
                    label.clone(),
                    h.bin_edges[i].to_string(),
                    h.bin_edges[i + 1].to_string(),
                    count.to_string(),
                ])?;
            }
        }
        Ok(())
    })
}

pub fn length_bins_csv(bins: &[LengthBin]) -> Result<Vec<u8>, DataError> {
    csv_bytes(&["bin", "count", "mean_uncertainty"], |w| {
        for b in bins {
            w.write_record([b.label(), b.count.to_string(), opt(b.mean)])?;
        }
        Ok(())
    })
}

pub fn density_csv(pairs: &[(f64, f64)]) -> Result<Vec<u8>, DataError> {
    csv_bytes(&["uncertainty", "quality"], |w| {
        for (u, q) in pairs {
            w.write_record([u.to_string(), q.to_string()])?;
        }
        Ok(())
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), DataError> {
    fs::write(path, bytes).map_err(|e| DataError::io(path, e))
}

/// Writes the bundle's CSVs and its manifest into `out_dir`, replacing files
/// of the same name. Returns the manifest path.
pub fn write_reports(bundle: &ReportBundle, out_dir: impl AsRef<Path>) -> Result<PathBuf, DataError> {
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(|e| DataError::io(out_dir, e))?;

    let mut files: Vec<(&str, Vec<u8>)> = Vec::new();
    if !bundle.scores.is_empty() {
        files.push((SCORES_CSV, scores_csv(&bundle.scores)?));
    }
    if !bundle.retention.is_empty() {
        files.push((RETENTION_CSV, retention_csv(&bundle.retention)?));
    }
    if let Some(h) = &bundle.histogram {
        files.push((HISTOGRAM_CSV, histogram_csv(h)?));
    }
    if !bundle.length_bins.is_empty() {
        files.push((LENGTH_BINS_CSV, length_bins_csv(&bundle.length_bins)?));
    }
    if !bundle.density.is_empty() {
        files.push((DENSITY_CSV, density_csv(&bundle.density)?));
    }

    let mut manifest = bundle.manifest.clone();
    manifest.outputs = files.iter().map(|(name, _)| name.to_string()).collect();
    for (name, bytes) in &files {
        write_file(&out_dir.join(name), bytes)?;
    }
    let manifest_path = out_dir.join(MANIFEST_JSON);
    let mut json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    json.push(b'\n');
    write_file(&manifest_path, &json)?;
    Ok(manifest_path)
}
