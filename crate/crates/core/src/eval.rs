//! Evaluation of uncertainty measures: performance-retention curves, referral
//! baselines, histograms, OOD separation, length-binned uncertainty and
//! quality/uncertainty density pairs.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bleu::{sentence_bleu, BleuError, BleuStats, Smoothing, TokenSeq, DEFAULT_MAX_ORDER};
use crate::stats::{average_ranks, ordered_mean};
use crate::uncertainty::{Measure, UncertaintyValue};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("no rows to evaluate")]
    Empty,
    #[error("rows mix measures {0} and {1}")]
    MixedMeasures(Measure, Measure),
    #[error("row '{0}' has no reference")]
    MissingReference(String),
    #[error("retention fraction {0} is outside (0, 1]")]
    BadFraction(f64),
    #[error("histogram needs at least one bin")]
    ZeroBins,
    #[error("non-finite value {0}")]
    NonFinite(f64),
    #[error(transparent)]
    Bleu(#[from] BleuError),
}

/// One evaluated sentence: the chosen output, its uncertainty and, when a
/// reference is known, its sentence BLEU.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSentence {
    pub id: String,
    pub output: TokenSeq,
    pub uncertainty: UncertaintyValue,
    pub reference: Option<TokenSeq>,
    pub sentence_quality: Option<f64>,
}

impl ScoredSentence {
    /// Computes `sentence_quality` from the reference when one is given.
    pub fn new(
        id: String,
        output: TokenSeq,
        uncertainty: UncertaintyValue,
        reference: Option<TokenSeq>,
    ) -> Result<Self, BleuError> {
        let sentence_quality = reference
            .as_ref()
            .map(|r| sentence_bleu(&output, r, DEFAULT_MAX_ORDER).map(|s| s.value))
            .transpose()?;
        Ok(Self {
            id,
            output,
            uncertainty,
            reference,
            sentence_quality,
        })
    }

    fn quality(&self) -> Result<f64, EvalError> {
        self.sentence_quality
            .ok_or_else(|| EvalError::MissingReference(self.id.clone()))
    }

    fn reference(&self) -> Result<&TokenSeq, EvalError> {
        self.reference
            .as_ref()
            .ok_or_else(|| EvalError::MissingReference(self.id.clone()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Pooled-count corpus BLEU over the retained rows.
    CorpusBleu,
    /// Arithmetic mean of the retained rows' sentence BLEU.
    MeanSentBleu,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::CorpusBleu => "corpus_bleu",
            Metric::MeanSentBleu => "mean_sent_bleu",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "corpus" | "corpus_bleu" => Ok(Metric::CorpusBleu),
            "mean" | "mean_sent_bleu" => Ok(Metric::MeanSentBleu),
            other => Err(format!("unknown metric '{other}' (expected corpus or mean)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetentionPoint {
    pub fraction: f64,
    /// Number of rows kept, `ceil(fraction * M)`.
    pub retained: usize,
    /// Metric value in `[0, 1]`.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetentionCurve {
    /// Measure name, or the baseline name for referral orderings.
    pub label: String,
    pub metric: Metric,
    pub points: Vec<RetentionPoint>,
}

impl RetentionCurve {
    pub fn at(&self, fraction: f64) -> Option<f64> {
        self.points
            .iter()
            .find(|p| p.fraction == fraction)
            .map(|p| p.value)
    }
}

/// Rule recorded in run manifests for how many rows a fraction keeps.
pub const RETAINED_COUNT_RULE: &str = "ceil(fraction * rows)";

/// `{0.05, 0.10, ..., 1.00}`.
pub fn default_fractions() -> Vec<f64> {
    (1..=20).map(|k| k as f64 / 20.0).collect()
}

/// `ceil(fraction * total)`, treating products within 1e-9 of an integer as
/// that integer so that e.g. `0.7 * 100` keeps 70 rows.
pub fn retained_count(fraction: f64, total: usize) -> usize {
    let x = fraction * total as f64;
    let nearest = x.round();
    let k = if (x - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest
    } else {
        x.ceil()
    };
    (k as usize).clamp(1, total)
}

/// Sorted, deduplicated fractions in `(0, 1]`, always ending at 1.
pub fn normalize_fractions(fractions: &[f64]) -> Result<Vec<f64>, EvalError> {
    let mut out = Vec::with_capacity(fractions.len() + 1);
    for &f in fractions {
        if !(f > 0.0 && f <= 1.0) {
            return Err(EvalError::BadFraction(f));
        }
        out.push(f);
    }
    out.sort_by(f64::total_cmp);
    out.dedup();
    if out.last() != Some(&1.0) {
        out.push(1.0);
    }
    Ok(out)
}

fn common_measure(rows: &[ScoredSentence]) -> Result<Measure, EvalError> {
    let first = rows.first().ok_or(EvalError::Empty)?.uncertainty.measure;
    match rows.iter().find(|r| r.uncertainty.measure != first) {
        Some(r) => Err(EvalError::MixedMeasures(first, r.uncertainty.measure)),
        None => Ok(first),
    }
}

/// Metric on an arbitrary subset of rows.
pub fn evaluate_metric(rows: &[&ScoredSentence], metric: Metric) -> Result<f64, EvalError> {
    if rows.is_empty() {
        return Err(EvalError::Empty);
    }
    match metric {
        Metric::MeanSentBleu => {
            let qualities = rows.iter().map(|r| r.quality()).collect::<Result<Vec<_>, _>>()?;
            Ok(ordered_mean(qualities).expect("nonempty"))
        }
        Metric::CorpusBleu => {
            let mut pooled = BleuStats::zero(DEFAULT_MAX_ORDER);
            for r in rows {
                pooled.accumulate(&BleuStats::from_pair(&r.output, r.reference()?, DEFAULT_MAX_ORDER)?);
            }
            Ok(pooled.score(Smoothing::None).value)
        }
    }
}

/// Retention curve for rows visited in the given order (most trusted first).
pub fn curve_for_order(
    rows: &[ScoredSentence],
    order: &[usize],
    metric: Metric,
    fractions: &[f64],
    label: impl Into<String>,
) -> Result<RetentionCurve, EvalError> {
    if rows.is_empty() {
        return Err(EvalError::Empty);
    }
    debug_assert_eq!(order.len(), rows.len());
    let fractions = normalize_fractions(fractions)?;
    let ordered: Vec<&ScoredSentence> = order.iter().map(|&i| &rows[i]).collect();
    // validate up front so a missing reference fails regardless of fractions
    for r in &ordered {
        r.quality()?;
    }
    let points = fractions
        .iter()
        .map(|&fraction| {
            let retained = retained_count(fraction, rows.len());
            let value = evaluate_metric(&ordered[..retained], metric)?;
            Ok(RetentionPoint {
                fraction,
                retained,
                value,
            })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    Ok(RetentionCurve {
        label: label.into(),
        metric,
        points,
    })
}

fn by_id(rows: &[ScoredSentence], a: usize, b: usize) -> Ordering {
    rows[a].id.cmp(&rows[b].id).then(a.cmp(&b))
}

/// Row indices from most to least confident; ties broken by id.
pub fn confidence_order(rows: &[ScoredSentence]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&a, &b| {
        rows[a]
            .uncertainty
            .uncertainty()
            .total_cmp(&rows[b].uncertainty.uncertainty())
            .then_with(|| by_id(rows, a, b))
    });
    order
}

/// Performance on the most confident `ceil(f * M)` rows for each fraction `f`.
pub fn retention_curve(
    rows: &[ScoredSentence],
    metric: Metric,
    fractions: &[f64],
) -> Result<RetentionCurve, EvalError> {
    let measure = common_measure(rows)?;
    curve_for_order(rows, &confidence_order(rows), metric, fractions, measure.name())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Referral {
    /// Shortest outputs retained first.
    SentLength,
    /// A single seeded shuffle.
    Random(u64),
    /// Most confident first, as [`retention_curve`].
    Uncertainty,
}

impl Referral {
    pub fn label(self, measure: Measure) -> String {
        match self {
            Referral::SentLength => "sent_length".to_owned(),
            Referral::Random(_) => "random".to_owned(),
            Referral::Uncertainty => measure.name().to_owned(),
        }
    }
}

/// Retention curve under a referral baseline ordering.
pub fn baseline_orderings(
    rows: &[ScoredSentence],
    referral: Referral,
    metric: Metric,
    fractions: &[f64],
) -> Result<RetentionCurve, EvalError> {
    let measure = common_measure(rows)?;
    let order = match referral {
        Referral::Uncertainty => return retention_curve(rows, metric, fractions),
        Referral::SentLength => {
            let mut order: Vec<usize> = (0..rows.len()).collect();
            order.sort_by(|&a, &b| {
                rows[a]
                    .output
                    .len()
                    .cmp(&rows[b].output.len())
                    .then_with(|| by_id(rows, a, b))
            });
            order
        }
        Referral::Random(seed) => {
            // canonical order first so the shuffle ignores input order
            let mut order: Vec<usize> = (0..rows.len()).collect();
            order.sort_by(|&a, &b| by_id(rows, a, b));
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            order
        }
    };
    curve_for_order(rows, &order, metric, fractions, referral.label(measure))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramReport {
    /// `bins + 1` strictly increasing edges; the last bin is closed.
    pub bin_edges: Vec<f64>,
    /// Counts per population, in order of first appearance.
    pub populations: Vec<(String, Vec<u64>)>,
}

impl HistogramReport {
    pub fn counts(&self, label: &str) -> Option<&[u64]> {
        self.populations
            .iter()
            .find(|(l, _)| l == label)
            .map(|(_, c)| c.as_slice())
    }
}

/// Equal-width histogram over the joint range of all populations. A constant
/// input gets a unit-width range centred on its value.
pub fn histogram(values: &[(String, f64)], bins: usize) -> Result<HistogramReport, EvalError> {
    if bins == 0 {
        return Err(EvalError::ZeroBins);
    }
    if values.is_empty() {
        return Err(EvalError::Empty);
    }
    if let Some(&(_, v)) = values.iter().find(|(_, v)| !v.is_finite()) {
        return Err(EvalError::NonFinite(v));
    }
    let min = values.iter().map(|(_, v)| *v).fold(f64::INFINITY, f64::min);
    let max = values.iter().map(|(_, v)| *v).fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if max > min { (min, max) } else { (min - 0.5, max + 0.5) };
    let width = (hi - lo) / bins as f64;
    let mut bin_edges: Vec<f64> = (0..bins).map(|i| lo + i as f64 * width).collect();
    bin_edges.push(hi);

    let mut populations: Vec<(String, Vec<u64>)> = Vec::new();
    for (label, v) in values {
        let idx = (((v - lo) / width).floor() as usize).min(bins - 1);
        let slot = match populations.iter().position(|(l, _)| l == label) {
            Some(p) => p,
            None => {
                populations.push((label.clone(), vec![0; bins]));
                populations.len() - 1
            }
        };
        populations[slot].1[idx] += 1;
    }
    Ok(HistogramReport {
        bin_edges,
        populations,
    })
}

/// AUROC of "is OOD" scored by uncertainty (higher = more uncertain), from
/// the rank-sum statistic. Ties count one half.
pub fn ood_separation(in_dist: &[f64], ood: &[f64]) -> Result<f64, EvalError> {
    if in_dist.is_empty() || ood.is_empty() {
        return Err(EvalError::Empty);
    }
    if let Some(&v) = in_dist.iter().chain(ood).find(|v| !v.is_finite()) {
        return Err(EvalError::NonFinite(v));
    }
    let joint: Vec<f64> = in_dist.iter().chain(ood).copied().collect();
    let ranks = average_ranks(&joint);
    let n_in = in_dist.len() as f64;
    let n_ood = ood.len() as f64;
    let ood_rank_sum: f64 = ranks[in_dist.len()..].iter().sum();
    let u = ood_rank_sum - n_ood * (n_ood + 1.0) / 2.0;
    Ok(u / (n_in * n_ood))
}

/// Output-length bin edges in the reporting format: 1-10, ..., 41-50, 51+.
pub const LENGTH_BIN_EDGES: [(usize, Option<usize>); 6] = [
    (1, Some(10)),
    (11, Some(20)),
    (21, Some(30)),
    (31, Some(40)),
    (41, Some(50)),
    (51, None),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthBin {
    pub lo: usize,
    pub hi: Option<usize>,
    pub count: usize,
    /// Mean display-scaled uncertainty; `None` for an empty bin.
    pub mean: Option<f64>,
}

impl LengthBin {
    pub fn label(&self) -> String {
        match self.hi {
            Some(hi) => format!("{}-{}", self.lo, hi),
            None => format!("{}+", self.lo),
        }
    }
}

/// Mean display-scaled uncertainty per output-length bin. Zero-length outputs
/// fall in the first bin.
pub fn length_bins(rows: &[ScoredSentence]) -> Vec<LengthBin> {
    LENGTH_BIN_EDGES
        .iter()
        .enumerate()
        .map(|(i, &(lo, hi))| {
            let values: Vec<f64> = rows
                .iter()
                .filter(|r| {
                    let len = r.output.len();
                    (i == 0 || len >= lo) && hi.is_none_or(|h| len <= h)
                })
                .map(|r| r.uncertainty.display())
                .collect();
            LengthBin {
                lo,
                hi,
                count: values.len(),
                mean: ordered_mean(values),
            }
        })
        .collect()
}

/// `(uncertainty display, quality display)` pairs, uncertainty ascending with
/// ties by id.
pub fn density_pairs(rows: &[ScoredSentence]) -> Result<Vec<(f64, f64)>, EvalError> {
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&a, &b| {
        rows[a]
            .uncertainty
            .display()
            .total_cmp(&rows[b].uncertainty.display())
            .then_with(|| by_id(rows, a, b))
    });
    order
        .into_iter()
        .map(|i| Ok((rows[i].uncertainty.display(), rows[i].quality()? * 100.0)))
        .collect()
}
