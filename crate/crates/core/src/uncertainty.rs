//! Sequence-level uncertainty measures over a set of stochastic decodes.
//!
//! * Beam Score (BS): log-probability of the deterministic decode divided by the
//!   length penalty with `alpha = 0.6`.
//! * Sequence Probability (SP): log of the summed probabilities that the
//!   sampled models assign to the deterministic decode, with the same penalty.
//!   No `1/N` factor is applied.
//! * BLEU Variance (BLEUVar): sum over ordered sample pairs `(i, j)`, `i != j`,
//!   of `(1 - BLEU(y_i, y_j))^2`. Its output is the medoid sample.
//!
//! BS and SP are oriented so that larger means more confident; BLEUVar so that
//! larger means more uncertain.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bleu::{length_penalty, sentence_bleu, tokenize, TokenSeq, DEFAULT_MAX_ORDER};
use crate::eval::ScoredSentence;
use crate::stats::ordered_sum;

/// Length-penalty exponent used by BS and SP.
pub const LENGTH_PENALTY_ALPHA: f64 = 0.6;

/// Display scale for BLEUVar: internal `[0, N(N-1)]` maps to `[0, 100 N(N-1)]`,
/// so N = 10 spans `[0, 9000]`.
pub const BLEUVAR_DISPLAY_SCALE: f64 = 100.0;

/// Relative slack under which two medoid costs count as tied.
const MEDOID_TIE_EPS: f64 = 1e-12;

/// Sample counts at which the pairwise BLEU table is filled in parallel.
const PARALLEL_PAIRS_MIN_N: usize = 16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum UncertaintyError {
    #[error("record '{id}': missing field '{field}' required by {measure}")]
    MissingField {
        id: String,
        field: String,
        measure: Measure,
    },
    #[error("log-probability {0} must be finite and <= 0")]
    InvalidLogprob(f64),
    #[error("BLEUVar needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("sample list is empty")]
    NoSamples,
    #[error(transparent)]
    Bleu(#[from] crate::bleu::BleuError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    Bs,
    Sp,
    BleuVar,
}

impl Measure {
    pub const ALL: [Measure; 3] = [Measure::Bs, Measure::Sp, Measure::BleuVar];

    pub fn name(self) -> &'static str {
        match self {
            Measure::Bs => "bs",
            Measure::Sp => "sp",
            Measure::BleuVar => "bleuvar",
        }
    }

    /// True for BS and SP, where a larger value means more confident.
    pub fn higher_is_confident(self) -> bool {
        !matches!(self, Measure::BleuVar)
    }

    pub fn display_scale(self) -> f64 {
        match self {
            Measure::BleuVar => BLEUVAR_DISPLAY_SCALE,
            Measure::Bs | Measure::Sp => 1.0,
        }
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Measure {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "bs" => Ok(Measure::Bs),
            "sp" => Ok(Measure::Sp),
            "bleuvar" => Ok(Measure::BleuVar),
            other => Err(format!("unknown measure '{other}' (expected bs, sp or bleuvar)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyValue {
    pub measure: Measure,
    /// Internal units; BLEUVar lies in `[0, N(N-1)]`.
    pub value: f64,
}

impl UncertaintyValue {
    pub fn display(&self) -> f64 {
        self.value * self.measure.display_scale()
    }

    /// Value oriented so that larger means more uncertain.
    pub fn uncertainty(&self) -> f64 {
        if self.measure.higher_is_confident() {
            -self.value
        } else {
            self.value
        }
    }
}

/// One decoded output with an optional natural-log probability.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub tokens: TokenSeq,
    pub logprob: Option<f64>,
}

impl Hypothesis {
    pub fn new(tokens: TokenSeq, logprob: Option<f64>) -> Self {
        Self { tokens, logprob }
    }

    pub fn from_text(text: &str) -> Self {
        Self::new(tokenize(text), None)
    }
}

/// One source sentence with its N stochastic decodes.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub id: String,
    pub source: String,
    pub samples: Vec<Hypothesis>,
    /// Dropout-off decode; its logprob feeds BS, its tokens are the BS/SP output.
    pub deterministic: Option<Hypothesis>,
    pub reference: Option<TokenSeq>,
}

impl SampleSet {
    pub fn sample_tokens(&self) -> Vec<&TokenSeq> {
        self.samples.iter().map(|h| &h.tokens).collect()
    }

    /// All sample logprobs, or `None` if any is missing.
    pub fn sample_logprobs(&self) -> Option<Vec<f64>> {
        self.samples.iter().map(|h| h.logprob).collect()
    }

    fn missing(&self, field: impl Into<String>, measure: Measure) -> UncertaintyError {
        UncertaintyError::MissingField {
            id: self.id.clone(),
            field: field.into(),
            measure,
        }
    }
}

fn check_logprob(lp: f64) -> Result<f64, UncertaintyError> {
    if lp.is_finite() && lp <= 0.0 {
        Ok(lp)
    } else {
        Err(UncertaintyError::InvalidLogprob(lp))
    }
}

/// `logprob / length_penalty(length, 0.6)`.
pub fn beam_score(logprob: f64, length: usize) -> Result<UncertaintyValue, UncertaintyError> {
    let lp = check_logprob(logprob)?;
    Ok(UncertaintyValue {
        measure: Measure::Bs,
        value: lp / length_penalty(length, LENGTH_PENALTY_ALPHA),
    })
}

/// `log(sum_i exp(l_i))` with the max-shift identity.
pub fn log_sum_exp(logprobs: &[f64]) -> f64 {
    let max = logprobs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let shifted = ordered_sum(logprobs.iter().map(|l| (l - max).exp()));
    max + shifted.ln()
}

/// `log_sum_exp(sample_logprobs) / length_penalty(length, 0.6)`.
pub fn sequence_probability(
    sample_logprobs: &[f64],
    length: usize,
) -> Result<UncertaintyValue, UncertaintyError> {
    if sample_logprobs.is_empty() {
        return Err(UncertaintyError::NoSamples);
    }
    for &lp in sample_logprobs {
        check_logprob(lp)?;
    }
    Ok(UncertaintyValue {
        measure: Measure::Sp,
        value: log_sum_exp(sample_logprobs) / length_penalty(length, LENGTH_PENALTY_ALPHA),
    })
}

/// BLEU between two samples. An empty reference has no n-grams, so two empty
/// samples agree fully and an empty sample disagrees fully with a nonempty one.
pub fn pair_bleu(candidate: &[String], reference: &[String]) -> f64 {
    if reference.is_empty() {
        return if candidate.is_empty() { 1.0 } else { 0.0 };
    }
    sentence_bleu(candidate, reference, DEFAULT_MAX_ORDER)
        .map(|s| s.value)
        .unwrap_or(0.0)
}

/// `table[i][j] = BLEU(sample_i as candidate, sample_j as reference)`.
/// Diagonal entries are not computed and read as 1.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseBleu {
    table: Vec<Vec<f64>>,
}

impl PairwiseBleu {
    pub fn compute<S: AsRef<[String]> + Sync>(samples: &[S]) -> Self {
        let n = samples.len();
        let row = |i: usize| -> Vec<f64> {
            (0..n)
                .map(|j| {
                    if i == j {
                        1.0
                    } else {
                        pair_bleu(samples[i].as_ref(), samples[j].as_ref())
                    }
                })
                .collect()
        };
        // Each cell is a pure function of its pair, so the schedule cannot
        // change the table.
        let table = if n >= PARALLEL_PAIRS_MIN_N {
            (0..n).into_par_iter().map(row).collect()
        } else {
            (0..n).map(row).collect()
        };
        Self { table }
    }

    /// Builds a table from explicit values; used for hand-constructed cases.
    pub fn from_matrix(table: Vec<Vec<f64>>) -> Self {
        debug_assert!(table.iter().all(|r| r.len() == table.len()));
        Self { table }
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn get(&self, candidate: usize, reference: usize) -> f64 {
        self.table[candidate][reference]
    }

    /// Sum over ordered off-diagonal pairs of `(1 - BLEU)^2`.
    pub fn variance(&self) -> f64 {
        let n = self.len();
        ordered_sum((0..n).flat_map(|i| {
            (0..n)
                .filter(move |&j| j != i)
                .map(move |j| (1.0 - self.get(i, j)).powi(2))
        }))
    }

    /// Bidirectional disagreement of sample `i` with every other sample.
    pub fn disagreement(&self, i: usize) -> f64 {
        ordered_sum(
            (0..self.len())
                .filter(|&j| j != i)
                .flat_map(|j| [1.0 - self.get(i, j), 1.0 - self.get(j, i)]),
        )
    }

    /// Index with the smallest disagreement; near-ties go to the lowest index.
    pub fn medoid(&self) -> Option<usize> {
        let costs: Vec<f64> = (0..self.len()).map(|i| self.disagreement(i)).collect();
        let best = costs.iter().cloned().fold(f64::INFINITY, f64::min);
        let slack = MEDOID_TIE_EPS * best.abs().max(1.0);
        costs.iter().position(|&c| c - best <= slack)
    }
}

/// BLEU variance over N >= 2 samples, in `[0, N(N-1)]`.
pub fn bleuvar<S: AsRef<[String]> + Sync>(samples: &[S]) -> Result<UncertaintyValue, UncertaintyError> {
    if samples.len() < 2 {
        return Err(UncertaintyError::TooFewSamples(samples.len()));
    }
    Ok(UncertaintyValue {
        measure: Measure::BleuVar,
        value: PairwiseBleu::compute(samples).variance(),
    })
}

/// The sample with the smallest bidirectional BLEU disagreement with the rest.
pub fn medoid_select<S: AsRef<[String]> + Sync>(samples: &[S]) -> Result<(usize, &S), UncertaintyError> {
    let index = PairwiseBleu::compute(samples)
        .medoid()
        .ok_or(UncertaintyError::NoSamples)?;
    Ok((index, &samples[index]))
}

fn deterministic_parts(set: &SampleSet, measure: Measure) -> Result<&Hypothesis, UncertaintyError> {
    set.deterministic
        .as_ref()
        .ok_or_else(|| set.missing("deterministic", measure))
}

/// Scores one sample set with the chosen measure. BS and SP report the
/// deterministic decode; BLEUVar reports the medoid sample. When a reference
/// is present its sentence BLEU against the output is recorded.
pub fn score_sample_set(set: &SampleSet, measure: Measure) -> Result<ScoredSentence, UncertaintyError> {
    let (output, uncertainty) = match measure {
        Measure::Bs => {
            let det = deterministic_parts(set, measure)?;
            let lp = det
                .logprob
                .ok_or_else(|| set.missing("deterministic.logprob", measure))?;
            (det.tokens.clone(), beam_score(lp, det.tokens.len())?)
        }
        Measure::Sp => {
            let det = deterministic_parts(set, measure)?;
            if set.samples.is_empty() {
                return Err(set.missing("samples", measure));
            }
            let logprobs: Vec<f64> = set
                .samples
                .iter()
                .enumerate()
                .map(|(i, h)| h.logprob.ok_or_else(|| set.missing(format!("samples[{i}].logprob"), measure)))
                .collect::<Result<_, _>>()?;
            (det.tokens.clone(), sequence_probability(&logprobs, det.tokens.len())?)
        }
        Measure::BleuVar => {
            if set.samples.len() < 2 {
                return Err(UncertaintyError::TooFewSamples(set.samples.len()));
            }
            let tokens = set.sample_tokens();
            let table = PairwiseBleu::compute(&tokens);
            let index = table.medoid().ok_or(UncertaintyError::NoSamples)?;
            (
                tokens[index].clone(),
                UncertaintyValue {
                    measure,
                    value: table.variance(),
                },
            )
        }
    };
    Ok(ScoredSentence::new(set.id.clone(), output, uncertainty, set.reference.clone())?)
}
