//! Synthetic stochastic decoder.
//!
//! Each sentence gets a reference drawn uniformly from a vocabulary of `w<k>`
//! words; every sample is the reference with each token independently
//! substituted with probability `noise_rate`. OOD sentences use the other half
//! of the vocabulary and noise `max(noise_rate, 0.6)`. Substitution only, so
//! lengths never change.
//!
//! Log-probabilities are pseudo values, `-(number of substituted tokens)`.
//! They are ordered consistently with corruption and nothing more.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bleu::TokenSeq;
use crate::uncertainty::{Hypothesis, SampleSet};

/// Noise floor applied to OOD sentences.
pub const OOD_NOISE_FLOOR: f64 = 0.6;

const REFERENCE_STREAM: u64 = u64::MAX;
const DETERMINISTIC_STREAM: u64 = u64::MAX - 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("noise_rate {0} is outside [0, 1]")]
    NoiseRate(f64),
    #[error("ood_fraction {0} is outside [0, 1]")]
    OodFraction(f64),
    #[error("samples per sentence must be at least 2, got {0}")]
    Samples(usize),
    #[error("length range ({0}, {1}) must satisfy 1 <= min <= max")]
    LengthRange(usize, usize),
    #[error("vocab_size {vocab} too small: need at least {needed}")]
    Vocab { vocab: usize, needed: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub vocab_size: usize,
    pub sentence_count: usize,
    /// Inclusive `(min, max)` token counts.
    pub length_range: (usize, usize),
    pub noise_rate: f64,
    pub samples: usize,
    pub seed: u64,
    pub ood_fraction: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            vocab_size: 1000,
            sentence_count: 200,
            length_range: (5, 40),
            noise_rate: 0.1,
            samples: 10,
            seed: 0,
            ood_fraction: 0.0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(0.0..=1.0).contains(&self.noise_rate) {
            return Err(SimError::NoiseRate(self.noise_rate));
        }
        if !(0.0..=1.0).contains(&self.ood_fraction) {
            return Err(SimError::OodFraction(self.ood_fraction));
        }
        if self.samples < 2 {
            return Err(SimError::Samples(self.samples));
        }
        let (min, max) = self.length_range;
        if min < 1 || min > max {
            return Err(SimError::LengthRange(min, max));
        }
        // each vocabulary in use needs two words so a substitution exists
        let needed = if self.ood_fraction > 0.0 { 4 } else { 2 };
        if self.vocab_size < needed {
            return Err(SimError::Vocab {
                vocab: self.vocab_size,
                needed,
            });
        }
        Ok(())
    }

    /// Sentence `i` is OOD when `floor((i + 1) f) > floor(i f)`, which spreads
    /// `floor(count * f)` OOD sentences evenly through the corpus.
    pub fn is_ood(&self, index: usize) -> bool {
        let f = self.ood_fraction;
        ((index + 1) as f64 * f).floor() > (index as f64 * f).floor()
    }

    /// Word-index range `[lo, hi)` for in-distribution or OOD sentences.
    fn vocabulary(&self, ood: bool) -> (usize, usize) {
        if self.ood_fraction == 0.0 {
            (0, self.vocab_size)
        } else if ood {
            (self.vocab_size / 2, self.vocab_size)
        } else {
            (0, self.vocab_size / 2)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedSet {
    pub set: SampleSet,
    pub ood: bool,
}

/// Independent generator for `(seed, sentence, stream)`.
fn stream_rng(seed: u64, sentence: u64, stream: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&sentence.to_le_bytes());
    key[16..24].copy_from_slice(&stream.to_le_bytes());
    key[24..].copy_from_slice(b"seqcert\0");
    ChaCha8Rng::from_seed(key)
}

fn word(k: usize) -> String {
    format!("w{k}")
}

/// Substitutes each token with probability `noise`; returns the corrupted
/// word indices and how many were changed.
fn corrupt(reference: &[usize], (lo, hi): (usize, usize), noise: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, usize) {
    let mut changed = 0;
    let out = reference
        .iter()
        .map(|&w| {
            if rng.random::<f64>() < noise {
                changed += 1;
                let pick = lo + rng.random_range(0..hi - lo - 1);
                if pick >= w {
                    pick + 1
                } else {
                    pick
                }
            } else {
                w
            }
        })
        .collect();
    (out, changed)
}

fn hypothesis(words: &[usize], changed: usize) -> Hypothesis {
    let tokens = TokenSeq::new(words.iter().map(|&k| word(k)).collect()).expect("nonempty words");
    Hypothesis::new(tokens, Some(-(changed as f64)))
}

/// Generates sentence `index`; a pure function of `(config, index)`.
pub fn simulate_sentence(config: &SimConfig, index: usize) -> SimulatedSet {
    let ood = config.is_ood(index);
    let vocab = config.vocabulary(ood);
    let noise = if ood {
        config.noise_rate.max(OOD_NOISE_FLOOR)
    } else {
        config.noise_rate
    };
    let i = index as u64;

    let mut rng = stream_rng(config.seed, i, REFERENCE_STREAM);
    let (min, max) = config.length_range;
    let len = rng.random_range(min..=max);
    let reference: Vec<usize> = (0..len).map(|_| rng.random_range(vocab.0..vocab.1)).collect();

    let samples = (0..config.samples as u64)
        .map(|s| {
            let (words, changed) = corrupt(&reference, vocab, noise, &mut stream_rng(config.seed, i, s));
            hypothesis(&words, changed)
        })
        .collect();
    let (det_words, det_changed) = corrupt(
        &reference,
        vocab,
        noise,
        &mut stream_rng(config.seed, i, DETERMINISTIC_STREAM),
    );

    let reference = hypothesis(&reference, 0).tokens;
    let prefix = if ood { "ood" } else { "in" };
    SimulatedSet {
        set: SampleSet {
            id: format!("{prefix}-{index:06}"),
            source: reference.detokenize(),
            samples,
            deterministic: Some(hypothesis(&det_words, det_changed)),
            reference: Some(reference),
        },
        ood,
    }
}

/// Generates the whole corpus. Sentences are built in parallel; the output is
/// identical to sequential generation.
pub fn simulate(config: &SimConfig) -> Result<Vec<SimulatedSet>, SimError> {
    config.validate()?;
    Ok((0..config.sentence_count)
        .into_par_iter()
        .map(|i| simulate_sentence(config, i))
        .collect())
}
