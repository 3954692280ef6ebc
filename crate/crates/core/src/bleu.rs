//! Whitespace tokenization, smoothed sentence BLEU, pooled corpus BLEU and the
//! beam-search length penalty.
//!
//! All scores are kept in `[0, 1]`. Reporting layers multiply by 100.

use std::collections::HashMap;
use std::fmt;
use std::ops::Deref;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Standard BLEU n-gram order.
pub const DEFAULT_MAX_ORDER: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BleuError {
    #[error("reference is empty; BLEU is undefined")]
    EmptyReference,
    #[error("max_order must be at least 1")]
    ZeroOrder,
    #[error("corpus contains no sentence pairs")]
    EmptyCorpus,
    #[error("token {0} is empty")]
    EmptyToken(usize),
}

/// A tokenized sentence. Tokens are never empty strings.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct TokenSeq(Vec<String>);

impl TokenSeq {
    pub fn new(tokens: Vec<String>) -> Result<Self, BleuError> {
        if let Some(i) = tokens.iter().position(|t| t.is_empty()) {
            return Err(BleuError::EmptyToken(i));
        }
        Ok(Self(tokens))
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn into_tokens(self) -> Vec<String> {
        self.0
    }

    /// Joins tokens with single spaces.
    pub fn detokenize(&self) -> String {
        self.0.join(" ")
    }
}

impl Deref for TokenSeq {
    type Target = [String];

    fn deref(&self) -> &[String] {
        &self.0
    }
}

impl AsRef<[String]> for TokenSeq {
    fn as_ref(&self) -> &[String] {
        &self.0
    }
}

impl TryFrom<Vec<String>> for TokenSeq {
    type Error = BleuError;

    fn try_from(tokens: Vec<String>) -> Result<Self, BleuError> {
        Self::new(tokens)
    }
}

impl From<TokenSeq> for Vec<String> {
    fn from(seq: TokenSeq) -> Self {
        seq.0
    }
}

impl fmt::Display for TokenSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.detokenize())
    }
}

/// Splits on runs of unicode whitespace. No case folding, punctuation stays
/// attached to its word.
pub fn tokenize(text: &str) -> TokenSeq {
    TokenSeq(text.split_whitespace().map(str::to_owned).collect())
}

/// Multiset of n-grams for orders `1..=max_order`.
#[derive(Debug, Clone)]
pub struct NGramProfile<'a> {
    max_order: usize,
    counts: Vec<HashMap<&'a [String], u64>>,
}

impl<'a> NGramProfile<'a> {
    pub fn new(tokens: &'a [String], max_order: usize) -> Self {
        let counts = (1..=max_order)
            .map(|n| {
                let mut grams = HashMap::new();
                if tokens.len() >= n {
                    for gram in tokens.windows(n) {
                        *grams.entry(gram).or_insert(0) += 1;
                    }
                }
                grams
            })
            .collect();
        Self { max_order, counts }
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    /// Counts for a given order (1-based).
    pub fn order(&self, n: usize) -> &HashMap<&'a [String], u64> {
        &self.counts[n - 1]
    }

    /// Total number of n-grams of order `n`, i.e. `max(0, len - n + 1)`.
    pub fn total(&self, n: usize) -> u64 {
        self.counts[n - 1].values().sum()
    }

    /// Matches of `self` (candidate) against `reference`, clipped by the
    /// reference counts.
    pub fn clipped_matches(&self, reference: &NGramProfile<'_>, n: usize) -> u64 {
        let theirs = reference.order(n);
        self.order(n)
            .iter()
            .map(|(gram, &count)| count.min(theirs.get(gram).copied().unwrap_or(0)))
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Smoothing {
    /// Plain clipped precisions.
    None,
    /// `(m + 1) / (c + 1)` for orders >= 2; unigram precision unsmoothed.
    AddOne,
}

impl Smoothing {
    pub fn tag(self) -> &'static str {
        match self {
            Smoothing::None => "none",
            Smoothing::AddOne => "add-one-order2plus",
        }
    }
}

/// Sufficient statistics for BLEU: clipped matches and candidate totals per
/// order plus the two lengths. Corpus BLEU sums these across pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BleuStats {
    pub matches: Vec<u64>,
    pub totals: Vec<u64>,
    pub candidate_len: u64,
    pub reference_len: u64,
}

impl BleuStats {
    pub fn zero(max_order: usize) -> Self {
        Self {
            matches: vec![0; max_order],
            totals: vec![0; max_order],
            candidate_len: 0,
            reference_len: 0,
        }
    }

    pub fn from_pair(
        candidate: &[String],
        reference: &[String],
        max_order: usize,
    ) -> Result<Self, BleuError> {
        if max_order == 0 {
            return Err(BleuError::ZeroOrder);
        }
        if reference.is_empty() {
            return Err(BleuError::EmptyReference);
        }
        let cand = NGramProfile::new(candidate, max_order);
        let refr = NGramProfile::new(reference, max_order);
        Ok(Self {
            matches: (1..=max_order).map(|n| cand.clipped_matches(&refr, n)).collect(),
            totals: (1..=max_order).map(|n| cand.total(n)).collect(),
            candidate_len: candidate.len() as u64,
            reference_len: reference.len() as u64,
        })
    }

    pub fn max_order(&self) -> usize {
        self.matches.len()
    }

    pub fn accumulate(&mut self, other: &BleuStats) {
        debug_assert_eq!(self.max_order(), other.max_order());
        for (a, b) in self.matches.iter_mut().zip(&other.matches) {
            *a += b;
        }
        for (a, b) in self.totals.iter_mut().zip(&other.totals) {
            *a += b;
        }
        self.candidate_len += other.candidate_len;
        self.reference_len += other.reference_len;
    }

    pub fn score(&self, smoothing: Smoothing) -> BleuScore {
        let order = self.max_order();
        if self.candidate_len == 0 {
            return BleuScore {
                value: 0.0,
                precisions: vec![0.0; order],
                brevity_penalty: 0.0,
            };
        }
        let precisions: Vec<f64> = self
            .matches
            .iter()
            .zip(&self.totals)
            .enumerate()
            .map(|(i, (&m, &t))| match smoothing {
                Smoothing::AddOne if i > 0 => (m as f64 + 1.0) / (t as f64 + 1.0),
                _ if t == 0 => 0.0,
                _ => m as f64 / t as f64,
            })
            .collect();
        let brevity_penalty = if self.candidate_len < self.reference_len {
            (1.0 - self.reference_len as f64 / self.candidate_len as f64).exp()
        } else {
            1.0
        };
        let value = if precisions.contains(&0.0) {
            0.0
        } else {
            let log_mean = precisions.iter().map(|p| p.ln()).sum::<f64>() / order as f64;
            (brevity_penalty * log_mean.exp()).min(1.0)
        };
        BleuScore {
            value,
            precisions,
            brevity_penalty,
        }
    }
}

/// A BLEU result in `[0, 1]`.
///
/// `brevity_penalty` lies in `(0, 1]` for any nonempty candidate; an empty
/// candidate reports 0 for every field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BleuScore {
    pub value: f64,
    pub precisions: Vec<f64>,
    pub brevity_penalty: f64,
}

impl BleuScore {
    pub fn display(&self) -> f64 {
        self.value * 100.0
    }
}

/// Sentence-level BLEU with add-one smoothing on orders >= 2.
pub fn sentence_bleu(
    candidate: &[String],
    reference: &[String],
    max_order: usize,
) -> Result<BleuScore, BleuError> {
    Ok(BleuStats::from_pair(candidate, reference, max_order)?.score(Smoothing::AddOne))
}

/// Corpus BLEU from pooled clipped counts and pooled lengths, unsmoothed.
pub fn corpus_bleu<'a, I, S>(pairs: I, max_order: usize) -> Result<BleuScore, BleuError>
where
    I: IntoIterator<Item = (&'a S, &'a S)>,
    S: AsRef<[String]> + ?Sized + 'a,
{
    let mut pooled = BleuStats::zero(max_order);
    let mut any = false;
    for (cand, refr) in pairs {
        pooled.accumulate(&BleuStats::from_pair(cand.as_ref(), refr.as_ref(), max_order)?);
        any = true;
    }
    if !any {
        return Err(BleuError::EmptyCorpus);
    }
    Ok(pooled.score(Smoothing::None))
}

/// `((5 + length) / 6) ^ alpha`.
pub fn length_penalty(length: usize, alpha: f64) -> f64 {
    ((5.0 + length as f64) / 6.0).powf(alpha)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(s: &str) -> TokenSeq {
        tokenize(s)
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(seq("the cat sat").tokens(), ["the", "cat", "sat"]);
        assert!(seq("").is_empty());
        assert_eq!(seq("a  b\tc").tokens(), ["a", "b", "c"]);
        assert_eq!(seq(" Hello, world! ").tokens(), ["Hello,", "world!"]);
        assert_eq!(seq("a\u{3000}b").len(), 2);
    }

    #[test]
    fn token_seq_rejects_empty_token() {
        let err = TokenSeq::new(vec!["a".into(), "".into()]).unwrap_err();
        assert_eq!(err, BleuError::EmptyToken(1));
    }

    #[test]
    fn profile_totals() {
        let s = seq("a b a b c");
        let p = NGramProfile::new(&s, 4);
        assert_eq!(p.total(1), 5);
        assert_eq!(p.total(4), 2);
        assert_eq!(p.order(2)[&s[0..2]], 2);
        let short = seq("a b");
        let p = NGramProfile::new(&short, 4);
        assert!(p.order(3).is_empty());
        assert_eq!(p.total(3), 0);
    }

    #[test]
    fn identity_scores_one() {
        let s = seq("the cat sat down");
        assert_eq!(sentence_bleu(&s, &s, 4).unwrap().value, 1.0);
        let one = seq("x");
        assert_eq!(sentence_bleu(&one, &one, 4).unwrap().value, 1.0);
    }

    #[test]
    fn empty_candidate_scores_zero() {
        let r = seq("the cat");
        assert_eq!(sentence_bleu(&TokenSeq::empty(), &r, 4).unwrap().value, 0.0);
    }

    #[test]
    fn empty_reference_is_error() {
        let c = seq("the cat");
        assert_eq!(
            sentence_bleu(&c, &TokenSeq::empty(), 4).unwrap_err(),
            BleuError::EmptyReference
        );
        assert_eq!(sentence_bleu(&c, &c, 0).unwrap_err(), BleuError::ZeroOrder);
    }

    #[test]
    fn repeated_unigram_is_clipped() {
        // (1/3 * 1/3 * 1/2 * 1)^(1/4), frozen from an exact rational evaluation
        let score = sentence_bleu(&seq("the the the"), &seq("the cat"), 4).unwrap();
        assert!((score.value - 0.485_491_771_707_323_4).abs() < 1e-12);
        assert_eq!(score.precisions, vec![1.0 / 3.0, 1.0 / 3.0, 0.5, 1.0]);
        assert_eq!(score.brevity_penalty, 1.0);
    }

    #[test]
    fn sentence_bleu_is_not_symmetric() {
        let a = seq("the cat sat on the mat");
        let b = seq("the cat");
        let ab = sentence_bleu(&a, &b, 4).unwrap().value;
        let ba = sentence_bleu(&b, &a, 4).unwrap().value;
        assert_ne!(ab, ba);
    }

    #[test]
    fn brevity_penalty_applies_to_short_candidates() {
        let score = sentence_bleu(&seq("a b"), &seq("a b c d"), 4).unwrap();
        assert!((score.brevity_penalty - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn corpus_examples() {
        let refs = [seq("a b c d"), seq("e f g")];
        let pairs: Vec<_> = refs.iter().map(|r| (r, r)).collect();
        assert_eq!(corpus_bleu(pairs, 4).unwrap().value, 1.0);

        let c = seq("the cat sat on a mat");
        let r = seq("the cat is on the mat");
        let single = corpus_bleu([(&c, &r)], 4).unwrap();
        let direct = BleuStats::from_pair(&c, &r, 4).unwrap().score(Smoothing::None);
        assert_eq!(single, direct);

        let none: Vec<(&TokenSeq, &TokenSeq)> = Vec::new();
        assert_eq!(corpus_bleu(none, 4).unwrap_err(), BleuError::EmptyCorpus);
    }

    #[test]
    fn corpus_toy_matches_pooled_oracle() {
        // pooled matches [12, 8, 4, 1] over totals [15, 12, 9, 6], lengths 15 vs 16
        let corpus = [
            (seq("the cat sat on the mat"), seq("the cat is on the mat")),
            (seq("a b c d"), seq("a b c d e f")),
            (seq("x y z x y"), seq("x y z w")),
        ];
        let score = corpus_bleu(corpus.iter().map(|(c, r)| (c, r)), 4).unwrap();
        assert!((score.value - 0.417_074_150_985_078).abs() < 1e-12);
    }

    #[test]
    fn length_penalty_examples() {
        assert_eq!(length_penalty(1, 0.6), 1.0);
        assert!((length_penalty(7, 0.6) - 1.515_716_566_510_398).abs() < 1e-12);
        let zero = length_penalty(0, 0.6);
        assert!(zero < 1.0 && zero > 0.0);
        for len in 0..50 {
            assert_eq!(length_penalty(len, 0.0), 1.0);
            assert!(length_penalty(len + 1, 0.6) > length_penalty(len, 0.6));
        }
    }
}
