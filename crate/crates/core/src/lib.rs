//! Sequence-level uncertainty for machine translation outputs.
//!
//! * [`bleu`]: tokenization, sentence/corpus BLEU, length penalty.
//! * [`uncertainty`]: Beam Score, Sequence Probability, BLEU Variance and
//!   medoid output selection over a [`SampleSet`].
//! * [`eval`]: performance-retention curves, referral baselines, histograms,
//!   OOD separation (AUROC) and length-binned uncertainty.
//! * [`data_io`]: JSONL sample files, parallel corpora, CSV/JSON reports.
//! * [`simulator`]: a seeded synthetic decoder with controllable disagreement.
//!
//! Library values stay in internal units (BLEU in `[0, 1]`, BLEUVar in
//! `[0, N(N-1)]`); `display` helpers apply the ×100 reporting scale.

pub mod bleu;
pub mod data_io;
pub mod eval;
pub mod simulator;
pub mod stats;
pub mod uncertainty;

pub use bleu::{corpus_bleu, length_penalty, sentence_bleu, tokenize, BleuScore, TokenSeq};
pub use eval::{Metric, Referral, RetentionCurve, ScoredSentence};
pub use simulator::{simulate, SimConfig};
pub use uncertainty::{
    beam_score, bleuvar, medoid_select, score_sample_set, sequence_probability, Hypothesis, Measure,
    SampleSet, UncertaintyValue,
};
