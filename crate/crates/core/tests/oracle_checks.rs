//! Library results against brute-force oracles on random inputs.

mod support;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seqcert_core::bleu::{corpus_bleu, sentence_bleu, tokenize, TokenSeq};
use seqcert_core::eval::{
    baseline_orderings, curve_for_order, default_fractions, density_pairs, histogram, length_bins,
    ood_separation, retained_count, retention_curve, Metric, Referral, ScoredSentence,
};
use seqcert_core::simulator::{simulate, SimConfig};
use seqcert_core::stats::spearman;
use seqcert_core::uncertainty::{bleuvar, medoid_select, score_sample_set, Measure};
use support::oracle;

fn random_sentence(rng: &mut ChaCha8Rng, max_len: usize, vocab: usize) -> Vec<String> {
    let len = rng.random_range(0..=max_len);
    (0..len).map(|_| format!("v{}", rng.random_range(0..vocab))).collect()
}

fn strs(tokens: &[String]) -> Vec<&str> {
    tokens.iter().map(String::as_str).collect()
}

#[test]
fn sentence_and_corpus_bleu_match_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut pairs = Vec::new();
    while pairs.len() < 100 {
        let c = random_sentence(&mut rng, 12, 10);
        let r = random_sentence(&mut rng, 12, 10);
        if r.is_empty() {
            continue;
        }
        let got = sentence_bleu(&c, &r, 4).unwrap().value;
        let want = oracle::sentence_bleu(&strs(&c), &strs(&r), 4);
        assert!((got - want).abs() <= 1e-12, "{c:?} vs {r:?}: {got} != {want}");
        pairs.push((c, r));
    }
    let got = corpus_bleu(pairs.iter().map(|(c, r)| (c, r)), 4).unwrap().value;
    let refs: Vec<_> = pairs.iter().map(|(c, r)| (strs(c), strs(r))).collect();
    assert!((got - oracle::corpus_bleu(&refs, 4)).abs() <= 1e-12);
}

#[test]
fn corpus_bleu_is_order_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut pairs: Vec<(Vec<String>, Vec<String>)> = (0..30)
        .map(|_| (random_sentence(&mut rng, 10, 6), {
            let mut r = random_sentence(&mut rng, 10, 6);
            r.push("end".into());
            r
        }))
        .collect();
    let a = corpus_bleu(pairs.iter().map(|(c, r)| (c, r)), 4).unwrap();
    pairs.reverse();
    let b = corpus_bleu(pairs.iter().map(|(c, r)| (c, r)), 4).unwrap();
    assert_eq!(a, b);
}

proptest! {
    #[test]
    fn bleu_bounds_and_identity(
        c in prop::collection::vec(0u8..5, 0..10),
        r in prop::collection::vec(0u8..5, 1..10),
    ) {
        let c: Vec<String> = c.iter().map(|w| format!("x{w}")).collect();
        let r: Vec<String> = r.iter().map(|w| format!("x{w}")).collect();
        let s = sentence_bleu(&c, &r, 4).unwrap();
        prop_assert!((0.0..=1.0).contains(&s.value));
        prop_assert!(s.precisions.iter().all(|p| (0.0..=1.0).contains(p)));
        if !c.is_empty() {
            prop_assert!(s.brevity_penalty > 0.0 && s.brevity_penalty <= 1.0);
        }
        prop_assert_eq!(sentence_bleu(&r, &r, 4).unwrap().value, 1.0);
    }

    #[test]
    fn tokenize_round_trips(words in prop::collection::vec("[a-z,.!]{1,6}", 0..10), sep in "[ \t\n]{1,3}") {
        let text = words.join(&sep);
        let seq = tokenize(&text);
        prop_assert_eq!(seq.len(), words.len());
        prop_assert_eq!(tokenize(&seq.detokenize()), seq.clone());
        prop_assert!(seq.iter().all(|t| !t.is_empty()));
    }
}

#[test]
fn bleuvar_and_medoid_match_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..300 {
        let n = rng.random_range(1..=8);
        let samples: Vec<Vec<String>> = (0..n).map(|_| random_sentence(&mut rng, 8, 5)).collect();
        let as_strs: Vec<Vec<&str>> = samples.iter().map(|s| strs(s)).collect();
        if n >= 2 {
            let got = bleuvar(&samples).unwrap().value;
            let want = oracle::bleuvar(&as_strs);
            assert!((got - want).abs() < 1e-9);
        }
        assert_eq!(medoid_select(&samples).unwrap().0, oracle::medoid(&as_strs));
    }
}

fn sim_rows(noise: f64, count: usize, seed: u64, measure: Measure) -> Vec<ScoredSentence> {
    let cfg = SimConfig {
        sentence_count: count,
        noise_rate: noise,
        length_range: (3, 25),
        seed,
        ..SimConfig::default()
    };
    simulate(&cfg)
        .unwrap()
        .iter()
        .map(|s| score_sample_set(&s.set, measure).unwrap())
        .collect()
}

/// Rows with per-sentence noise drawn uniformly, so quality varies across the
/// corpus independently of length.
fn mixed_noise_rows(count: usize, seed: u64) -> Vec<ScoredSentence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let cfg = SimConfig {
                sentence_count: 1,
                noise_rate: rng.random_range(0.0..0.9),
                length_range: (3, 30),
                seed: seed.wrapping_mul(1000).wrapping_add(i as u64),
                ..SimConfig::default()
            };
            let mut set = simulate(&cfg).unwrap().remove(0).set;
            set.id = format!("m{i:04}");
            score_sample_set(&set, Measure::BleuVar).unwrap()
        })
        .collect()
}

/// Twenty rows with noise 0.0, 0.045, ..., 0.855 and quality `1 - noise`.
fn graded_noise_rows() -> Vec<ScoredSentence> {
    (0..20)
        .map(|i| {
            let noise = i as f64 * 0.045;
            let cfg = SimConfig {
                sentence_count: 1,
                noise_rate: noise,
                length_range: (25, 30),
                seed: 40 + i as u64,
                ..SimConfig::default()
            };
            let mut set = simulate(&cfg).unwrap().remove(0).set;
            set.id = format!("g{i:02}");
            let mut row = score_sample_set(&set, Measure::BleuVar).unwrap();
            row.sentence_quality = Some(1.0 - noise);
            row
        })
        .collect()
}

#[test]
fn retention_matches_sort_and_average_oracle() {
    let rows = graded_noise_rows();
    let fractions = default_fractions();
    let curve = retention_curve(&rows, Metric::MeanSentBleu, &fractions).unwrap();

    let mut sorted: Vec<(f64, String, f64)> = rows
        .iter()
        .map(|r| (r.uncertainty.value, r.id.clone(), r.sentence_quality.unwrap()))
        .collect();
    sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    for p in &curve.points {
        let k = (p.fraction * 20.0 - 1e-9).ceil() as usize;
        let want: f64 = sorted[..k].iter().map(|t| t.2).sum::<f64>() / k as f64;
        assert_eq!(p.retained, k);
        assert!((p.value - want).abs() < 1e-12);
    }
    for w in curve.points.windows(2) {
        assert!(w[1].value <= w[0].value + 1e-12, "{:?}", curve.points);
    }
}

#[test]
fn oracle_ordering_dominates_reverse() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let fractions = default_fractions();
    for _ in 0..20 {
        let rows: Vec<ScoredSentence> = (0..100)
            .map(|i| {
                let mut r = sim_rows(0.0, 1, 0, Measure::BleuVar).remove(0);
                r.id = format!("r{i:03}");
                r.sentence_quality = Some(rng.random::<f64>());
                r
            })
            .collect();
        let mut best: Vec<usize> = (0..100).collect();
        best.sort_by(|&a, &b| {
            rows[b].sentence_quality.partial_cmp(&rows[a].sentence_quality).unwrap()
        });
        let worst: Vec<usize> = best.iter().rev().copied().collect();
        let hi = curve_for_order(&rows, &best, Metric::MeanSentBleu, &fractions, "oracle").unwrap();
        let lo = curve_for_order(&rows, &worst, Metric::MeanSentBleu, &fractions, "reverse").unwrap();
        for (a, b) in hi.points.iter().zip(&lo.points) {
            assert!(a.value >= b.value);
        }
        assert_eq!(hi.points.last().unwrap().value, lo.points.last().unwrap().value);
    }
}

#[test]
fn endpoint_identity_across_orderings() {
    let rows = mixed_noise_rows(40, 4);
    let fractions = default_fractions();
    for metric in [Metric::CorpusBleu, Metric::MeanSentBleu] {
        let curves: Vec<_> = [Referral::Uncertainty, Referral::SentLength, Referral::Random(1), Referral::Random(2)]
            .into_iter()
            .map(|r| baseline_orderings(&rows, r, metric, &fractions).unwrap())
            .collect();
        let end = curves[0].at(1.0).unwrap();
        assert!(curves.iter().all(|c| c.at(1.0).unwrap().to_bits() == end.to_bits()));
    }
}

#[test]
fn uncertainty_ordering_beats_length_ordering() {
    let rows = mixed_noise_rows(200, 12);
    let fractions = default_fractions();
    let unc = baseline_orderings(&rows, Referral::Uncertainty, Metric::CorpusBleu, &fractions).unwrap();
    let len = baseline_orderings(&rows, Referral::SentLength, Metric::CorpusBleu, &fractions).unwrap();
    for (a, b) in unc.points.iter().zip(&len.points) {
        if a.fraction <= 0.5 {
            assert!(a.value > b.value, "at {}: {} vs {}", a.fraction, a.value, b.value);
        }
    }
}

#[test]
fn histogram_matches_direct_binning() {
    let low = sim_rows(0.05, 60, 1, Measure::BleuVar);
    let high = sim_rows(0.7, 60, 2, Measure::BleuVar);
    let values: Vec<(String, f64)> = low
        .iter()
        .map(|r| ("in".to_string(), r.uncertainty.display()))
        .chain(high.iter().map(|r| ("ood".to_string(), r.uncertainty.display())))
        .collect();
    let bins = 10;
    let h = histogram(&values, bins).unwrap();
    let lo = values.iter().map(|v| v.1).fold(f64::INFINITY, f64::min);
    let hi = values.iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max);
    for label in ["in", "ood"] {
        let mut want = vec![0u64; bins];
        for (_, v) in values.iter().filter(|(l, _)| l == label) {
            let mut b = ((v - lo) / (hi - lo) * bins as f64) as usize;
            if b == bins {
                b -= 1;
            }
            want[b] += 1;
        }
        assert_eq!(h.counts(label).unwrap(), want.as_slice());
    }
    // bimodal: in-distribution mass in the lower half, OOD in the upper half
    let lower: u64 = h.counts("in").unwrap()[..bins / 2].iter().sum();
    let upper: u64 = h.counts("ood").unwrap()[bins / 2..].iter().sum();
    assert!(lower >= 55 && upper >= 55, "{h:?}");
}

#[test]
fn separation_matches_pairwise_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..100 {
        let a: Vec<f64> = (0..rng.random_range(1..30)).map(|_| rng.random_range(0..8) as f64).collect();
        let b: Vec<f64> = (0..rng.random_range(1..30)).map(|_| rng.random_range(0..8) as f64).collect();
        let got = ood_separation(&a, &b).unwrap();
        assert!((got - oracle::auroc_pairs(&a, &b)).abs() < 1e-12);
    }
}

#[test]
fn length_bins_match_group_by() {
    let rows = mixed_noise_rows(120, 3);
    let bins = length_bins(&rows);
    let edges = [(1, 10), (11, 20), (21, 30), (31, 40), (41, 50), (51, usize::MAX)];
    for (bin, (lo, hi)) in bins.iter().zip(edges) {
        let group: Vec<f64> = rows
            .iter()
            .filter(|r| (lo..=hi).contains(&r.output.len()))
            .map(|r| r.uncertainty.value * 100.0)
            .collect();
        assert_eq!(bin.count, group.len());
        match bin.mean {
            Some(m) => assert!((m - group.iter().sum::<f64>() / group.len() as f64).abs() < 1e-9),
            None => assert!(group.is_empty()),
        }
    }
    assert_eq!(bins.iter().map(|b| b.count).sum::<usize>(), rows.len());
}

#[test]
fn density_is_negatively_rank_correlated() {
    let rows = mixed_noise_rows(150, 21);
    let pairs = density_pairs(&rows).unwrap();
    assert!(pairs.windows(2).all(|w| w[0].0 <= w[1].0));
    let (u, q): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let rho = spearman(&u, &q).unwrap();
    assert!(rho <= -0.5, "spearman {rho}");
}

#[test]
fn sentence_length_referral_endpoint() {
    let rows = mixed_noise_rows(50, 17);
    let full = retention_curve(&rows, Metric::CorpusBleu, &[1.0]).unwrap();
    let by_len = baseline_orderings(&rows, Referral::SentLength, Metric::CorpusBleu, &[0.5, 1.0]).unwrap();
    assert_eq!(by_len.at(1.0), full.at(1.0));
    assert_eq!(by_len.points[0].retained, retained_count(0.5, 50));
    let shortest = by_len.points[0].retained;
    let mut lens: Vec<usize> = rows.iter().map(|r| r.output.len()).collect();
    lens.sort();
    assert!(lens[shortest - 1] <= lens[shortest]);
}

#[test]
fn duplicate_of_identical_sample_keeps_zero() {
    let s: Vec<TokenSeq> = vec![tokenize("a b c"); 3];
    let mut more = s.clone();
    more.push(tokenize("a b c"));
    assert_eq!(bleuvar(&s).unwrap().value, 0.0);
    assert_eq!(bleuvar(&more).unwrap().value, 0.0);
}
