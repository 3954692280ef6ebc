//! Brute-force reference implementations used to check the library.
//!
//! Nothing here calls into `seqcert_core`; inputs are plain string slices so the
//! counting path shares no code with the implementation under test.

#![allow(dead_code)]

/// All n-grams of order `n`, in position order, as owned token vectors.
pub fn ngrams(tokens: &[&str], n: usize) -> Vec<Vec<String>> {
    if n == 0 || tokens.len() < n {
        return Vec::new();
    }
    (0..=tokens.len() - n)
        .map(|i| tokens[i..i + n].iter().map(|t| t.to_string()).collect())
        .collect()
}

fn occurrences(haystack: &[Vec<String>], needle: &[String]) -> usize {
    haystack.iter().filter(|g| g.as_slice() == needle).count()
}

/// Clipped match count and candidate n-gram total for one order, by linear scans.
pub fn clipped_counts(cand: &[&str], refr: &[&str], n: usize) -> (u64, u64) {
    let cand_grams = ngrams(cand, n);
    let ref_grams = ngrams(refr, n);
    let mut seen: Vec<Vec<String>> = Vec::new();
    let mut matched = 0u64;
    for g in &cand_grams {
        if seen.contains(g) {
            continue;
        }
        seen.push(g.clone());
        let in_cand = occurrences(&cand_grams, g);
        let in_ref = occurrences(&ref_grams, g);
        matched += in_cand.min(in_ref) as u64;
    }
    (matched, cand_grams.len() as u64)
}

fn combine(precisions: &[f64], cand_len: f64, ref_len: f64) -> f64 {
    if cand_len == 0.0 {
        return 0.0;
    }
    let bp = if cand_len < ref_len {
        (1.0 - ref_len / cand_len).exp()
    } else {
        1.0
    };
    let product: f64 = precisions.iter().product();
    bp * product.powf(1.0 / precisions.len() as f64)
}

/// Sentence BLEU with add-one smoothing on orders >= 2.
pub fn sentence_bleu(cand: &[&str], refr: &[&str], max_order: usize) -> f64 {
    assert!(!refr.is_empty());
    if cand.is_empty() {
        return 0.0;
    }
    let precisions: Vec<f64> = (1..=max_order)
        .map(|n| {
            let (m, t) = clipped_counts(cand, refr, n);
            if n == 1 {
                m as f64 / t as f64
            } else {
                (m as f64 + 1.0) / (t as f64 + 1.0)
            }
        })
        .collect();
    combine(&precisions, cand.len() as f64, refr.len() as f64)
}

/// Unsmoothed corpus BLEU over pooled counts.
pub fn corpus_bleu(pairs: &[(Vec<&str>, Vec<&str>)], max_order: usize) -> f64 {
    let mut matched = vec![0u64; max_order];
    let mut total = vec![0u64; max_order];
    let mut cand_len = 0usize;
    let mut ref_len = 0usize;
    for (c, r) in pairs {
        cand_len += c.len();
        ref_len += r.len();
        for n in 1..=max_order {
            let (m, t) = clipped_counts(c, r, n);
            matched[n - 1] += m;
            total[n - 1] += t;
        }
    }
    let precisions: Vec<f64> = matched
        .iter()
        .zip(&total)
        .map(|(&m, &t)| if t == 0 { 0.0 } else { m as f64 / t as f64 })
        .collect();
    combine(&precisions, cand_len as f64, ref_len as f64)
}

/// Pairwise BLEU with the empty-reference convention used for sample sets.
pub fn pair_bleu(cand: &[&str], refr: &[&str]) -> f64 {
    if refr.is_empty() {
        return if cand.is_empty() { 1.0 } else { 0.0 };
    }
    sentence_bleu(cand, refr, 4)
}

pub fn bleuvar(samples: &[Vec<&str>]) -> f64 {
    let mut total = 0.0;
    for i in 0..samples.len() {
        for j in 0..samples.len() {
            if i != j {
                let d = 1.0 - pair_bleu(&samples[i], &samples[j]);
                total += d * d;
            }
        }
    }
    total
}

/// Exhaustive argmin of the bidirectional disagreement; near-equal costs go to
/// the lowest index.
pub fn medoid(samples: &[Vec<&str>]) -> usize {
    let costs: Vec<f64> = (0..samples.len())
        .map(|i| {
            (0..samples.len())
                .filter(|&j| j != i)
                .map(|j| {
                    (1.0 - pair_bleu(&samples[i], &samples[j]))
                        + (1.0 - pair_bleu(&samples[j], &samples[i]))
                })
                .sum()
        })
        .collect();
    let best = costs.iter().cloned().fold(f64::INFINITY, f64::min);
    costs
        .iter()
        .position(|&c| c - best <= 1e-12)
        .expect("nonempty")
}

/// AUROC by enumerating every (in, ood) pair.
pub fn auroc_pairs(in_dist: &[f64], ood: &[f64]) -> f64 {
    let mut wins = 0.0;
    for &a in in_dist {
        for &b in ood {
            if b > a {
                wins += 1.0;
            } else if b == a {
                wins += 0.5;
            }
        }
    }
    wins / (in_dist.len() * ood.len()) as f64
}
