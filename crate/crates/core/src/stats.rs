//! Small numeric helpers whose results do not depend on input order.

use std::cmp::Ordering;

/// Sum that is bitwise invariant under permutation of `values`: terms are
/// sorted before a left-to-right fold.
pub fn ordered_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut terms: Vec<f64> = values.into_iter().collect();
    terms.sort_by(f64::total_cmp);
    terms.into_iter().fold(0.0, |acc, x| acc + x)
}

/// Mean computed with [`ordered_sum`]. `None` for an empty input.
pub fn ordered_mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let terms: Vec<f64> = values.into_iter().collect();
    if terms.is_empty() {
        return None;
    }
    let n = terms.len() as f64;
    Some(ordered_sum(terms) / n)
}

/// 1-based ranks with ties assigned their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]].total_cmp(&values[order[start]]) == Ordering::Equal {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// Spearman rank correlation. `None` if lengths differ, fewer than two points,
/// or either side is constant.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    let n = xs.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}
