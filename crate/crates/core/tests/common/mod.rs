//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use kgc::trainer::Model;

/// Probability of drawing `perm` by sequential weighted draws without
/// replacement (chain rule).
pub fn sequential_draw_probability(weights: &[f64], perm: &[usize]) -> f64 {
    let mut remaining: f64 = weights.iter().sum();
    let mut p = 1.0;
    for &i in perm {
        p *= weights[i] / remaining;
        remaining -= weights[i];
    }
    p
}

/// All permutations of `0..n` in lexicographic order.
pub fn all_permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                rec(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

pub fn permutation_index(perms: &[Vec<usize>], perm: &[usize]) -> usize {
    perms.iter().position(|p| p == perm).expect("valid permutation")
}

/// Pearson chi-square statistic.
pub fn chi_square(observed: &[u64], expected: &[f64]) -> f64 {
    observed
        .iter()
        .zip(expected)
        .map(|(&o, &e)| (o as f64 - e).powi(2) / e)
        .sum()
}

/// Upper critical value of the chi-square distribution.
pub fn chi_square_critical(df: usize, alpha: f64) -> f64 {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    ChiSquared::new(df as f64).unwrap().inverse_cdf(1.0 - alpha)
}

/// AUC by counting every positive/negative pair: 2 for concordant, 1 for a
/// tie, divided by `2 * n_pos * n_neg`.
pub fn pairwise_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut doubled = 0u64;
    let mut pairs = 0u64;
    for (i, &yi) in labels.iter().enumerate() {
        if !yi {
            continue;
        }
        for (j, &yj) in labels.iter().enumerate() {
            if yj {
                continue;
            }
            pairs += 1;
            if scores[i] > scores[j] {
                doubled += 2;
            } else if scores[i] == scores[j] {
                doubled += 1;
            }
        }
    }
    doubled as f64 / (2 * pairs) as f64
}

/// Step-wise average precision from explicit ranks: sample `i` sits at rank
/// `1 + #{higher score} + #{equal score, earlier index}`.
pub fn ranked_average_precision(scores: &[f64], labels: &[bool]) -> f64 {
    let n = scores.len();
    let ahead = |i: usize, j: usize| scores[j] > scores[i] || (scores[j] == scores[i] && j < i);
    let mut sum = 0.0;
    let mut n_pos = 0;
    for i in (0..n).filter(|&i| labels[i]) {
        n_pos += 1;
        let rank = 1 + (0..n).filter(|&j| ahead(i, j)).count();
        let pos_at_or_before = 1 + (0..n).filter(|&j| labels[j] && ahead(i, j)).count();
        sum += pos_at_or_before as f64 / rank as f64;
    }
    sum / n_pos as f64
}

/// Central finite-difference gradient of the single-sample loss.
pub fn finite_difference_grad(model: &Model, x: &[f64], positive: bool, h: f64) -> Vec<f64> {
    (0..model.params.len())
        .map(|k| {
            let mut plus = model.clone();
            plus.params[k] += h;
            let mut minus = model.clone();
            minus.params[k] -= h;
            (plus.loss(x, positive) - minus.loss(x, positive)) / (2.0 * h)
        })
        .collect()
}

/// Cohort training counts and expert scores per class, listed independently
/// of the library constants.
pub const COHORT_TRAIN: [(&str, usize, u32); 7] = [
    ("normal", 800, 30),
    ("a", 88, 30),
    ("b", 340, 30),
    ("c", 84, 70),
    ("d", 11, 40),
    ("e", 42, 90),
    ("f", 27, 10),
];

/// Sum of per-sample scores by one-at-a-time accumulation.
pub fn accumulated_score_sum() -> u64 {
    let mut total = 0u64;
    for &(_, count, score) in &COHORT_TRAIN {
        for _ in 0..count {
            total += u64::from(score);
        }
    }
    total
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

/// `||a - b|| / max(||a||, ||b||)`.
pub fn vector_relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        norm(&diff)
    } else {
        norm(&diff) / scale
    }
}
