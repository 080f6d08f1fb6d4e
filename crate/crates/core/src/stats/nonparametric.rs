use super::special::{chi2_sf, normal_sf};
use super::TestResult;
use crate::{Error, Result};

/// Ranks `1..=n` in ascending order of `values`; ties share the average of
/// the ranks they cover. Also returns the tie-group sizes.
fn average_ranks(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // positions i..j hold ranks i+1..=j
        let avg = (i + 1 + j) as f64 / 2.0;
        for &o in &order[i..j] {
            ranks[o] = avg;
        }
        if j - i > 1 {
            ties.push(j - i);
        }
        i = j;
    }
    (ranks, ties)
}

/// Rank 1 for the highest score; ties get the average rank.
pub fn rank_row(scores: &[f64]) -> Vec<f64> {
    let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
    average_ranks(&neg).0
}

pub fn rank_rows(scores: &[Vec<f64>]) -> Vec<Vec<f64>> {
    scores.iter().map(|r| rank_row(r)).collect()
}

fn check_table(scores: &[Vec<f64>]) -> Result<usize> {
    let k = scores.first().map_or(0, Vec::len);
    if scores.len() < 2 || k < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 datasets and 2 algorithms, got {}x{k}",
            scores.len()
        )));
    }
    for (i, r) in scores.iter().enumerate() {
        if r.len() != k {
            return Err(Error::Shape(format!("row {i} has {} scores, expected {k}", r.len())));
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("row {i} has a missing or non-finite score")));
        }
    }
    Ok(k)
}

/// Friedman test on an `N x k` score table (higher is better).
///
/// `chi2 = 12 N / (k (k + 1)) * (sum_j Rbar_j^2 - k (k + 1)^2 / 4)`, with
/// `k - 1` degrees of freedom. Ranks are half-integers, so the bracket is
/// evaluated exactly on doubled rank sums.
pub fn friedman_test(scores: &[Vec<f64>], alpha: f64) -> Result<TestResult> {
    let k = check_table(scores)?;
    let n = scores.len();
    let mut doubled = vec![0i128; k];
    for row in rank_rows(scores) {
        for (s, r) in doubled.iter_mut().zip(row) {
            *s += (2.0 * r).round() as i128;
        }
    }
    let (n_i, k_i) = (n as i128, k as i128);
    let bracket: i128 = doubled.iter().map(|s| s * s).sum::<i128>() - n_i * n_i * k_i * (k_i + 1) * (k_i + 1);
    let statistic = 3.0 * bracket as f64 / (k * (k + 1) * n) as f64;
    let p = chi2_sf(statistic, (k - 1) as f64);
    Ok(TestResult::new("friedman", statistic, p, alpha))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WilcoxonMethod {
    /// Exact below 26 non-zero differences, normal approximation above.
    #[default]
    Auto,
    Exact,
    Normal,
}

pub const EXACT_CUTOFF: usize = 25;

struct SignedRanks {
    ranks: Vec<f64>,
    positive: Vec<bool>,
    ties: Vec<usize>,
}

fn signed_ranks(x: &[f64], y: &[f64]) -> Result<SignedRanks> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("paired samples of lengths {} and {}", x.len(), y.len())));
    }
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).filter(|d| *d != 0.0).collect();
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite paired difference".into()));
    }
    let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let (ranks, ties) = average_ranks(&abs);
    Ok(SignedRanks {
        ranks,
        positive: d.iter().map(|v| *v > 0.0).collect(),
        ties,
    })
}

fn w_min(sr: &SignedRanks) -> f64 {
    let plus: f64 = sr.ranks.iter().zip(&sr.positive).filter(|p| *p.1).map(|p| p.0).sum();
    let total: f64 = sr.ranks.iter().sum();
    plus.min(total - plus)
}

/// Exact two-sided p of the signed-rank statistic: the distribution of the
/// positive rank sum over all `2^m` sign patterns, counted with a
/// generating-function recursion on doubled (integer) ranks.
fn exact_p(sr: &SignedRanks) -> f64 {
    let doubled: Vec<usize> = sr.ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let max: usize = doubled.iter().sum();
    let mut counts = vec![0f64; max + 1];
    counts[0] = 1.0;
    let mut reach = 0;
    for &r in &doubled {
        for s in (0..=reach).rev() {
            if counts[s] != 0.0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let w = (2.0 * w_min(sr)).round() as usize;
    let tail: f64 = counts[..=w].iter().sum();
    let total = 2f64.powi(doubled.len() as i32);
    (2.0 * tail / total).min(1.0)
}

/// Normal approximation with tie and continuity corrections.
fn normal_p(sr: &SignedRanks) -> f64 {
    let m = sr.ranks.len() as f64;
    let mean = m * (m + 1.0) / 4.0;
    let tie_term: f64 = sr.ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / 48.0;
    let var = m * (m + 1.0) * (2.0 * m + 1.0) / 24.0 - tie_term;
    if var <= 0.0 {
        return 1.0;
    }
    let z = ((w_min(sr) - mean).abs() - 0.5).max(0.0) / var.sqrt();
    (2.0 * normal_sf(z)).min(1.0)
}

pub fn wilcoxon_signed_rank(x: &[f64], y: &[f64], alpha: f64) -> Result<TestResult> {
    wilcoxon_signed_rank_with(x, y, alpha, WilcoxonMethod::Auto)
}

/// Two-sided Wilcoxon signed-rank test of `x - y`. Zero differences are
/// dropped; the statistic is `min(W+, W-)`.
pub fn wilcoxon_signed_rank_with(x: &[f64], y: &[f64], alpha: f64, method: WilcoxonMethod) -> Result<TestResult> {
    let sr = signed_ranks(x, y)?;
    if sr.ranks.is_empty() {
        return Ok(TestResult::degenerate("wilcoxon", alpha));
    }
    let exact = match method {
        WilcoxonMethod::Auto => sr.ranks.len() <= EXACT_CUTOFF,
        WilcoxonMethod::Exact => true,
        WilcoxonMethod::Normal => false,
    };
    let (p, name) = if exact {
        (exact_p(&sr), "wilcoxon-exact")
    } else {
        (normal_p(&sr), "wilcoxon-normal")
    };
    Ok(TestResult::new(name, w_min(&sr), p, alpha))
}

pub fn wilcoxon_exact_p(x: &[f64], y: &[f64]) -> Result<f64> {
    Ok(wilcoxon_signed_rank_with(x, y, 0.05, WilcoxonMethod::Exact)?.p_value)
}

pub fn wilcoxon_normal_p(x: &[f64], y: &[f64]) -> Result<f64> {
    Ok(wilcoxon_signed_rank_with(x, y, 0.05, WilcoxonMethod::Normal)?.p_value)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HolmDecision {
    /// Position of the p-value in the input.
    pub index: usize,
    pub p_value: f64,
    pub threshold: f64,
    pub significant: bool,
}

/// `alpha / (m - i + 1)` for `i = 1..=m`.
pub fn holm_thresholds(m: usize, alpha: f64) -> Vec<f64> {
    (1..=m).map(|i| alpha / (m - i + 1) as f64).collect()
}

/// Holm step-down procedure. Output is sorted by ascending p-value; once a
/// p-value fails its threshold, it and every later one are non-significant.
pub fn holm_adjust(p_values: &[f64], alpha: f64) -> Result<Vec<HolmDecision>> {
    if p_values.is_empty() {
        return Err(Error::InsufficientData("Holm correction of zero p-values".into()));
    }
    if let Some(p) = p_values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::Domain(format!("p-value {p} outside [0, 1]")));
    }
    let mut order: Vec<usize> = (0..p_values.len()).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]));
    let thresholds = holm_thresholds(p_values.len(), alpha);
    let mut still_rejecting = true;
    Ok(order
        .into_iter()
        .zip(thresholds)
        .map(|(index, threshold)| {
            let p = p_values[index];
            still_rejecting &= p < threshold;
            HolmDecision {
                index,
                p_value: p,
                threshold,
                significant: still_rejecting,
            }
        })
        .collect())
}
