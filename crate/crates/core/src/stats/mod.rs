//! Statistical tests for comparing clustering algorithms over many datasets,
//! plus the Ljung-Box portmanteau test used to check the transform for
//! spurious autocorrelation.

mod ljung_box;
mod nonparametric;
mod report;
pub mod special;

use serde::{Deserialize, Serialize};

pub use ljung_box::{default_max_lag, ljung_box, sample_autocorrelation};
pub use nonparametric::{
    friedman_test, holm_adjust, holm_thresholds, rank_row, rank_rows, wilcoxon_exact_p,
    wilcoxon_normal_p, wilcoxon_signed_rank, wilcoxon_signed_rank_with, HolmDecision,
    WilcoxonMethod,
};
pub use report::{
    aggregate, format_p_value, pairwise_all, pairwise_control, render_summary_markdown,
    AlgorithmSummary, PairwiseReport, PairwiseRow, ScoreTable,
};

pub const DEFAULT_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub alpha: f64,
    pub rejected: bool,
    pub method: String,
    /// The input carried no information (e.g. all paired differences zero).
    pub degenerate: bool,
}

impl TestResult {
    pub(crate) fn new(method: &str, statistic: f64, p_value: f64, alpha: f64) -> Self {
        let p_value = p_value.clamp(0.0, 1.0);
        Self {
            statistic,
            p_value,
            alpha,
            rejected: p_value < alpha,
            method: method.to_owned(),
            degenerate: false,
        }
    }

    pub(crate) fn degenerate(method: &str, alpha: f64) -> Self {
        Self {
            degenerate: true,
            ..Self::new(method, 0.0, 1.0, alpha)
        }
    }
}
