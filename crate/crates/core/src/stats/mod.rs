//! Inferential statistics: exact binomial asymmetry tests, BH-FDR, and
//! contingency analysis of class-by-sentiment tables.

pub mod binomial;
pub mod contingency;
pub mod fdr;
pub mod profile;
pub mod special;

use thiserror::Error;

pub use binomial::{binomial_test, clopper_pearson, run_asymmetry_battery, AsymmetryBattery, BinomialTestResult};
pub use contingency::{
    chi_square, contingency_analysis, cramers_v, pairwise_class_tests, standardized_residuals, ChiSquare,
    ContingencyResult, PairwiseResult,
};
pub use fdr::bh_fdr;
pub use profile::{sentiment_profile, GroupKey, SentimentCounts, SentimentProfile};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("no non-neutral mentions to test")]
    EmptyNonNeutral,
    #[error("p-value {0} outside [0, 1]")]
    InvalidP(f64),
    #[error("all-zero {axis} margin at index {index}")]
    DegenerateMargin { axis: &'static str, index: usize },
    #[error("table must be at least 2x2, got {rows}x{cols}")]
    TableTooSmall { rows: usize, cols: usize },
    #[error("table rows have different lengths")]
    RaggedTable,
    #[error("{labels} row labels for {rows} rows")]
    LabelMismatch { labels: usize, rows: usize },
    #[error("Cramér's V undefined for chi2={chi2}, n={n}, {rows}x{cols}")]
    InvalidEffectSize { chi2: f64, n: u64, rows: usize, cols: usize },
    #[error("empty group")]
    EmptyGroup,
}
