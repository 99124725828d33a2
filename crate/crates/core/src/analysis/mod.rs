//! Evaluation statistics and the recommendation and media-bias case studies.

mod agreement;
mod bias;
mod metrics;
mod recommend;

use thiserror::Error;

pub use agreement::{cramers_v, krippendorff_alpha_nominal};
pub use bias::{bias_report, BiasReport, BiasRow, LeaningGroup, OutletMeta};
pub use metrics::{confusion, mean_stderr, metrics, ClassMetrics, ConfusionMatrix, MeanStderr, MetricsReport};
pub use recommend::{
    diversity_entropy, precision_at_k, simulate_recommendation, Leaning, LeaningMap, PoolItem, RecMethod, RecRow,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("gold has {gold} labels but predictions have {pred}")]
    LengthMismatch { gold: usize, pred: usize },
    #[error("no values to evaluate")]
    Empty,
    #[error("no item has two or more ratings")]
    NoPairableValues,
    #[error("contingency table is degenerate ({rows}x{cols} after dropping empty rows and columns)")]
    DegenerateTable { rows: usize, cols: usize },
    #[error("contingency table rows have different lengths")]
    RaggedTable,
    #[error("no leaning mapped for issue `{issue_id}` and stance {stance}")]
    UnmappedPair { issue_id: String, stance: String },
    #[error("invalid recommendation setup: {0}")]
    Recommendation(String),
}
