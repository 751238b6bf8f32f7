//! Multi-class classification metrics.
//!
//! Build a [`ConfusionMatrix`] from label pairs, probability vectors or a
//! pre-tallied grid, then compute accuracy, balanced accuracy, macro and micro
//! precision/recall/F1, Matthews correlation, Cohen's Kappa and cross-entropy.
//! Count-based metrics are exact fractions; degenerate inputs produce an
//! explicit [`MetricValue::Undefined`].

pub mod confusion;
pub mod ingest;
pub mod metrics;
pub mod proba;
pub mod rational;
pub mod report;

pub use confusion::{ClassRegistry, ConfusionError, ConfusionMatrix, OneVsRest, Tally};
pub use ingest::{Delimiter, IngestError, ReadOptions};
pub use metrics::{
    evaluate, Averaging, ClassWeights, EvalOptions, Evaluation, MetricValue, MetricsError,
    PerClassBreakdown, UndefinedReason,
};
pub use proba::{ProbRecord, ProbaError, Reduction, XentOptions};
pub use rational::Rational;
pub use report::{ComparisonReport, EvaluationReport, ReportOptions, WeightsSource};
