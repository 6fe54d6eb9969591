//! Metrics, policy comparisons, trace coverage, run reports and the
//! last-value predictability harness.

mod compare;
mod metrics;
mod predict;
mod report;
mod tables;

pub use compare::{
    compare_policies, coverage_row, coverage_table, ComparisonRow, CoverageColumn, CoverageError, CoverageRow,
    PolicyOutcome, CEILING_TOLERANCE, IDENTITY_TOLERANCE,
};
pub use metrics::{mean_smape, smape, SavingMetrics};
pub use predict::{
    filter_min_duration, last_value_predict, prediction_report, Prediction, PredictionReport, Target, TargetError,
};
pub use report::{emit_report, MpiRow, RankRow, ReportFormat, RunReport, Summary};
pub use tables::{comparison_csv, coverage_csv, prediction_csv};
