//! Hazard-ranked takeover against interval and MC-dropout baselines.

pub mod report;
pub mod scores;
pub mod takeover;

pub use report::{evaluate_policies, DriverMetrics, GainRow, Report, ThresholdEval};
pub use scores::{auc, score_interval, score_learned, score_oracle, score_uncertainty, PolicyScoreTrace, ScoredWindow};
pub use takeover::{
    budget_units, coverage_order, default_budgets, interval_curve, parse_budgets, reduction_curve, safety_gain,
    safety_gain_at, simulate_takeover, Counting, Reduction, StepFailures, TakeoverResult, GAIN_BUDGETS,
};
