//! Failure signals of a driver against the oracle, horizon labels and label files.

pub mod io;
pub mod labels;

pub use labels::{
    build_failure_dataset, check_leakage, horizon_labels, label_horizon, label_predictions, label_step,
    predict_episodes, sgn, ClassBalance, LabelRecord, LabelSet, ManeuverPredictor, PredictedWindows, StepLabel,
    Thresholds,
};
