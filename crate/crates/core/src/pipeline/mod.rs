//! Stage runners over an output directory of artifacts.

pub mod config;
pub mod stages;

pub use config::{PipelineConfig, ThresholdSelection};
pub use stages::{
    eval_files, eval_layout, eval_stage, gen, label_stage, report_stage, run_all, score_stage, split,
    train_driver_stage, train_failure_stage, Layout,
};
