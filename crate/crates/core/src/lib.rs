//! Scene-drivability laboratory.
//!
//! A recurrent driving model is trained on synthetic drives, its mistakes against
//! the human oracle are labelled as failures over a future horizon, a hazard
//! classifier learns to predict those failures, and hazard-ranked human takeover
//! is compared against regular-interval and MC-dropout baselines.

pub mod artifact;
pub mod autodiff;
pub mod config;
pub mod data;
pub mod error;
pub mod evaluate;
pub mod failure;
pub mod model;
pub mod pipeline;
pub mod seeds;
pub mod simgen;

pub use error::{Error, Result};
