//! Driving and hazard networks on a shared recurrent backbone shape, their
//! training loops and checkpoints.

pub mod backbone;
pub mod batch;
pub mod checkpoint;
pub mod driver;
pub mod hazard;
pub mod train;

pub use backbone::{Arch, Backbone, Head};
pub use batch::Batch;
pub use driver::{constant_mean_mae, mae, train_driver, train_driver_with, DriverModel, DriverNet, Mae, Prediction};
pub use hazard::{train_failure, train_failure_with, HazardModel, HazardNet};
pub use train::{EpochStats, TrainConfig};
