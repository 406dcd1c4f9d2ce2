//! Reverse-mode automatic differentiation, layers, dropout and the Adam optimizer.

pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod matrix;
pub mod params;

pub use gradcheck::{grad_check, GradCheckReport};
pub use graph::{DropoutMode, Gradients, Graph, Var};
pub use layers::{Linear, Lstm};
pub use matrix::Matrix;
pub use params::{AdamConfig, ParamId, ParameterStore};
