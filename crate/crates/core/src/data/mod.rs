//! Records, episodes, windowing, normalization and the three-way split.

pub mod io;
pub mod normalize;
pub mod split;
pub mod types;
pub mod window;

pub use normalize::{Channel, Normalizer};
pub use split::{split_dataset, SplitSet};
pub use types::{Episode, EpisodeId, EpisodeMeta, SplitId, StepDifficulty, TimedRecord, Turn, WindowSample};
pub use window::{make_windows, windows_for};
