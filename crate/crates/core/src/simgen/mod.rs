//! Procedural driving world with a deterministic human-oracle driver.
//!
//! Difficulty is planted so that it is partly observable (congestion, visibility,
//! distance to the next intersection) and partly latent (the branch taken at each
//! intersection), which makes driving failures inevitable but predictable.

pub mod config;
pub mod world;

pub use config::WorldConfig;
pub use world::{
    episode_seed, generate_dataset, generate_episode, oracle_action, simulate_world, WorldState, ZonePosition,
};
