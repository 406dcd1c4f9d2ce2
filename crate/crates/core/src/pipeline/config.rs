use std::path::Path;

use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::evaluate::{default_budgets, parse_budgets, Counting};
use crate::failure::Thresholds;
use crate::model::TrainConfig;
use crate::seeds;
use crate::simgen::config::WORLD_KEYS;
use crate::simgen::WorldConfig;

/// Which threshold settings a run labels and evaluates.
#[derive(Debug, Clone, PartialEq)]
pub enum ThresholdSelection {
    Middle,
    All,
    Custom(Thresholds),
}

impl ThresholdSelection {
    pub fn resolve(&self) -> Vec<Thresholds> {
        match self {
            ThresholdSelection::Middle => vec![Thresholds::middle()],
            ThresholdSelection::All => Thresholds::canonical().to_vec(),
            ThresholdSelection::Custom(t) => vec![*t],
        }
    }
}

impl std::str::FromStr for ThresholdSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "middle" => Ok(ThresholdSelection::Middle),
            "all" => Ok(ThresholdSelection::All),
            other => Ok(ThresholdSelection::Custom(other.parse()?)),
        }
    }
}

impl std::fmt::Display for ThresholdSelection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ThresholdSelection::Middle => f.write_str("middle"),
            ThresholdSelection::All => f.write_str("all"),
            ThresholdSelection::Custom(t) => write!(f, "{t}"),
        }
    }
}

const TAG_SPLIT: u64 = 20;
const TAG_DRIVER: u64 = 30;
const TAG_HAZARD: u64 = 40;
const TAG_MC: u64 = 50;

/// Everything a full run needs. Sub-seeds are derived from `seed` unless set
/// explicitly through `driver.seed` / `hazard.seed`.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    pub episodes: usize,
    pub world: WorldConfig,
    pub k: usize,
    pub m: usize,
    pub driver: TrainConfig,
    pub hazard: TrainConfig,
    pub thresholds: ThresholdSelection,
    pub budgets: Vec<f64>,
    pub mc_samples: usize,
    pub counting: Counting,
}

const TOP_KEYS: &[&str] = &[
    "seed",
    "episodes",
    "k",
    "m",
    "thresholds",
    "budgets",
    "mc_samples",
    "counting",
];

impl PipelineConfig {
    pub fn with_seed(seed: u64) -> Self {
        let k = crate::data::types::DEFAULT_K;
        PipelineConfig {
            seed,
            episodes: 1000,
            world: WorldConfig {
                seed,
                ..Default::default()
            },
            k,
            m: 8,
            driver: TrainConfig {
                seed: seeds::derive(seed, TAG_DRIVER),
                k,
                ..Default::default()
            },
            hazard: TrainConfig {
                seed: seeds::derive(seed, TAG_HAZARD),
                k,
                ..Default::default()
            },
            thresholds: ThresholdSelection::Middle,
            budgets: default_budgets(),
            mc_samples: crate::evaluate::scores::DEFAULT_MC_SAMPLES,
            counting: Counting::Steps,
        }
    }

    pub fn split_seed(&self) -> u64 {
        seeds::derive(self.seed, TAG_SPLIT)
    }

    pub fn mc_seed(&self) -> u64 {
        seeds::derive(self.seed, TAG_MC)
    }

    /// Hazard training config for one threshold setting.
    pub fn hazard_for(&self, th: Thresholds) -> TrainConfig {
        let tag = (th.angle.to_bits()).rotate_left(32) ^ th.speed.to_bits();
        TrainConfig {
            seed: seeds::derive(self.hazard.seed, tag),
            ..self.hazard.clone()
        }
    }

    /// Parses a config; `seed_override` (the `--seed` flag) wins over the file.
    pub fn from_kv(kv: &KeyValues, seed_override: Option<u64>) -> Result<Self> {
        for key in kv.keys() {
            let known = TOP_KEYS.contains(&key)
                || WORLD_KEYS.contains(&key)
                || ["world.", "driver.", "hazard."].iter().any(|p| key.starts_with(p));
            if !known {
                return Err(Error::validation(format!("unknown config key {key}")));
            }
        }
        let seed = match seed_override {
            Some(s) => s,
            None => kv.get(None, "seed")?.unwrap_or(0),
        };
        let mut c = PipelineConfig::with_seed(seed);
        let mut world_kv = kv.clone();
        world_kv.set("world.seed", seed);
        c.world = WorldConfig::from_kv(&world_kv)?;
        kv.read_into(None, "episodes", &mut c.episodes)?;
        kv.read_into(None, "k", &mut c.k)?;
        kv.read_into(None, "m", &mut c.m)?;
        kv.read_into(None, "mc_samples", &mut c.mc_samples)?;
        kv.read_into(None, "thresholds", &mut c.thresholds)?;
        kv.read_into(None, "counting", &mut c.counting)?;
        if let Some(b) = kv.raw("budgets") {
            c.budgets = parse_budgets(b)?;
        }
        c.driver.k = c.k;
        c.hazard.k = c.k;
        c.driver = c.driver.read_section(kv, "driver")?;
        c.hazard = c.hazard.read_section(kv, "hazard")?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: Option<&Path>, seed_override: Option<u64>) -> Result<Self> {
        match path {
            Some(p) => Self::from_kv(&KeyValues::load(p)?, seed_override),
            None => Self::from_kv(&KeyValues::default(), seed_override),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.episodes < 3 {
            return Err(Error::InsufficientEpisodes(self.episodes));
        }
        if self.driver.k != self.k || self.hazard.k != self.k {
            return Err(Error::validation("driver.k and hazard.k must equal k"));
        }
        if self.mc_samples < 2 {
            return Err(Error::validation("mc_samples must be at least 2"));
        }
        if self.budgets.is_empty() {
            return Err(Error::validation("no budgets given"));
        }
        self.world.validate_for(self.k, self.m)?;
        self.driver.validate()?;
        self.hazard.validate()
    }
}
