use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Sampling rate of every record stream, in Hz.
pub const SAMPLE_RATE_HZ: u32 = 4;
pub const SPEED_RANGE: (f64, f64) = (0.0, 180.0);
pub const ANGLE_RANGE: (f64, f64) = (-720.0, 720.0);
pub const DEFAULT_OBS_DIM: usize = 16;
pub const DEFAULT_K: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EpisodeId(pub u32);

impl fmt::Display for EpisodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for EpisodeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.trim()
            .parse::<u32>()
            .map(EpisodeId)
            .map_err(|e| Error::parse("episode_id", format!("{s:?}: {e}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SplitId {
    D1,
    D2,
    D3,
}

impl SplitId {
    pub const ALL: [SplitId; 3] = [SplitId::D1, SplitId::D2, SplitId::D3];
}

impl fmt::Display for SplitId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitId::D1 => "D1",
            SplitId::D2 => "D2",
            SplitId::D3 => "D3",
        })
    }
}

impl FromStr for SplitId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "D1" => Ok(SplitId::D1),
            "D2" => Ok(SplitId::D2),
            "D3" => Ok(SplitId::D3),
            other => Err(Error::parse("split", format!("unknown split {other:?}"))),
        }
    }
}

/// One synchronized sample of observation, speed (km/h) and steering angle (deg).
#[derive(Debug, Clone, PartialEq)]
pub struct TimedRecord {
    pub step_index: usize,
    pub obs: Vec<f64>,
    pub speed: f64,
    pub angle: f64,
}

impl TimedRecord {
    pub fn validate(&self, obs_dim: usize) -> Result<()> {
        if !(SPEED_RANGE.0..=SPEED_RANGE.1).contains(&self.speed) {
            return Err(Error::validation(format!(
                "step {}: speed {} outside [0, 180]",
                self.step_index, self.speed
            )));
        }
        if !(ANGLE_RANGE.0..=ANGLE_RANGE.1).contains(&self.angle) {
            return Err(Error::validation(format!(
                "step {}: angle {} outside [-720, 720]",
                self.step_index, self.angle
            )));
        }
        if self.obs.len() != obs_dim {
            return Err(Error::validation(format!(
                "step {}: expected {} observation features, got {}",
                self.step_index,
                obs_dim,
                self.obs.len()
            )));
        }
        if self.obs.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation(format!(
                "step {}: non-finite observation",
                self.step_index
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Turn {
    Left,
    Straight,
    Right,
}

/// Hidden per-step difficulty, kept for validation only. Never a model input.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDifficulty {
    pub intersection: Option<Turn>,
    pub congestion: f64,
    pub visibility: f64,
    pub curvature: f64,
    pub lead_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpisodeMeta {
    pub config_digest: String,
    pub difficulty: Vec<StepDifficulty>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub id: EpisodeId,
    pub seed: u64,
    pub records: Vec<TimedRecord>,
    pub meta: EpisodeMeta,
}

impl Episode {
    /// Builds an episode, checking record ranges, dimensions and step continuity.
    pub fn new(id: EpisodeId, seed: u64, records: Vec<TimedRecord>, meta: EpisodeMeta) -> Result<Self> {
        let ep = Episode {
            id,
            seed,
            records,
            meta,
        };
        ep.validate()?;
        Ok(ep)
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.obs_dim();
        for (i, rec) in self.records.iter().enumerate() {
            rec.validate(dim)
                .map_err(|e| Error::validation(format!("episode {}: {e}", self.id)))?;
            if i > 0 && rec.step_index != self.records[i - 1].step_index + 1 {
                return Err(Error::validation(format!(
                    "episode {}: step_index not contiguous at position {i}",
                    self.id
                )));
            }
        }
        Ok(())
    }

    /// Checks the episode is long enough to yield one fully labeled window.
    pub fn check_length(&self, k: usize, m: usize) -> Result<()> {
        if self.records.len() < k + m + 1 {
            return Err(Error::validation(format!(
                "episode {} has {} records, need at least {}",
                self.id,
                self.records.len(),
                k + m + 1
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn obs_dim(&self) -> usize {
        self.records.first().map_or(0, |r| r.obs.len())
    }
}

/// Model input and target for one time step `t`.
///
/// `frames` holds the k+1 observation vectors V[t-k..=t] row-major, so frame `j`
/// occupies `frames[j*obs_dim..(j+1)*obs_dim]`. The past channels hold the k values
/// strictly before `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    pub frames: Vec<f64>,
    pub obs_dim: usize,
    pub past_angles: Vec<f64>,
    pub past_speeds: Vec<f64>,
    pub target_angle: f64,
    pub target_speed: f64,
    pub origin: (EpisodeId, usize),
}

impl WindowSample {
    pub fn k(&self) -> usize {
        self.past_angles.len()
    }

    pub fn n_frames(&self) -> usize {
        self.frames.len() / self.obs_dim.max(1)
    }

    pub fn frame(&self, j: usize) -> &[f64] {
        &self.frames[j * self.obs_dim..(j + 1) * self.obs_dim]
    }

    pub fn current_frame(&self) -> &[f64] {
        self.frame(self.n_frames() - 1)
    }

    pub fn episode_id(&self) -> EpisodeId {
        self.origin.0
    }

    pub fn t(&self) -> usize {
        self.origin.1
    }
}
