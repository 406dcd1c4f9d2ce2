use crate::artifact::bytes_digest;
use crate::config::KeyValues;
use crate::error::{Error, Result};

/// Knobs of the procedural driving world.
///
/// Congestion and visibility drift within an episode around their configured
/// level; the `*_spread` fields set the stationary standard deviation of that drift.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldConfig {
    pub episode_length: usize,
    /// Per-step volatility of the road-curvature random walk (1/m).
    pub curvature_volatility: f64,
    /// Mean-reversion rate of road curvature towards straight road, per step.
    pub curvature_reversion: f64,
    /// Expected intersections per 100 steps.
    pub intersection_rate: f64,
    pub congestion_level: f64,
    pub congestion_spread: f64,
    pub visibility: f64,
    pub visibility_spread: f64,
    pub obs_noise_scale: f64,
    /// Steering gain G_a (deg of wheel per unit curvature).
    pub steer_gain: f64,
    /// Free-flow speed, km/h.
    pub base_speed: f64,
    /// Peak wheel-angle offset of a turn at an intersection, deg.
    pub turn_angle: f64,
    /// Length of an intersection zone in steps.
    pub zone_length: usize,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            episode_length: 300,
            curvature_volatility: 0.0008,
            curvature_reversion: 0.05,
            intersection_rate: 1.5,
            congestion_level: 0.4,
            congestion_spread: 0.25,
            visibility: 0.7,
            visibility_spread: 0.25,
            obs_noise_scale: 0.6,
            steer_gain: 2000.0,
            base_speed: 60.0,
            turn_angle: 40.0,
            zone_length: 8,
            seed: 0,
        }
    }
}

pub const WORLD_KEYS: &[&str] = &[
    "episode_length",
    "curvature_volatility",
    "curvature_reversion",
    "intersection_rate",
    "congestion_level",
    "congestion_spread",
    "visibility",
    "visibility_spread",
    "obs_noise_scale",
    "steer_gain",
    "base_speed",
    "turn_angle",
    "zone_length",
    "seed",
];

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::validation(format!("{name} = {v} must lie in [0, 1]")))
            }
        };
        let non_neg = |name: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::validation(format!("{name} = {v} must be finite and >= 0")))
            }
        };
        unit("congestion_level", self.congestion_level)?;
        unit("visibility", self.visibility)?;
        unit("curvature_reversion", self.curvature_reversion)?;
        non_neg("curvature_volatility", self.curvature_volatility)?;
        non_neg("intersection_rate", self.intersection_rate)?;
        non_neg("congestion_spread", self.congestion_spread)?;
        non_neg("visibility_spread", self.visibility_spread)?;
        non_neg("obs_noise_scale", self.obs_noise_scale)?;
        non_neg("steer_gain", self.steer_gain)?;
        non_neg("turn_angle", self.turn_angle)?;
        if !(0.0..=180.0).contains(&self.base_speed) {
            return Err(Error::validation("base_speed must lie in [0, 180]"));
        }
        if self.intersection_rate > 100.0 {
            return Err(Error::validation("intersection_rate cannot exceed 100 per 100 steps"));
        }
        if self.zone_length == 0 {
            return Err(Error::validation("zone_length must be at least 1"));
        }
        Ok(())
    }

    /// Checks the episode length against the windowing parameters.
    pub fn validate_for(&self, k: usize, m: usize) -> Result<()> {
        self.validate()?;
        if self.episode_length < k + m + 1 {
            return Err(Error::validation(format!(
                "episode_length {} shorter than k + m + 1 = {}",
                self.episode_length,
                k + m + 1
            )));
        }
        Ok(())
    }

    /// Reads keys (bare or under `world.`) over the defaults.
    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        kv.reject_unknown("world", WORLD_KEYS)?;
        let s = Some("world");
        let mut c = WorldConfig::default();
        kv.read_into(s, "episode_length", &mut c.episode_length)?;
        kv.read_into(s, "curvature_volatility", &mut c.curvature_volatility)?;
        kv.read_into(s, "curvature_reversion", &mut c.curvature_reversion)?;
        kv.read_into(s, "intersection_rate", &mut c.intersection_rate)?;
        kv.read_into(s, "congestion_level", &mut c.congestion_level)?;
        kv.read_into(s, "congestion_spread", &mut c.congestion_spread)?;
        kv.read_into(s, "visibility", &mut c.visibility)?;
        kv.read_into(s, "visibility_spread", &mut c.visibility_spread)?;
        kv.read_into(s, "obs_noise_scale", &mut c.obs_noise_scale)?;
        kv.read_into(s, "steer_gain", &mut c.steer_gain)?;
        kv.read_into(s, "base_speed", &mut c.base_speed)?;
        kv.read_into(s, "turn_angle", &mut c.turn_angle)?;
        kv.read_into(s, "zone_length", &mut c.zone_length)?;
        kv.read_into(s, "seed", &mut c.seed)?;
        c.validate()?;
        Ok(c)
    }

    /// Canonical `key = value` rendering.
    pub fn to_text(&self) -> String {
        format!(
            "episode_length = {}\ncurvature_volatility = {}\ncurvature_reversion = {}\n\
             intersection_rate = {}\ncongestion_level = {}\ncongestion_spread = {}\n\
             visibility = {}\nvisibility_spread = {}\nobs_noise_scale = {}\nsteer_gain = {}\n\
             base_speed = {}\nturn_angle = {}\nzone_length = {}\nseed = {}\n",
            self.episode_length,
            self.curvature_volatility,
            self.curvature_reversion,
            self.intersection_rate,
            self.congestion_level,
            self.congestion_spread,
            self.visibility,
            self.visibility_spread,
            self.obs_noise_scale,
            self.steer_gain,
            self.base_speed,
            self.turn_angle,
            self.zone_length,
            self.seed,
        )
    }

    /// Short digest of the canonical rendering, excluding the seed.
    pub fn digest(&self) -> String {
        let mut c = self.clone();
        c.seed = 0;
        bytes_digest(c.to_text().as_bytes())[..16].to_string()
    }
}
