use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::config::WorldConfig;
use crate::data::types::{ANGLE_RANGE, DEFAULT_OBS_DIM, SPEED_RANGE};
use crate::data::{Episode, EpisodeId, EpisodeMeta, StepDifficulty, TimedRecord, Turn};
use crate::error::Result;
use crate::seeds;

/// Steps over which the driver slows down before an intersection zone.
pub const APPROACH_STEPS: usize = 6;
/// Steps over which the road straightens around an intersection zone.
pub const TAPER_STEPS: f64 = 6.0;
/// Lead gap (m) below which the driver slows proportionally.
pub const SAFE_GAP: f64 = 30.0;
/// Number of pure-noise observation channels at the end of the vector.
pub const NOISE_CHANNELS: usize = 4;
const PREVIEW_MAX: usize = 8;
const DRIFT_SMOOTHING: f64 = 0.1;
const DIST_CLIP: f64 = 20.0;

/// Independent RNG streams, one per source of randomness.
#[derive(Debug, Clone, Copy)]
enum Concern {
    Curvature = 0,
    Arrivals = 1,
    Branches = 2,
    Noise = 3,
    Congestion = 4,
    Visibility = 5,
    LeadGap = 6,
}

fn stream(seed: u64, concern: Concern) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(concern as u64);
    rng
}

/// Seed of the `index`-th episode of a dataset generated from `base`.
pub fn episode_seed(base: u64, index: u64) -> u64 {
    seeds::derive(base, index)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZonePosition {
    /// Steps since the zone began.
    pub progress: usize,
    pub branch: Turn,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    /// Road curvature at the vehicle, 1/m.
    pub curvature: f64,
    /// Steps until the next intersection zone starts; `Some(0)` inside a zone,
    /// `None` if no intersection lies ahead.
    pub steps_to_intersection: Option<usize>,
    /// Set while inside an intersection zone. The branch is never observable.
    pub zone: Option<ZonePosition>,
    /// Gap to the lead vehicle, m.
    pub lead_gap: f64,
    pub congestion: f64,
    pub visibility: f64,
}

fn turn_sign(t: Turn) -> f64 {
    match t {
        Turn::Left => -1.0,
        Turn::Straight => 0.0,
        Turn::Right => 1.0,
    }
}

/// Profile of a manoeuvre across the zone: 0 at the edges, 1 mid-zone.
fn zone_profile(progress: usize, zone_length: usize) -> f64 {
    (PI * (progress as f64 + 0.5) / zone_length as f64).sin()
}

/// The human oracle: wheel angle (deg) and speed (km/h) for a world state.
pub fn oracle_action(state: &WorldState, config: &WorldConfig) -> (f64, f64) {
    let mut angle = config.steer_gain * state.curvature;
    let mut turn_factor = 1.0;
    if let Some(z) = state.zone {
        let profile = zone_profile(z.progress, config.zone_length);
        angle += turn_sign(z.branch) * config.turn_angle * profile;
        if z.branch != Turn::Straight {
            turn_factor = 1.0 - 0.35 * profile;
        }
    }
    let approach = match (state.zone, state.steps_to_intersection) {
        (Some(_), _) => 1.0,
        (None, Some(d)) if d < APPROACH_STEPS => 1.0 - d as f64 / APPROACH_STEPS as f64,
        _ => 0.0,
    };
    let intersection_factor = 1.0 - 0.25 * approach;
    let gap_factor = (state.lead_gap.max(0.0) / SAFE_GAP).min(1.0);
    let speed = config.base_speed
        * (1.0 - 0.5 * state.congestion)
        * (0.6 + 0.4 * state.visibility)
        * gap_factor
        * intersection_factor
        * turn_factor;
    (
        angle.clamp(ANGLE_RANGE.0, ANGLE_RANGE.1),
        speed.clamp(SPEED_RANGE.0, SPEED_RANGE.1),
    )
}

/// Smoothed Ornstein-Uhlenbeck drift with reversion `rate` and stationary std
/// close to `spread`. The exponential smoothing keeps step-to-step changes small.
fn drift_series(rng: &mut ChaCha8Rng, n: usize, rate: f64, spread: f64) -> Vec<f64> {
    let step_sd = spread * (1.0 - (1.0 - rate).powi(2)).sqrt();
    let first: f64 = rng.sample(StandardNormal);
    let mut x = spread * first;
    let mut y = x;
    (0..n)
        .map(|_| {
            let out = y;
            let z: f64 = rng.sample(StandardNormal);
            x = (1.0 - rate) * x + step_sd * z;
            y += DRIFT_SMOOTHING * (x - y);
            out
        })
        .collect()
}

/// Internal full trace of one generated episode.
#[derive(Debug, Clone)]
pub struct WorldTrace {
    pub states: Vec<WorldState>,
    /// Road curvature with look-ahead beyond the episode end.
    pub curvature: Vec<f64>,
    pub arrivals: Vec<usize>,
}

/// Simulates the hidden world for one episode seed.
pub fn simulate_world(config: &WorldConfig) -> WorldTrace {
    let len = config.episode_length;
    let horizon = len + PREVIEW_MAX + 1;
    let seed = config.seed;
    let zl = config.zone_length;

    let mut arrivals_rng = stream(seed, Concern::Arrivals);
    let mut branch_rng = stream(seed, Concern::Branches);
    let p_arrival = config.intersection_rate / 100.0;
    let mut arrivals = Vec::new();
    let mut branch_at = vec![Turn::Straight; len];
    for (t, slot) in branch_at.iter_mut().enumerate() {
        let u: f64 = arrivals_rng.random();
        let b: f64 = branch_rng.random();
        *slot = if b < 0.3 {
            Turn::Left
        } else if b < 0.7 {
            Turn::Straight
        } else {
            Turn::Right
        };
        if u < p_arrival {
            arrivals.push(t);
        }
    }

    // zone membership: a later arrival takes over an unfinished zone
    let mut zone: Vec<Option<ZonePosition>> = vec![None; horizon];
    for &a in &arrivals {
        for j in 0..zl {
            if a + j < horizon {
                zone[a + j] = Some(ZonePosition {
                    progress: j,
                    branch: branch_at[a],
                });
            }
        }
    }

    // distance to the nearest zone step, both directions
    let mut dist = vec![f64::INFINITY; horizon];
    let mut last = f64::NEG_INFINITY;
    for t in 0..horizon {
        if zone[t].is_some() {
            last = t as f64;
        }
        dist[t] = t as f64 - last;
    }
    let mut next = f64::INFINITY;
    for t in (0..horizon).rev() {
        if zone[t].is_some() {
            next = t as f64;
        }
        dist[t] = dist[t].min(next - t as f64);
    }

    let mut curv_rng = stream(seed, Concern::Curvature);
    let mut k = {
        let stationary =
            config.curvature_volatility / (1.0 - (1.0 - config.curvature_reversion).powi(2)).sqrt().max(1e-12);
        let z: f64 = curv_rng.sample(StandardNormal);
        stationary * z
    };
    let mut curvature = Vec::with_capacity(horizon);
    for d in dist.iter().take(horizon) {
        let taper = (d / TAPER_STEPS).min(1.0);
        curvature.push(k * taper);
        let z: f64 = curv_rng.sample(StandardNormal);
        k = (1.0 - config.curvature_reversion) * k + config.curvature_volatility * z;
    }

    let mut cong_rng = stream(seed, Concern::Congestion);
    let mut vis_rng = stream(seed, Concern::Visibility);
    let congestion: Vec<f64> = drift_series(&mut cong_rng, len, 0.02, config.congestion_spread)
        .into_iter()
        .map(|x| (config.congestion_level + x).clamp(0.0, 1.0))
        .collect();
    let visibility: Vec<f64> = drift_series(&mut vis_rng, len, 0.02, config.visibility_spread)
        .into_iter()
        .map(|x| (config.visibility + x).clamp(0.0, 1.0))
        .collect();

    // the gap closes at a relative speed that is itself a damped random process,
    // interrupted by sudden braking of the lead vehicle
    let mut gap_rng = stream(seed, Concern::LeadGap);
    let mean_gap = |c: f64| 12.0 + 70.0 * (1.0 - c);
    let mut gap = mean_gap(congestion.first().copied().unwrap_or(0.0));
    let mut closing = 0.0;
    let mut states = Vec::with_capacity(len);
    for t in 0..len {
        let steps_to = if zone[t].is_some() {
            Some(0)
        } else {
            arrivals.iter().find(|&&a| a > t).map(|&a| a - t)
        };
        states.push(WorldState {
            curvature: curvature[t],
            steps_to_intersection: steps_to,
            zone: zone[t],
            lead_gap: gap,
            congestion: congestion[t],
            visibility: visibility[t],
        });
        let z: f64 = gap_rng.sample(StandardNormal);
        let u_event: f64 = gap_rng.random();
        let u_size: f64 = gap_rng.random();
        let c = congestion[t];
        closing = 0.85 * closing + 0.03 * (mean_gap(c) - gap) + 0.5 * (0.5 + c) * z;
        gap += closing;
        if u_event < 0.04 * c {
            gap *= 0.3 + 0.4 * u_size;
            closing = 0.0;
        }
        gap = gap.max(0.0);
    }

    WorldTrace {
        states,
        curvature,
        arrivals,
    }
}

/// Builds the observation vector for step `t`. `noise` holds 16 standard normals.
fn observe(trace: &WorldTrace, t: usize, noise: &[f64], config: &WorldConfig) -> Vec<f64> {
    let s = &trace.states[t];
    let sigma = config.obs_noise_scale * (1.0 - s.visibility);
    let curv = |off: usize| 100.0 * trace.curvature[t + off];
    let dist = s
        .steps_to_intersection
        .map_or(1.0, |d| (d as f64).min(DIST_CLIP) / DIST_CLIP);
    let progress = s
        .zone
        .map_or(0.0, |z| (z.progress + 1) as f64 / config.zone_length as f64);
    let prev_gap = if t > 0 {
        trace.states[t - 1].lead_gap
    } else {
        s.lead_gap
    };
    let sharpness = (0..=PREVIEW_MAX).map(|o| curv(o).abs()).sum::<f64>() / (PREVIEW_MAX + 1) as f64;
    let signal = [
        curv(0),
        curv(1),
        curv(2),
        curv(4),
        curv(8),
        dist,
        progress,
        s.lead_gap / 50.0,
        (s.lead_gap - prev_gap) / 10.0,
        s.congestion,
        s.visibility,
        sharpness,
    ];
    let mut obs = Vec::with_capacity(DEFAULT_OBS_DIM);
    for (v, n) in signal.iter().zip(noise) {
        obs.push(v + sigma * n);
    }
    obs.extend_from_slice(&noise[signal.len()..signal.len() + NOISE_CHANNELS]);
    obs
}

/// Generates one episode from `config` (its `seed` is the episode seed).
pub fn generate_episode(config: &WorldConfig, id: EpisodeId) -> Result<Episode> {
    config.validate()?;
    let trace = simulate_world(config);
    let mut noise_rng = stream(config.seed, Concern::Noise);
    let mut records = Vec::with_capacity(config.episode_length);
    let mut difficulty = Vec::with_capacity(config.episode_length);
    let mut noise = [0.0; DEFAULT_OBS_DIM];
    for (t, state) in trace.states.iter().enumerate() {
        for n in noise.iter_mut() {
            *n = noise_rng.sample(StandardNormal);
        }
        let (angle, speed) = oracle_action(state, config);
        records.push(TimedRecord {
            step_index: t,
            obs: observe(&trace, t, &noise, config),
            speed,
            angle,
        });
        difficulty.push(StepDifficulty {
            intersection: state.zone.map(|z| z.branch),
            congestion: state.congestion,
            visibility: state.visibility,
            curvature: state.curvature,
            lead_gap: state.lead_gap,
        });
    }
    let meta = EpisodeMeta {
        config_digest: config.digest(),
        difficulty,
    };
    Episode::new(id, config.seed, records, meta)
}

/// Generates `n` episodes with ids `0..n` and per-episode seeds derived from
/// `config.seed`.
pub fn generate_dataset(config: &WorldConfig, n: usize) -> Result<Vec<Episode>> {
    (0..n)
        .map(|i| {
            let cfg = WorldConfig {
                seed: episode_seed(config.seed, i as u64),
                ..config.clone()
            };
            generate_episode(&cfg, EpisodeId(i as u32))
        })
        .collect()
}
