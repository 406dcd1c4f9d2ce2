use log::warn;

use super::types::WindowSample;
use crate::error::{Error, Result};

pub const STD_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    Speed,
    Angle,
    Obs(usize),
}

/// Z-score statistics fitted on the training split and reused unchanged elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub mean_speed: f64,
    pub std_speed: f64,
    pub mean_angle: f64,
    pub std_angle: f64,
    pub obs_mean: Vec<f64>,
    pub obs_std: Vec<f64>,
}

fn moments(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let vals: Vec<f64> = values.collect();
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn floored(std: f64, what: &str) -> f64 {
    if std < STD_FLOOR {
        warn!("channel {what} is constant (std = {std:e}); clamping std to {STD_FLOOR:e}");
        STD_FLOOR
    } else {
        std
    }
}

impl Normalizer {
    /// Fits population statistics over one sample per window: the target speed and
    /// angle, and the current observation frame.
    pub fn fit(windows: &[WindowSample]) -> Result<Self> {
        let first = windows
            .first()
            .ok_or_else(|| Error::validation("cannot fit normalizer on an empty window list"))?;
        let dim = first.obs_dim;
        let (mean_speed, std_speed) = moments(windows.iter().map(|w| w.target_speed));
        let (mean_angle, std_angle) = moments(windows.iter().map(|w| w.target_angle));
        let mut obs_mean = Vec::with_capacity(dim);
        let mut obs_std = Vec::with_capacity(dim);
        for i in 0..dim {
            let (m, s) = moments(windows.iter().map(|w| w.current_frame()[i]));
            obs_mean.push(m);
            obs_std.push(floored(s, &format!("obs_{i}")));
        }
        Ok(Normalizer {
            mean_speed,
            std_speed: floored(std_speed, "speed"),
            mean_angle,
            std_angle: floored(std_angle, "angle"),
            obs_mean,
            obs_std,
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_mean.len()
    }

    fn stats(&self, ch: Channel) -> (f64, f64) {
        match ch {
            Channel::Speed => (self.mean_speed, self.std_speed),
            Channel::Angle => (self.mean_angle, self.std_angle),
            Channel::Obs(i) => (self.obs_mean[i], self.obs_std[i]),
        }
    }

    pub fn normalize(&self, x: f64, ch: Channel) -> f64 {
        let (m, s) = self.stats(ch);
        (x - m) / s
    }

    pub fn denormalize(&self, z: f64, ch: Channel) -> f64 {
        let (m, s) = self.stats(ch);
        z * s + m
    }
}
