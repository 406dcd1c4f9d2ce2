use crate::autodiff::Matrix;
use crate::data::{Channel, Normalizer, WindowSample};
use crate::error::{Error, Result};

/// Normalized, time-major inputs for a batch of windows.
#[derive(Debug, Clone)]
pub struct Batch {
    /// k+1 matrices of shape B × obs_dim.
    pub frames: Vec<Matrix>,
    /// k matrices of shape B × 1.
    pub past_speeds: Vec<Matrix>,
    pub past_angles: Vec<Matrix>,
    /// B × 1 normalized targets.
    pub target_angle: Matrix,
    pub target_speed: Matrix,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.target_angle.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn from_windows(windows: &[&WindowSample], norm: &Normalizer, k: usize) -> Result<Self> {
        let b = windows.len();
        let d = norm.obs_dim();
        for w in windows {
            if w.obs_dim != d || w.k() != k || w.n_frames() != k + 1 {
                return Err(Error::validation(format!(
                    "window at {:?} has obs_dim {} and k {}, model expects obs_dim {d} and k {k}",
                    w.origin,
                    w.obs_dim,
                    w.k()
                )));
            }
        }
        let mut frames = vec![Matrix::zeros(b, d); k + 1];
        let mut past_speeds = vec![Matrix::zeros(b, 1); k];
        let mut past_angles = vec![Matrix::zeros(b, 1); k];
        let mut target_angle = Matrix::zeros(b, 1);
        let mut target_speed = Matrix::zeros(b, 1);
        let inv_std: Vec<f64> = norm.obs_std.iter().map(|s| 1.0 / s).collect();
        for (r, w) in windows.iter().enumerate() {
            for (j, frame) in frames.iter_mut().enumerate() {
                let src = w.frame(j);
                let dst = frame.row_mut(r);
                for i in 0..d {
                    dst[i] = (src[i] - norm.obs_mean[i]) * inv_std[i];
                }
            }
            for j in 0..k {
                past_speeds[j].set(r, 0, norm.normalize(w.past_speeds[j], Channel::Speed));
                past_angles[j].set(r, 0, norm.normalize(w.past_angles[j], Channel::Angle));
            }
            target_angle.set(r, 0, norm.normalize(w.target_angle, Channel::Angle));
            target_speed.set(r, 0, norm.normalize(w.target_speed, Channel::Speed));
        }
        Ok(Batch {
            frames,
            past_speeds,
            past_angles,
            target_angle,
            target_speed,
        })
    }
}
