use rand::Rng;

use super::backbone::{Arch, Backbone, Head};
use super::batch::Batch;
use super::train::{fit, EpochStats, TrainConfig};
use crate::autodiff::{DropoutMode, Graph, ParameterStore, Var};
use crate::data::types::{ANGLE_RANGE, SPEED_RANGE};
use crate::data::{Channel, Normalizer, SplitId, WindowSample};
use crate::error::{Error, Result};

/// Rows per forward pass at inference time.
pub const INFERENCE_CHUNK: usize = 512;

/// Regressor for the current steering angle and speed (normalized units).
#[derive(Debug, Clone, PartialEq)]
pub struct DriverNet {
    pub arch: Arch,
    pub store: ParameterStore,
    pub backbone: Backbone,
    pub head_angle: Head,
    pub head_speed: Head,
}

impl DriverNet {
    pub fn new<R: Rng>(arch: Arch, rng: &mut R) -> Result<Self> {
        arch.validate()?;
        let mut store = ParameterStore::new();
        let backbone = Backbone::new(&mut store, rng, &arch);
        let fused = arch.fused_dim();
        let head_angle = Head::new(&mut store, rng, "head_angle", fused, arch.head_hidden, 1);
        let head_speed = Head::new(&mut store, rng, "head_speed", fused, arch.head_hidden, 1);
        Ok(DriverNet {
            arch,
            store,
            backbone,
            head_angle,
            head_speed,
        })
    }

    /// Returns the (angle, speed) outputs, each B × 1.
    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParameterStore,
        batch: &Batch,
        mode: DropoutMode,
    ) -> Result<(Var, Var)> {
        let fused = self.backbone.forward(g, store, batch, mode)?;
        let p = self.arch.dropout;
        let angle = self.head_angle.forward(g, store, fused, p, mode)?;
        let speed = self.head_speed.forward(g, store, fused, p, mode)?;
        Ok((angle, speed))
    }

    /// Zeroes the final layer of both heads, so the net outputs exactly 0.
    pub fn zero_output_layers(&mut self) {
        self.head_angle.fc2.zero(&mut self.store);
        self.head_speed.fc2.zero(&mut self.store);
    }

    /// Parameter ids grouped by component, for gradient-flow checks.
    pub fn groups(&self) -> Vec<(&'static str, Vec<crate::autodiff::ParamId>)> {
        let lin = |l: &crate::autodiff::Linear| vec![l.w, l.b];
        let lstm = |l: &crate::autodiff::Lstm| vec![l.w, l.b];
        let head = |h: &Head| [lin(&h.fc1), lin(&h.fc2)].concat();
        vec![
            ("encoder", [lin(&self.backbone.enc1), lin(&self.backbone.enc2)].concat()),
            ("lstm_vis", lstm(&self.backbone.lstm_vis)),
            ("lstm_speed", lstm(&self.backbone.lstm_speed)),
            ("lstm_angle", lstm(&self.backbone.lstm_angle)),
            ("head_angle", head(&self.head_angle)),
            ("head_speed", head(&self.head_speed)),
        ]
    }
}

/// Mean of the angle and `lambda`-weighted speed L2 losses on normalized targets.
pub fn driver_loss(
    net: &DriverNet,
    g: &mut Graph,
    store: &ParameterStore,
    batch: &Batch,
    lambda: f64,
    mode: DropoutMode,
) -> Result<Var> {
    let (angle, speed) = net.forward(g, store, batch, mode)?;
    let ta = g.input(batch.target_angle.clone());
    let ts = g.input(batch.target_speed.clone());
    let la = g.l2_loss(angle, ta)?;
    let ls = g.l2_loss(speed, ts)?;
    let ls = g.scale(ls, lambda);
    g.add(la, ls)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub angle: f64,
    pub speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mae {
    pub speed: f64,
    pub angle: f64,
}

/// A trained driver with the normalizer it was fitted with.
#[derive(Debug, Clone, PartialEq)]
pub struct DriverModel {
    pub net: DriverNet,
    pub normalizer: Normalizer,
    pub trained_on: SplitId,
}

impl DriverModel {
    /// Raw head outputs in normalized units.
    pub fn raw_outputs(&self, windows: &[&WindowSample], mode: DropoutMode, seed: u64) -> Result<Vec<(f64, f64)>> {
        let mut out = Vec::with_capacity(windows.len());
        for (ci, chunk) in windows.chunks(INFERENCE_CHUNK).enumerate() {
            let batch = Batch::from_windows(chunk, &self.normalizer, self.net.arch.k)?;
            let mut g = Graph::new(crate::seeds::derive(seed, ci as u64));
            let (a, s) = self.net.forward(&mut g, &self.net.store, &batch, mode)?;
            let (a, s) = (g.value(a), g.value(s));
            for r in 0..chunk.len() {
                out.push((a.get(r, 0), s.get(r, 0)));
            }
        }
        Ok(out)
    }

    pub fn denormalize(&self, raw: (f64, f64)) -> Result<Prediction> {
        let angle = self.normalizer.denormalize(raw.0, Channel::Angle);
        let speed = self.normalizer.denormalize(raw.1, Channel::Speed);
        if !(angle.is_finite() && speed.is_finite()) {
            return Err(Error::Numerical("driver produced a non-finite prediction".into()));
        }
        Ok(Prediction {
            angle: angle.clamp(ANGLE_RANGE.0, ANGLE_RANGE.1),
            speed: speed.clamp(SPEED_RANGE.0, SPEED_RANGE.1),
        })
    }

    /// Deterministic predictions in physical units, clipped to the legal ranges.
    pub fn predict(&self, windows: &[&WindowSample]) -> Result<Vec<Prediction>> {
        self.predict_mode(windows, DropoutMode::Eval, 0)
    }

    pub fn predict_mode(&self, windows: &[&WindowSample], mode: DropoutMode, seed: u64) -> Result<Vec<Prediction>> {
        self.raw_outputs(windows, mode, seed)?
            .into_iter()
            .map(|r| self.denormalize(r))
            .collect()
    }

    pub fn predict_one(&self, w: &WindowSample) -> Result<Prediction> {
        Ok(self.predict(&[w])?[0])
    }

    pub fn eval_mae(&self, windows: &[&WindowSample]) -> Result<Mae> {
        let preds = self.predict(windows)?;
        mae(&preds, windows)
    }
}

pub fn mae(preds: &[Prediction], windows: &[&WindowSample]) -> Result<Mae> {
    if windows.is_empty() || preds.len() != windows.len() {
        return Err(Error::validation(format!(
            "eval_mae needs matching non-empty inputs, got {} predictions for {} windows",
            preds.len(),
            windows.len()
        )));
    }
    let n = windows.len() as f64;
    let (mut s, mut a) = (0.0, 0.0);
    for (p, w) in preds.iter().zip(windows) {
        s += (p.speed - w.target_speed).abs();
        a += (p.angle - w.target_angle).abs();
    }
    Ok(Mae {
        speed: s / n,
        angle: a / n,
    })
}

/// MAE of always predicting the training-set target means.
pub fn constant_mean_mae(train: &[WindowSample], eval: &[&WindowSample]) -> Result<Mae> {
    if train.is_empty() {
        return Err(Error::validation("constant-mean baseline needs training windows"));
    }
    let n = train.len() as f64;
    let p = Prediction {
        angle: train.iter().map(|w| w.target_angle).sum::<f64>() / n,
        speed: train.iter().map(|w| w.target_speed).sum::<f64>() / n,
    };
    mae(&vec![p; eval.len()], eval)
}

/// Fits the normalizer on `train` and trains a driver with default widths.
pub fn train_driver(
    train: &[WindowSample],
    val: Option<&[WindowSample]>,
    cfg: &TrainConfig,
) -> Result<(DriverModel, Vec<EpochStats>)> {
    train_driver_with(Arch::default(), train, val, cfg)
}

/// As [`train_driver`], with custom layer widths. `obs_dim`, `k` and dropout are
/// taken from the data and `cfg`.
pub fn train_driver_with(
    widths: Arch,
    train: &[WindowSample],
    val: Option<&[WindowSample]>,
    cfg: &TrainConfig,
) -> Result<(DriverModel, Vec<EpochStats>)> {
    cfg.validate()?;
    let normalizer = Normalizer::fit(train)?;
    let arch = Arch {
        obs_dim: normalizer.obs_dim(),
        k: cfg.k,
        dropout: cfg.dropout,
        ..widths
    };
    let mut net = DriverNet::new(arch, &mut cfg.init_rng())?;
    let mut store = std::mem::take(&mut net.store);
    let k = cfg.k;
    let val_refs: Option<Vec<&WindowSample>> = val.map(|v| v.iter().collect());
    let history = fit(
        &mut store,
        train.len(),
        cfg,
        "driver",
        |g, store, idx| {
            let ws: Vec<&WindowSample> = idx.iter().map(|&i| &train[i]).collect();
            let batch = Batch::from_windows(&ws, &normalizer, k)?;
            driver_loss(&net, g, store, &batch, cfg.lambda, DropoutMode::Train)
        },
        |store| match &val_refs {
            Some(v) if !v.is_empty() => eval_loss(&net, store, &normalizer, v, cfg.lambda).map(Some),
            _ => Ok(None),
        },
    )?;
    net.store = store;
    Ok((
        DriverModel {
            net,
            normalizer,
            trained_on: SplitId::D1,
        },
        history,
    ))
}

fn eval_loss(
    net: &DriverNet,
    store: &ParameterStore,
    norm: &Normalizer,
    windows: &[&WindowSample],
    lambda: f64,
) -> Result<f64> {
    let mut total = 0.0;
    for chunk in windows.chunks(INFERENCE_CHUNK) {
        let batch = Batch::from_windows(chunk, norm, net.arch.k)?;
        let mut g = Graph::new(0);
        let loss = driver_loss(net, &mut g, store, &batch, lambda, DropoutMode::Eval)?;
        total += g.scalar(loss) * chunk.len() as f64;
    }
    Ok(total / windows.len() as f64)
}
