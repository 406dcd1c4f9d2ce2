use rand::Rng;

use super::backbone::{Arch, Backbone, Head};
use super::batch::Batch;
use super::driver::INFERENCE_CHUNK;
use super::train::{fit, EpochStats, TrainConfig};
use crate::autodiff::graph::softmax_rows;
use crate::autodiff::{DropoutMode, Graph, ParameterStore, Var};
use crate::data::{Normalizer, SplitId, WindowSample};
use crate::error::{Error, Result};
use crate::failure::Thresholds;

/// Safe/Hazardous classifier on the same backbone shape as the driver.
#[derive(Debug, Clone, PartialEq)]
pub struct HazardNet {
    pub arch: Arch,
    pub store: ParameterStore,
    pub backbone: Backbone,
    pub head: Head,
}

impl HazardNet {
    pub fn new<R: Rng>(arch: Arch, rng: &mut R) -> Result<Self> {
        arch.validate()?;
        let mut store = ParameterStore::new();
        let backbone = Backbone::new(&mut store, rng, &arch);
        let head = Head::new(&mut store, rng, "head_hazard", arch.fused_dim(), arch.head_hidden, 2);
        Ok(HazardNet {
            arch,
            store,
            backbone,
            head,
        })
    }

    /// Class logits, B × 2 (column 1 = Hazardous).
    pub fn forward(&self, g: &mut Graph, store: &ParameterStore, batch: &Batch, mode: DropoutMode) -> Result<Var> {
        let fused = self.backbone.forward(g, store, batch, mode)?;
        self.head.forward(g, store, fused, self.arch.dropout, mode)
    }
}

/// A trained hazard classifier, tied to the labels it was fitted on.
#[derive(Debug, Clone, PartialEq)]
pub struct HazardModel {
    pub net: HazardNet,
    pub normalizer: Normalizer,
    pub trained_on: SplitId,
    pub thresholds: Thresholds,
    pub m: usize,
}

impl HazardModel {
    /// Probability of the Hazardous class for each window.
    pub fn predict_hazard(&self, windows: &[&WindowSample]) -> Result<Vec<f64>> {
        Ok(self.class_probabilities(windows)?.into_iter().map(|p| p[1]).collect())
    }

    pub fn class_probabilities(&self, windows: &[&WindowSample]) -> Result<Vec<[f64; 2]>> {
        let mut out = Vec::with_capacity(windows.len());
        for chunk in windows.chunks(INFERENCE_CHUNK) {
            let batch = Batch::from_windows(chunk, &self.normalizer, self.net.arch.k)?;
            let mut g = Graph::new(0);
            let logits = self.net.forward(&mut g, &self.net.store, &batch, DropoutMode::Eval)?;
            let probs = softmax_rows(g.value(logits));
            for r in 0..chunk.len() {
                let p = [probs.get(r, 0), probs.get(r, 1)];
                if !(p[0].is_finite() && p[1].is_finite()) {
                    return Err(Error::Numerical("hazard net produced a non-finite probability".into()));
                }
                out.push(p);
            }
        }
        Ok(out)
    }
}

/// Inverse-frequency class weights `n / (2 n_c)`; errors if a class is absent.
pub fn class_weights(labels: &[u8]) -> Result<[f64; 2]> {
    let n = labels.len();
    let hazardous = labels.iter().filter(|&&y| y == 1).count();
    let safe = n - hazardous;
    if hazardous == 0 {
        return Err(Error::DegenerateLabels(0));
    }
    if safe == 0 {
        return Err(Error::DegenerateLabels(1));
    }
    Ok([n as f64 / (2.0 * safe as f64), n as f64 / (2.0 * hazardous as f64)])
}

/// Mean weighted cross-entropy on one batch.
pub fn hazard_loss(
    net: &HazardNet,
    g: &mut Graph,
    store: &ParameterStore,
    batch: &Batch,
    labels: &[usize],
    weights: &[f64; 2],
    mode: DropoutMode,
) -> Result<Var> {
    let logits = net.forward(g, store, batch, mode)?;
    g.cross_entropy_loss(logits, labels, Some(weights))
}

/// Trains a hazard classifier on labeled windows, reusing the driver's normalizer.
pub fn train_failure(
    windows: &[WindowSample],
    labels: &[u8],
    normalizer: &Normalizer,
    thresholds: Thresholds,
    m: usize,
    cfg: &TrainConfig,
) -> Result<(HazardModel, Vec<EpochStats>)> {
    train_failure_with(Arch::default(), windows, labels, normalizer, thresholds, m, cfg)
}

pub fn train_failure_with(
    widths: Arch,
    windows: &[WindowSample],
    labels: &[u8],
    normalizer: &Normalizer,
    thresholds: Thresholds,
    m: usize,
    cfg: &TrainConfig,
) -> Result<(HazardModel, Vec<EpochStats>)> {
    if windows.len() != labels.len() {
        return Err(Error::validation(format!(
            "{} windows but {} labels",
            windows.len(),
            labels.len()
        )));
    }
    cfg.validate()?;
    let weights = class_weights(labels)?;
    let arch = Arch {
        obs_dim: normalizer.obs_dim(),
        k: cfg.k,
        dropout: cfg.dropout,
        ..widths
    };
    let mut net = HazardNet::new(arch, &mut cfg.init_rng())?;
    let mut store = std::mem::take(&mut net.store);
    let k = cfg.k;
    let history = fit(
        &mut store,
        windows.len(),
        cfg,
        "hazard",
        |g, store, idx| {
            let ws: Vec<&WindowSample> = idx.iter().map(|&i| &windows[i]).collect();
            let ys: Vec<usize> = idx.iter().map(|&i| labels[i] as usize).collect();
            let batch = Batch::from_windows(&ws, normalizer, k)?;
            hazard_loss(&net, g, store, &batch, &ys, &weights, DropoutMode::Train)
        },
        |_| Ok(None),
    )?;
    net.store = store;
    Ok((
        HazardModel {
            net,
            normalizer: normalizer.clone(),
            trained_on: SplitId::D2,
            thresholds,
            m,
        },
        history,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_balance_classes() {
        let w = class_weights(&[0, 0, 0, 1]).unwrap();
        assert!((w[0] * 3.0 - w[1] * 1.0).abs() < 1e-12);
        assert!(matches!(class_weights(&[1, 1]), Err(Error::DegenerateLabels(1))));
        assert!(matches!(class_weights(&[0]), Err(Error::DegenerateLabels(0))));
    }
}
