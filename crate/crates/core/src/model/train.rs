use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{AdamConfig, Graph, ParameterStore, Var};
use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::seeds;

pub(crate) const TAG_INIT: u64 = 1;
pub(crate) const TAG_SHUFFLE: u64 = 2;
pub(crate) const TAG_DROPOUT: u64 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub k: usize,
    /// Weight of the speed loss relative to the angle loss.
    pub lambda: f64,
    pub seed: u64,
    pub dropout: f64,
    /// Window stride used when cutting training windows.
    pub stride: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            epochs: 10,
            batch_size: 32,
            k: crate::data::types::DEFAULT_K,
            lambda: 1.0,
            seed: 0,
            dropout: 0.1,
            stride: 1,
        }
    }
}

const KEYS: &[&str] = &["lr", "epochs", "batch_size", "k", "lambda", "seed", "dropout", "stride"];

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::validation("lr must be positive"));
        }
        if self.batch_size == 0 || self.k == 0 || self.stride == 0 {
            return Err(Error::validation("batch_size, k and stride must be at least 1"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::validation("lambda must be finite and >= 0"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::validation("dropout must lie in [0, 1)"));
        }
        Ok(())
    }

    /// Reads `<section>.<key>` entries over `self`.
    pub fn read_section(mut self, kv: &KeyValues, section: &str) -> Result<Self> {
        kv.reject_unknown(section, KEYS)?;
        let prefixed = |key: &str| format!("{section}.{key}");
        macro_rules! field {
            ($name:ident) => {
                if let Some(raw) = kv.raw(&prefixed(stringify!($name))) {
                    self.$name = raw.parse().map_err(|e| {
                        Error::parse(
                            section.to_string(),
                            format!("{}: {raw:?}: {e}", stringify!($name)),
                        )
                    })?;
                }
            };
        }
        field!(lr);
        field!(epochs);
        field!(batch_size);
        field!(k);
        field!(lambda);
        field!(seed);
        field!(dropout);
        field!(stride);
        self.validate()?;
        Ok(self)
    }

    pub(crate) fn init_rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seeds::derive(self.seed, TAG_INIT))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

/// Mini-batch Adam over `n` examples. `batch_loss` builds the mean loss of the
/// given example indices on a fresh graph; `val_loss` is evaluated after each epoch.
pub(crate) fn fit<F, V>(
    store: &mut ParameterStore,
    n: usize,
    cfg: &TrainConfig,
    what: &str,
    mut batch_loss: F,
    mut val_loss: V,
) -> Result<Vec<EpochStats>>
where
    F: FnMut(&mut Graph, &ParameterStore, &[usize]) -> Result<Var>,
    V: FnMut(&ParameterStore) -> Result<Option<f64>>,
{
    if n == 0 {
        return Err(Error::validation(format!("{what}: empty training set")));
    }
    cfg.validate()?;
    let adam = AdamConfig::with_lr(cfg.lr);
    let mut order: Vec<usize> = (0..n).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(seeds::derive(cfg.seed, TAG_SHUFFLE));
    let dropout_base = seeds::derive(cfg.seed, TAG_DROPOUT);
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let mut g = Graph::new(seeds::derive2(dropout_base, epoch as u64, bi as u64));
            let loss = batch_loss(&mut g, store, chunk)?;
            let value = g.scalar(loss);
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss {
                    lr: cfg.lr,
                    epoch,
                    batch: bi,
                });
            }
            total += value * chunk.len() as f64;
            g.backward(loss, store)?;
            store.adam_step(&adam)?;
        }
        let stats = EpochStats {
            epoch,
            train_loss: total / n as f64,
            val_loss: val_loss(store)?,
        };
        match stats.val_loss {
            Some(v) => info!(
                "{what} epoch {epoch}: train loss {:.5}, val loss {v:.5}",
                stats.train_loss
            ),
            None => info!("{what} epoch {epoch}: train loss {:.5}", stats.train_loss),
        }
        history.push(stats);
    }
    Ok(history)
}
