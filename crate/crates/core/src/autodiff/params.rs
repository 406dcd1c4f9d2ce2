use rand::Rng;

use super::matrix::Matrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Param {
    name: String,
    value: Matrix,
    grad: Matrix,
    m: Matrix,
    v: Matrix,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            ..Default::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Named parameters with gradient buffers and Adam moment estimates.
///
/// The Adam step counter is shared by every parameter in the store.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParameterStore {
    params: Vec<Param>,
    step: u64,
    grads_ready: bool,
}

/// Glorot/Xavier uniform limit.
pub fn glorot_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Matrix) -> ParamId {
        let name = name.into();
        assert!(
            self.params.iter().all(|p| p.name != name),
            "duplicate parameter name {name}"
        );
        let (r, c) = value.shape();
        self.params.push(Param {
            name,
            value,
            grad: Matrix::zeros(r, c),
            m: Matrix::zeros(r, c),
            v: Matrix::zeros(r, c),
        });
        ParamId(self.params.len() - 1)
    }

    /// Adds a parameter drawn from uniform(-a, a), a = sqrt(6 / (fan_in + fan_out)).
    pub fn add_glorot<R: Rng>(&mut self, name: impl Into<String>, rows: usize, cols: usize, rng: &mut R) -> ParamId {
        let a = glorot_limit(rows, cols);
        let data = (0..rows * cols).map(|_| rng.random_range(-a..a)).collect();
        self.add(name, Matrix::from_vec(rows, cols, data))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn value(&self, id: ParamId) -> &Matrix {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Matrix {
        &self.params[id.0].grad
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.data().len()).sum()
    }

    pub fn accumulate_grad(&mut self, id: ParamId, g: &Matrix) {
        self.params[id.0].grad.add_assign(g);
        self.grads_ready = true;
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
        self.grads_ready = false;
    }

    /// One bias-corrected Adam update over every parameter; gradients are zeroed after.
    pub fn adam_step(&mut self, cfg: &AdamConfig) -> Result<()> {
        if !self.grads_ready {
            return Err(Error::validation(
                "adam_step called without gradients from a backward pass",
            ));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        for p in &mut self.params {
            let Param { value, grad, m, v, .. } = p;
            let moments = m.data_mut().iter_mut().zip(v.data_mut().iter_mut());
            for ((theta, &g), (m, v)) in value.data_mut().iter_mut().zip(grad.data()).zip(moments) {
                *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *theta -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
            }
        }
        self.zero_grads();
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_is_lr_times_sign() {
        let mut s = ParameterStore::new();
        let id = s.add("theta", Matrix::scalar(0.0));
        s.accumulate_grad(id, &Matrix::scalar(0.5));
        s.adam_step(&AdamConfig::with_lr(0.1)).unwrap();
        let expected = -0.1 * 0.5 / (0.5 + 1e-8);
        assert!((s.value(id).get(0, 0) - expected).abs() < 1e-15);
        assert_eq!(s.grad(id).get(0, 0), 0.0);
        assert_eq!(s.step_count(), 1);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut s = ParameterStore::new();
        let id = s.add("w", Matrix::from_vec(1, 3, vec![1.0, -2.0, 3.0]));
        s.accumulate_grad(id, &Matrix::zeros(1, 3));
        s.adam_step(&AdamConfig::default()).unwrap();
        assert_eq!(s.value(id).data(), &[1.0, -2.0, 3.0]);
    }

    #[test]
    fn step_without_backward_is_error() {
        let mut s = ParameterStore::new();
        s.add("w", Matrix::scalar(1.0));
        assert!(s.adam_step(&AdamConfig::default()).is_err());
    }
}
