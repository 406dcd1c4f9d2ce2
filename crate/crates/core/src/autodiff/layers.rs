use rand::Rng;

use super::graph::{Graph, Var};
use super::matrix::Matrix;
use super::params::{ParamId, ParameterStore};
use crate::error::Result;

/// Affine map `x · W + b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new<R: Rng>(store: &mut ParameterStore, rng: &mut R, name: &str, in_dim: usize, out_dim: usize) -> Self {
        let w = store.add_glorot(format!("{name}.w"), in_dim, out_dim, rng);
        let b = store.add(format!("{name}.b"), Matrix::zeros(1, out_dim));
        Linear { w, b, in_dim, out_dim }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParameterStore, x: Var) -> Result<Var> {
        let w = g.param(store, self.w);
        let b = g.param(store, self.b);
        let xw = g.matmul(x, w)?;
        g.add_bias(xw, b)
    }

    pub fn zero(&self, store: &mut ParameterStore) {
        store.value_mut(self.w).fill(0.0);
        store.value_mut(self.b).fill(0.0);
    }
}

/// Single-layer LSTM. Gates are packed as [input, forget, cell, output] along the
/// columns of one `(in + hidden) × 4·hidden` weight matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lstm {
    pub w: ParamId,
    pub b: ParamId,
    pub input_dim: usize,
    pub hidden: usize,
}

impl Lstm {
    pub fn new<R: Rng>(store: &mut ParameterStore, rng: &mut R, name: &str, input_dim: usize, hidden: usize) -> Self {
        let w = store.add_glorot(format!("{name}.w"), input_dim + hidden, 4 * hidden, rng);
        let mut bias = Matrix::zeros(1, 4 * hidden);
        // forget gate starts open
        for j in hidden..2 * hidden {
            bias.set(0, j, 1.0);
        }
        let b = store.add(format!("{name}.b"), bias);
        Lstm {
            w,
            b,
            input_dim,
            hidden,
        }
    }

    /// One cell step: returns the new (hidden, cell) state.
    pub fn step(&self, g: &mut Graph, store: &ParameterStore, x: Var, h: Var, c: Var) -> Result<(Var, Var)> {
        let hs = self.hidden;
        let w = g.param(store, self.w);
        let b = g.param(store, self.b);
        let xh = g.concat(&[x, h])?;
        let pre = g.matmul(xh, w)?;
        let gates = g.add_bias(pre, b)?;
        let i = g.slice(gates, 0, hs)?;
        let f = g.slice(gates, hs, 2 * hs)?;
        let cand = g.slice(gates, 2 * hs, 3 * hs)?;
        let o = g.slice(gates, 3 * hs, 4 * hs)?;
        let i = g.sigmoid(i);
        let f = g.sigmoid(f);
        let cand = g.tanh(cand);
        let o = g.sigmoid(o);
        let keep = g.mul(f, c)?;
        let write = g.mul(i, cand)?;
        let c_new = g.add(keep, write)?;
        let squashed = g.tanh(c_new);
        let h_new = g.mul(o, squashed)?;
        Ok((h_new, c_new))
    }

    /// Runs the sequence from a zero state and returns the final hidden state.
    pub fn run(&self, g: &mut Graph, store: &ParameterStore, xs: &[Var]) -> Result<Var> {
        let batch = xs.first().map_or(0, |&x| g.value(x).rows());
        let mut h = g.input(Matrix::zeros(batch, self.hidden));
        let mut c = g.input(Matrix::zeros(batch, self.hidden));
        for &x in xs {
            let (h2, c2) = self.step(g, store, x, h, c)?;
            h = h2;
            c = c2;
        }
        Ok(h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_and_inputs_give_zero_state() {
        let mut store = ParameterStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let lstm = Lstm::new(&mut store, &mut rng, "l", 3, 4);
        store.value_mut(lstm.w).fill(0.0);
        store.value_mut(lstm.b).fill(0.0);
        let mut g = Graph::new(0);
        let x = g.input(Matrix::zeros(2, 3));
        let h0 = g.input(Matrix::zeros(2, 4));
        let c0 = g.input(Matrix::zeros(2, 4));
        let (h, c) = lstm.step(&mut g, &store, x, h0, c0).unwrap();
        assert!(g.value(h).data().iter().all(|&v| v == 0.0));
        assert!(g.value(c).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_shapes() {
        let mut store = ParameterStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let lin = Linear::new(&mut store, &mut rng, "fc", 5, 2);
        let mut g = Graph::new(0);
        let x = g.input(Matrix::filled(3, 5, 1.0));
        let y = lin.forward(&mut g, &store, x).unwrap();
        assert_eq!(g.value(y).shape(), (3, 2));
        let bad = g.input(Matrix::filled(3, 4, 1.0));
        assert!(lin.forward(&mut g, &store, bad).is_err());
    }
}
