//! Fixtures shared by the integration suites.
#![allow(dead_code)]

pub mod oracles;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use drivlab::autodiff::{grad_check, DropoutMode, GradCheckReport, Graph, Lstm, Matrix, ParamId, ParameterStore, Var};
use drivlab::data::{make_windows, EpisodeId, Normalizer, WindowSample};
use drivlab::model::driver::driver_loss;
use drivlab::model::hazard::{class_weights, hazard_loss};
use drivlab::model::{Arch, Batch, DriverNet, HazardNet};
use drivlab::simgen::{generate_episode, WorldConfig};
use drivlab::Result;

pub const FD_STEP: f64 = 1e-5;
pub const GRAD_TOL: f64 = 1e-4;

/// Entries drawn away from zero so relu kinks are never straddled by the
/// finite-difference step.
pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| {
            let mag = rng.random_range(0.2..1.2);
            if rng.random::<bool>() {
                mag
            } else {
                -mag
            }
        })
        .collect();
    Matrix::from_vec(rows, cols, data)
}

fn target_like(g: &mut Graph, v: Var) -> Var {
    let (r, c) = g.value(v).shape();
    let data = (0..r * c).map(|i| ((i as f64) * 0.37).sin() * 0.8).collect();
    g.input(Matrix::from_vec(r, c, data))
}

type Build = fn(&mut Graph, &[Var]) -> Result<Var>;

fn l2_to_target(g: &mut Graph, out: Var) -> Result<Var> {
    let t = target_like(g, out);
    g.l2_loss(out, t)
}

/// One finite-difference check per primitive op. Parameters are the op inputs.
pub fn primitive_checks() -> Vec<(&'static str, GradCheckReport)> {
    let cases: Vec<(&'static str, Vec<(usize, usize)>, Build)> = vec![
        ("matmul", vec![(3, 4), (4, 2)], |g, p| {
            let o = g.matmul(p[0], p[1])?;
            l2_to_target(g, o)
        }),
        ("add_bias", vec![(3, 4), (1, 4)], |g, p| {
            let o = g.add_bias(p[0], p[1])?;
            l2_to_target(g, o)
        }),
        ("add", vec![(3, 4), (3, 4)], |g, p| {
            let o = g.add(p[0], p[1])?;
            l2_to_target(g, o)
        }),
        ("sub", vec![(3, 4), (3, 4)], |g, p| {
            let o = g.sub(p[0], p[1])?;
            l2_to_target(g, o)
        }),
        ("mul", vec![(3, 4), (3, 4)], |g, p| {
            let o = g.mul(p[0], p[1])?;
            l2_to_target(g, o)
        }),
        ("scale", vec![(3, 4)], |g, p| {
            let o = g.scale(p[0], -1.7);
            l2_to_target(g, o)
        }),
        ("relu", vec![(3, 4)], |g, p| {
            let o = g.relu(p[0]);
            l2_to_target(g, o)
        }),
        ("tanh", vec![(3, 4)], |g, p| {
            let o = g.tanh(p[0]);
            l2_to_target(g, o)
        }),
        ("sigmoid", vec![(3, 4)], |g, p| {
            let o = g.sigmoid(p[0]);
            l2_to_target(g, o)
        }),
        ("concat", vec![(3, 2), (3, 3), (3, 1)], |g, p| {
            let o = g.concat(p)?;
            l2_to_target(g, o)
        }),
        ("slice", vec![(3, 5)], |g, p| {
            let o = g.slice(p[0], 1, 4)?;
            l2_to_target(g, o)
        }),
        ("dropout", vec![(4, 5)], |g, p| {
            let o = g.dropout(p[0], 0.3, DropoutMode::Train)?;
            l2_to_target(g, o)
        }),
        ("softmax", vec![(3, 4)], |g, p| {
            let o = g.softmax(p[0]);
            l2_to_target(g, o)
        }),
        ("sum", vec![(3, 4)], |g, p| {
            let sq = g.mul(p[0], p[0])?;
            let t = g.tanh(sq);
            Ok(g.sum(t))
        }),
        ("l2_loss", vec![(3, 2), (3, 2)], |g, p| g.l2_loss(p[0], p[1])),
        ("cross_entropy_loss", vec![(5, 2)], |g, p| {
            g.cross_entropy_loss(p[0], &[0, 1, 1, 0, 1], Some(&[1.4, 0.6]))
        }),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut reports: Vec<(&'static str, GradCheckReport)> = cases
        .into_iter()
        .map(|(name, shapes, build)| {
            let mut store = ParameterStore::new();
            let ids: Vec<ParamId> = shapes
                .iter()
                .enumerate()
                .map(|(i, &(r, c))| store.add(format!("p{i}"), random_matrix(&mut rng, r, c)))
                .collect();
            let report = grad_check(&mut store, FD_STEP, |g, s| {
                let vars: Vec<Var> = ids.iter().map(|&id| g.param(s, id)).collect();
                build(g, &vars)
            })
            .expect("grad check runs");
            (name, report)
        })
        .collect();

    // two LSTM steps so the recurrent state path is exercised too
    let mut store = ParameterStore::new();
    let lstm = Lstm::new(&mut store, &mut rng, "lstm", 3, 4);
    let x0 = random_matrix(&mut rng, 2, 3);
    let x1 = random_matrix(&mut rng, 2, 3);
    let report = grad_check(&mut store, FD_STEP, |g, s| {
        let xs = [g.input(x0.clone()), g.input(x1.clone())];
        let h = lstm.run(g, s, &xs)?;
        l2_to_target(g, h)
    })
    .expect("grad check runs");
    reports.push(("lstm_step", report));
    reports
}

/// A handful of short simulated windows.
pub fn sample_windows(n: usize, k: usize, seed: u64) -> Vec<WindowSample> {
    let cfg = WorldConfig {
        episode_length: 40,
        seed,
        ..Default::default()
    };
    let ep = generate_episode(&cfg, EpisodeId(0)).expect("episode");
    make_windows(&ep, k, 1).into_iter().step_by(5).take(n).collect()
}

/// Finite-difference checks of the width-8 driver and hazard networks, with
/// dropout active (fixed masks) and inactive.
pub fn network_checks(width: usize) -> Vec<(String, GradCheckReport)> {
    let k = 4;
    let windows = sample_windows(3, k, 5);
    let refs: Vec<&WindowSample> = windows.iter().collect();
    let norm = Normalizer::fit(&windows).expect("normalizer");
    let batch = Batch::from_windows(&refs, &norm, k).expect("batch");
    let arch = Arch::uniform_width(norm.obs_dim(), k, width, 0.2);
    let mut out = Vec::new();
    for mode in [DropoutMode::Eval, DropoutMode::Train] {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut net = DriverNet::new(arch.clone(), &mut rng).expect("driver net");
        let mut store = std::mem::take(&mut net.store);
        let r =
            grad_check(&mut store, FD_STEP, |g, s| driver_loss(&net, g, s, &batch, 0.7, mode)).expect("driver check");
        out.push((format!("driver ({mode:?})"), r));

        let mut net = HazardNet::new(arch.clone(), &mut rng).expect("hazard net");
        let labels = [1usize, 0, 1];
        let weights = class_weights(&[1, 0, 1]).expect("weights");
        let mut store = std::mem::take(&mut net.store);
        let r = grad_check(&mut store, FD_STEP, |g, s| {
            hazard_loss(&net, g, s, &batch, &labels, &weights, mode)
        })
        .expect("hazard check");
        out.push((format!("hazard ({mode:?})"), r));
    }
    out
}
