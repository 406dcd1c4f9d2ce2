//! Brute-force reference implementations and the fuzz loops that compare the
//! library against them. Each loop returns the first disagreement.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use drivlab::data::{make_windows, EpisodeId, SplitId, WindowSample};
use drivlab::evaluate::{
    default_budgets, reduction_curve, simulate_takeover, Counting, PolicyScoreTrace, ScoredWindow, StepFailures,
};
use drivlab::failure::{
    horizon_labels, label_horizon, label_predictions, label_step, LabelSet, PredictedWindows, Thresholds,
};
use drivlab::model::Prediction;
use drivlab::simgen::{generate_dataset, WorldConfig};

pub type Key = (EpisodeId, usize);

/// Reference per-step failure: deviation at or beyond the threshold.
pub fn naive_step(pred: Prediction, truth: Prediction, th: Thresholds) -> (u8, u8, u8) {
    let ga = ((pred.angle - truth.angle).abs() >= th.angle) as u8;
    let gs = ((pred.speed - truth.speed).abs() >= th.speed) as u8;
    (ga, gs, ga | gs)
}

/// OR over the slice `g[t..=t+m]`, undefined past the end.
pub fn naive_label_horizon(g: &[u8], t: usize, m: usize) -> Option<u8> {
    if t + m >= g.len() {
        return None;
    }
    Some(g[t..=t + m].contains(&1) as u8)
}

/// Fuzzes step and horizon labelling. A third of the deviations land exactly
/// on a threshold.
pub fn fuzz_labels(cases: usize, seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let th_all = Thresholds::canonical();
    for case in 0..cases {
        let th = th_all[case % 3];
        let len = rng.random_range(1..40);
        let m = rng.random_range(0..12);
        let mut g = Vec::with_capacity(len);
        for _ in 0..len {
            let truth = Prediction {
                angle: rng.random_range(-90.0..90.0),
                speed: rng.random_range(0.0..120.0),
            };
            let da = match rng.random_range(0..3) {
                0 => th.angle,
                1 => -th.angle,
                _ => rng.random_range(-2.0 * th.angle..2.0 * th.angle),
            };
            let ds = match rng.random_range(0..3) {
                0 => th.speed,
                _ => rng.random_range(-2.0 * th.speed..2.0 * th.speed),
            };
            let pred = Prediction {
                angle: truth.angle + da,
                speed: truth.speed + ds,
            };
            let s = label_step(pred, truth, th);
            if (s.g_a, s.g_s, s.g) != naive_step(pred, truth, th) {
                return Err(format!("case {case}: step label of {pred:?} vs {truth:?}"));
            }
            g.push(s.g);
        }
        let all = horizon_labels(&g, m);
        if all.len() != len.saturating_sub(m) {
            return Err(format!(
                "case {case}: {} horizon labels for length {len}, m {m}",
                all.len()
            ));
        }
        for t in 0..len {
            let want = naive_label_horizon(&g, t, m);
            if label_horizon(&g, t, m) != want || want.is_some_and(|w| all[t] != w) {
                return Err(format!("case {case}: horizon label at t {t}, m {m}"));
            }
        }
    }
    Ok(())
}

/// Random predictions around the truth on a few simulated episodes.
pub fn noisy_predictions(seed: u64) -> PredictedWindows {
    let cfg = WorldConfig {
        episode_length: 50,
        seed: 4,
        ..Default::default()
    };
    let eps = generate_dataset(&cfg, 8).expect("episodes");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let windows: Vec<WindowSample> = eps.iter().flat_map(|e| make_windows(e, 4, 1)).collect();
    let preds = windows
        .iter()
        .map(|w| Prediction {
            angle: w.target_angle + rng.random_range(-12.0..12.0),
            speed: w.target_speed + rng.random_range(-6.0..6.0),
        })
        .collect();
    PredictedWindows { windows, preds }
}

/// Checks that the strict-to-loose canonical thresholds give nested hazard sets.
pub fn nesting(pw: &PredictedWindows, m: usize) -> Result<(), String> {
    let sets: Vec<LabelSet> = Thresholds::canonical()
        .iter()
        .map(|&th| label_predictions(pw, th, m, SplitId::D3).0)
        .collect();
    nested(&sets)
}

/// Exact containment of step and horizon hazard sets across label sets ordered
/// from strictest to loosest.
pub fn nested(sets: &[LabelSet]) -> Result<(), String> {
    for (i, pair) in sets.windows(2).enumerate() {
        let (strict, loose) = (&pair[0].records, &pair[1].records);
        if strict.len() != loose.len() {
            return Err("label sets differ in length".into());
        }
        for (a, b) in strict.iter().zip(loose) {
            if (a.episode_id, a.t) != (b.episode_id, b.t) {
                return Err(format!("label sets {i} and {} are not aligned", i + 1));
            }
            if b.step.g > a.step.g || b.g_horizon > a.g_horizon {
                return Err(format!(
                    "episode {} t {} hazardous at setting {} but not at {i}",
                    a.episode_id,
                    a.t,
                    i + 1
                ));
            }
        }
    }
    Ok(())
}

/// Up to a handful of episodes with occasional gaps in t.
pub fn random_keys(rng: &mut ChaCha8Rng, n: usize) -> Vec<Key> {
    let mut keys = Vec::with_capacity(n);
    let mut ep = 0u32;
    let mut t = rng.random_range(0..3);
    for _ in 0..n {
        keys.push((EpisodeId(ep), t));
        if rng.random_bool(0.15) {
            ep += 1;
            t = rng.random_range(0..3);
        } else {
            t += if rng.random_bool(0.1) { 2 } else { 1 };
        }
    }
    keys
}

pub fn trace(keys: &[Key], scores: &[f64]) -> PolicyScoreTrace {
    PolicyScoreTrace {
        policy: "test".into(),
        entries: keys
            .iter()
            .zip(scores)
            .map(|(&(episode_id, t), &score)| ScoredWindow { episode_id, t, score })
            .collect(),
    }
}

fn best_first(keys: &[Key], scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(keys[a].cmp(&keys[b])));
    order
}

/// Naive manual-time simulation: walk windows best-first and hand over the not
/// yet manual steps of each horizon until the step budget runs out.
pub fn brute_steps(keys: &[Key], g: &[u8], scores: &[f64], m: usize, units: usize) -> f64 {
    let total: usize = g.iter().map(|&x| x as usize).sum();
    if total == 0 {
        return 1.0;
    }
    let mut manual = vec![false; keys.len()];
    let mut left = units;
    for i in best_first(keys, scores) {
        let (ep, t) = keys[i];
        for j in 0..keys.len() {
            if left == 0 {
                break;
            }
            if keys[j].0 == ep && keys[j].1 >= t && keys[j].1 <= t + m && !manual[j] {
                manual[j] = true;
                left -= 1;
            }
        }
    }
    let silenced: usize = (0..keys.len()).filter(|&j| manual[j] && g[j] == 1).count();
    silenced as f64 / total as f64
}

/// Naive window counting: the chosen windows' horizon labels.
pub fn brute_windows(keys: &[Key], gh: &[u8], scores: &[f64], units: usize) -> f64 {
    let total: usize = gh.iter().map(|&x| x as usize).sum();
    if total == 0 {
        return 1.0;
    }
    let caught: usize = best_first(keys, scores)[..units].iter().map(|&i| gh[i] as usize).sum();
    caught as f64 / total as f64
}

pub fn naive_horizon(keys: &[Key], g: &[u8], m: usize) -> Vec<u8> {
    (0..keys.len())
        .map(|i| {
            let (ep, t) = keys[i];
            let hit = (0..keys.len()).any(|j| keys[j].0 == ep && keys[j].1 >= t && keys[j].1 <= t + m && g[j] == 1);
            hit as u8
        })
        .collect()
}

/// Fuzzes the takeover simulator on instances of at most 20 windows, in both
/// counting modes, with coarse scores so ties are common.
pub fn fuzz_takeover(cases: usize, seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for case in 0..cases {
        let n = rng.random_range(1..=20);
        let keys = random_keys(&mut rng, n);
        let p = rng.random_range(0.0..0.6);
        let g: Vec<u8> = (0..n).map(|_| rng.random_bool(p) as u8).collect();
        let m = rng.random_range(0..6);
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..5) as f64 / 4.0).collect();
        let units = rng.random_range(1..=n);
        let budget = units as f64 / n as f64;
        let f = StepFailures::from_steps(keys.clone(), g.clone(), m).map_err(|e| e.to_string())?;
        if f.g_horizon != naive_horizon(&keys, &g, m) {
            return Err(format!("case {case}: horizon labels"));
        }
        let tr = trace(&keys, &scores);
        let (r, nf) = simulate_takeover(&f, &tr, budget, Counting::Steps).map_err(|e| e.to_string())?;
        let want = brute_steps(&keys, &g, &scores, m, units);
        if r != want || nf != g.iter().all(|&x| x == 0) {
            return Err(format!("case {case}: steps reduction {r} vs {want}"));
        }
        let (r, _) = simulate_takeover(&f, &tr, budget, Counting::Windows).map_err(|e| e.to_string())?;
        let want = brute_windows(&keys, &f.g_horizon, &scores, units);
        if r != want {
            return Err(format!("case {case}: windows reduction {r} vs {want}"));
        }
    }
    Ok(())
}

/// Random instances: every reduction curve is non-decreasing and ends at 1.
pub fn curves_monotone(runs: usize, seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let budgets = default_budgets();
    for run in 0..runs {
        let n = rng.random_range(1..200);
        let keys = random_keys(&mut rng, n);
        let g: Vec<u8> = (0..n).map(|_| rng.random_bool(0.3) as u8).collect();
        let f = StepFailures::from_steps(keys.clone(), g, rng.random_range(0..10)).map_err(|e| e.to_string())?;
        let scores: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        for counting in [Counting::Steps, Counting::Windows] {
            let c = reduction_curve(&f, &trace(&keys, &scores), &budgets, counting).map_err(|e| e.to_string())?;
            if c.points.windows(2).any(|w| w[1].reduction < w[0].reduction) {
                return Err(format!("run {run}: {counting} curve decreases"));
            }
            if c.points.last().map(|p| p.reduction) != Some(1.0) {
                return Err(format!("run {run}: {counting} curve ends below 1"));
            }
        }
    }
    Ok(())
}
