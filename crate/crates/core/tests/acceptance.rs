//! Acceptance checks, one PASS/FAIL line each. Pass criterion numbers as
//! arguments to run a subset, e.g. `cargo test --test acceptance -- 1 4`.

mod common;

use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use drivlab::data::{windows_for, SplitId, WindowSample};
use drivlab::evaluate::report::ThresholdEval;
use drivlab::evaluate::GAIN_BUDGETS;
use drivlab::failure::Thresholds;
use drivlab::model::checkpoint::{load_driver, load_hazard, save_driver, save_hazard};
use drivlab::model::{train_driver, train_failure, TrainConfig};
use drivlab::pipeline::{self, Layout, PipelineConfig, ThresholdSelection};
use drivlab::simgen::{generate_dataset, WorldConfig};

use common::oracles::{curves_monotone, fuzz_labels, fuzz_takeover, nested, nesting, noisy_predictions};
use common::{network_checks, primitive_checks, GRAD_TOL};

type Outcome = Result<String, String>;

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn gradients() -> Outcome {
    let start = Instant::now();
    let mut worst = ("", 0.0f64);
    let prims = primitive_checks();
    let nets = network_checks(8);
    for (name, r) in prims
        .iter()
        .map(|(n, r)| (*n, r))
        .chain(nets.iter().map(|(n, r)| (n.as_str(), r)))
    {
        if r.max_rel_error >= worst.1 {
            worst = (name, r.max_rel_error);
        }
    }
    let elapsed = start.elapsed();
    let msg = format!(
        "{} checks, worst {} at {:.2e}, {:.1} s",
        prims.len() + nets.len(),
        worst.0,
        worst.1,
        elapsed.as_secs_f64()
    );
    if worst.1 < GRAD_TOL && elapsed < Duration::from_secs(60) {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn labelling() -> Outcome {
    fuzz_labels(10_000, 2024)?;
    Ok("10000 fuzzed sequences agree with the slice-OR oracle".into())
}

/// A tiny full pipeline up to D3 labels at every canonical threshold.
fn nesting_on_trained_driver(dir: &Path) -> Result<usize, String> {
    let mut cfg = PipelineConfig::with_seed(3);
    cfg.episodes = 30;
    cfg.world.episode_length = 80;
    cfg.driver.epochs = 2;
    let layout = Layout::new(dir);
    pipeline::gen(&cfg, &layout.episodes()).map_err(err)?;
    pipeline::split(&cfg, &layout.episodes(), &layout.split()).map_err(err)?;
    pipeline::train_driver_stage(
        &cfg,
        &layout.episodes(),
        &layout.split(),
        &layout.driver(),
        &layout.driver_metrics(),
    )
    .map_err(err)?;
    let ths = Thresholds::canonical();
    let outs: Vec<_> = ths.iter().map(|&t| layout.labels(SplitId::D3, t)).collect();
    let sets = pipeline::label_stage(
        &cfg,
        &layout.driver(),
        &layout.episodes(),
        &layout.split(),
        SplitId::D3,
        &ths,
        &outs,
        false,
    )
    .map_err(err)?;
    nested(&sets)?;
    Ok(sets[0].records.len())
}

fn threshold_nesting() -> Outcome {
    for seed in 0..20 {
        nesting(&noisy_predictions(seed), 8)?;
    }
    let dir = tempfile::tempdir().map_err(err)?;
    let n = nesting_on_trained_driver(dir.path())?;
    Ok(format!(
        "20 noisy runs and a trained-driver run ({n} windows) are nested"
    ))
}

fn takeover() -> Outcome {
    fuzz_takeover(10_000, 99)?;
    curves_monotone(300, 5)?;
    Ok("10000 instances match brute force; 300 random curves are monotone".into())
}

fn driver_competence() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(err)?;
    let cfg = PipelineConfig::with_seed(0);
    let layout = Layout::new(dir.path());
    pipeline::gen(&cfg, &layout.episodes()).map_err(err)?;
    pipeline::split(&cfg, &layout.episodes(), &layout.split()).map_err(err)?;
    let m = pipeline::train_driver_stage(
        &cfg,
        &layout.episodes(),
        &layout.split(),
        &layout.driver(),
        &layout.driver_metrics(),
    )
    .map_err(err)?;
    let elapsed = start.elapsed();
    let ra = m.mae_angle / m.baseline_mae_angle;
    let rs = m.mae_speed / m.baseline_mae_speed;
    let msg = format!(
        "{} episodes x {} steps: angle MAE {:.3} vs {:.3} ({:.0}% better), speed MAE {:.3} vs {:.3} ({:.0}% better), {:.0} s",
        cfg.episodes,
        cfg.world.episode_length,
        m.mae_angle,
        m.baseline_mae_angle,
        100.0 * (1.0 - ra),
        m.mae_speed,
        m.baseline_mae_speed,
        100.0 * (1.0 - rs),
        elapsed.as_secs_f64()
    );
    if ra <= 0.7 && rs <= 0.7 && elapsed <= Duration::from_secs(20 * 60) {
        Ok(msg)
    } else {
        Err(msg)
    }
}

/// Settings for the repeated pipeline runs behind the policy comparisons.
fn study_config(seed: u64) -> PipelineConfig {
    let mut cfg = PipelineConfig::with_seed(seed);
    cfg.episodes = 300;
    cfg.driver.epochs = 4;
    cfg.hazard.epochs = 3;
    cfg.mc_samples = 20;
    cfg.thresholds = ThresholdSelection::Middle;
    cfg
}

const STUDY_SEEDS: u64 = 10;

struct Study {
    evals: Vec<ThresholdEval>,
    elapsed: Duration,
}

fn run_study() -> Result<Study, String> {
    let start = Instant::now();
    let mut evals = Vec::new();
    for seed in 1..=STUDY_SEEDS {
        let dir = tempfile::tempdir().map_err(err)?;
        let report = pipeline::run_all(&study_config(seed), &Layout::new(dir.path())).map_err(err)?;
        let ev = report.evals.into_iter().next().ok_or("report has no evaluation")?;
        println!(
            "      seed {seed}: AUC {:.3}, hazardous {:.1}%, learned/interval/uncertainty at 25%: {}",
            ev.auc.unwrap_or(f64::NAN),
            100.0 * ev.balance.hazardous_fraction(),
            ev.gain_at(0.25)
                .map(|g| format!(
                    "{:.3}/{:.3}/{:.3}",
                    g.learned,
                    g.interval,
                    g.uncertainty.unwrap_or(f64::NAN)
                ))
                .unwrap_or_default()
        );
        evals.push(ev);
    }
    Ok(Study {
        evals,
        elapsed: start.elapsed(),
    })
}

/// Mean reductions (learned, interval, uncertainty) across seeds at one budget.
fn means_at(study: &Study, budget: f64) -> Result<(f64, f64, f64), String> {
    let mut sums = (0.0, 0.0, 0.0);
    for ev in &study.evals {
        let g = ev
            .gain_at(budget)
            .ok_or_else(|| format!("no gain row at budget {budget}"))?;
        sums.0 += g.learned;
        sums.1 += g.interval;
        sums.2 += g.uncertainty.ok_or("uncertainty baseline missing")?;
    }
    let n = study.evals.len() as f64;
    Ok((sums.0 / n, sums.1 / n, sums.2 / n))
}

fn learnability(study: &Result<Study, String>) -> Outcome {
    let study = study.as_ref().map_err(Clone::clone)?;
    let mut ok = true;
    let mut cells = Vec::new();
    for &b in &GAIN_BUDGETS {
        let (l, i, _) = means_at(study, b)?;
        ok &= l > i;
        cells.push(format!("{:.0}%: {l:.3}/{i:.3}", 100.0 * b));
    }
    let (l, i, _) = means_at(study, 0.25)?;
    let gain = 100.0 * (l - i) / i;
    ok &= gain >= 15.0;
    ok &= study.elapsed <= Duration::from_secs(30 * 60);
    let msg = format!(
        "learned/interval {}; gain at 25% {gain:+.1}%, {:.0} s",
        cells.join(", "),
        study.elapsed.as_secs_f64()
    );
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn beats_uncertainty(study: &Result<Study, String>) -> Outcome {
    let study = study.as_ref().map_err(Clone::clone)?;
    let (l, _, u) = means_at(study, 0.25)?;
    let msg = format!("mean reduction at 25%: learned {l:.3}, uncertainty {u:.3}");
    if l > u {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn determinism() -> Outcome {
    let mut cfg = PipelineConfig::with_seed(11);
    cfg.episodes = 30;
    cfg.world.episode_length = 60;
    cfg.driver.epochs = 3;
    cfg.hazard.epochs = 1;
    cfg.mc_samples = 3;
    let mut bytes = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().map_err(err)?;
        let layout = Layout::new(dir.path());
        pipeline::run_all(&cfg, &layout).map_err(err)?;
        bytes.push(std::fs::read(layout.report()).map_err(err)?);
    }
    if bytes[0] == bytes[1] {
        Ok(format!("two runs wrote identical {}-byte reports", bytes[0].len()))
    } else {
        Err("report bytes differ between runs".into())
    }
}

fn round_trip() -> Outcome {
    let cfg = WorldConfig {
        episode_length: 80,
        seed: 6,
        ..Default::default()
    };
    let eps = generate_dataset(&cfg, 6).map_err(err)?;
    let windows: Vec<WindowSample> = windows_for(eps.iter(), 4, 1);
    let refs: Vec<&WindowSample> = windows.iter().collect();
    let tc = TrainConfig {
        epochs: 1,
        seed: 2,
        ..Default::default()
    };
    let (driver, _) = train_driver(&windows, None, &tc).map_err(err)?;
    let y: Vec<u8> = (0..windows.len()).map(|i| (i % 3 == 0) as u8).collect();
    let (hazard, _) = train_failure(&windows, &y, &driver.normalizer, Thresholds::middle(), 8, &tc).map_err(err)?;

    let dir = tempfile::tempdir().map_err(err)?;
    let p = |name: &str| dir.path().join(name);
    let prov = drivlab::artifact::Provenance::new(2).with_upstream("episodes", "0");
    save_driver(&p("d1"), &driver, &prov).map_err(err)?;
    let (d_back, d_prov) = load_driver(&p("d1")).map_err(err)?;
    save_driver(&p("d2"), &d_back, &d_prov).map_err(err)?;
    save_hazard(&p("h1"), &hazard, &prov).map_err(err)?;
    let (h_back, h_prov) = load_hazard(&p("h1")).map_err(err)?;
    save_hazard(&p("h2"), &h_back, &h_prov).map_err(err)?;
    let same = |a: &str, b: &str| std::fs::read(p(a)).ok() == std::fs::read(p(b)).ok();
    if !same("d1", "d2") || !same("h1", "h2") {
        return Err("re-saved checkpoint differs".into());
    }

    let mut worst = 0.0f64;
    for (a, b) in driver
        .predict(&refs)
        .map_err(err)?
        .iter()
        .zip(d_back.predict(&refs).map_err(err)?)
    {
        worst = worst.max((a.angle - b.angle).abs()).max((a.speed - b.speed).abs());
    }
    for (a, b) in hazard
        .predict_hazard(&refs)
        .map_err(err)?
        .iter()
        .zip(h_back.predict_hazard(&refs).map_err(err)?)
    {
        worst = worst.max((a - b).abs());
    }
    let msg = format!(
        "files identical; largest prediction difference {worst:.1e} over {} windows",
        refs.len()
    );
    if worst <= 1e-15 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn main() -> ExitCode {
    let picked: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wants = |n: usize| picked.is_empty() || picked.contains(&n);
    let mut outcomes: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut run = |n: usize, name: &'static str, f: &dyn Fn() -> Outcome| {
        if wants(n) {
            let o = f();
            report(n, name, &o);
            outcomes.push((n, name, o));
        }
    };
    run(1, "gradient correctness", &gradients);
    run(2, "labelling oracle equivalence", &labelling);
    run(3, "threshold nesting", &threshold_nesting);
    run(4, "takeover oracle equivalence", &takeover);
    run(5, "driving model competence", &driver_competence);
    let study = if wants(6) || wants(7) {
        println!("      running {STUDY_SEEDS} pipeline seeds");
        run_study()
    } else {
        Err("not run".into())
    };
    run(6, "learnability of drivability", &|| learnability(&study));
    run(7, "learned policy beats uncertainty", &|| beats_uncertainty(&study));
    run(8, "determinism", &determinism);
    run(9, "checkpoint round trip", &round_trip);

    let failed = outcomes.iter().filter(|(_, _, o)| o.is_err()).count();
    println!("{} of {} criteria passed", outcomes.len() - failed, outcomes.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn report(n: usize, name: &str, o: &Outcome) {
    match o {
        Ok(msg) => println!("PASS  [{n}] {name}: {msg}"),
        Err(msg) => println!("FAIL  [{n}] {name}: {msg}"),
    }
}
