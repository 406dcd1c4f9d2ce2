use std::collections::HashMap;
use std::path::{Path, PathBuf};

use log::info;

use super::config::PipelineConfig;
use crate::artifact::{check_header, file_digest, require, Provenance};
use crate::data::io::{load_episodes, load_manifest, save_episodes, save_manifest};
use crate::data::{make_windows, split_dataset, windows_for, Episode, EpisodeId, SplitId, SplitSet, WindowSample};
use crate::error::{Error, Result};
use crate::evaluate::scores::{load_scores, save_scores};
use crate::evaluate::{evaluate_policies, score_learned, score_uncertainty, DriverMetrics, Report, ThresholdEval};
use crate::failure::io::{load_labels, save_labels};
use crate::failure::{label_predictions, predict_episodes, LabelSet, Thresholds};
use crate::model::checkpoint::{load_driver, load_hazard, save_driver, save_hazard};
use crate::model::{constant_mean_mae, train_driver, train_failure, DriverModel, HazardModel};
use crate::simgen::generate_dataset;

pub const METRICS_MAGIC: &str = "drivlab-metrics";
pub const METRICS_VERSION: u32 = 1;

/// File names of every stage artifact inside the output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub dir: PathBuf,
}

impl Layout {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Layout { dir: dir.into() }
    }

    pub fn episodes(&self) -> PathBuf {
        self.dir.join("episodes.csv")
    }

    pub fn split(&self) -> PathBuf {
        self.dir.join("split.tsv")
    }

    pub fn driver(&self) -> PathBuf {
        self.dir.join("driver.ckpt")
    }

    pub fn driver_metrics(&self) -> PathBuf {
        self.dir.join("driver_metrics.json")
    }

    pub fn labels(&self, split: SplitId, th: Thresholds) -> PathBuf {
        self.dir.join(format!("labels_{split}_{}.csv", th.tag()))
    }

    pub fn hazard(&self, th: Thresholds) -> PathBuf {
        self.dir.join(format!("hazard_{}.ckpt", th.tag()))
    }

    pub fn scores(&self, th: Thresholds) -> PathBuf {
        self.dir.join(format!("scores_{}.csv", th.tag()))
    }

    pub fn eval_report(&self, th: Thresholds) -> PathBuf {
        self.dir.join(format!("report_{}.json", th.tag()))
    }

    pub fn report(&self) -> PathBuf {
        self.dir.join("report.json")
    }
}

fn load_data(episodes: &Path, split: &Path) -> Result<(Vec<Episode>, SplitSet)> {
    require(episodes, "episode file")?;
    require(split, "split manifest")?;
    let (eps, _) = load_episodes(episodes)?;
    let (split, _) = load_manifest(split)?;
    for e in &eps {
        if split.split_of(e.id).is_none() {
            return Err(Error::validation(format!(
                "episode {} is missing from the split manifest",
                e.id
            )));
        }
    }
    Ok((eps, split))
}

pub fn gen(cfg: &PipelineConfig, out: &Path) -> Result<()> {
    let eps = generate_dataset(&cfg.world, cfg.episodes)?;
    for e in &eps {
        e.check_length(cfg.k, cfg.m)?;
    }
    let prov = Provenance::new(cfg.seed).with_upstream("world", cfg.world.digest());
    save_episodes(out, &eps, &prov)?;
    info!("wrote {} episodes to {}", eps.len(), out.display());
    Ok(())
}

pub fn split(cfg: &PipelineConfig, episodes: &Path, out: &Path) -> Result<SplitSet> {
    require(episodes, "episode file")?;
    let (eps, _) = load_episodes(episodes)?;
    let set = split_dataset(&eps, cfg.split_seed())?;
    let prov = Provenance::new(cfg.seed).with_file("episodes", episodes)?;
    save_manifest(out, &set, &prov)?;
    info!(
        "split {} episodes into {}/{}/{}",
        eps.len(),
        set.d1.len(),
        set.d2.len(),
        set.d3.len()
    );
    Ok(set)
}

/// Trains the driver on D1 and measures it on D3 against the constant-mean predictor.
pub fn train_driver_stage(
    cfg: &PipelineConfig,
    episodes: &Path,
    split: &Path,
    out: &Path,
    metrics_out: &Path,
) -> Result<DriverMetrics> {
    let (eps, set) = load_data(episodes, split)?;
    let d1 = set.select(&eps, SplitId::D1);
    let d3 = set.select(&eps, SplitId::D3);
    let train = windows_for(d1.iter().copied(), cfg.k, cfg.driver.stride);
    let eval = windows_for(d3.iter().copied(), cfg.k, 1);
    // a thinned copy of D3 is enough to monitor the validation loss per epoch
    let monitor: Vec<WindowSample> = eval.iter().step_by(4).cloned().collect();
    let (model, history) = train_driver(&train, Some(&monitor), &cfg.driver)?;
    let eval_refs: Vec<&WindowSample> = eval.iter().collect();
    let mae = model.eval_mae(&eval_refs)?;
    let base = constant_mean_mae(&train, &eval_refs)?;
    let metrics = DriverMetrics {
        mae_speed: mae.speed,
        mae_angle: mae.angle,
        baseline_mae_speed: base.speed,
        baseline_mae_angle: base.angle,
        epochs: history.len(),
        seed: cfg.driver.seed,
    };
    let prov = Provenance::new(cfg.seed)
        .with_file("episodes", episodes)?
        .with_file("split", split)?;
    save_driver(out, &model, &prov)?;
    write_metrics(metrics_out, &metrics, &prov)?;
    info!(
        "driver MAE speed {:.3} km/h, angle {:.3} deg (constant mean: {:.3}, {:.3})",
        mae.speed, mae.angle, base.speed, base.angle
    );
    Ok(metrics)
}

/// Labels the driver's failures on one split for each threshold setting.
#[allow(clippy::too_many_arguments)]
pub fn label_stage(
    cfg: &PipelineConfig,
    driver: &Path,
    episodes: &Path,
    split: &Path,
    which: SplitId,
    thresholds: &[Thresholds],
    outs: &[PathBuf],
    allow_leakage: bool,
) -> Result<Vec<LabelSet>> {
    if thresholds.len() != outs.len() {
        return Err(Error::validation("one output path per threshold setting is required"));
    }
    let (model, driver_prov) = load_driver(driver)?;
    driver_prov.verify(driver, "episodes", episodes)?;
    driver_prov.verify(driver, "split", split)?;
    let (eps, set) = load_data(episodes, split)?;
    let selected = set.select(&eps, which);
    let pw = predict_episodes(&model, &selected, which, cfg.k, allow_leakage)?;
    let prov = Provenance::new(cfg.seed)
        .with_file("driver", driver)?
        .with_file("episodes", episodes)?
        .with_file("split", split)?;
    let mut sets = Vec::with_capacity(thresholds.len());
    for (&th, out) in thresholds.iter().zip(outs) {
        let (labels, _) = label_predictions(&pw, th, cfg.m, which);
        let b = labels.balance();
        info!(
            "{which} at ({th}): {} windows, {:.1}% hazardous, {} dropped",
            labels.records.len(),
            100.0 * b.hazardous_fraction(),
            labels.dropped
        );
        save_labels(out, &labels, &prov)?;
        sets.push(labels);
    }
    Ok(sets)
}

/// Windows of `which` aligned with the label records.
fn aligned_windows(eps: &[Episode], set: &SplitSet, labels: &LabelSet, k: usize) -> Result<Vec<WindowSample>> {
    let by_id: HashMap<EpisodeId, &Episode> = set.select(eps, labels.split).into_iter().map(|e| (e.id, e)).collect();
    let mut cache: HashMap<EpisodeId, Vec<WindowSample>> = HashMap::new();
    let mut out = Vec::with_capacity(labels.records.len());
    for r in &labels.records {
        let ep = by_id.get(&r.episode_id).ok_or_else(|| {
            Error::validation(format!(
                "label for episode {} which is not in split {}",
                r.episode_id, labels.split
            ))
        })?;
        let ws = cache.entry(r.episode_id).or_insert_with(|| make_windows(ep, k, 1));
        let w = ws
            .iter()
            .find(|w| w.t() == r.t)
            .ok_or_else(|| Error::validation(format!("no window at episode {} t {}", r.episode_id, r.t)))?;
        out.push(w.clone());
    }
    Ok(out)
}

fn expect_split(labels: &LabelSet, want: SplitId, path: &Path) -> Result<()> {
    if labels.split == want {
        Ok(())
    } else {
        Err(Error::validation(format!(
            "{} holds {} labels, this stage needs {want}",
            path.display(),
            labels.split
        )))
    }
}

/// Trains a hazard classifier from D2 labels.
pub fn train_failure_stage(
    cfg: &PipelineConfig,
    labels_path: &Path,
    driver: &Path,
    episodes: &Path,
    split: &Path,
    out: &Path,
) -> Result<HazardModel> {
    require(labels_path, "label file")?;
    let (labels, label_prov) = load_labels(labels_path)?;
    expect_split(&labels, SplitId::D2, labels_path)?;
    label_prov.verify(labels_path, "driver", driver)?;
    label_prov.verify(labels_path, "episodes", episodes)?;
    let (driver_model, _) = load_driver(driver)?;
    let (eps, set) = load_data(episodes, split)?;
    let windows = aligned_windows(&eps, &set, &labels, cfg.k)?;
    let y = labels.horizon_labels();
    let stride = cfg.hazard.stride;
    let (windows, y): (Vec<WindowSample>, Vec<u8>) = windows.into_iter().zip(y).step_by(stride).unzip();
    let hc = cfg.hazard_for(labels.thresholds);
    let (model, _) = train_failure(&windows, &y, &driver_model.normalizer, labels.thresholds, labels.m, &hc)?;
    let prov = Provenance::new(cfg.seed)
        .with_file("labels", labels_path)?
        .with_file("driver", driver)?;
    save_hazard(out, &model, &prov)?;
    Ok(model)
}

/// Scores the labeled D3 windows with the hazard model and the MC-dropout baseline.
pub fn score_stage(
    cfg: &PipelineConfig,
    driver: &Path,
    hazard: &Path,
    labels_path: &Path,
    episodes: &Path,
    split: &Path,
    out: &Path,
) -> Result<()> {
    let (driver_model, _) = load_driver(driver)?;
    let (hazard_model, hazard_prov) = load_hazard(hazard)?;
    hazard_prov.verify(hazard, "driver", driver)?;
    require(labels_path, "label file")?;
    let (labels, label_prov) = load_labels(labels_path)?;
    expect_split(&labels, SplitId::D3, labels_path)?;
    label_prov.verify(labels_path, "driver", driver)?;
    label_prov.verify(labels_path, "episodes", episodes)?;
    check_roles(&driver_model, &hazard_model)?;
    if hazard_model.thresholds != labels.thresholds {
        return Err(Error::validation(format!(
            "hazard model was trained at ({}) but labels use ({})",
            hazard_model.thresholds, labels.thresholds
        )));
    }
    let (eps, set) = load_data(episodes, split)?;
    let windows = aligned_windows(&eps, &set, &labels, cfg.k)?;
    let refs: Vec<&WindowSample> = windows.iter().collect();
    let learned = score_learned(&hazard_model, &refs)?;
    let unc = score_uncertainty(&driver_model, &refs, cfg.mc_samples, cfg.mc_seed())?;
    let prov = Provenance::new(cfg.seed)
        .with_file("driver", driver)?
        .with_file("hazard", hazard)?
        .with_file("labels", labels_path)?;
    save_scores(out, &[&learned, &unc], &prov)
}

fn check_roles(driver: &DriverModel, hazard: &HazardModel) -> Result<()> {
    if driver.trained_on == SplitId::D3 || hazard.trained_on == SplitId::D3 {
        return Err(Error::SplitLeakage {
            trained_on: format!("driver {} / hazard {}", driver.trained_on, hazard.trained_on),
            requested: SplitId::D3.to_string(),
        });
    }
    Ok(())
}

/// Evaluates one label/score pair.
pub fn eval_files(cfg: &PipelineConfig, labels_path: &Path, scores_path: &Path) -> Result<ThresholdEval> {
    require(labels_path, "label file")?;
    let (labels, _) = load_labels(labels_path)?;
    expect_split(&labels, SplitId::D3, labels_path)?;
    let (traces, _) = load_scores(scores_path)?;
    let learned = traces
        .iter()
        .find(|t| t.policy == "learned")
        .ok_or_else(|| Error::validation(format!("{} has no `learned` column", scores_path.display())))?;
    let unc = traces.iter().find(|t| t.policy == "uncertainty");
    evaluate_policies(&labels, learned, unc, &cfg.budgets, cfg.counting)
}

fn seeds_of(cfg: &PipelineConfig) -> Vec<(String, u64)> {
    vec![
        ("pipeline".into(), cfg.seed),
        ("world".into(), cfg.world.seed),
        ("split".into(), cfg.split_seed()),
        ("driver".into(), cfg.driver.seed),
        ("hazard".into(), cfg.hazard.seed),
        ("mc_dropout".into(), cfg.mc_seed()),
    ]
}

fn write_report(report: &Report, out: &Path) -> Result<()> {
    std::fs::write(out, report.to_pretty()?)?;
    info!("wrote {}", out.display());
    Ok(())
}

/// Evaluates one label/score pair and writes its report.
pub fn eval_stage(
    cfg: &PipelineConfig,
    labels_path: &Path,
    scores_path: &Path,
    driver_metrics: Option<&Path>,
    out: &Path,
) -> Result<Report> {
    let ev = eval_files(cfg, labels_path, scores_path)?;
    let mut prov = Provenance::new(cfg.seed)
        .with_file("labels", labels_path)?
        .with_file("scores", scores_path)?;
    let driver = match driver_metrics {
        Some(p) if p.exists() => {
            prov = prov.with_file("driver_metrics", p)?;
            Some(read_metrics(p)?)
        }
        _ => None,
    };
    let report = Report {
        seeds: seeds_of(cfg),
        provenance: prov,
        driver,
        evals: vec![ev],
    };
    write_report(&report, out)?;
    Ok(report)
}

/// Flat metrics object; provenance rides along as extra scalar keys.
fn write_metrics(path: &Path, metrics: &DriverMetrics, prov: &Provenance) -> Result<()> {
    let mut obj = match metrics.to_json() {
        serde_json::Value::Object(o) => o,
        _ => unreachable!("metrics serialize to an object"),
    };
    obj.insert("format".into(), format!("{METRICS_MAGIC} v{METRICS_VERSION}").into());
    obj.insert("pipeline_seed".into(), prov.seed.into());
    let upstream: Vec<String> = prov.upstream.iter().map(|(n, d)| format!("{n}:{d}")).collect();
    obj.insert("upstream".into(), upstream.join(",").into());
    let mut json = serde_json::to_string_pretty(&obj)?;
    json.push('\n');
    std::fs::write(path, json)?;
    Ok(())
}

fn read_metrics(path: &Path) -> Result<DriverMetrics> {
    let value: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    let header = value.get("format").and_then(|f| f.as_str()).map(|f| format!("#{f}"));
    check_header(path, header.as_deref(), METRICS_MAGIC, METRICS_VERSION)?;
    Ok(serde_json::from_value(value)?)
}

/// Labels D3 and scores it for every threshold, then evaluates each pair.
/// Requires the driver and hazard checkpoints in the layout.
pub fn eval_layout(cfg: &PipelineConfig, layout: &Layout) -> Result<Vec<Report>> {
    require(&layout.driver(), "driver checkpoint")?;
    let ths = cfg.thresholds.resolve();
    for &th in &ths {
        require(&layout.hazard(th), "hazard checkpoint")?;
    }
    let outs: Vec<PathBuf> = ths.iter().map(|&t| layout.labels(SplitId::D3, t)).collect();
    label_stage(
        cfg,
        &layout.driver(),
        &layout.episodes(),
        &layout.split(),
        SplitId::D3,
        &ths,
        &outs,
        false,
    )?;
    let mut reports = Vec::new();
    for &th in &ths {
        score_stage(
            cfg,
            &layout.driver(),
            &layout.hazard(th),
            &layout.labels(SplitId::D3, th),
            &layout.episodes(),
            &layout.split(),
            &layout.scores(th),
        )?;
        reports.push(eval_stage(
            cfg,
            &layout.labels(SplitId::D3, th),
            &layout.scores(th),
            Some(&layout.driver_metrics()),
            &layout.eval_report(th),
        )?);
    }
    Ok(reports)
}

/// Combines the per-threshold evaluations into one report.
pub fn report_stage(cfg: &PipelineConfig, layout: &Layout) -> Result<Report> {
    let mut prov = Provenance::new(cfg.seed);
    let mut evals = Vec::new();
    for th in cfg.thresholds.resolve() {
        let (lp, sp) = (layout.labels(SplitId::D3, th), layout.scores(th));
        evals.push(eval_files(cfg, &lp, &sp)?);
        prov = prov
            .with_upstream(format!("labels_{}", th.tag()), file_digest(&lp)?)
            .with_upstream(format!("scores_{}", th.tag()), file_digest(&sp)?);
    }
    let mp = layout.driver_metrics();
    require(&mp, "driver metrics")?;
    prov = prov.with_file("driver_metrics", &mp)?;
    let report = Report {
        seeds: seeds_of(cfg),
        provenance: prov,
        driver: Some(read_metrics(&mp)?),
        evals,
    };
    write_report(&report, &layout.report())?;
    Ok(report)
}

/// Every stage in order.
pub fn run_all(cfg: &PipelineConfig, layout: &Layout) -> Result<Report> {
    std::fs::create_dir_all(&layout.dir)?;
    gen(cfg, &layout.episodes())?;
    split(cfg, &layout.episodes(), &layout.split())?;
    train_driver_stage(
        cfg,
        &layout.episodes(),
        &layout.split(),
        &layout.driver(),
        &layout.driver_metrics(),
    )?;
    let ths = cfg.thresholds.resolve();
    let outs: Vec<PathBuf> = ths.iter().map(|&t| layout.labels(SplitId::D2, t)).collect();
    label_stage(
        cfg,
        &layout.driver(),
        &layout.episodes(),
        &layout.split(),
        SplitId::D2,
        &ths,
        &outs,
        false,
    )?;
    for &th in &ths {
        train_failure_stage(
            cfg,
            &layout.labels(SplitId::D2, th),
            &layout.driver(),
            &layout.episodes(),
            &layout.split(),
            &layout.hazard(th),
        )?;
    }
    eval_layout(cfg, layout)?;
    report_stage(cfg, layout)
}
