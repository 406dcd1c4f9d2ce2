use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::error;

use drivlab::data::SplitId;
use drivlab::evaluate::{parse_budgets, Counting};
use drivlab::pipeline::{self, Layout, PipelineConfig, ThresholdSelection};
use drivlab::{Error, Result};

#[derive(Parser)]
#[command(
    name = "drivlab",
    version,
    about = "Driving model, failure prediction and takeover evaluation on synthetic drives"
)]
struct Cli {
    /// Pipeline seed; overrides `seed` in the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Directory holding the stage artifacts.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,

    /// Only print errors.
    #[arg(long, short, global = true)]
    quiet: bool,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate synthetic episodes.
    Gen {
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Split episodes into D1/D2/D3.
    Split {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the driving model on D1.
    TrainDriver {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        split: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Where to write the MAE metrics JSON.
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Label driver failures on one split.
    Label {
        #[arg(long)]
        driver: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        split: Option<PathBuf>,
        #[arg(long, default_value = "D2")]
        which: SplitId,
        /// `middle`, `all`, or `angle,speed`.
        #[arg(long)]
        thresholds: Option<ThresholdSelection>,
        /// Output path; only valid with a single threshold setting.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        allow_leakage: bool,
    },
    /// Train a hazard classifier from D2 labels.
    TrainFailure {
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        driver: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        split: Option<PathBuf>,
        #[arg(long)]
        thresholds: Option<ThresholdSelection>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score labelled D3 windows with the hazard model and MC dropout.
    Score {
        #[arg(long)]
        driver: Option<PathBuf>,
        #[arg(long)]
        hazard: Option<PathBuf>,
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        split: Option<PathBuf>,
        #[arg(long)]
        thresholds: Option<ThresholdSelection>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate takeover. With --labels and --scores evaluates that pair,
    /// otherwise labels, scores and evaluates D3 from the output directory.
    Eval {
        #[arg(long, requires = "scores")]
        labels: Option<PathBuf>,
        #[arg(long, requires = "labels")]
        scores: Option<PathBuf>,
        /// `start:stop:step` or a comma-separated list.
        #[arg(long)]
        budgets: Option<String>,
        #[arg(long)]
        counting: Option<Counting>,
        #[arg(long)]
        thresholds: Option<ThresholdSelection>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Combine per-threshold evaluations into report.json.
    Report {
        #[arg(long)]
        thresholds: Option<ThresholdSelection>,
        #[arg(long)]
        counting: Option<Counting>,
    },
    /// Run every stage.
    RunAll {
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        thresholds: Option<ThresholdSelection>,
        #[arg(long)]
        counting: Option<Counting>,
    },
}

fn or(p: Option<PathBuf>, default: PathBuf) -> PathBuf {
    p.unwrap_or(default)
}

fn single(cfg: &PipelineConfig) -> Result<drivlab::failure::Thresholds> {
    match cfg.thresholds.resolve().as_slice() {
        [t] => Ok(*t),
        _ => Err(Error::validation("this stage takes a single threshold setting")),
    }
}

fn ensure_parent(p: &Path) -> Result<()> {
    match p.parent() {
        Some(d) if !d.as_os_str().is_empty() => Ok(std::fs::create_dir_all(d)?),
        _ => Ok(()),
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = PipelineConfig::load(cli.config.as_deref(), cli.seed)?;
    let l = Layout::new(&cli.out_dir);
    std::fs::create_dir_all(&l.dir)?;
    match cli.cmd {
        Cmd::Gen { episodes, out } => {
            if let Some(n) = episodes {
                cfg.episodes = n;
                cfg.validate()?;
            }
            let out = or(out, l.episodes());
            ensure_parent(&out)?;
            pipeline::gen(&cfg, &out)
        }
        Cmd::Split { data, out } => {
            let out = or(out, l.split());
            ensure_parent(&out)?;
            pipeline::split(&cfg, &or(data, l.episodes()), &out).map(|_| ())
        }
        Cmd::TrainDriver {
            data,
            split,
            out,
            metrics,
        } => {
            let out = or(out, l.driver());
            ensure_parent(&out)?;
            let metrics = or(metrics, l.driver_metrics());
            ensure_parent(&metrics)?;
            pipeline::train_driver_stage(&cfg, &or(data, l.episodes()), &or(split, l.split()), &out, &metrics)?;
            Ok(())
        }
        Cmd::Label {
            driver,
            data,
            split,
            which,
            thresholds,
            out,
            allow_leakage,
        } => {
            if let Some(t) = thresholds {
                cfg.thresholds = t;
            }
            let ths = cfg.thresholds.resolve();
            let outs = match out {
                Some(p) => {
                    single(&cfg)?;
                    ensure_parent(&p)?;
                    vec![p]
                }
                None => ths.iter().map(|&t| l.labels(which, t)).collect(),
            };
            pipeline::label_stage(
                &cfg,
                &or(driver, l.driver()),
                &or(data, l.episodes()),
                &or(split, l.split()),
                which,
                &ths,
                &outs,
                allow_leakage,
            )?;
            Ok(())
        }
        Cmd::TrainFailure {
            labels,
            driver,
            data,
            split,
            thresholds,
            out,
        } => {
            if let Some(t) = thresholds {
                cfg.thresholds = t;
            }
            let th = single(&cfg)?;
            let out = or(out, l.hazard(th));
            ensure_parent(&out)?;
            pipeline::train_failure_stage(
                &cfg,
                &or(labels, l.labels(SplitId::D2, th)),
                &or(driver, l.driver()),
                &or(data, l.episodes()),
                &or(split, l.split()),
                &out,
            )?;
            Ok(())
        }
        Cmd::Score {
            driver,
            hazard,
            labels,
            data,
            split,
            thresholds,
            out,
        } => {
            if let Some(t) = thresholds {
                cfg.thresholds = t;
            }
            let th = single(&cfg)?;
            let out = or(out, l.scores(th));
            ensure_parent(&out)?;
            pipeline::score_stage(
                &cfg,
                &or(driver, l.driver()),
                &or(hazard, l.hazard(th)),
                &or(labels, l.labels(SplitId::D3, th)),
                &or(data, l.episodes()),
                &or(split, l.split()),
                &out,
            )
        }
        Cmd::Eval {
            labels,
            scores,
            budgets,
            counting,
            thresholds,
            out,
        } => {
            if let Some(b) = budgets {
                cfg.budgets = parse_budgets(&b)?;
            }
            if let Some(c) = counting {
                cfg.counting = c;
            }
            if let Some(t) = thresholds {
                cfg.thresholds = t;
            }
            match (labels, scores) {
                (Some(lp), Some(sp)) => {
                    let out = or(out, l.dir.join("report_eval.json"));
                    ensure_parent(&out)?;
                    pipeline::eval_stage(&cfg, &lp, &sp, Some(&l.driver_metrics()), &out)?;
                }
                _ => {
                    if out.is_some() {
                        return Err(Error::validation("--out needs --labels and --scores"));
                    }
                    pipeline::eval_layout(&cfg, &l)?;
                }
            }
            Ok(())
        }
        Cmd::Report { thresholds, counting } => {
            if let Some(t) = thresholds {
                cfg.thresholds = t;
            }
            if let Some(c) = counting {
                cfg.counting = c;
            }
            pipeline::report_stage(&cfg, &l)?;
            Ok(())
        }
        Cmd::RunAll {
            episodes,
            thresholds,
            counting,
        } => {
            if let Some(n) = episodes {
                cfg.episodes = n;
            }
            if let Some(t) = thresholds {
                cfg.thresholds = t;
            }
            if let Some(c) = counting {
                cfg.counting = c;
            }
            cfg.validate()?;
            pipeline::run_all(&cfg, &l)?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
