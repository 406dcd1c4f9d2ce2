use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::artifact::{check_header, Provenance};
use crate::autodiff::DropoutMode;
use crate::data::{EpisodeId, WindowSample};
use crate::error::{Error, Result};
use crate::model::{DriverModel, HazardModel};

use super::takeover::StepFailures;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredWindow {
    pub episode_id: EpisodeId,
    pub t: usize,
    pub score: f64,
}

/// Scores of one policy over the evaluation windows, in (episode, t) order.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyScoreTrace {
    pub policy: String,
    pub entries: Vec<ScoredWindow>,
}

impl PolicyScoreTrace {
    pub fn new(policy: &str, windows: &[&WindowSample], scores: Vec<f64>) -> Self {
        PolicyScoreTrace {
            policy: policy.to_string(),
            entries: windows
                .iter()
                .zip(scores)
                .map(|(w, score)| ScoredWindow {
                    episode_id: w.episode_id(),
                    t: w.t(),
                    score,
                })
                .collect(),
        }
    }

    pub fn scores(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.score).collect()
    }
}

/// Hazard probability per window.
pub fn score_learned(hazard: &HazardModel, windows: &[&WindowSample]) -> Result<PolicyScoreTrace> {
    Ok(PolicyScoreTrace::new(
        "learned",
        windows,
        hazard.predict_hazard(windows)?,
    ))
}

pub const DEFAULT_MC_SAMPLES: usize = 20;

/// MC-dropout predictive variance: angle and speed variances, each divided by its
/// standard deviation across the evaluated windows, summed.
pub fn score_uncertainty(
    driver: &DriverModel,
    windows: &[&WindowSample],
    n_samples: usize,
    seed: u64,
) -> Result<PolicyScoreTrace> {
    if driver.net.arch.dropout <= 0.0 {
        return Err(Error::validation("dropout disabled; uncertainty undefined"));
    }
    if n_samples < 2 {
        return Err(Error::validation(format!(
            "uncertainty needs at least 2 dropout samples, got {n_samples}"
        )));
    }
    let n = windows.len();
    let (mut sum_a, mut sq_a) = (vec![0.0; n], vec![0.0; n]);
    let (mut sum_s, mut sq_s) = (vec![0.0; n], vec![0.0; n]);
    for s in 0..n_samples {
        let preds = driver.predict_mode(windows, DropoutMode::Mc, crate::seeds::derive(seed, s as u64))?;
        for (i, p) in preds.iter().enumerate() {
            sum_a[i] += p.angle;
            sq_a[i] += p.angle * p.angle;
            sum_s[i] += p.speed;
            sq_s[i] += p.speed * p.speed;
        }
    }
    let k = n_samples as f64;
    let var = |sum: f64, sq: f64| ((sq - sum * sum / k) / (k - 1.0)).max(0.0);
    let va: Vec<f64> = (0..n).map(|i| var(sum_a[i], sq_a[i])).collect();
    let vs: Vec<f64> = (0..n).map(|i| var(sum_s[i], sq_s[i])).collect();
    let (sa, ss) = (spread(&va), spread(&vs));
    let scores = va.iter().zip(&vs).map(|(a, s)| a / sa + s / ss).collect();
    Ok(PolicyScoreTrace::new("uncertainty", windows, scores))
}

/// Population standard deviation, or 1 when it vanishes.
fn spread(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 1.0;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt();
    if sd > 1e-300 {
        sd
    } else {
        1.0
    }
}

/// Regular alerts: within each episode an alert is raised every `(m + 1) / budget`
/// windows, each handing over `m + 1` steps. Alert windows score 1, others 0.
pub fn score_interval(keys: &[(EpisodeId, usize)], budget: f64, m: usize) -> Result<PolicyScoreTrace> {
    super::takeover::budget_units(budget, 1)?;
    let period = (m + 1) as f64 / budget;
    let mut entries = Vec::with_capacity(keys.len());
    let mut start = 0;
    while start < keys.len() {
        let ep = keys[start].0;
        let mut end = start;
        while end < keys.len() && keys[end].0 == ep {
            end += 1;
        }
        let mut next_alert = 0usize;
        let mut j = 0usize;
        for (local, &(episode_id, t)) in keys[start..end].iter().enumerate() {
            let alert = local == next_alert;
            if alert {
                j += 1;
                next_alert = (j as f64 * period - 1e-9).ceil() as usize;
            }
            entries.push(ScoredWindow {
                episode_id,
                t,
                score: if alert { 1.0 } else { 0.0 },
            });
        }
        start = end;
    }
    Ok(PolicyScoreTrace {
        policy: "interval".into(),
        entries,
    })
}

/// Hindsight policy: failed steps first, denser horizons before sparser ones.
pub fn score_oracle(labels: &StepFailures) -> PolicyScoreTrace {
    let m = labels.m as f64;
    let entries = (0..labels.len())
        .map(|i| {
            let dense = labels.horizon(i).filter(|&j| labels.g[j] != 0).count() as f64;
            ScoredWindow {
                episode_id: labels.keys[i].0,
                t: labels.keys[i].1,
                score: labels.g[i] as f64 + dense / (m + 2.0),
            }
        })
        .collect();
    PolicyScoreTrace {
        policy: "oracle".into(),
        entries,
    }
}

/// Area under the ROC curve of `scores` against binary `labels` (ties count half);
/// `None` if either class is absent.
pub fn auc(scores: &[f64], labels: &[u8]) -> Option<f64> {
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 || scores.len() != labels.len() {
        return None;
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        // average of 1-based ranks i+1 ..= j+1
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            if labels[k] == 1 {
                rank_sum_pos += avg;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

pub const SCORES_MAGIC: &str = "drivlab-scores";
pub const SCORES_VERSION: u32 = 1;

/// Writes aligned traces as `episode_id,t,<policy>...` CSV.
pub fn write_scores<W: Write>(out: W, traces: &[&PolicyScoreTrace], prov: &Provenance) -> Result<()> {
    let first = traces
        .first()
        .ok_or_else(|| Error::validation("no score traces to write"))?;
    for tr in traces {
        if tr.entries.len() != first.entries.len()
            || tr
                .entries
                .iter()
                .zip(&first.entries)
                .any(|(a, b)| (a.episode_id, a.t) != (b.episode_id, b.t))
        {
            return Err(Error::validation("score traces are not aligned"));
        }
    }
    let mut w = BufWriter::new(out);
    writeln!(w, "#{SCORES_MAGIC} v{SCORES_VERSION}")?;
    writeln!(w, "{}", prov.to_line())?;
    let names: Vec<&str> = traces.iter().map(|t| t.policy.as_str()).collect();
    writeln!(w, "episode_id,t,{}", names.join(","))?;
    for (i, e) in first.entries.iter().enumerate() {
        write!(w, "{},{}", e.episode_id, e.t)?;
        for tr in traces {
            write!(w, ",{}", tr.entries[i].score)?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_scores(path: &Path, traces: &[&PolicyScoreTrace], prov: &Provenance) -> Result<()> {
    write_scores(File::create(path)?, traces, prov)
}

pub fn read_scores<R: BufRead>(reader: R, path: &Path) -> Result<(Vec<PolicyScoreTrace>, Provenance)> {
    let loc = |n: usize| format!("{}:{}", path.display(), n);
    let mut lines = reader.lines();
    let header = lines.next().transpose()?;
    check_header(path, header.as_deref(), SCORES_MAGIC, SCORES_VERSION)?;
    let mut prov = Provenance::default();
    let mut traces: Vec<PolicyScoreTrace> = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let n = i + 2;
        if let Some(p) = Provenance::parse_line(&line) {
            prov = p;
            continue;
        }
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() < 3 {
            return Err(Error::parse(loc(n), "expected episode_id,t and at least one score"));
        }
        if f[0] == "episode_id" {
            traces = f[2..]
                .iter()
                .map(|p| PolicyScoreTrace {
                    policy: p.to_string(),
                    entries: Vec::new(),
                })
                .collect();
            continue;
        }
        if f.len() != traces.len() + 2 {
            return Err(Error::parse(loc(n), format!("expected {} fields", traces.len() + 2)));
        }
        let episode_id: EpisodeId = f[0].parse()?;
        let t: usize = f[1].parse().map_err(|e| Error::parse(loc(n), format!("t: {e}")))?;
        for (tr, v) in traces.iter_mut().zip(&f[2..]) {
            let score: f64 = v.parse().map_err(|e| Error::parse(loc(n), format!("{v:?}: {e}")))?;
            tr.entries.push(ScoredWindow { episode_id, t, score });
        }
    }
    if traces.is_empty() {
        return Err(Error::parse(path.display().to_string(), "no score columns"));
    }
    Ok((traces, prov))
}

pub fn load_scores(path: &Path) -> Result<(Vec<PolicyScoreTrace>, Provenance)> {
    crate::artifact::require(path, "score file")?;
    read_scores(BufReader::new(File::open(path)?), path)
}
