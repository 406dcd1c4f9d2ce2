use std::cmp::Ordering;

use serde::Serialize;

use super::scores::PolicyScoreTrace;
use crate::data::EpisodeId;
use crate::error::{Error, Result};
use crate::failure::LabelSet;

/// How failures are counted when a policy hands control to the human.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Counting {
    /// Budget is manual driving time: a selected window puts the human in charge
    /// of the steps in its horizon `[t, t + m]`, and only steps not already under
    /// manual control are charged. Failures are per-step signals `g`.
    #[default]
    Steps,
    /// Budget is a number of windows; a selected window removes its own horizon
    /// label `g_horizon`.
    Windows,
}

impl std::str::FromStr for Counting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "steps" => Ok(Counting::Steps),
            "windows" => Ok(Counting::Windows),
            other => Err(Error::validation(format!(
                "unknown counting mode {other:?} (steps|windows)"
            ))),
        }
    }
}

impl std::fmt::Display for Counting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Counting::Steps => "steps",
            Counting::Windows => "windows",
        })
    }
}

/// Failure bits of the evaluation windows, sorted by (episode, t).
#[derive(Debug, Clone, PartialEq)]
pub struct StepFailures {
    pub keys: Vec<(EpisodeId, usize)>,
    pub g: Vec<u8>,
    pub g_horizon: Vec<u8>,
    pub m: usize,
}

impl StepFailures {
    pub fn from_labels(labels: &LabelSet) -> Self {
        StepFailures {
            keys: labels.records.iter().map(|r| (r.episode_id, r.t)).collect(),
            g: labels.records.iter().map(|r| r.step.g).collect(),
            g_horizon: labels.records.iter().map(|r| r.g_horizon).collect(),
            m: labels.m,
        }
    }

    /// Builds failures from per-step bits; horizon labels are derived within each
    /// episode, with the horizon truncated at the last listed step.
    pub fn from_steps(keys: Vec<(EpisodeId, usize)>, g: Vec<u8>, m: usize) -> Result<Self> {
        if keys.len() != g.len() {
            return Err(Error::validation("keys and failure bits differ in length"));
        }
        if keys.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::validation("failure keys must be strictly increasing"));
        }
        let mut s = StepFailures {
            g_horizon: vec![0; g.len()],
            keys,
            g,
            m,
        };
        let gh: Vec<u8> = (0..s.len())
            .map(|i| u8::from(s.horizon(i).any(|j| s.g[j] != 0)))
            .collect();
        s.g_horizon = gh;
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// Indices of the listed steps inside the horizon of window `i`.
    pub fn horizon(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        let (ep, t) = self.keys[i];
        (i..self.len()).take_while(move |&j| self.keys[j].0 == ep && self.keys[j].1 <= t + self.m)
    }

    fn failure_bits(&self, counting: Counting) -> &[u8] {
        match counting {
            Counting::Steps => &self.g,
            Counting::Windows => &self.g_horizon,
        }
    }
}

fn check_aligned(labels: &StepFailures, trace: &PolicyScoreTrace) -> Result<()> {
    if trace.entries.len() != labels.len() {
        return Err(Error::validation(format!(
            "{} trace has {} windows, labels have {}",
            trace.policy,
            trace.entries.len(),
            labels.len()
        )));
    }
    for (e, k) in trace.entries.iter().zip(&labels.keys) {
        if (e.episode_id, e.t) != *k {
            return Err(Error::validation(format!(
                "{} trace misaligned with labels at episode {} t {}",
                trace.policy, e.episode_id, e.t
            )));
        }
        if !e.score.is_finite() {
            return Err(Error::validation(format!(
                "{} trace has a non-finite score",
                trace.policy
            )));
        }
    }
    Ok(())
}

/// Window indices by score descending, ties by (episode, t) ascending.
pub fn ranking(trace: &PolicyScoreTrace) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..trace.entries.len()).collect();
    idx.sort_by(|&a, &b| {
        let (ea, eb) = (&trace.entries[a], &trace.entries[b]);
        eb.score
            .partial_cmp(&ea.score)
            .unwrap_or(Ordering::Equal)
            .then((ea.episode_id, ea.t).cmp(&(eb.episode_id, eb.t)))
    });
    idx
}

/// Order in which listed steps come under manual control as the budget grows.
pub fn coverage_order(labels: &StepFailures, trace: &PolicyScoreTrace, counting: Counting) -> Result<Vec<usize>> {
    check_aligned(labels, trace)?;
    let order = ranking(trace);
    if counting == Counting::Windows {
        return Ok(order);
    }
    let mut covered = vec![false; labels.len()];
    let mut out = Vec::with_capacity(labels.len());
    for i in order {
        for j in labels.horizon(i) {
            if !covered[j] {
                covered[j] = true;
                out.push(j);
            }
        }
    }
    Ok(out)
}

/// Number of manual units granted by `budget`.
pub fn budget_units(budget: f64, n: usize) -> Result<usize> {
    if !(budget > 0.0 && budget <= 1.0) {
        return Err(Error::validation(format!("budget {budget} outside (0, 1]")));
    }
    // guard against 0.3 * 10 = 3.0000000000000004
    let raw = budget * n as f64;
    let units = (raw - 1e-9 * raw.max(1.0)).ceil().max(0.0) as usize;
    Ok(units.min(n))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Reduction {
    pub budget: f64,
    pub reduction: f64,
}

/// Reduction curve of one policy.
#[derive(Debug, Clone, PartialEq)]
pub struct TakeoverResult {
    pub policy: String,
    pub points: Vec<Reduction>,
    /// True when the labels contain no failures at all (reductions reported as 1).
    pub no_failures: bool,
}

impl TakeoverResult {
    pub fn at(&self, budget: f64) -> Option<f64> {
        self.points
            .iter()
            .find(|p| (p.budget - budget).abs() < 1e-9)
            .map(|p| p.reduction)
    }
}

fn reduction_from_order(bits: &[u8], order: &[usize], units: usize) -> (f64, bool) {
    let total: usize = bits.iter().map(|&b| b as usize).sum();
    if total == 0 {
        return (1.0, true);
    }
    let caught: usize = order[..units.min(order.len())].iter().map(|&j| bits[j] as usize).sum();
    (caught as f64 / total as f64, false)
}

/// Failure reduction of one policy at one budget; the flag reports the
/// degenerate no-failure case.
pub fn simulate_takeover(
    labels: &StepFailures,
    trace: &PolicyScoreTrace,
    budget: f64,
    counting: Counting,
) -> Result<(f64, bool)> {
    let units = budget_units(budget, labels.len())?;
    let order = coverage_order(labels, trace, counting)?;
    Ok(reduction_from_order(labels.failure_bits(counting), &order, units))
}

pub fn reduction_curve(
    labels: &StepFailures,
    trace: &PolicyScoreTrace,
    budgets: &[f64],
    counting: Counting,
) -> Result<TakeoverResult> {
    let order = coverage_order(labels, trace, counting)?;
    let bits = labels.failure_bits(counting);
    let mut points = Vec::with_capacity(budgets.len());
    let mut no_failures = false;
    for &b in budgets {
        let units = budget_units(b, labels.len())?;
        let (r, nf) = reduction_from_order(bits, &order, units);
        no_failures = nf;
        points.push(Reduction {
            budget: b,
            reduction: r,
        });
    }
    Ok(TakeoverResult {
        policy: trace.policy.clone(),
        points,
        no_failures,
    })
}

/// Interval-baseline curve: the alert positions depend on the budget, so each
/// budget gets its own trace.
pub fn interval_curve(labels: &StepFailures, budgets: &[f64], counting: Counting) -> Result<TakeoverResult> {
    let mut points = Vec::with_capacity(budgets.len());
    let mut no_failures = false;
    let m = match counting {
        Counting::Steps => labels.m,
        Counting::Windows => 0,
    };
    for &b in budgets {
        let trace = super::scores::score_interval(&labels.keys, b, m)?;
        let (r, nf) = simulate_takeover(labels, &trace, b, counting)?;
        no_failures = nf;
        points.push(Reduction {
            budget: b,
            reduction: r,
        });
    }
    Ok(TakeoverResult {
        policy: "interval".into(),
        points,
        no_failures,
    })
}

/// Relative gain in percent, or `None` if the baseline removes no failures.
pub fn safety_gain(ours: f64, base: f64) -> Option<f64> {
    if base > 0.0 {
        Some(100.0 * (ours - base) / base)
    } else {
        None
    }
}

pub fn safety_gain_at(ours: &TakeoverResult, base: &TakeoverResult, budget: f64) -> Result<Option<f64>> {
    let missing = |p: &str| Error::validation(format!("{p} curve lacks budget {budget}"));
    let o = ours.at(budget).ok_or_else(|| missing(&ours.policy))?;
    let b = base.at(budget).ok_or_else(|| missing(&base.policy))?;
    Ok(safety_gain(o, b))
}

/// Parses `start:end:step` or a comma-separated list of budgets.
pub fn parse_budgets(spec: &str) -> Result<Vec<f64>> {
    let bad = |e: &dyn std::fmt::Display| Error::validation(format!("budgets {spec:?}: {e}"));
    let out: Vec<f64> = if let [a, b, c] = spec.split(':').collect::<Vec<_>>()[..] {
        let (a, b, c): (f64, f64, f64) = (
            a.trim().parse().map_err(|e| bad(&e))?,
            b.trim().parse().map_err(|e| bad(&e))?,
            c.trim().parse().map_err(|e| bad(&e))?,
        );
        if !(c > 0.0) || b < a {
            return Err(bad(&"expected start <= end and step > 0"));
        }
        let n = ((b - a) / c + 1e-9).floor() as usize;
        // rounded to 1e-9 so 0.07 prints as 0.07
        (0..=n).map(|i| ((a + i as f64 * c) * 1e9).round() / 1e9).collect()
    } else {
        spec.split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|e| bad(&e)))
            .collect::<Result<_>>()?
    };
    for &b in &out {
        budget_units(b, 1)?;
    }
    Ok(out)
}

/// Default budget grid 0.01, 0.02, ..., 1.00.
pub fn default_budgets() -> Vec<f64> {
    (1..=100).map(|i| i as f64 / 100.0).collect()
}

/// Budgets of the safety-gain table.
pub const GAIN_BUDGETS: [f64; 7] = [0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40];
