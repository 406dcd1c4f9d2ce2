use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::scores::{auc, score_oracle, PolicyScoreTrace};
use super::takeover::{
    interval_curve, reduction_curve, safety_gain, simulate_takeover, Counting, StepFailures, TakeoverResult,
    GAIN_BUDGETS,
};
use crate::artifact::Provenance;
use crate::error::{Error, Result};
use crate::failure::{ClassBalance, LabelSet, Thresholds};

/// Shown instead of a number when the baseline removes no failures.
pub const UNDEFINED_GAIN: &str = "∞/no-failures";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriverMetrics {
    pub mae_speed: f64,
    pub mae_angle: f64,
    pub baseline_mae_speed: f64,
    pub baseline_mae_angle: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl DriverMetrics {
    pub fn to_json(&self) -> Value {
        json!(self)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainRow {
    pub budget: f64,
    pub learned: f64,
    pub interval: f64,
    pub uncertainty: Option<f64>,
}

impl GainRow {
    pub fn vs_interval(&self) -> Option<f64> {
        safety_gain(self.learned, self.interval)
    }

    pub fn vs_uncertainty(&self) -> Option<f64> {
        self.uncertainty.and_then(|u| safety_gain(self.learned, u))
    }
}

/// Takeover study for one threshold setting.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdEval {
    pub thresholds: Thresholds,
    pub m: usize,
    pub counting: Counting,
    pub balance: ClassBalance,
    pub auc: Option<f64>,
    pub curves: Vec<TakeoverResult>,
    pub gains: Vec<GainRow>,
    pub no_failures: bool,
}

impl ThresholdEval {
    pub fn curve(&self, policy: &str) -> Option<&TakeoverResult> {
        self.curves.iter().find(|c| c.policy == policy)
    }

    pub fn gain_at(&self, budget: f64) -> Option<&GainRow> {
        self.gains.iter().find(|g| (g.budget - budget).abs() < 1e-9)
    }
}

/// Runs every policy over the labels. `learned` and `uncertainty` must be aligned
/// with the label records.
pub fn evaluate_policies(
    labels: &LabelSet,
    learned: &PolicyScoreTrace,
    uncertainty: Option<&PolicyScoreTrace>,
    budgets: &[f64],
    counting: Counting,
) -> Result<ThresholdEval> {
    if labels.records.is_empty() {
        return Err(Error::validation("no labeled evaluation windows"));
    }
    let failures = StepFailures::from_labels(labels);
    let oracle = score_oracle(&failures);
    let mut curves = vec![
        reduction_curve(&failures, learned, budgets, counting)?,
        interval_curve(&failures, budgets, counting)?,
    ];
    if let Some(u) = uncertainty {
        curves.push(reduction_curve(&failures, u, budgets, counting)?);
    }
    curves.push(reduction_curve(&failures, &oracle, budgets, counting)?);
    let interval_m = if counting == Counting::Steps { failures.m } else { 0 };
    let mut gains = Vec::new();
    let mut no_failures = false;
    for &b in &GAIN_BUDGETS {
        let (l, nf) = simulate_takeover(&failures, learned, b, counting)?;
        no_failures = nf;
        let it = super::scores::score_interval(&failures.keys, b, interval_m)?;
        let (i, _) = simulate_takeover(&failures, &it, b, counting)?;
        let u = match uncertainty {
            Some(u) => Some(simulate_takeover(&failures, u, b, counting)?.0),
            None => None,
        };
        gains.push(GainRow {
            budget: b,
            learned: l,
            interval: i,
            uncertainty: u,
        });
    }
    Ok(ThresholdEval {
        thresholds: labels.thresholds,
        m: labels.m,
        counting,
        balance: labels.balance(),
        auc: auc(&learned.scores(), &labels.horizon_labels()),
        curves,
        gains,
        no_failures,
    })
}

fn gain_value(g: Option<f64>) -> Value {
    g.map_or_else(|| Value::String(UNDEFINED_GAIN.into()), |v| json!(v))
}

fn opt(v: Option<f64>) -> Value {
    v.map_or(Value::Null, |v| json!(v))
}

impl ThresholdEval {
    pub fn to_json(&self) -> Value {
        let mut policies = Map::new();
        for c in &self.curves {
            policies.insert(c.policy.clone(), json!(c.points));
        }
        let gains: Vec<Value> = self
            .gains
            .iter()
            .map(|g| {
                json!({
                    "budget": g.budget,
                    "learned": g.learned,
                    "interval": g.interval,
                    "uncertainty": opt(g.uncertainty),
                    "gain_vs_interval": gain_value(g.vs_interval()),
                    "gain_vs_uncertainty": if g.uncertainty.is_some() { gain_value(g.vs_uncertainty()) } else { Value::Null },
                })
            })
            .collect();
        json!({
            "thresholds": { "angle": self.thresholds.angle, "speed": self.thresholds.speed },
            "m": self.m,
            "counting": self.counting.to_string(),
            "class_balance": {
                "safe": self.balance.safe,
                "hazardous": self.balance.hazardous,
                "hazardous_fraction": self.balance.hazardous_fraction(),
            },
            "auc": opt(self.auc),
            "no_failures": self.no_failures,
            "policies": Value::Object(policies),
            "gains": gains,
        })
    }
}

pub const REPORT_MAGIC: &str = "drivlab-report";
pub const REPORT_VERSION: u32 = 1;

/// Full evaluation report.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    /// Named seeds of the run (pipeline seed first).
    pub seeds: Vec<(String, u64)>,
    pub provenance: Provenance,
    pub driver: Option<DriverMetrics>,
    pub evals: Vec<ThresholdEval>,
}

impl Report {
    pub fn to_json(&self) -> Value {
        let table: Vec<Value> = self
            .evals
            .iter()
            .flat_map(|e| {
                e.gains.iter().map(move |g| {
                    json!({
                        "thresholds": e.thresholds.to_string(),
                        "budget": g.budget,
                        "gain_vs_interval": gain_value(g.vs_interval()),
                        "gain_vs_uncertainty": if g.uncertainty.is_some() { gain_value(g.vs_uncertainty()) } else { Value::Null },
                    })
                })
            })
            .collect();
        json!({
            "format": format!("{REPORT_MAGIC} v{REPORT_VERSION}"),
            "seeds": Value::Object(self.seeds.iter().map(|(k, v)| (k.clone(), json!(v))).collect()),
            "provenance": self.provenance.to_json(),
            "driver": self.driver.map_or(Value::Null, |d| d.to_json()),
            "evaluations": self.evals.iter().map(ThresholdEval::to_json).collect::<Vec<_>>(),
            "gains_table": table,
        })
    }

    pub fn to_pretty(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(&self.to_json())?;
        s.push('\n');
        Ok(s)
    }
}
