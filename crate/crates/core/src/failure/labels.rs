use std::fmt;
use std::str::FromStr;

use crate::data::{make_windows, Episode, EpisodeId, SplitId, WindowSample};
use crate::error::{Error, Result};
use crate::model::{DriverModel, Prediction};

/// Step function with `sgn(0) = 1`.
pub fn sgn(x: f64) -> u8 {
    u8::from(x >= 0.0)
}

/// Angle (deg) and speed (km/h) tolerances separating correct from failed predictions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub angle: f64,
    pub speed: f64,
}

impl Thresholds {
    pub const CANONICAL: [Thresholds; 3] = [
        Thresholds { angle: 5.0, speed: 2.0 },
        Thresholds { angle: 7.0, speed: 3.0 },
        Thresholds {
            angle: 10.0,
            speed: 5.0,
        },
    ];

    pub fn new(angle: f64, speed: f64) -> Result<Self> {
        if !(angle > 0.0 && speed > 0.0 && angle.is_finite() && speed.is_finite()) {
            return Err(Error::validation(format!(
                "thresholds must be positive, got ({angle}, {speed})"
            )));
        }
        Ok(Thresholds { angle, speed })
    }

    /// The three canonical settings, strictest first.
    pub fn canonical() -> [Thresholds; 3] {
        Self::CANONICAL
    }

    pub fn middle() -> Thresholds {
        Self::CANONICAL[1]
    }

    /// File-name friendly tag such as `7x3`.
    pub fn tag(&self) -> String {
        format!("{}x{}", self.angle, self.speed)
    }
}

impl fmt::Display for Thresholds {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.angle, self.speed)
    }
}

impl FromStr for Thresholds {
    type Err = Error;

    /// Parses `angle,speed` or `angle x speed`.
    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once(',')
            .or_else(|| s.split_once('x'))
            .ok_or_else(|| Error::validation(format!("thresholds {s:?}: expected `angle,speed`")))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<f64>()
                .map_err(|e| Error::validation(format!("thresholds {s:?}: {e}")))
        };
        Thresholds::new(parse(a)?, parse(b)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepLabel {
    pub g_a: u8,
    pub g_s: u8,
    pub g: u8,
}

pub fn label_step(pred: Prediction, truth: Prediction, th: Thresholds) -> StepLabel {
    let g_a = sgn((truth.angle - pred.angle).abs() - th.angle);
    let g_s = sgn((truth.speed - pred.speed).abs() - th.speed);
    StepLabel { g_a, g_s, g: g_a | g_s }
}

/// OR of `g[t..=t + m]`; `None` when the horizon runs past the sequence.
pub fn label_horizon(g: &[u8], t: usize, m: usize) -> Option<u8> {
    let end = t.checked_add(m)?;
    if end >= g.len() {
        return None;
    }
    Some(u8::from(g[t..=end].iter().any(|&x| x != 0)))
}

/// Horizon labels for every start index with a full future; shorter tails are omitted.
pub fn horizon_labels(g: &[u8], m: usize) -> Vec<u8> {
    if g.len() <= m {
        return Vec::new();
    }
    // running count of failures in the sliding window [t, t + m]
    let mut count: usize = g[..=m].iter().map(|&x| usize::from(x != 0)).sum();
    let mut out = Vec::with_capacity(g.len() - m);
    out.push(u8::from(count > 0));
    for t in 1..g.len() - m {
        count += usize::from(g[t + m] != 0);
        count -= usize::from(g[t - 1] != 0);
        out.push(u8::from(count > 0));
    }
    out
}

/// One labeled window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelRecord {
    pub episode_id: EpisodeId,
    pub t: usize,
    pub step: StepLabel,
    pub g_horizon: u8,
    pub pred: Prediction,
    pub truth: Prediction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ClassBalance {
    pub safe: usize,
    pub hazardous: usize,
}

impl ClassBalance {
    pub fn total(&self) -> usize {
        self.safe + self.hazardous
    }

    pub fn hazardous_fraction(&self) -> f64 {
        if self.total() == 0 {
            0.0
        } else {
            self.hazardous as f64 / self.total() as f64
        }
    }
}

/// Labeled windows of one split under one threshold setting, sorted by (episode, t).
#[derive(Debug, Clone, PartialEq)]
pub struct LabelSet {
    pub thresholds: Thresholds,
    pub m: usize,
    pub split: SplitId,
    pub records: Vec<LabelRecord>,
    /// Windows discarded for lack of a full future horizon.
    pub dropped: usize,
}

impl LabelSet {
    pub fn balance(&self) -> ClassBalance {
        let hazardous = self.records.iter().filter(|r| r.g_horizon == 1).count();
        ClassBalance {
            safe: self.records.len() - hazardous,
            hazardous,
        }
    }

    pub fn horizon_labels(&self) -> Vec<u8> {
        self.records.iter().map(|r| r.g_horizon).collect()
    }
}

/// Anything that predicts maneuvers for windows: the trained driver, or a stand-in in tests.
pub trait ManeuverPredictor {
    fn predict(&self, windows: &[&WindowSample]) -> Result<Vec<Prediction>>;

    /// Split the predictor was fitted on, if any.
    fn trained_on(&self) -> Option<SplitId> {
        None
    }
}

impl ManeuverPredictor for DriverModel {
    fn predict(&self, windows: &[&WindowSample]) -> Result<Vec<Prediction>> {
        DriverModel::predict(self, windows)
    }

    fn trained_on(&self) -> Option<SplitId> {
        Some(self.trained_on)
    }
}

/// Refuses to label the split a predictor was trained on unless explicitly allowed.
pub fn check_leakage(trained_on: Option<SplitId>, requested: SplitId, allow_leakage: bool) -> Result<()> {
    match trained_on {
        Some(tr) if tr == requested && !allow_leakage => Err(Error::SplitLeakage {
            trained_on: tr.to_string(),
            requested: requested.to_string(),
        }),
        _ => Ok(()),
    }
}

/// Driver predictions for every stride-1 window of the given episodes, in (episode, t) order.
#[derive(Debug, Clone)]
pub struct PredictedWindows {
    pub windows: Vec<WindowSample>,
    pub preds: Vec<Prediction>,
}

pub fn predict_episodes<P: ManeuverPredictor + ?Sized>(
    predictor: &P,
    episodes: &[&Episode],
    split: SplitId,
    k: usize,
    allow_leakage: bool,
) -> Result<PredictedWindows> {
    check_leakage(predictor.trained_on(), split, allow_leakage)?;
    let mut sorted: Vec<&Episode> = episodes.to_vec();
    sorted.sort_by_key(|e| e.id);
    let mut windows = Vec::new();
    let mut preds = Vec::new();
    for ep in sorted {
        let ws = make_windows(ep, k, 1);
        let refs: Vec<&WindowSample> = ws.iter().collect();
        if !refs.is_empty() {
            preds.extend(predictor.predict(&refs)?);
        }
        windows.extend(ws);
    }
    Ok(PredictedWindows { windows, preds })
}

/// Labels predicted windows. Returns the label set and the indices (into
/// `pw.windows`) of the windows that received a horizon label.
pub fn label_predictions(pw: &PredictedWindows, th: Thresholds, m: usize, split: SplitId) -> (LabelSet, Vec<usize>) {
    let mut records = Vec::new();
    let mut kept = Vec::new();
    let mut dropped = 0;
    let mut start = 0;
    while start < pw.windows.len() {
        let ep = pw.windows[start].episode_id();
        let mut end = start;
        while end < pw.windows.len() && pw.windows[end].episode_id() == ep {
            end += 1;
        }
        let steps: Vec<StepLabel> = (start..end)
            .map(|i| {
                let w = &pw.windows[i];
                let truth = Prediction {
                    angle: w.target_angle,
                    speed: w.target_speed,
                };
                label_step(pw.preds[i], truth, th)
            })
            .collect();
        let g: Vec<u8> = steps.iter().map(|s| s.g).collect();
        let horizon = horizon_labels(&g, m);
        dropped += g.len() - horizon.len();
        for (j, &gh) in horizon.iter().enumerate() {
            let i = start + j;
            let w = &pw.windows[i];
            records.push(LabelRecord {
                episode_id: ep,
                t: w.t(),
                step: steps[j],
                g_horizon: gh,
                pred: pw.preds[i],
                truth: Prediction {
                    angle: w.target_angle,
                    speed: w.target_speed,
                },
            });
            kept.push(i);
        }
        start = end;
    }
    (
        LabelSet {
            thresholds: th,
            m,
            split,
            records,
            dropped,
        },
        kept,
    )
}

/// Runs the predictor over `episodes` and labels its failures. Returns the label
/// set with the windows it labels, aligned.
pub fn build_failure_dataset<P: ManeuverPredictor + ?Sized>(
    predictor: &P,
    episodes: &[&Episode],
    split: SplitId,
    th: Thresholds,
    m: usize,
    k: usize,
    allow_leakage: bool,
) -> Result<(LabelSet, Vec<WindowSample>)> {
    let pw = predict_episodes(predictor, episodes, split, k, allow_leakage)?;
    let (labels, kept) = label_predictions(&pw, th, m, split);
    let mut windows = pw.windows;
    let mut keep = vec![false; windows.len()];
    for i in kept {
        keep[i] = true;
    }
    let mut it = keep.iter();
    windows.retain(|_| *it.next().unwrap());
    let b = labels.balance();
    log::info!(
        "labeled {} windows of {split} at ({th}): {} hazardous ({:.1}%), {} dropped",
        labels.records.len(),
        b.hazardous,
        100.0 * b.hazardous_fraction(),
        labels.dropped
    );
    Ok((labels, windows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgn_boundary() {
        assert_eq!(sgn(0.0), 1);
        assert_eq!(sgn(-0.001), 0);
        assert_eq!(sgn(3.7), 1);
    }

    #[test]
    fn step_examples() {
        let th = Thresholds::new(5.0, 2.0).unwrap();
        let truth = Prediction {
            angle: 0.0,
            speed: 30.0,
        };
        let l = label_step(
            Prediction {
                angle: 6.0,
                speed: 30.0,
            },
            truth,
            th,
        );
        assert_eq!((l.g_a, l.g_s, l.g), (1, 0, 1));
        let l = label_step(truth, truth, th);
        assert_eq!((l.g_a, l.g_s, l.g), (0, 0, 0));
        let l = label_step(
            Prediction {
                angle: 5.0,
                speed: 30.0,
            },
            truth,
            th,
        );
        assert_eq!(l.g_a, 1);
    }

    #[test]
    fn horizon_examples() {
        assert_eq!(label_horizon(&[0, 0, 1, 0], 0, 3), Some(1));
        assert_eq!(label_horizon(&[0; 10], 2, 5), Some(0));
        assert_eq!(label_horizon(&[0, 1, 0], 1, 0), Some(1));
        assert_eq!(label_horizon(&[0, 1, 0], 1, 2), None);
        assert_eq!(horizon_labels(&[0, 0, 1, 0, 0], 1), vec![0, 1, 1, 0]);
        assert!(horizon_labels(&[1, 1], 2).is_empty());
    }

    #[test]
    fn thresholds_parse() {
        let t: Thresholds = "7,3".parse().unwrap();
        assert_eq!(t, Thresholds::middle());
        assert!("0,3".parse::<Thresholds>().is_err());
        assert_eq!(t.tag(), "7x3");
    }

    #[test]
    fn leakage_refused() {
        assert!(check_leakage(Some(SplitId::D1), SplitId::D1, false).is_err());
        assert!(check_leakage(Some(SplitId::D1), SplitId::D1, true).is_ok());
        assert!(check_leakage(Some(SplitId::D1), SplitId::D2, false).is_ok());
    }
}
