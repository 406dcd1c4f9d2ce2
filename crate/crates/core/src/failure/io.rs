//! Label files: header `#drivlab-labels v1 thresholds=<a>,<s> m=<m> split=<D>`, a
//! provenance line, then CSV with a column header.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::labels::{LabelRecord, LabelSet, StepLabel, Thresholds};
use crate::artifact::{check_header, Provenance};
use crate::data::{EpisodeId, SplitId};
use crate::error::{Error, Result};
use crate::model::Prediction;

pub const LABELS_MAGIC: &str = "drivlab-labels";
pub const LABELS_VERSION: u32 = 1;
pub const CSV_HEADER: &str = "episode_id,t,g_a,g_s,g,g_horizon,pred_angle,pred_speed,true_angle,true_speed";

pub fn write_labels<W: Write>(out: W, labels: &LabelSet, prov: &Provenance) -> Result<()> {
    let mut w = BufWriter::new(out);
    writeln!(
        w,
        "#{LABELS_MAGIC} v{LABELS_VERSION} thresholds={} m={} split={} dropped={}",
        labels.thresholds, labels.m, labels.split, labels.dropped
    )?;
    writeln!(w, "{}", prov.to_line())?;
    writeln!(w, "{CSV_HEADER}")?;
    for r in &labels.records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            r.episode_id,
            r.t,
            r.step.g_a,
            r.step.g_s,
            r.step.g,
            r.g_horizon,
            r.pred.angle,
            r.pred.speed,
            r.truth.angle,
            r.truth.speed
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_labels(path: &Path, labels: &LabelSet, prov: &Provenance) -> Result<()> {
    write_labels(File::create(path)?, labels, prov)
}

pub fn load_labels(path: &Path) -> Result<(LabelSet, Provenance)> {
    read_labels(BufReader::new(File::open(path)?), path)
}

fn header_field<'a>(header: &'a str, key: &str, path: &Path) -> Result<&'a str> {
    header
        .split_whitespace()
        .find_map(|tok| tok.strip_prefix(key).and_then(|v| v.strip_prefix('=')))
        .ok_or_else(|| Error::parse(path.display().to_string(), format!("label header lacks {key}")))
}

pub fn read_labels<R: BufRead>(reader: R, path: &Path) -> Result<(LabelSet, Provenance)> {
    let loc = |line: usize| format!("{}:{}", path.display(), line);
    let mut lines = reader.lines();
    let header = lines.next().transpose()?;
    check_header(path, header.as_deref(), LABELS_MAGIC, LABELS_VERSION)?;
    let header = header.unwrap_or_default();
    let bad = |what: &str, e: &dyn std::fmt::Display| Error::parse(path.display().to_string(), format!("{what}: {e}"));
    let thresholds: Thresholds = header_field(&header, "thresholds", path)?.parse()?;
    let m: usize = header_field(&header, "m", path)?.parse().map_err(|e| bad("m", &e))?;
    let split: SplitId = header_field(&header, "split", path)?.parse()?;
    let dropped: usize = header_field(&header, "dropped", path)?
        .parse()
        .map_err(|e| bad("dropped", &e))?;
    let mut prov = Provenance::default();
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let n = i + 2;
        if let Some(p) = Provenance::parse_line(&line) {
            prov = p;
            continue;
        }
        if line.is_empty() || line.starts_with('#') || line == CSV_HEADER {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 10 {
            return Err(Error::parse(loc(n), format!("expected 10 fields, found {}", f.len())));
        }
        let int = |s: &str| {
            s.parse::<u64>()
                .map_err(|e| Error::parse(loc(n), format!("{s:?}: {e}")))
        };
        let real = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| Error::parse(loc(n), format!("{s:?}: {e}")))
        };
        let bit = |s: &str| match s {
            "0" => Ok(0u8),
            "1" => Ok(1u8),
            _ => Err(Error::parse(loc(n), format!("expected 0 or 1, found {s:?}"))),
        };
        let step = StepLabel {
            g_a: bit(f[2])?,
            g_s: bit(f[3])?,
            g: bit(f[4])?,
        };
        let g_horizon = bit(f[5])?;
        if step.g != (step.g_a | step.g_s) || g_horizon < step.g {
            return Err(Error::parse(loc(n), "inconsistent failure bits"));
        }
        records.push(LabelRecord {
            episode_id: EpisodeId(int(f[0])? as u32),
            t: int(f[1])? as usize,
            step,
            g_horizon,
            pred: Prediction {
                angle: real(f[6])?,
                speed: real(f[7])?,
            },
            truth: Prediction {
                angle: real(f[8])?,
                speed: real(f[9])?,
            },
        });
    }
    Ok((
        LabelSet {
            thresholds,
            m,
            split,
            records,
            dropped,
        },
        prov,
    ))
}
