//! Text checkpoints: header `#drivlab-ckpt v1`, provenance, architecture,
//! normalizer statistics, then one `param <name> <rows> <cols> <values...>` line
//! per parameter. Floats use shortest round-trip formatting, so reloads are exact.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::backbone::Arch;
use super::driver::{DriverModel, DriverNet};
use super::hazard::{HazardModel, HazardNet};
use crate::artifact::{check_header, Provenance};
use crate::autodiff::ParameterStore;
use crate::data::{Normalizer, SplitId};
use crate::error::{Error, Result};
use crate::failure::Thresholds;

pub const CKPT_MAGIC: &str = "drivlab-ckpt";
pub const CKPT_VERSION: u32 = 1;

fn join(values: &[f64]) -> String {
    let mut s = String::new();
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{v}");
    }
    s
}

fn write_common(out: &mut String, kind: &str, trained_on: SplitId, arch: &Arch, norm: &Normalizer, prov: &Provenance) {
    let _ = writeln!(out, "#{CKPT_MAGIC} v{CKPT_VERSION}");
    let _ = writeln!(out, "{}", prov.to_line());
    let _ = writeln!(out, "kind {kind}");
    let _ = writeln!(out, "trained_on {trained_on}");
    let _ = writeln!(out, "{}", arch.to_line());
    let _ = writeln!(out, "norm speed {} {}", norm.mean_speed, norm.std_speed);
    let _ = writeln!(out, "norm angle {} {}", norm.mean_angle, norm.std_angle);
    let _ = writeln!(out, "norm obs_mean {}", join(&norm.obs_mean));
    let _ = writeln!(out, "norm obs_std {}", join(&norm.obs_std));
}

fn write_params(out: &mut String, store: &ParameterStore) {
    for id in store.ids() {
        let v = store.value(id);
        let _ = writeln!(
            out,
            "param {} {} {} {}",
            store.name(id),
            v.rows(),
            v.cols(),
            join(v.data())
        );
    }
}

pub fn driver_to_string(model: &DriverModel, prov: &Provenance) -> String {
    let mut s = String::new();
    write_common(
        &mut s,
        "driver",
        model.trained_on,
        &model.net.arch,
        &model.normalizer,
        prov,
    );
    write_params(&mut s, &model.net.store);
    s
}

pub fn hazard_to_string(model: &HazardModel, prov: &Provenance) -> String {
    let mut s = String::new();
    write_common(
        &mut s,
        "hazard",
        model.trained_on,
        &model.net.arch,
        &model.normalizer,
        prov,
    );
    let _ = writeln!(s, "thresholds {}", model.thresholds);
    let _ = writeln!(s, "horizon {}", model.m);
    write_params(&mut s, &model.net.store);
    s
}

pub fn save_driver(path: &Path, model: &DriverModel, prov: &Provenance) -> Result<()> {
    File::create(path)?.write_all(driver_to_string(model, prov).as_bytes())?;
    Ok(())
}

pub fn save_hazard(path: &Path, model: &HazardModel, prov: &Provenance) -> Result<()> {
    File::create(path)?.write_all(hazard_to_string(model, prov).as_bytes())?;
    Ok(())
}

/// Parsed checkpoint fields before the network is rebuilt.
struct Parsed {
    kind: String,
    prov: Provenance,
    trained_on: SplitId,
    arch: Arch,
    norm: Normalizer,
    thresholds: Option<Thresholds>,
    horizon: Option<usize>,
    params: Vec<(String, usize, usize, Vec<f64>)>,
}

fn parse<R: BufRead>(reader: R, path: &Path) -> Result<Parsed> {
    let mut lines = reader.lines();
    let header = lines.next().transpose()?;
    check_header(path, header.as_deref(), CKPT_MAGIC, CKPT_VERSION)?;
    let loc = |n: usize| format!("{}:{}", path.display(), n);
    let floats = |s: &str, n: usize| -> Result<Vec<f64>> {
        s.split_whitespace()
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|e| Error::parse(loc(n), format!("{v:?}: {e}")))
            })
            .collect()
    };
    let mut kind = None;
    let mut prov = Provenance::default();
    let mut trained_on = None;
    let mut arch = None;
    let mut speed = None;
    let mut angle = None;
    let mut obs_mean = None;
    let mut obs_std = None;
    let mut thresholds = None;
    let mut horizon = None;
    let mut params = Vec::new();
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
        let (key, rest) = line.split_once(' ').unwrap_or((line.as_str(), ""));
        match key {
            "kind" => kind = Some(rest.to_string()),
            "trained_on" => trained_on = Some(rest.parse::<SplitId>()?),
            "arch" => arch = Some(Arch::parse_line(&line)?),
            "thresholds" => thresholds = Some(rest.parse::<Thresholds>()?),
            "horizon" => {
                horizon = Some(
                    rest.parse::<usize>()
                        .map_err(|e| Error::parse(loc(n), format!("horizon: {e}")))?,
                )
            }
            "norm" => {
                let (which, vals) = rest.split_once(' ').unwrap_or((rest, ""));
                let v = floats(vals, n)?;
                match which {
                    "speed" | "angle" if v.len() != 2 => {
                        return Err(Error::parse(loc(n), "expected mean and std"));
                    }
                    "speed" => speed = Some((v[0], v[1])),
                    "angle" => angle = Some((v[0], v[1])),
                    "obs_mean" => obs_mean = Some(v),
                    "obs_std" => obs_std = Some(v),
                    other => return Err(Error::parse(loc(n), format!("unknown norm field {other:?}"))),
                }
            }
            "param" => {
                let mut toks = rest.splitn(4, ' ');
                let name = toks.next().unwrap_or("").to_string();
                let dim = |t: Option<&str>| -> Result<usize> {
                    t.and_then(|s| s.parse().ok())
                        .ok_or_else(|| Error::parse(loc(n), "bad parameter shape"))
                };
                let rows = dim(toks.next())?;
                let cols = dim(toks.next())?;
                let values = floats(toks.next().unwrap_or(""), n)?;
                if values.len() != rows * cols {
                    return Err(Error::parse(
                        loc(n),
                        format!("parameter {name}: {} values for shape {rows}x{cols}", values.len()),
                    ));
                }
                params.push((name, rows, cols, values));
            }
            other => return Err(Error::parse(loc(n), format!("unknown checkpoint field {other:?}"))),
        }
    }
    let missing = |what: &str| Error::parse(path.display().to_string(), format!("checkpoint lacks {what}"));
    let (mean_speed, std_speed) = speed.ok_or_else(|| missing("norm speed"))?;
    let (mean_angle, std_angle) = angle.ok_or_else(|| missing("norm angle"))?;
    Ok(Parsed {
        kind: kind.ok_or_else(|| missing("kind"))?,
        prov,
        trained_on: trained_on.ok_or_else(|| missing("trained_on"))?,
        arch: arch.ok_or_else(|| missing("arch"))?,
        norm: Normalizer {
            mean_speed,
            std_speed,
            mean_angle,
            std_angle,
            obs_mean: obs_mean.ok_or_else(|| missing("norm obs_mean"))?,
            obs_std: obs_std.ok_or_else(|| missing("norm obs_std"))?,
        },
        thresholds,
        horizon,
        params,
    })
}

fn fill_store(store: &mut ParameterStore, params: Vec<(String, usize, usize, Vec<f64>)>, path: &Path) -> Result<()> {
    let bad = |msg: String| Error::parse(path.display().to_string(), msg);
    if params.len() != store.len() {
        return Err(bad(format!(
            "checkpoint has {} parameters, architecture needs {}",
            params.len(),
            store.len()
        )));
    }
    for (name, rows, cols, values) in params {
        let id = store
            .find(&name)
            .ok_or_else(|| bad(format!("unexpected parameter {name}")))?;
        let slot = store.value_mut(id);
        if slot.shape() != (rows, cols) {
            return Err(bad(format!(
                "parameter {name}: shape {rows}x{cols}, architecture needs {:?}",
                slot.shape()
            )));
        }
        slot.data_mut().copy_from_slice(&values);
    }
    Ok(())
}

fn expect_kind(p: &Parsed, kind: &str, path: &Path) -> Result<()> {
    if p.kind == kind {
        Ok(())
    } else {
        Err(Error::validation(format!(
            "{} is a {} checkpoint, expected {kind}",
            path.display(),
            p.kind
        )))
    }
}

pub fn read_driver<R: BufRead>(reader: R, path: &Path) -> Result<(DriverModel, Provenance)> {
    let p = parse(reader, path)?;
    expect_kind(&p, "driver", path)?;
    let mut net = DriverNet::new(p.arch, &mut ChaCha8Rng::seed_from_u64(0))?;
    fill_store(&mut net.store, p.params, path)?;
    Ok((
        DriverModel {
            net,
            normalizer: p.norm,
            trained_on: p.trained_on,
        },
        p.prov,
    ))
}

pub fn read_hazard<R: BufRead>(reader: R, path: &Path) -> Result<(HazardModel, Provenance)> {
    let p = parse(reader, path)?;
    expect_kind(&p, "hazard", path)?;
    let missing = |what: &str| Error::parse(path.display().to_string(), format!("checkpoint lacks {what}"));
    let thresholds = p.thresholds.ok_or_else(|| missing("thresholds"))?;
    let m = p.horizon.ok_or_else(|| missing("horizon"))?;
    let mut net = HazardNet::new(p.arch, &mut ChaCha8Rng::seed_from_u64(0))?;
    fill_store(&mut net.store, p.params, path)?;
    Ok((
        HazardModel {
            net,
            normalizer: p.norm,
            trained_on: p.trained_on,
            thresholds,
            m,
        },
        p.prov,
    ))
}

pub fn load_driver(path: &Path) -> Result<(DriverModel, Provenance)> {
    crate::artifact::require(path, "driver checkpoint")?;
    read_driver(BufReader::new(File::open(path)?), path)
}

pub fn load_hazard(path: &Path) -> Result<(HazardModel, Provenance)> {
    crate::artifact::require(path, "hazard checkpoint")?;
    read_hazard(BufReader::new(File::open(path)?), path)
}
