//! Episode files and split manifests.
//!
//! Episode file: header `#drivlab-episodes v1 d=<obs-dim> f=4`, optional `#` metadata
//! lines, then one record per line:
//! `episode_id,step_index,speed,angle,obs_0,...,obs_{d-1}`.
//!
//! Manifest: header `#drivlab-split v1`, then `episode_id<TAB>D1|D2|D3` lines.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::split::SplitSet;
use super::types::{Episode, EpisodeId, EpisodeMeta, SplitId, TimedRecord, SAMPLE_RATE_HZ};
use crate::artifact::{check_header, Provenance};
use crate::error::{Error, Result};

pub const EPISODES_MAGIC: &str = "drivlab-episodes";
pub const SPLIT_MAGIC: &str = "drivlab-split";
pub const FORMAT_VERSION: u32 = 1;

pub fn write_episodes<W: Write>(out: W, episodes: &[Episode], prov: &Provenance) -> Result<()> {
    let mut w = BufWriter::new(out);
    let d = episodes.first().map_or(0, |e| e.obs_dim());
    writeln!(w, "#{EPISODES_MAGIC} v{FORMAT_VERSION} d={d} f={SAMPLE_RATE_HZ}")?;
    writeln!(w, "{}", prov.to_line())?;
    let mut line = String::new();
    for ep in episodes {
        writeln!(
            w,
            "#episode {} seed={} config={}",
            ep.id, ep.seed, ep.meta.config_digest
        )?;
        for r in &ep.records {
            line.clear();
            use std::fmt::Write as _;
            let _ = write!(line, "{},{},{},{}", ep.id, r.step_index, r.speed, r.angle);
            for v in &r.obs {
                let _ = write!(line, ",{v}");
            }
            writeln!(w, "{line}")?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_episodes(path: &Path, episodes: &[Episode], prov: &Provenance) -> Result<()> {
    write_episodes(File::create(path)?, episodes, prov)
}

/// Reads an episode file. Episodes come back ordered by id.
pub fn load_episodes(path: &Path) -> Result<(Vec<Episode>, Provenance)> {
    let reader = BufReader::new(File::open(path)?);
    read_episodes(reader, path)
}

pub fn read_episodes<R: BufRead>(reader: R, path: &Path) -> Result<(Vec<Episode>, Provenance)> {
    let mut lines = reader.lines();
    let header = lines.next().transpose()?;
    check_header(path, header.as_deref(), EPISODES_MAGIC, FORMAT_VERSION)?;
    let header = header.unwrap_or_default();
    let dim: usize = header
        .split_whitespace()
        .find_map(|t| t.strip_prefix("d="))
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::parse(path.display().to_string(), "header lacks d=<obs-dim>"))?;

    let mut prov = Provenance::default();
    let mut seeds: BTreeMap<EpisodeId, (u64, String)> = BTreeMap::new();
    let mut records: BTreeMap<EpisodeId, Vec<TimedRecord>> = BTreeMap::new();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        let loc = || format!("{}:{}", path.display(), lineno + 2);
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("#episode ") {
            let mut toks = rest.split_whitespace();
            let id: EpisodeId = toks.next().unwrap_or("").parse()?;
            let mut seed = 0;
            let mut digest = String::new();
            for t in toks {
                if let Some(v) = t.strip_prefix("seed=") {
                    seed = v.parse().map_err(|_| Error::parse(loc(), "bad seed"))?;
                } else if let Some(v) = t.strip_prefix("config=") {
                    digest = v.to_string();
                }
            }
            seeds.insert(id, (seed, digest));
            continue;
        }
        if let Some(p) = Provenance::parse_line(&line) {
            prov = p;
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 + dim {
            return Err(Error::parse(
                loc(),
                format!("expected {} fields, got {}", 4 + dim, fields.len()),
            ));
        }
        let num = |s: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::parse(loc(), format!("{s:?}: {e}")))
        };
        let id: EpisodeId = fields[0].parse()?;
        let step_index: usize = fields[1]
            .trim()
            .parse()
            .map_err(|e| Error::parse(loc(), format!("step_index: {e}")))?;
        let obs = fields[4..].iter().map(|s| num(s)).collect::<Result<Vec<f64>>>()?;
        records.entry(id).or_default().push(TimedRecord {
            step_index,
            obs,
            speed: num(fields[2])?,
            angle: num(fields[3])?,
        });
    }
    let mut episodes = Vec::with_capacity(records.len());
    for (id, recs) in records {
        let (seed, config_digest) = seeds.remove(&id).unwrap_or_default();
        let meta = EpisodeMeta {
            config_digest,
            difficulty: Vec::new(),
        };
        episodes.push(Episode::new(id, seed, recs, meta)?);
    }
    Ok((episodes, prov))
}

pub fn write_manifest<W: Write>(out: W, split: &SplitSet, prov: &Provenance) -> Result<()> {
    let mut w = BufWriter::new(out);
    writeln!(w, "#{SPLIT_MAGIC} v{FORMAT_VERSION}")?;
    writeln!(w, "{}", prov.to_line())?;
    for (id, s) in split.assignment() {
        writeln!(w, "{id}\t{s}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_manifest(path: &Path, split: &SplitSet, prov: &Provenance) -> Result<()> {
    write_manifest(File::create(path)?, split, prov)
}

pub fn load_manifest(path: &Path) -> Result<(SplitSet, Provenance)> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let header = lines.next().transpose()?;
    check_header(path, header.as_deref(), SPLIT_MAGIC, FORMAT_VERSION)?;
    let mut prov = Provenance::default();
    let mut map = BTreeMap::new();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if let Some(p) = Provenance::parse_line(&line) {
            prov = p;
            continue;
        }
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (id, s) = line.split_once('\t').ok_or_else(|| {
            Error::parse(
                format!("{}:{}", path.display(), lineno + 2),
                "expected episode_id<TAB>split",
            )
        })?;
        let id: EpisodeId = id.parse()?;
        let s: SplitId = s.parse()?;
        if map.insert(id, s).is_some() {
            return Err(Error::validation(format!(
                "episode {id} appears twice in split manifest"
            )));
        }
    }
    Ok((SplitSet::from_assignment(&map), prov))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<Episode> {
        (0..2u32)
            .map(|e| {
                let records = (0..3)
                    .map(|i| TimedRecord {
                        step_index: i,
                        obs: vec![0.1 * i as f64, -1.0 / 3.0, 1e-17],
                        speed: 42.125 + e as f64,
                        angle: -7.000000000000001,
                    })
                    .collect();
                let meta = EpisodeMeta {
                    config_digest: "abc".into(),
                    difficulty: Vec::new(),
                };
                Episode::new(EpisodeId(e), 100 + e as u64, records, meta).unwrap()
            })
            .collect()
    }

    #[test]
    fn episodes_round_trip_exactly() {
        let eps = sample();
        let prov = Provenance::new(5).with_upstream("config", "dead");
        let mut buf = Vec::new();
        write_episodes(&mut buf, &eps, &prov).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("#drivlab-episodes v1 d=3 f=4\n"));
        let (back, p) = read_episodes(buf.as_slice(), Path::new("mem")).unwrap();
        assert_eq!(p, prov);
        assert_eq!(back, eps);
    }

    #[test]
    fn wrong_field_count_is_parse_error() {
        let text = "#drivlab-episodes v1 d=2 f=4\n0,0,1.0,2.0,3.0\n";
        let err = read_episodes(text.as_bytes(), Path::new("mem")).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
    }

    #[test]
    fn out_of_range_speed_rejected() {
        let text = "#drivlab-episodes v1 d=1 f=4\n0,0,181,0,0\n";
        assert!(read_episodes(text.as_bytes(), Path::new("mem")).is_err());
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("split.tsv");
        let split = SplitSet {
            d1: vec![EpisodeId(2), EpisodeId(5)],
            d2: vec![EpisodeId(0)],
            d3: vec![EpisodeId(1)],
        };
        save_manifest(&p, &split, &Provenance::new(1)).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.contains("2\tD1\n"));
        let (back, _) = load_manifest(&p).unwrap();
        assert_eq!(back, split);
    }
}
