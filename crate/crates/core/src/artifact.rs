//! Versioned headers and provenance shared by every on-disk artifact.

use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Seed and upstream digests recorded in every emitted artifact.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Provenance {
    pub seed: u64,
    pub upstream: Vec<(String, String)>,
}

impl Provenance {
    pub fn new(seed: u64) -> Self {
        Provenance {
            seed,
            upstream: Vec::new(),
        }
    }

    pub fn with_upstream(mut self, name: impl Into<String>, digest: impl Into<String>) -> Self {
        self.upstream.push((name.into(), digest.into()));
        self
    }

    /// Fails if `file` no longer has the digest recorded under `name`. Names
    /// that were never recorded pass.
    pub fn verify(&self, artifact: &Path, name: &str, file: &Path) -> Result<()> {
        let Some((_, recorded)) = self.upstream.iter().find(|(n, _)| n == name) else {
            return Ok(());
        };
        let current = file_digest(file)?;
        if &current == recorded {
            return Ok(());
        }
        Err(Error::StaleArtifact {
            path: artifact.to_path_buf(),
            found: format!("{name}:{}", &current[..12.min(current.len())]),
            expected: format!("{name}:{}", &recorded[..12.min(recorded.len())]),
            hint: format!(
                "{} changed since this artifact was built; rerun the stages after it",
                file.display()
            ),
        })
    }

    /// Adds the digest of an upstream file.
    pub fn with_file(self, name: impl Into<String>, path: &Path) -> Result<Self> {
        let d = file_digest(path)?;
        Ok(self.with_upstream(name, d))
    }

    pub fn to_line(&self) -> String {
        let mut s = format!("#provenance seed={}", self.seed);
        if !self.upstream.is_empty() {
            s.push_str(" upstream=");
            let parts: Vec<String> = self.upstream.iter().map(|(n, d)| format!("{n}:{d}")).collect();
            s.push_str(&parts.join(","));
        }
        s
    }

    pub fn parse_line(line: &str) -> Option<Provenance> {
        let rest = line.strip_prefix("#provenance")?;
        let mut prov = Provenance::default();
        for tok in rest.split_whitespace() {
            if let Some(v) = tok.strip_prefix("seed=") {
                prov.seed = v.parse().ok()?;
            } else if let Some(v) = tok.strip_prefix("upstream=") {
                for item in v.split(',') {
                    let (n, d) = item.split_once(':')?;
                    prov.upstream.push((n.to_string(), d.to_string()));
                }
            }
        }
        Some(prov)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let upstream: serde_json::Map<String, serde_json::Value> = self
            .upstream
            .iter()
            .map(|(n, d)| (n.clone(), serde_json::Value::String(d.clone())))
            .collect();
        serde_json::json!({ "seed": self.seed, "upstream": upstream })
    }
}

pub fn bytes_digest(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest.iter() {
        let _ = write!(s, "{b:02x}");
    }
    s
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(bytes_digest(&bytes))
}

/// Validates a `#<magic> v<N> ...` header line against the expected version.
pub fn check_header(path: &Path, line: Option<&str>, magic: &str, version: u32) -> Result<()> {
    let line = line.ok_or_else(|| Error::parse(path.display().to_string(), "empty file"))?;
    let mut toks = line.split_whitespace();
    let found_magic = toks.next().unwrap_or("");
    if found_magic != format!("#{magic}") {
        return Err(Error::parse(
            path.display().to_string(),
            format!("expected header #{magic}, found {found_magic:?}"),
        ));
    }
    let found_version = toks.next().unwrap_or("");
    let expected = format!("v{version}");
    if found_version != expected {
        return Err(Error::StaleArtifact {
            path: path.to_path_buf(),
            found: found_version.to_string(),
            expected,
            hint: format!("regenerate it with the `{}` stage of this release", stage_for(magic)),
        });
    }
    Ok(())
}

fn stage_for(magic: &str) -> &'static str {
    match magic {
        "drivlab-episodes" => "gen",
        "drivlab-split" => "split",
        "drivlab-ckpt" => "train-driver / train-failure",
        "drivlab-labels" => "label",
        "drivlab-scores" => "score",
        "drivlab-metrics" => "train-driver",
        _ => "run-all",
    }
}

/// Fails with a missing-artifact error naming `what` if `path` does not exist.
pub fn require(path: &Path, what: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::MissingArtifact {
            what: what.to_string(),
            path: path.to_path_buf(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn provenance_line_round_trip() {
        let p = Provenance::new(42)
            .with_upstream("episodes", "abc123")
            .with_upstream("split", "ff00");
        let line = p.to_line();
        assert_eq!(line, "#provenance seed=42 upstream=episodes:abc123,split:ff00");
        assert_eq!(Provenance::parse_line(&line), Some(p));
    }

    #[test]
    fn changed_upstream_is_stale() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("up.txt");
        std::fs::write(&f, "one").unwrap();
        let p = Provenance::new(1).with_file("up", &f).unwrap();
        p.verify(Path::new("a"), "up", &f).unwrap();
        p.verify(Path::new("a"), "other", &f).unwrap();
        std::fs::write(&f, "two").unwrap();
        let err = p.verify(Path::new("a"), "up", &f).unwrap_err();
        assert!(matches!(err, Error::StaleArtifact { .. }));
    }

    #[test]
    fn stale_version_is_reported() {
        let err = check_header(Path::new("x"), Some("#drivlab-ckpt v0"), "drivlab-ckpt", 1).unwrap_err();
        assert!(matches!(err, Error::StaleArtifact { .. }));
        assert_eq!(err.exit_code(), 3);
        check_header(Path::new("x"), Some("#drivlab-ckpt v1 kind=driver"), "drivlab-ckpt", 1).unwrap();
    }

    #[test]
    fn sha256_known_vector() {
        assert_eq!(
            bytes_digest(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
