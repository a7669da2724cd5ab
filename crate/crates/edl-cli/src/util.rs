//! Flag parsing helpers and the run manifest.

use edl::{Error, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::Path;

/// Parse `start:stop:step` (inclusive of `stop` when the ladder hits
/// it, within 1e-9) or a single number.
pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |t: &str| -> Result<f64> {
        t.trim()
            .parse::<f64>()
            .map_err(|_| Error::Config(format!("bad number {t:?} in grid {s:?}")))
    };
    match parts.as_slice() {
        [one] => Ok(vec![num(one)?]),
        [start, stop, step] => {
            let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
            if !(step > 0.0) {
                return Err(Error::Config(format!("grid step must be positive: {s:?}")));
            }
            if stop < start {
                return Err(Error::Config(format!("grid stop below start: {s:?}")));
            }
            let mut out = Vec::new();
            let mut i = 0u64;
            loop {
                let v = start + i as f64 * step;
                if v > stop + 1e-9 {
                    break;
                }
                out.push(v);
                i += 1;
            }
            Ok(out)
        }
        _ => Err(Error::Config(format!(
            "grid {s:?} must be a number or start:stop:step"
        ))),
    }
}

/// Parse a class list: comma-separated entries, each `N` or `A-B`
/// (ascending, inclusive). `"5-9"` → [5,6,7,8,9]; `"0,2,4"` → [0,2,4].
pub fn parse_classes(s: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for token in s.split(',') {
        let token = token.trim();
        if let Some((a, b)) = token.split_once('-') {
            let a: usize = a
                .parse()
                .map_err(|_| Error::Config(format!("bad class {a:?} in {s:?}")))?;
            let b: usize = b
                .parse()
                .map_err(|_| Error::Config(format!("bad class {b:?} in {s:?}")))?;
            if b < a {
                return Err(Error::Config(format!("descending range {token:?}")));
            }
            out.extend(a..=b);
        } else {
            out.push(
                token
                    .parse()
                    .map_err(|_| Error::Config(format!("bad class {token:?} in {s:?}")))?,
            );
        }
    }
    if out.is_empty() {
        return Err(Error::Config("empty class list".into()));
    }
    Ok(out)
}

/// Synthetic dataset recipe from `--synth k=3,per_class=200,...`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthSpec {
    pub k: usize,
    pub per_class: usize,
    pub dim: usize,
    pub separation: f64,
    pub test_per_class: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            k: 3,
            per_class: 200,
            dim: 4,
            separation: 4.0,
            test_per_class: 40,
        }
    }
}

/// Keys: k, per_class, dim, separation, test_per_class; all optional.
/// `test_per_class` defaults to per_class/5 (at least 1).
pub fn parse_synth_spec(s: &str) -> Result<SynthSpec> {
    let mut spec = SynthSpec::default();
    let mut explicit_test = false;
    for pair in s.split(',') {
        let pair = pair.trim();
        if pair.is_empty() {
            continue;
        }
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected key=value, got {pair:?}")))?;
        let uint = |v: &str| -> Result<usize> {
            v.parse()
                .map_err(|_| Error::Config(format!("bad value in {pair:?}")))
        };
        match key.trim() {
            "k" => spec.k = uint(value)?,
            "per_class" => spec.per_class = uint(value)?,
            "dim" => spec.dim = uint(value)?,
            "separation" => {
                spec.separation = value
                    .parse()
                    .map_err(|_| Error::Config(format!("bad value in {pair:?}")))?
            }
            "test_per_class" => {
                spec.test_per_class = uint(value)?;
                explicit_test = true;
            }
            other => {
                return Err(Error::Config(format!(
                    "unknown synth key {other:?} (known: k, per_class, dim, separation, test_per_class)"
                )))
            }
        }
    }
    if !explicit_test {
        spec.test_per_class = (spec.per_class / 5).max(1);
    }
    Ok(spec)
}

/// Run description written once per output directory. The only file
/// that carries timestamps; everything else is byte-reproducible.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: Vec<String>,
    pub config: serde_json::Value,
    pub seed: u64,
    pub checkpoint_sha256: String,
    pub created_unix: u64,
    pub finished_unix: u64,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

pub fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<()> {
    let json = serde_json::to_string_pretty(manifest)
        .map_err(|e| Error::Config(format!("manifest serialization: {e}")))?;
    std::fs::write(dir.join("manifest.json"), json + "\n")?;
    Ok(())
}
