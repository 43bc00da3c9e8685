//! `MIDD` synthetic-set files.
//!
//! Layout (little-endian): magic `"MIDD"`, version `u16`, then the meta block
//! `C`, `IPC`, `d` as `u32`, then the `C·IPC × d` samples row-major as `f32`,
//! and finally a CRC-32 of every preceding byte. Labels are implied by the
//! class-major row order. A JSON sidecar `<file>.json` carries descriptive
//! metadata.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::SyntheticSet;
use crate::tensor::Tensor;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"MIDD";
const VERSION: u16 = 1;
const HEADER: usize = 4 + 2 + 3 * 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticMeta {
    pub num_classes: usize,
    pub ipc: usize,
    pub dim: usize,
    pub source: String,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedSynthetic {
    pub set: SyntheticSet,
    pub meta: Option<SyntheticMeta>,
    /// Set when an expected config hash was given and the sidecar disagrees.
    pub hash_mismatch: bool,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

pub fn write_synthetic(set: &SyntheticSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER + set.samples().len() * 4 + 4);
    out.extend(MAGIC);
    out.extend(VERSION.to_le_bytes());
    for v in [set.num_classes(), set.ipc(), set.dim()] {
        out.extend((v as u32).to_le_bytes());
    }
    for v in set.samples().data() {
        out.extend(v.to_le_bytes());
    }
    let crc = crc32fast::hash(&out);
    out.extend(crc.to_le_bytes());
    out
}

pub fn read_synthetic(bytes: &[u8], path: &Path) -> Result<SyntheticSet> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::format(path, "bad magic, expected \"MIDD\""));
    }
    if bytes.len() < HEADER + 4 {
        return Err(Error::format(path, "truncated synthetic-set header"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(Error::format(path, format!("unsupported synthetic-set version {version}")));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes")) as usize;
    let (classes, ipc, dim) = (word(6), word(10), word(14));
    let count = classes
        .checked_mul(ipc)
        .and_then(|m| m.checked_mul(dim))
        .ok_or_else(|| Error::format(path, "synthetic-set dimensions overflow"))?;
    let expected = HEADER + count * 4 + 4;
    if bytes.len() != expected {
        return Err(Error::format(
            path,
            format!("expected {expected} bytes for {classes}×{ipc}×{dim}, found {}", bytes.len()),
        ));
    }
    let body = &bytes[..expected - 4];
    let stored = u32::from_le_bytes(bytes[expected - 4..].try_into().expect("4 bytes"));
    if crc32fast::hash(body) != stored {
        return Err(Error::format(path, "checksum mismatch"));
    }
    let data = body[HEADER..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let samples = Tensor::new(vec![classes * ipc, dim], data).map_err(|e| Error::format(path, e.to_string()))?;
    SyntheticSet::new(samples, ipc, classes)
}

/// Writes the set and its JSON sidecar.
pub fn save_synthetic(path: &Path, set: &SyntheticSet, source: &str, config_hash: &str) -> Result<()> {
    std::fs::write(path, write_synthetic(set)).map_err(|e| Error::io(path, e))?;
    let meta = SyntheticMeta {
        num_classes: set.num_classes(),
        ipc: set.ipc(),
        dim: set.dim(),
        source: source.to_string(),
        config_hash: config_hash.to_string(),
    };
    let side = sidecar_path(path);
    std::fs::write(&side, serde_json::to_string_pretty(&meta)? + "\n").map_err(|e| Error::io(side, e))
}

/// Loads a set; a missing sidecar is tolerated, and a config-hash mismatch
/// is reported through `log::warn!` and [`LoadedSynthetic::hash_mismatch`].
pub fn load_synthetic(path: &Path, expected_hash: Option<&str>) -> Result<LoadedSynthetic> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let set = read_synthetic(&bytes, path)?;
    let side = sidecar_path(path);
    let meta: Option<SyntheticMeta> = match std::fs::read_to_string(&side) {
        Ok(text) => Some(serde_json::from_str(&text)?),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
        Err(e) => return Err(Error::io(side, e)),
    };
    let hash_mismatch = match (&meta, expected_hash) {
        (Some(m), Some(h)) if m.config_hash != h => {
            log::warn!(
                "{}: synthetic set was produced by config {} but the current config hashes to {h}",
                path.display(),
                m.config_hash
            );
            true
        }
        _ => false,
    };
    Ok(LoadedSynthetic {
        set,
        meta,
        hash_mismatch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_set() -> SyntheticSet {
        let data = vec![0.5, -1.25, f32::MIN_POSITIVE, 3.0e7, -0.0, 1.0 / 3.0];
        SyntheticSet::new(Tensor::new(vec![3, 2], data).unwrap(), 1, 3).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.midd");
        let set = sample_set();
        save_synthetic(&p, &set, "toy", "abc").unwrap();
        let loaded = load_synthetic(&p, Some("abc")).unwrap();
        let bits = |s: &SyntheticSet| s.samples().data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&loaded.set), bits(&set));
        assert_eq!(loaded.set.labels(), set.labels());
        assert!(!loaded.hash_mismatch);
        assert_eq!(loaded.meta.unwrap().source, "toy");
    }

    #[test]
    fn hash_mismatch_only_warns() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.midd");
        save_synthetic(&p, &sample_set(), "toy", "abc").unwrap();
        assert!(load_synthetic(&p, Some("def")).unwrap().hash_mismatch);
    }

    #[test]
    fn corruption_is_detected() {
        let p = Path::new("mem");
        let good = write_synthetic(&sample_set());
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(read_synthetic(&bad, p).unwrap_err().to_string().contains("magic"));
        let mut bad = good.clone();
        bad[4] = 9;
        assert!(read_synthetic(&bad, p).unwrap_err().to_string().contains("version"));
        let mut bad = good.clone();
        bad[HEADER + 1] ^= 0x10;
        assert!(read_synthetic(&bad, p).unwrap_err().to_string().contains("checksum"));
        assert!(read_synthetic(&good[..good.len() - 1], p).is_err());
    }
}
