//! Persistence of disorder draws: a JSON descriptor (seed, mixture, N) that regenerates the
//! couplings exactly, and an optional raw little-endian tensor dump.
//!
//! Raw layout: a 32-byte header (`SPGLDIS\0`, `u32` version, `u32` N, `u64` bit mask of the
//! degrees present, 8 zero bytes) followed, for each degree `p` in increasing order, by the
//! `N^p` i.i.d. standard normal entries as `f64` in row-major tuple order.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use spinglass_core::hamiltonian::{raw_disorder, DEFAULT_CAP};

use crate::config::MixtureConfig;
use crate::error::{config_err, io_err, Result, RunError};

pub const MAGIC: [u8; 8] = *b"SPGLDIS\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisorderDescriptor {
    pub seed: u64,
    pub n: usize,
    pub mixture: MixtureConfig,
}

impl DisorderDescriptor {
    /// Degrees with a nonzero coefficient, ascending.
    pub fn degrees(&self) -> Vec<usize> {
        let mut d: Vec<usize> = self.mixture.terms.iter().filter(|(_, g)| *g > 0.0).map(|(p, _)| *p).collect();
        d.sort_unstable();
        d.dedup();
        d
    }
}

fn entries(n: usize, p: usize) -> Option<u128> {
    (n as u128).checked_pow(p as u32)
}

/// Writes the raw tensors of `desc` to `path`.
pub fn write_raw(path: &Path, desc: &DisorderDescriptor) -> Result<()> {
    let degrees = desc.degrees();
    if desc.n > u32::MAX as usize || degrees.iter().any(|p| *p == 0 || *p > 64) {
        return Err(config_err("raw dumps need N < 2^32 and degrees in 1..=64"));
    }
    let total: u128 = degrees.iter().map(|p| entries(desc.n, *p).unwrap_or(u128::MAX)).sum();
    if total > DEFAULT_CAP {
        return Err(config_err(format!("raw dump of {total} entries exceeds the cap {DEFAULT_CAP}")));
    }
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err(path))?);
    let mask: u64 = degrees.iter().fold(0, |m, p| m | 1u64 << (p - 1));
    let mut header = Vec::with_capacity(32);
    header.extend_from_slice(&MAGIC);
    header.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    header.extend_from_slice(&(desc.n as u32).to_le_bytes());
    header.extend_from_slice(&mask.to_le_bytes());
    header.extend_from_slice(&[0u8; 8]);
    out.write_all(&header).map_err(io_err(path))?;
    for p in degrees {
        for v in raw_disorder(desc.seed, p, desc.n) {
            out.write_all(&v.to_le_bytes()).map_err(io_err(path))?;
        }
    }
    out.flush().map_err(io_err(path))
}

/// Degree and row-major entries of one stored tensor.
pub type RawTensor = (usize, Vec<f64>);

/// Reads a raw dump back as `(N, [(p, entries)])`.
pub fn read_raw(path: &Path) -> Result<(usize, Vec<RawTensor>)> {
    let bad = |reason: &str| RunError::Format { path: path.to_path_buf(), reason: reason.to_string() };
    let mut file = std::io::BufReader::new(std::fs::File::open(path).map_err(io_err(path))?);
    let mut header = [0u8; 32];
    file.read_exact(&mut header).map_err(|_| bad("shorter than the 32-byte header"))?;
    if header[..8] != MAGIC {
        return Err(bad("wrong magic"));
    }
    let version = u32::from_le_bytes(header[8..12].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let n = u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize;
    let mask = u64::from_le_bytes(header[16..24].try_into().unwrap());
    let mut out = Vec::new();
    let mut buf = [0u8; 8];
    for p in (1..=64).filter(|p| mask >> (p - 1) & 1 == 1) {
        let count = entries(n, p).filter(|c| *c <= DEFAULT_CAP).ok_or_else(|| bad("tensor too large"))? as usize;
        let mut v = Vec::with_capacity(count);
        for _ in 0..count {
            file.read_exact(&mut buf).map_err(|_| bad("truncated tensor data"))?;
            v.push(f64::from_le_bytes(buf));
        }
        out.push((p, v));
    }
    if file.read(&mut buf).map_err(io_err(path))? != 0 {
        return Err(bad("trailing bytes after the last tensor"));
    }
    Ok((n, out))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raw_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.bin");
        let desc =
            DisorderDescriptor { seed: 9, n: 4, mixture: MixtureConfig { terms: vec![(3, 0.2), (1, 0.5)], tilt: 0.0 } };
        write_raw(&path, &desc).unwrap();
        let (n, tensors) = read_raw(&path).unwrap();
        assert_eq!(n, 4);
        assert_eq!(tensors.len(), 2);
        assert_eq!(tensors[0].0, 1);
        assert_eq!(tensors[1].1, raw_disorder(9, 3, 4));
        assert_eq!(std::fs::metadata(&path).unwrap().len(), 32 + 8 * (4 + 64));
    }
}
