//! Binary tensor container.
//!
//! Layout: a 32-byte little-endian header
//! `b"PSPN" | version: u16 | p: u16 | N: u64 | seed: u64 | flags: u64`
//! followed by `N^p` little-endian `f64` in row-major order. Bit 0 of `flags`
//! records whether the seed is meaningful. A JSON sidecar (`<file>.json`)
//! carries free-form provenance.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{DenseTensor, DisorderTensor};

pub const MAGIC: &[u8; 4] = b"PSPN";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub n: usize,
    pub p: usize,
    pub seed: Option<u64>,
    pub description: String,
    pub code_version: String,
}

pub fn encode(t: &DisorderTensor) -> Vec<u8> {
    let mut buf = Vec::with_capacity(HEADER_LEN + 8 * t.entries().len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(t.p() as u16).to_le_bytes());
    buf.extend_from_slice(&(t.n() as u64).to_le_bytes());
    buf.extend_from_slice(&t.seed().unwrap_or(0).to_le_bytes());
    buf.extend_from_slice(&u64::from(t.seed().is_some()).to_le_bytes());
    for v in t.entries() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

pub fn decode(bytes: &[u8]) -> Result<DisorderTensor> {
    if bytes.len() < HEADER_LEN || &bytes[0..4] != MAGIC {
        return Err(Error::Format("missing PSPN header".into()));
    }
    let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]);
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let version = u16_at(4);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported container version {version}")));
    }
    let p = u16_at(6) as usize;
    let n = u64_at(8) as usize;
    let seed = u64_at(16);
    let flags = u64_at(24);
    let len = (n as u128).pow(p as u32);
    let body = &bytes[HEADER_LEN..];
    if body.len() as u128 != len * 8 {
        return Err(Error::Format(format!("body has {} bytes, expected {}", body.len(), len * 8)));
    }
    let entries = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    DisorderTensor::from_tensor(DenseTensor::new(p, n, entries)?, (flags & 1 == 1).then_some(seed))
}

pub fn save(path: &Path, t: &DisorderTensor, provenance: &Provenance) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode(t))?;
    let sidecar = path.with_extension(format!(
        "{}json",
        path.extension().map(|e| format!("{}.", e.to_string_lossy())).unwrap_or_default()
    ));
    fs::write(sidecar, serde_json::to_string_pretty(provenance)?)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<DisorderTensor> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::sample_disorder;

    #[test]
    fn round_trip_bytes() {
        let t = sample_disorder(3, 3, 11).unwrap();
        let b = encode(&t);
        assert_eq!(b.len(), 32 + 27 * 8);
        assert_eq!(decode(&b).unwrap(), t);
    }

    #[test]
    fn rejects_truncated() {
        let t = sample_disorder(3, 2, 1).unwrap();
        let b = encode(&t);
        assert!(decode(&b[..b.len() - 1]).is_err());
        assert!(decode(b"XXXX").is_err());
    }
}
