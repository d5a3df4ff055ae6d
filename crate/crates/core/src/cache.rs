//! Binary persistence for regeneration samples.
//!
//! Layout, all integers little-endian:
//!
//! | bytes | field |
//! |---|---|
//! | 8 | magic `ERWREGEN` |
//! | 4 | format version |
//! | 32 | environment hash ([`crate::config::env_hash`]) |
//! | 8 | master seed |
//! | 8 | generation cap |
//! | 8 | record count `n` |
//! | 16 n | records `(sigma, w)`; censored cycles store `sigma = u64::MAX` |
//! | 32 | SHA-256 of everything above |
//!
//! A censored cycle always ran exactly `cap` generations, so storing the
//! sentinel loses nothing.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::branching::RegenSample;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"ERWREGEN";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 32 + 8 + 8 + 8;
const CENSORED: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CacheHeader {
    pub env_hash: [u8; 32],
    pub seed: u64,
    pub cap: u64,
    pub count: u64,
}

pub fn encode(env_hash: [u8; 32], seed: u64, cap: u64, samples: &[RegenSample]) -> Vec<u8> {
    let mut buf = Vec::with_capacity(HEADER_LEN + 16 * samples.len() + 32);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&env_hash);
    buf.extend_from_slice(&seed.to_le_bytes());
    buf.extend_from_slice(&cap.to_le_bytes());
    buf.extend_from_slice(&(samples.len() as u64).to_le_bytes());
    for s in samples {
        let sigma = if s.censored { CENSORED } else { s.sigma };
        buf.extend_from_slice(&sigma.to_le_bytes());
        buf.extend_from_slice(&s.w.to_le_bytes());
    }
    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest);
    buf
}

fn u64_at(b: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(b[at..at + 8].try_into().unwrap())
}

/// Parses a whole cache image. Nothing is returned unless every check passes.
pub fn decode(
    bytes: &[u8],
    expected_env: Option<[u8; 32]>,
) -> std::result::Result<(CacheHeader, Vec<RegenSample>), String> {
    if bytes.len() < HEADER_LEN + 32 {
        return Err(format!("file too short ({} bytes)", bytes.len()));
    }
    if &bytes[..8] != MAGIC {
        return Err("bad magic; not a regeneration cache".into());
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(format!("unsupported version {version}, expected {VERSION}"));
    }
    let env_hash: [u8; 32] = bytes[12..44].try_into().unwrap();
    let header = CacheHeader {
        env_hash,
        seed: u64_at(bytes, 44),
        cap: u64_at(bytes, 52),
        count: u64_at(bytes, 60),
    };
    let body = header
        .count
        .checked_mul(16)
        .and_then(|b| b.checked_add((HEADER_LEN + 32) as u64))
        .ok_or("record count overflows")?;
    if body != bytes.len() as u64 {
        return Err(format!(
            "length {} does not match {} records",
            bytes.len(),
            header.count
        ));
    }
    let (payload, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(payload).as_slice() != digest {
        return Err("checksum mismatch; file is corrupted".into());
    }
    if let Some(want) = expected_env {
        if want != env_hash {
            return Err(format!(
                "environment hash {} does not match the requested environment {}",
                short(&env_hash),
                short(&want)
            ));
        }
    }
    let samples = payload[HEADER_LEN..]
        .chunks_exact(16)
        .map(|c| {
            let sigma = u64_at(c, 0);
            let w = u64_at(c, 8);
            if sigma == CENSORED {
                RegenSample {
                    sigma: header.cap,
                    w,
                    censored: true,
                }
            } else {
                RegenSample::complete(sigma, w)
            }
        })
        .collect();
    Ok((header, samples))
}

fn short(h: &[u8; 32]) -> String {
    h[..8].iter().map(|b| format!("{b:02x}")).collect()
}

pub fn write_cache(path: &Path, env_hash: [u8; 32], seed: u64, cap: u64, samples: &[RegenSample]) -> Result<()> {
    std::fs::write(path, encode(env_hash, seed, cap, samples))?;
    Ok(())
}

/// Loads a cache, refusing it if the environment hash differs from
/// `expected_env`.
pub fn read_cache(path: &Path, expected_env: Option<[u8; 32]>) -> Result<(CacheHeader, Vec<RegenSample>)> {
    let bytes = std::fs::read(path)?;
    decode(&bytes, expected_env).map_err(|msg| Error::Cache {
        path: path.to_path_buf(),
        msg,
    })
}
