//! Binary mask profile file.
//!
//! Layout: magic "L3DMASK1", little-endian u32 sample count, f64
//! grid_step_m, f64 origin_m, then f32 samples. The derivative table is
//! recomputed on load.

use std::path::Path;

use byteorder::{ByteOrder, LittleEndian};
use sha2::{Digest, Sha256};

use crate::mask::MaskProfile;
use crate::{Error, Result};

use super::atomic_write;

const MAGIC: &[u8; 8] = b"L3DMASK1";

pub fn write_mask_profile(path: &Path, profile: &MaskProfile) -> Result<()> {
    let n = profile.samples.len();
    let mut out = Vec::with_capacity(8 + 4 + 16 + 4 * n);
    out.extend_from_slice(MAGIC);
    let mut buf4 = [0u8; 4];
    LittleEndian::write_u32(&mut buf4, n as u32);
    out.extend_from_slice(&buf4);
    let mut buf8 = [0u8; 8];
    LittleEndian::write_f64(&mut buf8, profile.grid_step_m);
    out.extend_from_slice(&buf8);
    LittleEndian::write_f64(&mut buf8, profile.origin_m);
    out.extend_from_slice(&buf8);
    for &s in &profile.samples {
        LittleEndian::write_f32(&mut buf4, s as f32);
        out.extend_from_slice(&buf4);
    }
    atomic_write(path, &out)
}

pub fn read_mask_profile(path: &Path) -> Result<MaskProfile> {
    let bytes = std::fs::read(path)?;
    let perr = |offset: u64, msg: &str| Error::Parse {
        path: path.display().to_string(),
        offset,
        msg: msg.into(),
    };
    if bytes.len() < 28 {
        return Err(perr(0, "file too short for a mask header"));
    }
    if &bytes[0..8] != MAGIC {
        return Err(perr(0, "bad magic, expected L3DMASK1"));
    }
    let n = LittleEndian::read_u32(&bytes[8..12]) as usize;
    let grid_step_m = LittleEndian::read_f64(&bytes[12..20]);
    let origin_m = LittleEndian::read_f64(&bytes[20..28]);
    if bytes.len() < 28 + 4 * n {
        return Err(perr(28, "truncated sample data"));
    }
    let samples: Vec<f64> = (0..n)
        .map(|i| LittleEndian::read_f32(&bytes[28 + 4 * i..32 + 4 * i]) as f64)
        .collect();
    MaskProfile::from_samples(samples, grid_step_m, origin_m)
}

/// SHA-256 of a file's contents, lowercase hex.
pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    let mut h = Sha256::new();
    h.update(&bytes);
    Ok(format!("{:x}", h.finalize()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::{build_mask_profile, generate_mls};
    use tempfile::tempdir;

    #[test]
    fn round_trip_preserves_f32_samples() {
        let pattern = generate_mls(6, None, 1, 30e-6).unwrap();
        let profile = build_mask_profile(&pattern, 15e-6, 5.0, 1.5e-6).unwrap();
        let dir = tempdir().unwrap();
        let p = dir.path().join("mask.bin");
        write_mask_profile(&p, &profile).unwrap();
        let back = read_mask_profile(&p).unwrap();
        assert_eq!(back.len(), profile.len());
        assert_eq!(back.grid_step_m, profile.grid_step_m);
        assert_eq!(back.origin_m, profile.origin_m);
        for (a, b) in back.samples.iter().zip(&profile.samples) {
            assert_eq!(*a, *b as f32 as f64);
        }
        // deterministic bytes
        let p2 = dir.path().join("mask2.bin");
        write_mask_profile(&p2, &profile).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(&p2).unwrap());
        assert_eq!(sha256_file(&p).unwrap(), sha256_file(&p2).unwrap());
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("bad.bin");
        std::fs::write(&p, b"NOTAMASK").unwrap();
        assert!(read_mask_profile(&p).is_err());
        let mut ok = Vec::new();
        ok.extend_from_slice(MAGIC);
        ok.extend_from_slice(&100u32.to_le_bytes());
        ok.extend_from_slice(&1e-6f64.to_le_bytes());
        ok.extend_from_slice(&0.0f64.to_le_bytes());
        std::fs::write(&p, &ok).unwrap();
        assert!(read_mask_profile(&p).is_err());
    }
}
