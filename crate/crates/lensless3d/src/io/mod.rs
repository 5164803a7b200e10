//! Bit-exact readers and writers for the toolkit's file formats.
//!
//! All writes go through [`atomic_write`]: data lands in a temp file in
//! the target directory and is renamed into place, so interrupted jobs
//! never leave torn outputs.

mod bundle;
mod csv;
mod mask_file;
mod pfm;

pub use bundle::{
    load_scene, read_measurement, write_measurement, write_scene_bundle, SceneMeta,
};
pub use csv::{read_results_csv, write_results_csv, ResultRow};
pub use mask_file::{read_mask_profile, sha256_file, write_mask_profile};
pub use pfm::{read_pfm, write_pfm, PfmImage};

use std::path::Path;

use crate::Result;

/// Write `bytes` to `path` atomically (temp file + rename).
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp.{}", std::process::id()));
    let tmp_path = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp_path, bytes)?;
    std::fs::rename(&tmp_path, path)?;
    Ok(())
}
