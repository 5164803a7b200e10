//! Scene and measurement bundles (directories of PFM + JSON files).

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;

use crate::geometry::{alpha_from_depth, CameraGeometry};
use crate::imaging::{Measurement, MeasurementMeta, Scene};
use crate::{Error, Result};

use super::pfm::{read_pfm, write_pfm, PfmImage};
use super::atomic_write;

/// `scene.json` contents; unknown keys survive a round-trip.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SceneMeta {
    pub n: usize,
    pub half_fov_deg: f64,
    #[serde(default)]
    pub provenance: Option<String>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

/// Write a scene as `intensity.pfm` + `depth_m.pfm` + `scene.json`.
pub fn write_scene_bundle(
    dir: &Path,
    intensity: &Array2<f64>,
    depth_m: &Array2<f64>,
    meta: &SceneMeta,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_pfm(&dir.join("intensity.pfm"), &PfmImage::from_array2(intensity))?;
    write_pfm(&dir.join("depth_m.pfm"), &PfmImage::from_array2(depth_m))?;
    atomic_write(
        &dir.join("scene.json"),
        serde_json::to_string_pretty(meta)?.as_bytes(),
    )?;
    Ok(())
}

/// Area-average resample of a square image to `n x n`.
fn resample_area(src: &Array2<f64>, n: usize) -> Array2<f64> {
    let (sh, sw) = src.dim();
    if (sh, sw) == (n, n) {
        return src.clone();
    }
    let mut out = Array2::<f64>::zeros((n, n));
    let ry = sh as f64 / n as f64;
    let rx = sw as f64 / n as f64;
    for oi in 0..n {
        let y0 = oi as f64 * ry;
        let y1 = (oi + 1) as f64 * ry;
        for oj in 0..n {
            let x0 = oj as f64 * rx;
            let x1 = (oj + 1) as f64 * rx;
            let mut acc = 0.0;
            let mut area = 0.0;
            let iy0 = y0.floor() as usize;
            let iy1 = (y1.ceil() as usize).min(sh);
            let ix0 = x0.floor() as usize;
            let ix1 = (x1.ceil() as usize).min(sw);
            for si in iy0..iy1 {
                let oy = (y1.min((si + 1) as f64) - y0.max(si as f64)).max(0.0);
                for sj in ix0..ix1 {
                    let ox = (x1.min((sj + 1) as f64) - x0.max(sj as f64)).max(0.0);
                    acc += src[(si, sj)] * oy * ox;
                    area += oy * ox;
                }
            }
            out[(oi, oj)] = if area > 0.0 { acc / area } else { 0.0 };
        }
    }
    out
}

/// Minimal binary PGM (P5) reader, 8- or 16-bit, normalized to [0, 1].
fn read_pgm_normalized(path: &Path) -> Result<Array2<f64>> {
    let bytes = std::fs::read(path)?;
    let perr = |offset: u64, msg: &str| Error::Parse {
        path: path.display().to_string(),
        offset,
        msg: msg.into(),
    };
    let mut pos = 0usize;
    let next_token = |pos: &mut usize| -> Option<String> {
        loop {
            while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if *pos < bytes.len() && bytes[*pos] == b'#' {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
                continue;
            }
            break;
        }
        let start = *pos;
        while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        (*pos > start).then(|| String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
    };
    if next_token(&mut pos).as_deref() != Some("P5") {
        return Err(perr(0, "expected binary PGM magic P5"));
    }
    let w: usize = next_token(&mut pos).and_then(|t| t.parse().ok()).ok_or_else(|| perr(pos as u64, "bad width"))?;
    let h: usize = next_token(&mut pos).and_then(|t| t.parse().ok()).ok_or_else(|| perr(pos as u64, "bad height"))?;
    let maxval: usize = next_token(&mut pos).and_then(|t| t.parse().ok()).ok_or_else(|| perr(pos as u64, "bad maxval"))?;
    pos += 1; // single whitespace after maxval
    let two_byte = maxval > 255;
    let need = w * h * if two_byte { 2 } else { 1 };
    if bytes.len() < pos + need {
        return Err(perr(pos as u64, "truncated PGM data"));
    }
    let mut out = Array2::<f64>::zeros((h, w));
    for i in 0..h {
        for j in 0..w {
            let v = if two_byte {
                let o = pos + 2 * (i * w + j);
                u16::from_be_bytes([bytes[o], bytes[o + 1]]) as f64
            } else {
                bytes[pos + i * w + j] as f64
            };
            out[(i, j)] = v / maxval as f64;
        }
    }
    Ok(out)
}

/// Load a scene bundle, resampling to the geometry's `N x N` grid and
/// converting depth to inverse depth.
pub fn load_scene(dir: &Path, geom: &CameraGeometry) -> Result<Scene> {
    let intensity_path_pfm = dir.join("intensity.pfm");
    let raw_intensity = if intensity_path_pfm.exists() {
        read_pfm(&intensity_path_pfm)?.to_array2()?
    } else {
        let pgm = dir.join("intensity.pgm");
        if !pgm.exists() {
            return Err(Error::Config(format!(
                "scene bundle {} has neither intensity.pfm nor intensity.pgm",
                dir.display()
            )));
        }
        read_pgm_normalized(&pgm)?
    };
    let depth = read_pfm(&dir.join("depth_m.pfm"))?.to_array2()?;
    if raw_intensity.dim() != depth.dim() {
        return Err(Error::Shape(format!(
            "intensity {:?} and depth {:?} dimensions differ",
            raw_intensity.dim(),
            depth.dim()
        )));
    }

    let n = geom.scene_pixels;
    let mut intensity = resample_area(&raw_intensity, n);
    let depth = resample_area(&depth, n);

    let d = geom.mask_sensor_distance_m;
    let mut bad = Vec::new();
    let mut alpha = Array2::<f64>::zeros((n, n));
    for ((i, j), &z) in depth.indexed_iter() {
        match alpha_from_depth(z, d) {
            Ok(a) => alpha[(i, j)] = a,
            Err(_) => bad.push((i, j, z)),
        }
    }
    if !bad.is_empty() {
        let shown: Vec<String> = bad.iter().take(8).map(|(i, j, z)| format!("({i},{j}): z = {z}")).collect();
        return Err(Error::Domain(format!(
            "{} pixels have depth <= mask distance {d}: {}{}",
            bad.len(),
            shown.join(", "),
            if bad.len() > 8 { ", ..." } else { "" }
        )));
    }

    let max = intensity.iter().cloned().fold(0.0f64, f64::max);
    if max > 0.0 {
        intensity /= max;
    }
    Scene::new(intensity, alpha)
}

/// Write a measurement bundle: `y.pfm` + `meta.json`.
pub fn write_measurement(dir: &Path, meas: &Measurement) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_pfm(&dir.join("y.pfm"), &PfmImage::from_array2(&meas.y))?;
    let meta = serde_json::json!({
        "geometry": {
            "d_m": meas.meta.geometry.mask_sensor_distance_m,
            "M": meas.meta.geometry.sensor_pixels,
            "pixel_pitch_m": meas.meta.geometry.pixel_pitch_m,
            "half_fov_deg": meas.meta.geometry.half_fov_deg,
            "N": meas.meta.geometry.scene_pixels,
        },
        "mask_sha256": meas.meta.mask_sha256,
        "snr_db": meas.meta.snr_db,
        "seed": meas.meta.seed,
    });
    atomic_write(
        &dir.join("meta.json"),
        serde_json::to_string_pretty(&meta)?.as_bytes(),
    )?;
    Ok(())
}

pub fn read_measurement(dir: &Path) -> Result<Measurement> {
    let y = read_pfm(&dir.join("y.pfm"))?.to_array2()?;
    let meta: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.join("meta.json"))?)?;
    let g = &meta["geometry"];
    let geometry = CameraGeometry::new(
        g["d_m"].as_f64().ok_or_else(|| Error::Config("meta.json missing geometry.d_m".into()))?,
        g["M"].as_u64().ok_or_else(|| Error::Config("meta.json missing geometry.M".into()))? as usize,
        g["pixel_pitch_m"].as_f64().ok_or_else(|| Error::Config("meta.json missing geometry.pixel_pitch_m".into()))?,
        g["half_fov_deg"].as_f64().ok_or_else(|| Error::Config("meta.json missing geometry.half_fov_deg".into()))?,
        g["N"].as_u64().ok_or_else(|| Error::Config("meta.json missing geometry.N".into()))? as usize,
    )?;
    if y.dim() != (geometry.sensor_pixels, geometry.sensor_pixels) {
        return Err(Error::Shape(format!(
            "y.pfm is {:?} but meta geometry says M = {}",
            y.dim(),
            geometry.sensor_pixels
        )));
    }
    Ok(Measurement {
        y,
        meta: MeasurementMeta {
            geometry,
            mask_sha256: meta["mask_sha256"].as_str().unwrap_or_default().to_string(),
            snr_db: meta["snr_db"].as_f64(),
            seed: meta["seed"].as_u64().unwrap_or(0),
        },
    })
}
