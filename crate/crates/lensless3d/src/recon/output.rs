//! Result directory layout: intensity.pfm, alpha.pfm, depth_m.pfm,
//! report.json, and optional 8-bit preview PNGs.

use std::path::Path;

use ndarray::Array2;

use crate::io::{atomic_write, write_pfm, PfmImage};
use crate::recon::{Metrics, ReconConfig, ReconResult};
use crate::solvers::SolveReport;
use crate::Result;

#[derive(Debug, serde::Serialize, serde::Deserialize)]
pub struct Report {
    pub config: ReconConfig,
    pub metrics: Option<Metrics>,
    pub objective_history: Vec<f64>,
    pub depth_reports: Vec<SolveReport>,
    pub bregman_residual: Option<f64>,
    pub wall_s: f64,
    /// Color scale of depth.png: depths are mapped linearly from
    /// `depth_png_min_m` (dark blue) to `depth_png_max_m` (dark red)
    /// through the blue-cyan-green-yellow-red ramp.
    pub depth_png_min_m: f64,
    pub depth_png_max_m: f64,
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Piecewise-linear blue-to-red ramp ("jet-like"); t in [0, 1].
fn depth_color(t: f64) -> [u8; 3] {
    let t = t.clamp(0.0, 1.0);
    let r = (1.5 - (4.0 * t - 3.0).abs()).clamp(0.0, 1.0);
    let g = (1.5 - (4.0 * t - 2.0).abs()).clamp(0.0, 1.0);
    let b = (1.5 - (4.0 * t - 1.0).abs()).clamp(0.0, 1.0);
    [to_u8(r), to_u8(g), to_u8(b)]
}

fn write_gray_png(path: &Path, a: &Array2<f64>) -> Result<()> {
    let (h, w) = a.dim();
    let max = a.iter().cloned().fold(0.0f64, f64::max).max(f64::MIN_POSITIVE);
    let buf: Vec<u8> = a.iter().map(|&v| to_u8(v / max)).collect();
    let img = image::GrayImage::from_raw(w as u32, h as u32, buf).expect("sized buffer");
    img.save(path).map_err(|e| std::io::Error::other(e.to_string()))?;
    Ok(())
}

fn write_depth_png(path: &Path, depth_m: &Array2<f64>, lo: f64, hi: f64) -> Result<()> {
    let (h, w) = depth_m.dim();
    let span = (hi - lo).max(f64::MIN_POSITIVE);
    let mut buf = Vec::with_capacity(w * h * 3);
    for &z in depth_m.iter() {
        buf.extend_from_slice(&depth_color((z - lo) / span));
    }
    let img = image::RgbImage::from_raw(w as u32, h as u32, buf).expect("sized buffer");
    img.save(path).map_err(|e| std::io::Error::other(e.to_string()))?;
    Ok(())
}

/// Write the standard result directory for a reconstruction.
pub fn write_result_dir(
    dir: &Path,
    result: &ReconResult,
    cfg: &ReconConfig,
    d_m: f64,
    metrics: Option<Metrics>,
    pngs: bool,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let depth_m = result
        .scene
        .inv_depth
        .mapv(|a| super::depth_of(a, d_m));

    write_pfm(&dir.join("intensity.pfm"), &PfmImage::from_array2(&result.scene.intensity))?;
    write_pfm(&dir.join("alpha.pfm"), &PfmImage::from_array2(&result.scene.inv_depth))?;
    write_pfm(&dir.join("depth_m.pfm"), &PfmImage::from_array2(&depth_m))?;

    let lo = depth_m.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = depth_m.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if pngs {
        write_gray_png(&dir.join("intensity.png"), &result.scene.intensity)?;
        write_depth_png(&dir.join("depth.png"), &depth_m, lo, hi)?;
    }

    let report = Report {
        config: cfg.clone(),
        metrics,
        objective_history: result.objective_history.clone(),
        depth_reports: result.depth_reports.clone(),
        bregman_residual: result.bregman_residual,
        wall_s: result.wall_time.as_secs_f64(),
        depth_png_min_m: lo,
        depth_png_max_m: hi,
    };
    let json = serde_json::to_string_pretty(&report)?;
    atomic_write(&dir.join("report.json"), json.as_bytes())
}

/// Parse a report back (used by experiment resume).
pub fn read_report(path: &Path) -> Result<Report> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::Scene;
    use crate::io::read_pfm;
    use tempfile::tempdir;

    #[test]
    fn result_dir_round_trip() {
        let n = 4;
        let scene = Scene::at_plane(Array2::from_elem((n, n), 0.5), 0.99).unwrap();
        let result = ReconResult {
            scene: scene.clone(),
            objective_history: vec![3.0, 2.0, 1.0],
            depth_reports: vec![],
            bregman_residual: None,
            wall_time: std::time::Duration::from_millis(1500),
        };
        let cfg = ReconConfig::default();
        let dir = tempdir().unwrap();
        write_result_dir(dir.path(), &result, &cfg, 0.004, None, true).unwrap();

        let a = read_pfm(&dir.path().join("alpha.pfm")).unwrap().to_array2().unwrap();
        assert!((a[(0, 0)] - 0.99).abs() < 1e-6);
        let z = read_pfm(&dir.path().join("depth_m.pfm")).unwrap().to_array2().unwrap();
        assert!((z[(0, 0)] - 0.4).abs() < 1e-4, "{}", z[(0, 0)]);
        for f in ["intensity.pfm", "intensity.png", "depth.png", "report.json"] {
            assert!(dir.path().join(f).exists(), "{f} missing");
        }
        let report = read_report(&dir.path().join("report.json")).unwrap();
        assert_eq!(report.objective_history, vec![3.0, 2.0, 1.0]);
        assert!((report.wall_s - 1.5).abs() < 1e-9);
    }

    #[test]
    fn colormap_endpoints() {
        assert_eq!(depth_color(0.0), [0, 0, 128]);
        assert_eq!(depth_color(1.0), [128, 0, 0]);
        assert_eq!(depth_color(0.5), [128, 255, 128]);
    }
}
