//! Reconstruction quality versus measurement noise: simulate the
//! ramp-and-step scene at several sensor SNRs and reconstruct each with
//! the default continuous pipeline.
//!
//! The forward operator is very ill conditioned at this geometry, so
//! absolute quality drops quickly with noise; the point of the study is
//! the monotone trend.
//!
//! Run with: cargo run --release --example noise_study

use lensless3d::geometry::{alpha_from_depth, CameraGeometry};
use lensless3d::imaging::{simulate, Scene};
use lensless3d::mask::{build_mask_profile, generate_mls};
use lensless3d::recon::{evaluate, CandidateDepths, ReconConfig};
use lensless3d::cli::run_pipeline;
use ndarray::Array2;

fn main() -> lensless3d::Result<()> {
    let pattern = generate_mls(8, None, 1, 30e-6)?;
    let profile = build_mask_profile(&pattern, 15e-6, 5.0, 1.5e-6)?;
    let geom = CameraGeometry::new(4e-3, 128, 50e-6, 18.0, 32)?;
    let n = geom.scene_pixels;
    let d = geom.mask_sensor_distance_m;

    let alpha = Array2::from_shape_fn((n, n), |(_, j)| {
        let t = j as f64 / (n - 1) as f64;
        let z = if j < n / 2 { 1.0 + 0.6 * t } else { 1.35 + 0.6 * (t - 0.5) + 0.3 };
        alpha_from_depth(z, d).unwrap()
    });
    let intensity =
        Array2::from_shape_fn((n, n), |(i, j)| 0.3 + 0.7 * ((i * 5 + j * 3) % 11) as f64 / 10.0);
    let gt = Scene::new(intensity, alpha)?;

    let amin = gt.inv_depth.iter().cloned().fold(1.0f64, f64::min);
    let amax = gt.inv_depth.iter().cloned().fold(0.0f64, f64::max);
    let cfg = ReconConfig {
        candidates: CandidateDepths::uniform(amin, amax, 15)?,
        alpha_box: (0.9955, 0.9980),
        ..Default::default()
    };

    println!("snr_db    psnr_db    depth_rmse_mm");
    for snr in [Some(20.0), Some(30.0), Some(40.0), None] {
        let y = simulate(&profile, &geom, &gt, snr, 0, String::new()).y;
        let out = run_pipeline(&y, &profile, &geom, &cfg)?;
        let m = evaluate(&out.scene, &gt, d, 0.0)?;
        let label = snr.map_or("clean".to_string(), |s| format!("{s:>5}"));
        println!("{label}    {:7.2}    {:10.2}", m.psnr_db, m.depth_rmse_m * 1e3);
    }
    Ok(())
}
