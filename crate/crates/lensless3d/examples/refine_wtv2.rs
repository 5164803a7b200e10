//! End-to-end reconstruction of a ramp-and-step depth scene: greedy
//! initialization followed by alternating refinement with the
//! edge-weighted second-order TV regularizer, with results written to a
//! bundle directory.
//!
//! Run with: cargo run --release --example refine_wtv2

use lensless3d::geometry::{alpha_from_depth, CameraGeometry};
use lensless3d::imaging::{forward, Scene};
use lensless3d::mask::{build_mask_profile, generate_mls};
use lensless3d::recon::{
    evaluate, greedy_init, write_result_dir, CandidateDepths, GreedyOptions, Init, Method,
    ReconConfig, Regularizer,
};
use lensless3d::recon::refine;
use lensless3d::solvers::CglsOptions;
use ndarray::Array2;

/// Two depth ramps separated by a 0.3 m step at the image center.
fn ramp_step_scene(geom: &CameraGeometry) -> Scene {
    let n = geom.scene_pixels;
    let d = geom.mask_sensor_distance_m;
    let alpha = Array2::from_shape_fn((n, n), |(_, j)| {
        let t = j as f64 / (n - 1) as f64;
        let z = if j < n / 2 {
            1.0 + 0.6 * t
        } else {
            1.35 + 0.6 * (t - 0.5) + 0.3
        };
        alpha_from_depth(z, d).unwrap()
    });
    let intensity =
        Array2::from_shape_fn((n, n), |(i, j)| 0.3 + 0.7 * ((i * 5 + j * 3) % 11) as f64 / 10.0);
    Scene::new(intensity, alpha).unwrap()
}

fn main() -> lensless3d::Result<()> {
    let pattern = generate_mls(8, None, 1, 30e-6)?;
    let profile = build_mask_profile(&pattern, 15e-6, 5.0, 1.5e-6)?;
    let geom = CameraGeometry::new(4e-3, 128, 50e-6, 18.0, 32)?;
    let d = geom.mask_sensor_distance_m;

    let gt = ramp_step_scene(&geom);
    let y = forward(&profile, &geom, &gt);

    // candidate planes spanning the true inverse-depth range
    let amin = gt.inv_depth.iter().cloned().fold(1.0f64, f64::min);
    let amax = gt.inv_depth.iter().cloned().fold(0.0f64, f64::max);
    let candidates = CandidateDepths::uniform(amin, amax, 15)?;

    let cgls = CglsOptions { max_iter: 50, rel_tol: 1e-8, check_adjoint: false };
    let init = greedy_init(&y, &profile, &geom, &candidates, &cgls, &GreedyOptions::default())?;
    let mi = evaluate(&init, &gt, d, 0.0)?;
    println!(
        "greedy init:      psnr {:6.2} dB   depth rmse {:7.2} mm",
        mi.psnr_db,
        mi.depth_rmse_m * 1e3
    );

    let cfg = ReconConfig {
        method: Method::Continuous,
        init: Init::Greedy,
        reg: Regularizer::Wtv2,
        candidates,
        alpha_box: (0.9955, 0.9980),
        ..Default::default()
    };
    let out = refine(&y, &profile, &geom, &init, &cfg)?;
    let m = evaluate(&out.scene, &gt, d, 0.0)?;
    println!(
        "wtv2 refinement:  psnr {:6.2} dB   depth rmse {:7.2} mm   ({:.1} s)",
        m.psnr_db,
        m.depth_rmse_m * 1e3,
        out.wall_time.as_secs_f64()
    );

    let mono = out
        .objective_history
        .windows(2)
        .all(|w| w[1] <= w[0] * (1.0 + 1e-12) + 1e-12);
    println!(
        "objective: {:.3e} -> {:.3e} over {} recorded values (non-increasing: {mono})",
        out.objective_history.first().unwrap(),
        out.objective_history.last().unwrap(),
        out.objective_history.len()
    );

    let dir = std::env::temp_dir().join("lensless3d_refine_wtv2");
    write_result_dir(&dir, &out, &cfg, d, Some(m), true)?;
    println!("wrote reconstruction bundle (pfm + png + report.json) to {}", dir.display());
    Ok(())
}
