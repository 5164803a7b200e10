//! Batch command-line front end: mask generation, simulation,
//! reconstruction, gradient checking, and sweep experiments.
//!
//! Exit codes: 0 success, 1 job failure, 2 usage error.

mod experiment;

pub use experiment::{run_experiment, ExperimentSpec};

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use ndarray::Array2;

use crate::geometry::CameraGeometry;
use crate::imaging::{depth_gradient, forward, simulate, Scene};
use crate::io::{
    load_scene, read_mask_profile, read_measurement, sha256_file, write_mask_profile,
    write_measurement,
};
use crate::mask::{build_mask_profile, generate_mls, MaskProfile};
use crate::recon::{
    evaluate, greedy_init, grid3d_baseline, refine, sweep_init, CandidateDepths, Grid3dOptions,
    Init, Method, ReconConfig, ReconResult, Regularizer,
};
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "lensless3d", version, about = "Mask-based lensless 3D imaging toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a blurred MLS mask profile and write it to a binary file.
    Genmask(GenmaskArgs),
    /// Simulate a sensor measurement from a scene bundle.
    Simulate(SimulateArgs),
    /// Reconstruct intensity and depth from a measurement bundle.
    Reconstruct(ReconstructArgs),
    /// Check the analytic depth gradient against finite differences.
    Gradcheck(GradcheckArgs),
    /// Run a sweep experiment from a JSON spec with a bounded worker pool.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Args)]
pub struct GenmaskArgs {
    /// LFSR order (sequence length 2^order - 1).
    #[arg(long, default_value_t = 10)]
    pub order: u32,
    /// Feedback taps as a bitmask; defaults to a known primitive polynomial.
    #[arg(long)]
    pub taps: Option<u64>,
    /// Initial LFSR state (nonzero).
    #[arg(long, default_value_t = 1)]
    pub seed_state: u64,
    /// Mask feature width in micrometers.
    #[arg(long, default_value_t = 30.0)]
    pub feature_um: f64,
    /// Gaussian blur kernel length in micrometers.
    #[arg(long, default_value_t = 15.0)]
    pub blur_um: f64,
    /// Blur standard deviation in fine-grid samples.
    #[arg(long, default_value_t = 5.0)]
    pub blur_sigma: f64,
    /// Fine sampling step in micrometers.
    #[arg(long, default_value_t = 1.5)]
    pub grid_step_um: f64,
    /// Number of opaque features appended after the sequence.
    #[arg(long, default_value_t = 1)]
    pub pad: usize,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scene bundle directory (intensity + depth_m + scene.json).
    #[arg(long)]
    pub scene: PathBuf,
    /// Mask profile binary.
    #[arg(long)]
    pub mask: PathBuf,
    /// Mask-to-sensor distance in millimeters.
    #[arg(long, default_value_t = 4.0)]
    pub d_mm: f64,
    #[arg(long, default_value_t = 512)]
    pub sensor_px: usize,
    /// Sensor pixel pitch in micrometers.
    #[arg(long, default_value_t = 50.0)]
    pub pixel_um: f64,
    #[arg(long, default_value_t = 18.0)]
    pub half_fov_deg: f64,
    /// Scene resolution (N x N angles).
    #[arg(long, default_value_t = 128)]
    pub scene_px: usize,
    /// Additive white Gaussian noise level; omit for a clean measurement.
    #[arg(long)]
    pub snr_db: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, short)]
    pub out: PathBuf,
}

impl SimulateArgs {
    fn geometry(&self) -> Result<CameraGeometry> {
        CameraGeometry::new(
            self.d_mm * 1e-3,
            self.sensor_px,
            self.pixel_um * 1e-6,
            self.half_fov_deg,
            self.scene_px,
        )
    }
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    /// Measurement bundle directory (y.pfm + meta.json).
    #[arg(long)]
    pub measurement: PathBuf,
    /// Mask profile binary (must match the one used to simulate).
    #[arg(long)]
    pub mask: PathBuf,
    /// sweep | greedy | continuous | grid3d
    #[arg(long, default_value = "continuous")]
    pub method: String,
    /// single_plane | greedy
    #[arg(long, default_value = "greedy")]
    pub init: String,
    /// none | tv2 | wtv2 | tv1
    #[arg(long, default_value = "wtv2")]
    pub reg: String,
    #[arg(long, default_value_t = 2e6)]
    pub lambda: f64,
    #[arg(long, default_value_t = 1e-7)]
    pub sigma: f64,
    #[arg(long, default_value_t = 1.0)]
    pub mu: f64,
    /// Candidate depths "a0:a1:D" = D inverse depths uniform in [a0, a1].
    #[arg(long, default_value = "0.996:0.9976:15")]
    pub candidates: String,
    #[arg(long, default_value_t = 6)]
    pub outer_iters: usize,
    /// Inverse-depth box "lo:hi" for the continuous refinement.
    #[arg(long, default_value = "0.9:0.9999")]
    pub alpha_box: String,
    /// Ground-truth scene bundle; enables PSNR / depth RMSE in the report.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Also write 8-bit preview PNGs.
    #[arg(long, default_value_t = false)]
    pub png: bool,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 8)]
    pub scene_px: usize,
    #[arg(long, default_value_t = 32)]
    pub sensor_px: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Central finite-difference step.
    #[arg(long, default_value_t = 1e-7)]
    pub h: f64,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// JSON experiment spec; schema in docs/config.md.
    #[arg(long)]
    pub spec: PathBuf,
    /// Maximum concurrent jobs.
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    #[arg(long, short)]
    pub out: PathBuf,
}

/// Parse "a0:a1:D" into a uniform candidate set.
pub fn parse_candidates(s: &str) -> Result<CandidateDepths> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || Error::Config(format!("bad candidate spec {s:?}, expected \"a0:a1:D\""));
    if parts.len() != 3 {
        return Err(bad());
    }
    let a0: f64 = parts[0].parse().map_err(|_| bad())?;
    let a1: f64 = parts[1].parse().map_err(|_| bad())?;
    let d: usize = parts[2].parse().map_err(|_| bad())?;
    CandidateDepths::uniform(a0, a1, d)
}

fn parse_box(s: &str) -> Result<(f64, f64)> {
    let bad = || Error::Config(format!("bad alpha box {s:?}, expected \"lo:hi\""));
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 2 {
        return Err(bad());
    }
    Ok((
        parts[0].parse().map_err(|_| bad())?,
        parts[1].parse().map_err(|_| bad())?,
    ))
}

pub fn parse_method(s: &str) -> Result<Method> {
    match s {
        "sweep" => Ok(Method::Sweep),
        "greedy" => Ok(Method::Greedy),
        "continuous" => Ok(Method::Continuous),
        "grid3d" => Ok(Method::Grid3d),
        other => Err(Error::Config(format!("unknown method {other:?}"))),
    }
}

pub fn parse_reg(s: &str) -> Result<Regularizer> {
    match s {
        "none" => Ok(Regularizer::None),
        "tv2" => Ok(Regularizer::Tv2),
        "wtv2" => Ok(Regularizer::Wtv2),
        "tv1" => Ok(Regularizer::Tv1),
        other => Err(Error::Config(format!("unknown regularizer {other:?}"))),
    }
}

fn parse_init(s: &str) -> Result<Init> {
    match s {
        "single_plane" => Ok(Init::SinglePlane),
        "greedy" => Ok(Init::Greedy),
        other => Err(Error::Config(format!("unknown init {other:?}"))),
    }
}

/// Run a fully configured reconstruction pipeline; shared by the
/// `reconstruct` subcommand and the experiment runner.
pub fn run_pipeline(
    y: &Array2<f64>,
    profile: &MaskProfile,
    geom: &CameraGeometry,
    cfg: &ReconConfig,
) -> Result<ReconResult> {
    cfg.validate()?;
    let t0 = std::time::Instant::now();
    let cgls = cfg.cgls_options();
    match cfg.method {
        Method::Sweep => {
            let sweep = sweep_init(y, profile, geom, &cfg.candidates, &cgls)?;
            Ok(ReconResult {
                scene: sweep.scene(),
                objective_history: vec![sweep.losses[sweep.best_index]],
                depth_reports: vec![],
                bregman_residual: None,
                wall_time: t0.elapsed(),
            })
        }
        Method::Greedy => {
            let scene = greedy_init(y, profile, geom, &cfg.candidates, &cgls, &cfg.greedy)?;
            Ok(ReconResult {
                scene,
                objective_history: vec![],
                depth_reports: vec![],
                bregman_residual: None,
                wall_time: t0.elapsed(),
            })
        }
        Method::Grid3d => {
            let opts = Grid3dOptions {
                lambda_l1: cfg.lambda,
                ..Default::default()
            };
            let scene = grid3d_baseline(y, profile, geom, &cfg.candidates, &opts)?;
            Ok(ReconResult {
                scene,
                objective_history: vec![],
                depth_reports: vec![],
                bregman_residual: None,
                wall_time: t0.elapsed(),
            })
        }
        Method::Continuous => {
            let init = match cfg.init {
                Init::SinglePlane => {
                    sweep_init(y, profile, geom, &cfg.candidates, &cgls)?.scene()
                }
                Init::Greedy => greedy_init(y, profile, geom, &cfg.candidates, &cgls, &cfg.greedy)?,
            };
            let mut out = refine(y, profile, geom, &init, cfg)?;
            out.wall_time = t0.elapsed();
            Ok(out)
        }
    }
}

fn cmd_genmask(a: &GenmaskArgs) -> Result<()> {
    let pattern = generate_mls(a.order, a.taps, a.seed_state, a.feature_um * 1e-6)?
        .zero_padded(a.pad);
    let profile = build_mask_profile(
        &pattern,
        a.blur_um * 1e-6,
        a.blur_sigma,
        a.grid_step_um * 1e-6,
    )?;
    write_mask_profile(&a.out, &profile)?;
    println!(
        "mask: {} features of {} um, {} samples at {:.3} um, support [{:.1}, {:.1}] um",
        pattern.len(),
        a.feature_um,
        profile.len(),
        profile.grid_step_m * 1e6,
        -profile.support_halfwidth_m * 1e6,
        profile.support_halfwidth_m * 1e6,
    );
    println!("sha256: {}", sha256_file(&a.out)?);
    Ok(())
}

fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let geom = a.geometry()?;
    let profile = read_mask_profile(&a.mask)?;
    let scene = load_scene(&a.scene, &geom)?;
    let sha = sha256_file(&a.mask)?;
    let meas = simulate(&profile, &geom, &scene, a.snr_db, a.seed, sha);
    write_measurement(&a.out, &meas)?;
    println!(
        "measurement: {}x{} sensor, snr {:?} dB, seed {}",
        geom.sensor_pixels, geom.sensor_pixels, a.snr_db, a.seed
    );
    Ok(())
}

fn cmd_reconstruct(a: &ReconstructArgs) -> Result<()> {
    let cfg = ReconConfig {
        method: parse_method(&a.method)?,
        init: parse_init(&a.init)?,
        reg: parse_reg(&a.reg)?,
        lambda: a.lambda,
        sigma: a.sigma,
        mu: a.mu,
        outer_iters: a.outer_iters,
        candidates: parse_candidates(&a.candidates)?,
        alpha_box: parse_box(&a.alpha_box)?,
        ..Default::default()
    };
    cfg.validate()?;
    let meas = read_measurement(&a.measurement)?;
    let profile = read_mask_profile(&a.mask)?;
    let geom = meas.meta.geometry.clone();
    let sha = sha256_file(&a.mask)?;
    if sha != meas.meta.mask_sha256 {
        eprintln!("warning: mask sha256 does not match the measurement metadata");
    }
    let result = run_pipeline(&meas.y, &profile, &geom, &cfg)?;
    let metrics = match &a.truth {
        Some(dir) => {
            let gt = load_scene(dir, &geom)?;
            Some(evaluate(&result.scene, &gt, geom.mask_sensor_distance_m, 0.0)?)
        }
        None => None,
    };
    crate::recon::write_result_dir(&a.out, &result, &cfg, geom.mask_sensor_distance_m, metrics, a.png)?;
    if let Some(m) = metrics {
        println!(
            "psnr {:.2} dB, depth rmse {:.2} mm, wall {:.2} s",
            m.psnr_db,
            m.depth_rmse_m * 1e3,
            result.wall_time.as_secs_f64()
        );
    } else {
        println!("done in {:.2} s", result.wall_time.as_secs_f64());
    }
    Ok(())
}

/// Returns the relative l2 error between analytic and finite-difference
/// depth gradients on a random desk-scale scene.
pub fn gradcheck(scene_px: usize, sensor_px: usize, seed: u64, h: f64) -> Result<f64> {
    use rand::{Rng, SeedableRng};
    let pattern = generate_mls(6, None, 1, 30e-6)?;
    let profile = build_mask_profile(&pattern, 15e-6, 5.0, 3e-6)?;
    let geom = CameraGeometry::new(0.004, sensor_px, 50e-6, 18.0, scene_px)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n = scene_px;
    let intensity = Array2::from_shape_fn((n, n), |_| rng.gen_range(0.3..1.0));
    let alpha = Array2::from_shape_fn((n, n), |_| rng.gen_range(0.988..0.996));
    let scene = Scene::new(intensity.clone(), alpha.clone())?;
    let y_target = {
        // perturbed target so the residual is nonzero
        let shifted = Scene::new(intensity.clone(), alpha.mapv(|a| a + 5e-4))?;
        forward(&profile, &geom, &shifted)
    };
    let analytic = depth_gradient(&y_target, &profile, &geom, &scene);
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..n {
        for j in 0..n {
            let probe = |delta: f64| {
                let mut a = alpha.clone();
                a[(i, j)] += delta;
                let s = Scene::new(intensity.clone(), a).expect("valid scene");
                crate::imaging::data_loss(&y_target, &profile, &geom, &s)
            };
            let fd = (probe(h) - probe(-h)) / (2.0 * h);
            let d = analytic[(i, j)] - fd;
            num += d * d;
            den += fd * fd;
        }
    }
    Ok(num.sqrt() / den.sqrt().max(f64::MIN_POSITIVE))
}

fn cmd_gradcheck(a: &GradcheckArgs) -> Result<i32> {
    if a.h >= 1e-3 {
        eprintln!(
            "warning: step {} is large; truncation error will dominate the comparison",
            a.h
        );
    }
    let rel = gradcheck(a.scene_px, a.sensor_px, a.seed, a.h)?;
    println!("relative l2 gradient error: {rel:.3e}");
    Ok(if rel < 1e-4 { 0 } else { 1 })
}

/// Entry point used by the binary; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    if let Ok(threads) = std::env::var("L3D_THREADS") {
        if let Ok(k) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
        }
    }
    let result: Result<i32> = match &cli.command {
        Command::Genmask(a) => cmd_genmask(a).map(|_| 0),
        Command::Simulate(a) => cmd_simulate(a).map(|_| 0),
        Command::Reconstruct(a) => cmd_reconstruct(a).map(|_| 0),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::Experiment(a) => run_experiment(&a.spec, a.workers, &a.out),
    };
    match result {
        Ok(code) => code,
        Err(Error::Config(msg)) => {
            eprintln!("usage error: {msg}");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn candidate_spec_parsing() {
        let c = parse_candidates("0.996:0.9976:15").unwrap();
        assert_eq!(c.len(), 15);
        assert!((c.alphas[0] - 0.996).abs() < 1e-15);
        assert!(parse_candidates("0.996:0.9976").is_err());
        assert!(parse_candidates("a:b:3").is_err());
        assert!(parse_candidates("0.99:0.98:3").is_err());
        // single plane
        let one = parse_candidates("0.99:0.99:1").unwrap();
        assert_eq!(one.alphas, vec![0.99]);
    }

    #[test]
    fn method_reg_validation() {
        assert!(parse_method("continuous").is_ok());
        assert!(parse_method("magic").is_err());
        assert!(parse_reg("wtv2").is_ok());
        assert!(parse_reg("ridge").is_err());
        let cfg = ReconConfig {
            method: Method::Grid3d,
            reg: Regularizer::Tv1,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn gradcheck_small_instance_passes() {
        let rel = gradcheck(4, 16, 0, 1e-7).unwrap();
        assert!(rel < 1e-4, "relative error {rel}");
    }
}
