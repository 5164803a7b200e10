//! Sweep-experiment runner: cross product of scenes, methods, noise
//! levels, sensor geometries, and seeds, executed by a bounded worker
//! pool with resumable per-job result directories.
//!
//! The results CSV is always regenerated from the persisted per-job
//! `report.json` files, so an interrupted run resumed later produces the
//! same CSV as one that ran straight through.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::geometry::CameraGeometry;
use crate::imaging::simulate;
use crate::io::{
    load_scene, read_mask_profile, sha256_file, write_results_csv, ResultRow,
};
use crate::recon::{evaluate, read_report, write_result_dir, CandidateDepths, ReconConfig};
use crate::{Error, Result};

use super::{parse_candidates, parse_init, parse_method, parse_reg, run_pipeline};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneRef {
    pub name: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeometrySpec {
    pub d_mm: f64,
    pub sensor_px: usize,
    pub pixel_um: f64,
    pub half_fov_deg: f64,
    pub scene_px: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodSpec {
    /// Label used in the CSV method column.
    pub name: String,
    pub method: String,
    #[serde(default = "default_reg")]
    pub reg: String,
    #[serde(default = "default_init")]
    pub init: String,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default)]
    pub mu: Option<f64>,
    #[serde(default)]
    pub outer_iters: Option<usize>,
}

fn default_reg() -> String {
    "none".into()
}

fn default_init() -> String {
    "greedy".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub scenes: Vec<SceneRef>,
    pub mask: PathBuf,
    pub geometry: GeometrySpec,
    /// "a0:a1:D" candidate syntax, as on the command line.
    pub candidates: String,
    pub methods: Vec<MethodSpec>,
    /// Noise sweep; `null` entries mean a clean measurement.
    pub snr_db: Vec<Option<f64>>,
    /// Pixel-pitch sweep; defaults to the base geometry's pitch.
    #[serde(default)]
    pub pixel_um: Option<Vec<f64>>,
    /// Sensor-size sweep; defaults to the base geometry's pixel count.
    #[serde(default)]
    pub sensor_px: Option<Vec<usize>>,
    /// "lo:hi" inverse-depth box for the continuous refinement; defaults
    /// to the reconstruction default when omitted.
    #[serde(default)]
    pub alpha_box: Option<String>,
    pub seeds: Vec<u64>,
}

impl ExperimentSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let spec: Self = serde_json::from_str(&text)?;
        spec.validate(path.parent().unwrap_or(Path::new(".")))?;
        Ok(spec)
    }

    fn validate(&self, base: &Path) -> Result<()> {
        if self.scenes.is_empty()
            || self.methods.is_empty()
            || self.snr_db.is_empty()
            || self.seeds.is_empty()
        {
            return Err(Error::Config("every sweep axis must be non-empty".into()));
        }
        if !base.join(&self.mask).exists() {
            return Err(Error::Config(format!("mask {:?} does not exist", self.mask)));
        }
        for s in &self.scenes {
            if !base.join(&s.path).exists() {
                return Err(Error::Config(format!("scene {:?} does not exist", s.path)));
            }
        }
        parse_candidates(&self.candidates)?;
        if let Some(b) = &self.alpha_box {
            super::parse_box(b)?;
        }
        for m in &self.methods {
            parse_method(&m.method)?;
            parse_reg(&m.reg)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Job {
    scene: SceneRef,
    method: MethodSpec,
    snr_db: Option<f64>,
    pixel_um: f64,
    sensor_px: usize,
    seed: u64,
}

impl Job {
    fn name(&self) -> String {
        let snr = match self.snr_db {
            Some(v) => format!("snr{v}"),
            None => "clean".into(),
        };
        format!(
            "{}_{}_{}_{}um_{}px_s{}",
            self.scene.name, self.method.name, snr, self.pixel_um, self.sensor_px, self.seed
        )
    }

    fn geometry(&self, base: &GeometrySpec) -> Result<CameraGeometry> {
        CameraGeometry::new(
            base.d_mm * 1e-3,
            self.sensor_px,
            self.pixel_um * 1e-6,
            base.half_fov_deg,
            base.scene_px,
        )
    }

    fn config(&self, candidates: &CandidateDepths, alpha_box: Option<(f64, f64)>) -> Result<ReconConfig> {
        let defaults = ReconConfig::default();
        let cfg = ReconConfig {
            alpha_box: alpha_box.unwrap_or(defaults.alpha_box),
            method: parse_method(&self.method.method)?,
            init: parse_init(&self.method.init)?,
            reg: parse_reg(&self.method.reg)?,
            lambda: self.method.lambda.unwrap_or(defaults.lambda),
            sigma: self.method.sigma.unwrap_or(defaults.sigma),
            mu: self.method.mu.unwrap_or(defaults.mu),
            outer_iters: self.method.outer_iters.unwrap_or(defaults.outer_iters),
            candidates: candidates.clone(),
            ..defaults
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn row(&self, psnr_db: f64, depth_rmse_mm: f64, wall_s: f64) -> ResultRow {
        ResultRow {
            scene: self.scene.name.clone(),
            method: self.method.name.clone(),
            reg: self.method.reg.clone(),
            snr_db: self.snr_db,
            pixel_pitch_um: self.pixel_um,
            sensor_px: self.sensor_px,
            psnr_db,
            depth_rmse_mm,
            wall_s,
            seed: self.seed,
        }
    }
}

fn job_list(spec: &ExperimentSpec) -> Vec<Job> {
    let pitches = spec
        .pixel_um
        .clone()
        .unwrap_or_else(|| vec![spec.geometry.pixel_um]);
    let sensors = spec
        .sensor_px
        .clone()
        .unwrap_or_else(|| vec![spec.geometry.sensor_px]);
    let mut jobs = Vec::new();
    for scene in &spec.scenes {
        for method in &spec.methods {
            for &snr in &spec.snr_db {
                for &pitch in &pitches {
                    for &px in &sensors {
                        for &seed in &spec.seeds {
                            jobs.push(Job {
                                scene: scene.clone(),
                                method: method.clone(),
                                snr_db: snr,
                                pixel_um: pitch,
                                sensor_px: px,
                                seed,
                            });
                        }
                    }
                }
            }
        }
    }
    jobs
}

/// A completed job is one whose report parses and carries metrics.
fn completed_row(job: &Job, dir: &Path) -> Option<ResultRow> {
    let report = read_report(&dir.join("report.json")).ok()?;
    let m = report.metrics?;
    Some(job.row(m.psnr_db, m.depth_rmse_m * 1e3, report.wall_s))
}

fn run_job(job: &Job, spec: &ExperimentSpec, base: &Path, dir: &Path) -> Result<ResultRow> {
    let geom = job.geometry(&spec.geometry)?;
    let mask_path = base.join(&spec.mask);
    let profile = read_mask_profile(&mask_path)?;
    let sha = sha256_file(&mask_path)?;
    let gt = load_scene(&base.join(&job.scene.path), &geom)?;
    let meas = simulate(&profile, &geom, &gt, job.snr_db, job.seed, sha);
    let alpha_box = spec.alpha_box.as_deref().map(super::parse_box).transpose()?;
    let cfg = job.config(&parse_candidates(&spec.candidates)?, alpha_box)?;
    let result = run_pipeline(&meas.y, &profile, &geom, &cfg)?;
    let metrics = evaluate(&result.scene, &gt, geom.mask_sensor_distance_m, 0.0)?;
    write_result_dir(dir, &result, &cfg, geom.mask_sensor_distance_m, Some(metrics), false)?;
    Ok(job.row(metrics.psnr_db, metrics.depth_rmse_m * 1e3, result.wall_time.as_secs_f64()))
}

/// Run (or resume) every job in the spec with at most `workers`
/// concurrent jobs. Returns the process exit code: 0 on success, 1 if
/// any job failed.
pub fn run_experiment(spec_path: &Path, workers: usize, out: &Path) -> Result<i32> {
    let spec = ExperimentSpec::load(spec_path)?;
    let base = spec_path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let jobs = job_list(&spec);
    std::fs::create_dir_all(out.join("jobs"))?;

    let rows: Mutex<Vec<ResultRow>> = Mutex::new(Vec::new());
    let any_failed = AtomicBool::new(false);
    let next = AtomicUsize::new(0);
    let workers = workers.max(1).min(jobs.len().max(1));

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, Ordering::SeqCst);
                if idx >= jobs.len() {
                    break;
                }
                let job = &jobs[idx];
                let dir = out.join("jobs").join(job.name());
                // resume: skip jobs whose report already validates
                if let Some(row) = completed_row(job, &dir) {
                    rows.lock().expect("rows lock").push(row);
                    continue;
                }
                match run_job(job, &spec, &base, &dir) {
                    Ok(row) => rows.lock().expect("rows lock").push(row),
                    Err(e) => {
                        eprintln!("job {} failed: {e}", job.name());
                        any_failed.store(true, Ordering::SeqCst);
                        rows.lock()
                            .expect("rows lock")
                            .push(job.row(f64::NAN, f64::NAN, f64::NAN));
                    }
                }
            });
        }
    });

    let rows = rows.into_inner().expect("rows lock");
    write_results_csv(&out.join("results.csv"), &rows)?;
    Ok(if any_failed.load(Ordering::SeqCst) { 1 } else { 0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn spec_validation_catches_missing_files_and_empty_axes() {
        let dir = tempdir().unwrap();
        let spec_path = dir.path().join("spec.json");
        let scene_dir = dir.path().join("scene");
        std::fs::create_dir(&scene_dir).unwrap();
        std::fs::write(dir.path().join("mask.bin"), b"placeholder").unwrap();

        let good = serde_json::json!({
            "scenes": [{"name": "s", "path": "scene"}],
            "mask": "mask.bin",
            "geometry": {"d_mm": 4.0, "sensor_px": 64, "pixel_um": 50.0,
                         "half_fov_deg": 18.0, "scene_px": 8},
            "candidates": "0.99:0.996:4",
            "methods": [{"name": "cont", "method": "continuous", "reg": "wtv2"}],
            "snr_db": [null],
            "seeds": [0]
        });
        std::fs::write(&spec_path, good.to_string()).unwrap();
        let spec = ExperimentSpec::load(&spec_path).unwrap();
        assert_eq!(job_list(&spec).len(), 1);

        let mut bad = good.clone();
        bad["mask"] = "missing.bin".into();
        std::fs::write(&spec_path, bad.to_string()).unwrap();
        assert!(ExperimentSpec::load(&spec_path).is_err());

        let mut bad = good.clone();
        bad["seeds"] = serde_json::json!([]);
        std::fs::write(&spec_path, bad.to_string()).unwrap();
        assert!(ExperimentSpec::load(&spec_path).is_err());

        let mut bad = good;
        bad["methods"][0]["method"] = "magic".into();
        std::fs::write(&spec_path, bad.to_string()).unwrap();
        assert!(ExperimentSpec::load(&spec_path).is_err());
    }

    #[test]
    fn sweep_axes_multiply_out() {
        let spec = ExperimentSpec {
            scenes: vec![
                SceneRef { name: "a".into(), path: "a".into() },
                SceneRef { name: "b".into(), path: "b".into() },
            ],
            mask: "m".into(),
            geometry: GeometrySpec {
                d_mm: 4.0,
                sensor_px: 64,
                pixel_um: 50.0,
                half_fov_deg: 18.0,
                scene_px: 8,
            },
            candidates: "0.99:0.996:4".into(),
            methods: vec![MethodSpec {
                name: "c".into(),
                method: "continuous".into(),
                reg: "wtv2".into(),
                init: "greedy".into(),
                lambda: None,
                sigma: None,
                mu: None,
                outer_iters: None,
            }],
            snr_db: vec![Some(20.0), Some(30.0), Some(40.0)],
            pixel_um: Some(vec![25.0, 50.0, 100.0]),
            sensor_px: None,
            alpha_box: None,
            seeds: vec![0, 1],
        };
        assert_eq!(job_list(&spec).len(), 2 * 3 * 3 * 2);
        let j = &job_list(&spec)[0];
        assert_eq!(j.name(), "a_c_snr20_25um_64px_s0");
    }
}
