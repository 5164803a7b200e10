//! Reconstruction drivers: plane-sweep and greedy depth-pursuit
//! initialization, alternating gradient-descent refinement, the 3D-grid
//! l1 baseline, and evaluation metrics.

mod grid3d;
mod init;
mod output;
mod refine;

pub use grid3d::{grid3d_baseline, Grid3dOptions};
pub use init::{greedy_init, sweep_init, GreedyOptions, SweepInit};
pub use output::{read_report, write_result_dir, Report};
pub use refine::refine;

use ndarray::Array2;

use crate::geometry::depth_from_alpha;
use crate::imaging::Scene;
use crate::solvers::{CglsOptions, SolveReport};
use crate::{Error, Result};

/// Discrete depth planes, specified and sorted in inverse-depth space.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CandidateDepths {
    pub alphas: Vec<f64>,
}

impl CandidateDepths {
    pub fn new(alphas: Vec<f64>) -> Result<Self> {
        if alphas.is_empty() {
            return Err(Error::Config("need at least one candidate depth".into()));
        }
        if alphas.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
            return Err(Error::Config("candidate alphas must lie in (0, 1)".into()));
        }
        if alphas.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("candidate alphas must be strictly increasing".into()));
        }
        Ok(Self { alphas })
    }

    /// `d` planes uniformly spaced in alpha over `[a0, a1]` inclusive.
    pub fn uniform(a0: f64, a1: f64, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::Config("need at least one candidate depth".into()));
        }
        if d == 1 {
            return Self::new(vec![a0]);
        }
        let alphas = (0..d)
            .map(|i| a0 + i as f64 * (a1 - a0) / (d as f64 - 1.0))
            .collect();
        Self::new(alphas)
    }

    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Sweep,
    Greedy,
    Continuous,
    Grid3d,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    SinglePlane,
    Greedy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regularizer {
    None,
    Tv2,
    Wtv2,
    Tv1,
}

impl std::fmt::Display for Regularizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Regularizer::None => "none",
            Regularizer::Tv2 => "tv2",
            Regularizer::Wtv2 => "wtv2",
            Regularizer::Tv1 => "tv1",
        };
        f.write_str(s)
    }
}

/// Full reconstruction configuration.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ReconConfig {
    pub method: Method,
    pub init: Init,
    pub reg: Regularizer,
    /// Regularization weight.
    pub lambda: f64,
    /// Weight decay scale for weighted TV-l2.
    pub sigma: f64,
    /// Split-Bregman penalty weight for TV-l1.
    pub mu: f64,
    /// Outer alternation iterations (k_max).
    pub outer_iters: usize,
    /// L-BFGS iterations per depth subproblem.
    pub inner_iters: usize,
    /// L-BFGS correction pairs.
    pub lbfgs_memory: usize,
    /// CGLS iterations per intensity subproblem.
    pub cgls_iters: usize,
    pub cgls_rel_tol: f64,
    /// Bregman iterations per outer iteration (TV-l1 only).
    pub bregman_iters: usize,
    pub candidates: CandidateDepths,
    /// Depth variables are clamped into this inverse-depth box.
    pub alpha_box: (f64, f64),
    /// Recompute weighted-TV weights each outer iteration (default).
    /// When false the weights are frozen at the initialization depth
    /// map, keeping the recorded objective a single well-defined
    /// function; a noisy initialization then yields near-zero weights
    /// everywhere, so refreshing usually reconstructs much better.
    pub refresh_weights: bool,
    /// Clamp the intensity map to be non-negative between alternations.
    pub nonneg_intensity: bool,
    /// Hold the intensity fixed (skip the intensity half-step).
    pub freeze_intensity: bool,
    pub greedy: GreedyOptions,
}

impl ReconConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda < 0.0 {
            return Err(Error::Config("lambda must be >= 0".into()));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::Config("sigma must be > 0".into()));
        }
        if !(self.mu > 0.0) {
            return Err(Error::Config("mu must be > 0".into()));
        }
        let (lo, hi) = self.alpha_box;
        if !(lo > 0.0 && hi < 1.0 && lo < hi) {
            return Err(Error::Config("alpha box must satisfy 0 < min < max < 1".into()));
        }
        if self.method == Method::Grid3d && self.reg == Regularizer::Tv1 {
            return Err(Error::Config("grid3d baseline does not support tv1".into()));
        }
        Ok(())
    }

    pub fn cgls_options(&self) -> CglsOptions {
        CglsOptions {
            max_iter: self.cgls_iters,
            rel_tol: self.cgls_rel_tol,
            check_adjoint: false,
        }
    }
}

impl Default for ReconConfig {
    fn default() -> Self {
        Self {
            method: Method::Continuous,
            init: Init::Greedy,
            reg: Regularizer::Wtv2,
            lambda: 2e6,
            sigma: 1e-7,
            mu: 1.0,
            outer_iters: 6,
            inner_iters: 40,
            lbfgs_memory: 10,
            cgls_iters: 40,
            cgls_rel_tol: 1e-8,
            bregman_iters: 5,
            candidates: CandidateDepths::uniform(0.996, 0.9976, 15).expect("valid defaults"),
            alpha_box: (0.9, 0.9999),
            refresh_weights: true,
            nonneg_intensity: false,
            freeze_intensity: false,
            greedy: GreedyOptions::default(),
        }
    }
}

/// Outcome of a reconstruction job.
#[derive(Debug, Clone)]
pub struct ReconResult {
    pub scene: Scene,
    /// Regularized objective after every half-step of the alternation.
    /// Non-increasing for reg in {none, tv2, wtv2} (and for wtv2 only
    /// when the weights are frozen); the split-Bregman TV-l1 objective
    /// is not guaranteed monotone.
    pub objective_history: Vec<f64>,
    pub depth_reports: Vec<SolveReport>,
    /// Relative split-Bregman constraint residual at termination, TV-l1
    /// only.
    pub bregman_residual: Option<f64>,
    pub wall_time: std::time::Duration,
}

/// Intensity PSNR and physical-depth RMSE of an estimate against ground
/// truth.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct Metrics {
    pub psnr_db: f64,
    pub depth_rmse_m: f64,
}

/// PSNR is computed against peak 1.0 on the intensity maps and capped at
/// 99 dB; depth RMSE is taken over physical depths `z = d / (1 - alpha)`
/// restricted to pixels whose ground-truth intensity is at least
/// `mask_threshold`.
pub fn evaluate(est: &Scene, gt: &Scene, d_m: f64, mask_threshold: f64) -> Result<Metrics> {
    if est.n() != gt.n() {
        return Err(Error::Shape(format!("estimate N = {} vs truth N = {}", est.n(), gt.n())));
    }
    let mse = est
        .intensity
        .iter()
        .zip(gt.intensity.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / est.intensity.len() as f64;
    let psnr_db = if mse == 0.0 {
        99.0
    } else {
        (10.0 * (1.0 / mse).log10()).min(99.0)
    };

    let mut sq = 0.0;
    let mut count = 0usize;
    for ((i, j), &gt_l) in gt.intensity.indexed_iter() {
        if gt_l >= mask_threshold {
            let ze = depth_of(est.inv_depth[(i, j)], d_m);
            let zg = depth_of(gt.inv_depth[(i, j)], d_m);
            sq += (ze - zg) * (ze - zg);
            count += 1;
        }
    }
    let depth_rmse_m = if count > 0 { (sq / count as f64).sqrt() } else { 0.0 };
    Ok(Metrics { psnr_db, depth_rmse_m })
}

fn depth_of(alpha: f64, d_m: f64) -> f64 {
    // clamp just inside the valid range so stray estimates still map to
    // a finite depth
    let a = alpha.clamp(1e-9, 1.0 - 1e-9);
    depth_from_alpha(a, d_m).expect("clamped alpha is in range")
}

/// Flatten / unflatten helpers shared by the drivers.
pub(crate) fn flatten(a: &Array2<f64>) -> Vec<f64> {
    a.iter().cloned().collect()
}

pub(crate) fn unflatten(v: &[f64], n: usize, m: usize) -> Array2<f64> {
    Array2::from_shape_vec((n, m), v.to_vec()).expect("length matches shape")
}
