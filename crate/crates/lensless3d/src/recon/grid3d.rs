//! Non-negative l1 baseline over a discrete 3D voxel grid (N x N scene
//! pixels times D candidate planes), solved with FISTA and reduced to a
//! per-pixel depth by taking the dominant plane.

use ndarray::Array2;

use crate::geometry::CameraGeometry;
use crate::imaging::{PlaneOperator, Scene};
use crate::mask::MaskProfile;
use crate::{Error, Result};

use super::CandidateDepths;

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Grid3dOptions {
    /// l1 weight on the voxel intensities.
    pub lambda_l1: f64,
    /// FISTA iterations.
    pub max_iters: usize,
    /// Power-method iterations for the step size.
    pub power_iters: usize,
    /// Stop when the relative objective decrease falls below this.
    pub rel_tol: f64,
}

impl Default for Grid3dOptions {
    fn default() -> Self {
        Self {
            lambda_l1: 1e-3,
            max_iters: 200,
            power_iters: 20,
            rel_tol: 1e-8,
        }
    }
}

struct Grid {
    ops: Vec<PlaneOperator>,
    m: usize,
}

impl Grid {
    fn forward(&self, x: &[Array2<f64>]) -> Array2<f64> {
        let mut y = Array2::<f64>::zeros((self.m, self.m));
        for (op, plane) in self.ops.iter().zip(x) {
            y += &op.apply(plane);
        }
        y
    }

    fn adjoint(&self, r: &Array2<f64>) -> Vec<Array2<f64>> {
        self.ops.iter().map(|op| op.apply_adjoint(r)).collect()
    }
}

fn grid_norm(x: &[Array2<f64>]) -> f64 {
    x.iter()
        .map(|p| p.iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>()
        .sqrt()
}

fn objective(grid: &Grid, y: &Array2<f64>, x: &[Array2<f64>], lambda: f64) -> f64 {
    let r = y - &grid.forward(x);
    let data = 0.5 * r.iter().map(|v| v * v).sum::<f64>();
    let l1: f64 = x.iter().map(|p| p.iter().map(|v| v.abs()).sum::<f64>()).sum();
    data + lambda * l1
}

/// FISTA with non-negativity and l1 shrinkage over the voxel grid, then
/// per-pixel argmax over planes for the depth assignment.
pub fn grid3d_baseline(
    y: &Array2<f64>,
    profile: &MaskProfile,
    geom: &CameraGeometry,
    candidates: &CandidateDepths,
    opts: &Grid3dOptions,
) -> Result<Scene> {
    if opts.lambda_l1 < 0.0 {
        return Err(Error::Config("lambda_l1 must be >= 0".into()));
    }
    let n = geom.scene_pixels;
    let m = geom.sensor_pixels;
    let d = candidates.len();
    let grid = Grid {
        ops: candidates
            .alphas
            .iter()
            .map(|&a| PlaneOperator::new(profile, geom, a))
            .collect(),
        m,
    };

    // largest eigenvalue of A^T A via the power method on a
    // deterministic start
    let mut v: Vec<Array2<f64>> = (0..d)
        .map(|k| {
            Array2::from_shape_fn((n, n), |(i, j)| {
                (((k * n * n + i * n + j) as f64 * 12.9898).sin() * 43758.5453).fract() - 0.5
            })
        })
        .collect();
    let mut lipschitz = 1.0;
    for _ in 0..opts.power_iters {
        let av = grid.adjoint(&grid.forward(&v));
        let nrm = grid_norm(&av);
        if nrm == 0.0 {
            break;
        }
        lipschitz = nrm / grid_norm(&v).max(f64::MIN_POSITIVE);
        v = av.into_iter().map(|p| p / nrm).collect();
    }
    let step = 1.0 / (lipschitz * 1.01);

    let mut x: Vec<Array2<f64>> = vec![Array2::zeros((n, n)); d];
    let mut z = x.clone();
    let mut t = 1.0f64;
    let mut prev_obj = objective(&grid, y, &x, opts.lambda_l1);

    for _ in 0..opts.max_iters {
        let r = &grid.forward(&z) - y;
        let g = grid.adjoint(&r);
        // non-negative soft threshold of the gradient step
        let x_new: Vec<Array2<f64>> = z
            .iter()
            .zip(&g)
            .map(|(zp, gp)| (zp - &(gp * step)).mapv(|v| (v - step * opts.lambda_l1).max(0.0)))
            .collect();
        let obj = objective(&grid, y, &x_new, opts.lambda_l1);
        if obj > prev_obj {
            // restart the momentum from the last good iterate
            z = x.clone();
            t = 1.0;
            continue;
        }
        let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_new;
        z = x_new
            .iter()
            .zip(&x)
            .map(|(xn, xo)| xn + &((xn - xo) * beta))
            .collect();
        let decrease = (prev_obj - obj) / prev_obj.abs().max(f64::MIN_POSITIVE);
        x = x_new;
        t = t_new;
        prev_obj = obj;
        if decrease < opts.rel_tol {
            break;
        }
    }

    // collapse each pixel onto its dominant plane
    let mut intensity = Array2::<f64>::zeros((n, n));
    let mut alpha = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let mut best = 0usize;
            for k in 1..d {
                if x[k][(i, j)] > x[best][(i, j)] {
                    best = k;
                }
            }
            intensity[(i, j)] = x[best][(i, j)];
            alpha[(i, j)] = candidates.alphas[best];
        }
    }
    Scene::new(intensity, alpha)
}
