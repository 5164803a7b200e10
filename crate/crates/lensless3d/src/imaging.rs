//! Forward measurement model, adjoint, data loss, analytic depth
//! gradient, and noisy measurement simulation.
//!
//! The sensor image is a superposition of mask shadows, one per scene
//! direction. With a separable mask each shadow is a rank-1 outer
//! product of two 1-D basis vectors, so the forward operator is a sum of
//! N^2 rank-1 updates of the M x M sensor, at O(M^2 N^2) cost. The depth
//! gradient of the data loss factors the same way into two bilinear
//! forms of the residual, costing 2M^2 + 2M multiplications per scene
//! pixel.

use ndarray::{Array2, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::geometry::{AngleGrid, CameraGeometry};
use crate::mask::{g_1d, psi_1d, MaskProfile};
use crate::{Error, Result};

/// Number of deterministic partial accumulators used by the parallel
/// forward operator. Fixed so the floating-point reduction order does
/// not depend on the worker count.
const REDUCE_CHUNKS: usize = 8;

/// Intensity map plus inverse depth map, both N x N.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub intensity: Array2<f64>,
    pub inv_depth: Array2<f64>,
}

impl Scene {
    pub fn new(intensity: Array2<f64>, inv_depth: Array2<f64>) -> Result<Self> {
        if intensity.dim() != inv_depth.dim() {
            return Err(Error::Shape(format!(
                "intensity {:?} vs inverse depth {:?}",
                intensity.dim(),
                inv_depth.dim()
            )));
        }
        if intensity.nrows() != intensity.ncols() {
            return Err(Error::Shape("scene maps must be square".into()));
        }
        Ok(Self { intensity, inv_depth })
    }

    pub fn n(&self) -> usize {
        self.intensity.nrows()
    }

    /// Constant-depth scene.
    pub fn at_plane(intensity: Array2<f64>, alpha: f64) -> Result<Self> {
        let n = intensity.dim();
        Scene::new(intensity, Array2::from_elem(n, alpha))
    }
}

/// Provenance carried with a simulated measurement.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MeasurementMeta {
    pub geometry: CameraGeometry,
    pub mask_sha256: String,
    pub snr_db: Option<f64>,
    pub seed: u64,
}

/// M x M sensor image plus provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub y: Array2<f64>,
    pub meta: MeasurementMeta,
}

/// 2-D basis function for scene pixel (i, j): the outer product of the
/// two 1-D basis vectors.
pub fn basis_2d(
    profile: &MaskProfile,
    geom: &CameraGeometry,
    grid: &AngleGrid,
    i: usize,
    j: usize,
    alpha: f64,
) -> Array2<f64> {
    let pu = psi_1d(profile, geom, grid.tan_theta[i], alpha);
    let pv = psi_1d(profile, geom, grid.tan_theta[j], alpha);
    let m = geom.sensor_pixels;
    Array2::from_shape_fn((m, m), |(u, v)| pu[u] * pv[v])
}

/// Forward measurement operator: y = sum over scene pixels of
/// `l_ij * psi_i(alpha_ij) (x) psi_j(alpha_ij)`.
pub fn forward(profile: &MaskProfile, geom: &CameraGeometry, scene: &Scene) -> Array2<f64> {
    let n = scene.n();
    let m = geom.sensor_pixels;
    let grid = geom.angle_grid();
    assert_eq!(grid.len(), n, "scene size must match geometry scene_pixels");

    let chunk = n.div_ceil(REDUCE_CHUNKS);
    let partials: Vec<Array2<f64>> = (0..n)
        .collect::<Vec<_>>()
        .par_chunks(chunk.max(1))
        .map(|rows| {
            let mut acc = Array2::<f64>::zeros((m, m));
            for &i in rows {
                accumulate_row(profile, geom, &grid, scene, i, &mut acc);
            }
            acc
        })
        .collect();

    // fixed-order reduction
    let mut y = Array2::<f64>::zeros((m, m));
    for p in partials {
        y += &p;
    }
    y
}

fn accumulate_row(
    profile: &MaskProfile,
    geom: &CameraGeometry,
    grid: &AngleGrid,
    scene: &Scene,
    i: usize,
    acc: &mut Array2<f64>,
) {
    let n = scene.n();
    for j in 0..n {
        let l = scene.intensity[(i, j)];
        if l == 0.0 {
            continue;
        }
        let alpha = scene.inv_depth[(i, j)];
        let pu = psi_1d(profile, geom, grid.tan_theta[i], alpha);
        let pv = psi_1d(profile, geom, grid.tan_theta[j], alpha);
        for (u, &pu_u) in pu.iter().enumerate() {
            let a = l * pu_u;
            if a == 0.0 {
                continue;
            }
            let mut row = acc.row_mut(u);
            let row = row.as_slice_mut().unwrap();
            for (v, &pv_v) in pv.iter().enumerate() {
                row[v] += a * pv_v;
            }
        }
    }
}

/// Adjoint of the forward operator at a fixed inverse depth map:
/// entry (i, j) is `psi_i^T r psi_j` evaluated at `alpha_ij`.
pub fn adjoint(
    profile: &MaskProfile,
    geom: &CameraGeometry,
    inv_depth: &Array2<f64>,
    r: &Array2<f64>,
) -> Array2<f64> {
    let n = inv_depth.nrows();
    let grid = geom.angle_grid();
    assert_eq!(grid.len(), n);
    assert_eq!(r.dim(), (geom.sensor_pixels, geom.sensor_pixels));

    let mut out = Array2::<f64>::zeros((n, n));
    out.axis_iter_mut(ndarray::Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(i, mut row)| {
            for j in 0..n {
                let alpha = inv_depth[(i, j)];
                let pu = psi_1d(profile, geom, grid.tan_theta[i], alpha);
                let pv = psi_1d(profile, geom, grid.tan_theta[j], alpha);
                row[j] = bilinear(r, &pu, &pv);
            }
        });
    out
}

/// `a^T R b` with contiguous rows.
#[inline]
fn bilinear(r: &Array2<f64>, a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (u, &au) in a.iter().enumerate() {
        if au == 0.0 {
            continue;
        }
        let row = r.row(u);
        let row = row.as_slice().unwrap();
        let mut dot = 0.0;
        for (v, &bv) in b.iter().enumerate() {
            dot += row[v] * bv;
        }
        acc += au * dot;
    }
    acc
}

/// Residual `y - forward(scene)`.
pub fn residual(
    y: &Array2<f64>,
    profile: &MaskProfile,
    geom: &CameraGeometry,
    scene: &Scene,
) -> Array2<f64> {
    let mut r = y.clone();
    r -= &forward(profile, geom, scene);
    r
}

/// Data-fidelity loss `0.5 * || y - forward(scene) ||_F^2`.
pub fn data_loss(
    y: &Array2<f64>,
    profile: &MaskProfile,
    geom: &CameraGeometry,
    scene: &Scene,
) -> f64 {
    let r = residual(y, profile, geom, scene);
    0.5 * r.iter().map(|&x| x * x).sum::<f64>()
}

/// Analytic gradient of the data loss with respect to the inverse depth
/// map.
///
/// Entry (i, j) is `-l_ij * (g~_i^T R psi_j + psi_i^T R g~_j)` where
/// `g~` is the 1-D mask derivative weighted by the sensor coordinate.
pub fn depth_gradient(
    y: &Array2<f64>,
    profile: &MaskProfile,
    geom: &CameraGeometry,
    scene: &Scene,
) -> Array2<f64> {
    let r = residual(y, profile, geom, scene);
    depth_gradient_with_residual(&r, profile, geom, scene)
}

/// Same as [`depth_gradient`] but reusing a precomputed residual.
pub fn depth_gradient_with_residual(
    r: &Array2<f64>,
    profile: &MaskProfile,
    geom: &CameraGeometry,
    scene: &Scene,
) -> Array2<f64> {
    let n = scene.n();
    let grid = geom.angle_grid();
    let coords = geom.sensor_coords();

    let mut out = Array2::<f64>::zeros((n, n));
    out.axis_iter_mut(ndarray::Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(i, mut row)| {
            for j in 0..n {
                let l = scene.intensity[(i, j)];
                if l == 0.0 {
                    row[j] = 0.0;
                    continue;
                }
                let alpha = scene.inv_depth[(i, j)];
                let pu = psi_1d(profile, geom, grid.tan_theta[i], alpha);
                let pv = psi_1d(profile, geom, grid.tan_theta[j], alpha);
                let mut gu = g_1d(profile, geom, grid.tan_theta[i], alpha);
                let mut gv = g_1d(profile, geom, grid.tan_theta[j], alpha);
                for k in 0..pu.len() {
                    gu[k] *= coords[k];
                    gv[k] *= coords[k];
                }
                row[j] = -l * (bilinear(r, &gu, &pv) + bilinear(r, &pu, &gv));
            }
        });
    out
}

/// Simulate a sensor measurement, optionally with additive white
/// Gaussian noise at the requested SNR (in dB, relative to the rms of
/// the clean measurement). Deterministic for a fixed seed.
pub fn simulate(
    profile: &MaskProfile,
    geom: &CameraGeometry,
    scene: &Scene,
    snr_db: Option<f64>,
    seed: u64,
    mask_sha256: String,
) -> Measurement {
    let mut y = forward(profile, geom, scene);
    if let Some(snr) = snr_db {
        let rms = (y.iter().map(|&v| v * v).sum::<f64>() / y.len() as f64).sqrt();
        let sigma = rms / 10f64.powf(snr / 20.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, sigma).unwrap();
        Zip::from(&mut y).for_each(|v| *v += normal.sample(&mut rng));
    }
    Measurement {
        y,
        meta: MeasurementMeta {
            geometry: geom.clone(),
            mask_sha256,
            snr_db,
            seed,
        },
    }
}

/// Separable operator for one constant-depth plane.
///
/// With every scene pixel at the same alpha, the forward model collapses
/// to `Y = P L P_t` where the columns of the M x N matrices are the 1-D
/// basis vectors per angle. Used by the sweep, greedy, and 3D-grid
/// routines; far cheaper than the general per-pixel-depth operator.
#[derive(Debug, Clone)]
pub struct PlaneOperator {
    /// M x N; column i is psi_1d at angle i.
    pub p: Array2<f64>,
    pub alpha: f64,
}

impl PlaneOperator {
    pub fn new(profile: &MaskProfile, geom: &CameraGeometry, alpha: f64) -> Self {
        let grid = geom.angle_grid();
        let m = geom.sensor_pixels;
        let n = grid.len();
        let mut p = Array2::<f64>::zeros((m, n));
        for i in 0..n {
            let col = psi_1d(profile, geom, grid.tan_theta[i], alpha);
            for (u, &v) in col.iter().enumerate() {
                p[(u, i)] = v;
            }
        }
        Self { p, alpha }
    }

    /// `P L P^T`, the sensor image of intensity map `l` at this plane.
    pub fn apply(&self, l: &Array2<f64>) -> Array2<f64> {
        self.p.dot(l).dot(&self.p.t())
    }

    /// `P^T R P`, the adjoint applied to a sensor image.
    pub fn apply_adjoint(&self, r: &Array2<f64>) -> Array2<f64> {
        self.p.t().dot(r).dot(&self.p)
    }
}
