//! Edge-aware regularizers on the inverse depth map.
//!
//! Three penalties on spatial differences of alpha: quadratic (TV-l2),
//! adaptively weighted quadratic (weighted TV-l2, weights decay
//! exponentially with the squared local difference so large jumps are
//! not penalized), and anisotropic absolute-value (TV-l1, solved via
//! split-Bregman). Forward differences only where both neighbors exist;
//! boundary terms are dropped.

use ndarray::Array2;

use crate::{Error, Result};

/// Row differences: `(N-1) x N` with entry `alpha[i,j] - alpha[i+1,j]`.
pub fn grad_r(alpha: &Array2<f64>) -> Array2<f64> {
    let (n, m) = alpha.dim();
    Array2::from_shape_fn((n - 1, m), |(i, j)| alpha[(i, j)] - alpha[(i + 1, j)])
}

/// Column differences: `N x (N-1)` with entry `alpha[i,j] - alpha[i,j+1]`.
pub fn grad_c(alpha: &Array2<f64>) -> Array2<f64> {
    let (n, m) = alpha.dim();
    Array2::from_shape_fn((n, m - 1), |(i, j)| alpha[(i, j)] - alpha[(i, j + 1)])
}

/// Adjoint of [`grad_r`]: maps `(N-1) x N` back to `N x N`.
pub fn grad_r_adjoint(d: &Array2<f64>) -> Array2<f64> {
    let (nm1, m) = d.dim();
    let n = nm1 + 1;
    let mut out = Array2::<f64>::zeros((n, m));
    for i in 0..nm1 {
        for j in 0..m {
            out[(i, j)] += d[(i, j)];
            out[(i + 1, j)] -= d[(i, j)];
        }
    }
    out
}

/// Adjoint of [`grad_c`]: maps `N x (N-1)` back to `N x N`.
pub fn grad_c_adjoint(d: &Array2<f64>) -> Array2<f64> {
    let (n, mm1) = d.dim();
    let m = mm1 + 1;
    let mut out = Array2::<f64>::zeros((n, m));
    for i in 0..n {
        for j in 0..mm1 {
            out[(i, j)] += d[(i, j)];
            out[(i, j + 1)] -= d[(i, j)];
        }
    }
    out
}

/// TV-l2 value and gradient: `||grad_r||_F^2 + ||grad_c||_F^2` and its
/// graph-Laplacian gradient `2 (grad_r^T grad_r + grad_c^T grad_c) alpha`.
pub fn tv2_value_grad(alpha: &Array2<f64>) -> (f64, Array2<f64>) {
    let dr = grad_r(alpha);
    let dc = grad_c(alpha);
    let value = dr.iter().map(|v| v * v).sum::<f64>() + dc.iter().map(|v| v * v).sum::<f64>();
    let mut grad = grad_r_adjoint(&dr);
    grad += &grad_c_adjoint(&dc);
    grad *= 2.0;
    (value, grad)
}

/// Exponential-decay edge weights for the difference grids.
#[derive(Debug, Clone, PartialEq)]
pub struct TvWeights {
    /// `(N-1) x N` weights on row differences.
    pub w_r: Array2<f64>,
    /// `N x (N-1)` weights on column differences.
    pub w_c: Array2<f64>,
    pub sigma: f64,
}

/// `exp(-diff^2 / sigma)` per difference; weight 1 exactly where the
/// local difference vanishes.
pub fn compute_weights(alpha: &Array2<f64>, sigma: f64) -> Result<TvWeights> {
    if !(sigma > 0.0) {
        return Err(Error::Config(format!("weight scale sigma must be positive, got {sigma}")));
    }
    let w_r = grad_r(alpha).mapv(|d| (-d * d / sigma).exp());
    let w_c = grad_c(alpha).mapv(|d| (-d * d / sigma).exp());
    Ok(TvWeights { w_r, w_c, sigma })
}

/// Weighted TV-l2 value and gradient with the weights held constant.
pub fn wtv2_value_grad(alpha: &Array2<f64>, w: &TvWeights) -> Result<(f64, Array2<f64>)> {
    let dr = grad_r(alpha);
    let dc = grad_c(alpha);
    if w.w_r.dim() != dr.dim() || w.w_c.dim() != dc.dim() {
        return Err(Error::Shape(format!(
            "weights {:?}/{:?} do not match difference grids {:?}/{:?}",
            w.w_r.dim(),
            w.w_c.dim(),
            dr.dim(),
            dc.dim()
        )));
    }
    let value = dr
        .iter()
        .zip(w.w_r.iter())
        .map(|(d, w)| w * d * d)
        .sum::<f64>()
        + dc.iter().zip(w.w_c.iter()).map(|(d, w)| w * d * d).sum::<f64>();
    let wdr = &dr * &w.w_r;
    let wdc = &dc * &w.w_c;
    let mut grad = grad_r_adjoint(&wdr);
    grad += &grad_c_adjoint(&wdc);
    grad *= 2.0;
    Ok((value, grad))
}

/// Anisotropic TV-l1 value: sum of absolute spatial differences.
pub fn tv1_value(alpha: &Array2<f64>) -> f64 {
    grad_r(alpha).iter().map(|v| v.abs()).sum::<f64>()
        + grad_c(alpha).iter().map(|v| v.abs()).sum::<f64>()
}

/// Entrywise soft threshold `sign(x) * max(|x| - t, 0)`.
pub fn shrink(x: &Array2<f64>, t: f64) -> Result<Array2<f64>> {
    if t < 0.0 {
        return Err(Error::Domain(format!("shrink threshold must be >= 0, got {t}")));
    }
    Ok(x.mapv(|v| v.signum() * (v.abs() - t).max(0.0)))
}

/// Split variables and Bregman multipliers for the TV-l1 subproblem.
#[derive(Debug, Clone)]
pub struct SplitState {
    pub d_r: Array2<f64>,
    pub d_c: Array2<f64>,
    pub b_r: Array2<f64>,
    pub b_c: Array2<f64>,
    pub mu: f64,
}

impl SplitState {
    pub fn new(alpha: &Array2<f64>, mu: f64) -> Result<Self> {
        if !(mu > 0.0) {
            return Err(Error::Config(format!("split-Bregman mu must be positive, got {mu}")));
        }
        let (n, m) = alpha.dim();
        Ok(Self {
            d_r: Array2::zeros((n - 1, m)),
            d_c: Array2::zeros((n, m - 1)),
            b_r: Array2::zeros((n - 1, m)),
            b_c: Array2::zeros((n, m - 1)),
            mu,
        })
    }

    /// Quadratic coupling term `(mu/2) (||grad_r a - d_r + b_r||^2 +
    /// ||grad_c a - d_c + b_c||^2)` and its gradient in alpha.
    pub fn coupling_value_grad(&self, alpha: &Array2<f64>) -> (f64, Array2<f64>) {
        let er = grad_r(alpha) - &self.d_r + &self.b_r;
        let ec = grad_c(alpha) - &self.d_c + &self.b_c;
        let value = 0.5
            * self.mu
            * (er.iter().map(|v| v * v).sum::<f64>() + ec.iter().map(|v| v * v).sum::<f64>());
        let mut grad = grad_r_adjoint(&er);
        grad += &grad_c_adjoint(&ec);
        grad *= self.mu;
        (value, grad)
    }

    /// Shrinkage and multiplier updates after an alpha step.
    pub fn update(&mut self, alpha: &Array2<f64>, lambda: f64) -> Result<()> {
        let gr = grad_r(alpha);
        let gc = grad_c(alpha);
        self.d_r = shrink(&(&gr + &self.b_r), lambda / self.mu)?;
        self.d_c = shrink(&(&gc + &self.b_c), lambda / self.mu)?;
        self.b_r += &(&gr - &self.d_r);
        self.b_c += &(&gc - &self.d_c);
        Ok(())
    }

    /// Relative constraint residual `||grad a - d|| / ||grad a||`.
    pub fn constraint_residual(&self, alpha: &Array2<f64>) -> f64 {
        let gr = grad_r(alpha);
        let gc = grad_c(alpha);
        let num = (&gr - &self.d_r).iter().map(|v| v * v).sum::<f64>()
            + (&gc - &self.d_c).iter().map(|v| v * v).sum::<f64>();
        let den = gr.iter().map(|v| v * v).sum::<f64>() + gc.iter().map(|v| v * v).sum::<f64>();
        if den == 0.0 {
            return if num == 0.0 { 0.0 } else { f64::INFINITY };
        }
        (num / den).sqrt()
    }
}
