//! Conjugate-gradient least squares on the normal equations (CGLS).

use crate::{Error, Result};

use super::{dot, norm2};

#[derive(Debug, Clone)]
pub struct CglsOptions {
    pub max_iter: usize,
    /// Terminate when `||A^T r|| / ||A^T y||` drops below this.
    pub rel_tol: f64,
    /// Verify the adjoint identity on a deterministic probe pair before
    /// iterating; errors out on inconsistency.
    pub check_adjoint: bool,
}

impl Default for CglsOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            rel_tol: 1e-8,
            check_adjoint: false,
        }
    }
}

/// Solve `min ||y - A x||_2` for a linear operator given by matching
/// forward/adjoint closures.
pub fn cg_normal_least_squares<F, G>(
    mut apply_op: F,
    mut apply_adjoint: G,
    y: &[f64],
    x0: &[f64],
    opts: &CglsOptions,
) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Vec<f64>,
    G: FnMut(&[f64]) -> Vec<f64>,
{
    if opts.check_adjoint {
        // deterministic pseudo-random probe
        let u: Vec<f64> = (0..x0.len())
            .map(|i| ((i as f64 * 12.9898).sin() * 43758.5453).fract() - 0.5)
            .collect();
        let v: Vec<f64> = (0..y.len())
            .map(|i| ((i as f64 * 78.233).sin() * 24634.6345).fract() - 0.5)
            .collect();
        let au = apply_op(&u);
        let atv = apply_adjoint(&v);
        let lhs = dot(&au, &v);
        let rhs = dot(&u, &atv);
        let scale = norm2(&u) * norm2(&v);
        if scale > 0.0 && (lhs - rhs).abs() / scale > 1e-8 {
            return Err(Error::Diverged(format!(
                "adjoint inconsistency: <Au,v> = {lhs}, <u,Atv> = {rhs}"
            )));
        }
    }

    let mut x = x0.to_vec();
    let ax = apply_op(&x);
    let mut r: Vec<f64> = y.iter().zip(&ax).map(|(a, b)| a - b).collect();
    let mut s = apply_adjoint(&r);
    let mut p = s.clone();
    let mut gamma = dot(&s, &s);
    let aty_norm = norm2(&apply_adjoint(y));
    if aty_norm == 0.0 {
        return Ok(x);
    }

    for _ in 0..opts.max_iter {
        if gamma.sqrt() <= opts.rel_tol * aty_norm {
            break;
        }
        let q = apply_op(&p);
        let delta = dot(&q, &q);
        if delta <= 0.0 || !delta.is_finite() {
            break;
        }
        let a = gamma / delta;
        for (xv, pv) in x.iter_mut().zip(&p) {
            *xv += a * pv;
        }
        for (rv, qv) in r.iter_mut().zip(&q) {
            *rv -= a * qv;
        }
        s = apply_adjoint(&r);
        let gamma_new = dot(&s, &s);
        let beta = gamma_new / gamma;
        for (pv, sv) in p.iter_mut().zip(&s) {
            *pv = sv + beta * *pv;
        }
        gamma = gamma_new;
    }
    Ok(x)
}
