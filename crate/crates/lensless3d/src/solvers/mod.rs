//! Generic numerical optimizers: limited-memory BFGS for the nonlinear
//! depth subproblem and conjugate-gradient least squares for the linear
//! intensity subproblem.

mod cgls;
mod lbfgs;

pub use cgls::{cg_normal_least_squares, CglsOptions};
pub use lbfgs::{lbfgs_minimize, LbfgsOptions, SolveReport, Termination};

/// Euclidean norm of a slice.
pub(crate) fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Dot product of two slices.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
