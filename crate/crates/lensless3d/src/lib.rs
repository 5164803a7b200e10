//! Simulation and reconstruction toolkit for mask-based lensless cameras.
//!
//! A coded binary mask sits a few millimeters above a bare sensor. Every
//! point source in the scene casts a shadow of the mask on the sensor;
//! the shadow shifts with the source's angular position and scales with
//! its depth. From a single coded measurement this crate jointly
//! estimates an intensity map and a continuous-valued depth map by
//! alternating gradient descent, with greedy or plane-sweep
//! initialization and edge-aware regularization on the inverse depth
//! map.
//!
//! Module overview:
//!
//! - [`geometry`] — camera/scene coordinate system, inverse-depth
//!   parameterization, angular sampling grid.
//! - [`mask`] — maximum-length-sequence mask patterns, smoothed 1-D
//!   transmittance profiles and their spatial derivatives.
//! - [`imaging`] — separable forward operator, adjoint, data loss,
//!   analytic depth gradient, noisy measurement simulation.
//! - [`regularizers`] — TV-l2, weighted TV-l2, TV-l1 penalties and
//!   split-Bregman primitives.
//! - [`solvers`] — L-BFGS with strong-Wolfe line search and CGLS.
//! - [`recon`] — sweep / greedy initialization, alternating refinement,
//!   3D-grid l1 baseline, evaluation metrics.
//! - [`io`] — PFM images, mask files, measurement/scene bundles,
//!   results CSV.
//! - [`cli`] — batch command implementations behind the `lensless3d`
//!   binary.
//!
//! See the crate `examples/` directory for one runnable program per
//! major capability.

pub mod cli;
pub mod geometry;
pub mod imaging;
pub mod io;
pub mod mask;
pub mod recon;
pub mod regularizers;
pub mod solvers;

pub use geometry::{AngleGrid, CameraGeometry};
pub use imaging::{Measurement, Scene};
pub use mask::{BinaryPattern, MaskProfile};
pub use recon::{ReconConfig, ReconResult};

/// Errors shared across the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("parse error in {path} at byte {offset}: {msg}")]
    Parse {
        path: String,
        offset: u64,
        msg: String,
    },
    #[error("solver diverged: {0}")]
    Diverged(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
