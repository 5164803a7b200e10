//! Camera/scene coordinate system and the inverse-depth parameterization.
//!
//! The scene is sampled on an `N x N` grid of uniformly spaced angular
//! directions. Depth enters through the dimensionless inverse-depth
//! variable `alpha = 1 - d/z`, where `d` is the mask-to-sensor distance:
//! `alpha -> 1` as the source recedes to infinity and `alpha -> 0` as it
//! approaches the mask plane.

use ndarray::Array2;

use crate::{Error, Result};

/// Physical and sampling parameters of the camera.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CameraGeometry {
    /// Mask-to-sensor distance `d` in meters.
    pub mask_sensor_distance_m: f64,
    /// Sensor pixels per side (`M`).
    pub sensor_pixels: usize,
    /// Sensor pixel width in meters.
    pub pixel_pitch_m: f64,
    /// Chief-ray half-angle in degrees.
    pub half_fov_deg: f64,
    /// Scene pixels per side (`N`).
    pub scene_pixels: usize,
}

impl CameraGeometry {
    pub fn new(
        mask_sensor_distance_m: f64,
        sensor_pixels: usize,
        pixel_pitch_m: f64,
        half_fov_deg: f64,
        scene_pixels: usize,
    ) -> Result<Self> {
        if !(mask_sensor_distance_m > 0.0) || !mask_sensor_distance_m.is_finite() {
            return Err(Error::Domain("mask-sensor distance must be positive".into()));
        }
        if !(pixel_pitch_m > 0.0) || !pixel_pitch_m.is_finite() {
            return Err(Error::Domain("pixel pitch must be positive".into()));
        }
        if sensor_pixels < 2 || scene_pixels < 2 {
            return Err(Error::Domain("sensor and scene must be at least 2x2".into()));
        }
        if !(half_fov_deg > 0.0 && half_fov_deg < 90.0) {
            return Err(Error::Domain("half FOV must be in (0, 90) degrees".into()));
        }
        Ok(Self {
            mask_sensor_distance_m,
            sensor_pixels,
            pixel_pitch_m,
            half_fov_deg,
            scene_pixels,
        })
    }

    /// Paper-style simulation defaults: d = 4 mm, 512 x 512 sensor at
    /// 50 um pitch, +-18 degree field, 128 x 128 scene grid.
    pub fn simulation_default() -> Self {
        Self {
            mask_sensor_distance_m: 4e-3,
            sensor_pixels: 512,
            pixel_pitch_m: 50e-6,
            half_fov_deg: 18.0,
            scene_pixels: 128,
        }
    }

    /// Centered coordinate of sensor pixel `k` (0-indexed) in meters.
    #[inline]
    pub fn sensor_coord(&self, k: usize) -> f64 {
        (k as f64 - (self.sensor_pixels as f64 - 1.0) / 2.0) * self.pixel_pitch_m
    }

    /// All sensor pixel coordinates, in pixel order.
    pub fn sensor_coords(&self) -> Vec<f64> {
        (0..self.sensor_pixels).map(|k| self.sensor_coord(k)).collect()
    }

    /// Angle grid over the scene directions.
    pub fn angle_grid(&self) -> AngleGrid {
        AngleGrid::new(self.scene_pixels, self.half_fov_deg)
    }
}

/// Precomputed `tan(theta_i)` for the uniformly spaced scene directions.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleGrid {
    pub tan_theta: Vec<f64>,
}

impl AngleGrid {
    /// `n` angles uniformly spaced over `[-half_fov, +half_fov]`,
    /// endpoints included.
    pub fn new(n: usize, half_fov_deg: f64) -> Self {
        assert!(n >= 2, "angle grid needs at least two directions");
        let half = half_fov_deg.to_radians();
        let tan_theta = (0..n)
            .map(|i| {
                let theta = -half + i as f64 * (2.0 * half) / (n as f64 - 1.0);
                theta.tan()
            })
            .collect();
        Self { tan_theta }
    }

    pub fn len(&self) -> usize {
        self.tan_theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tan_theta.is_empty()
    }
}

/// N x N inverse depth map; every entry lies in (0, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct InverseDepthMap {
    pub alpha: Array2<f64>,
}

/// N x N non-negative light intensity map, working range [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityMap {
    pub l: Array2<f64>,
}

/// `alpha = 1 - d/z` for a source at physical depth `z` behind a mask at
/// distance `d` from the sensor.
pub fn alpha_from_depth(z_m: f64, d_m: f64) -> Result<f64> {
    if !z_m.is_finite() || !d_m.is_finite() || d_m <= 0.0 || z_m <= d_m {
        return Err(Error::Domain(format!(
            "alpha_from_depth requires z > d > 0, got z = {z_m}, d = {d_m}"
        )));
    }
    Ok(1.0 - d_m / z_m)
}

/// Inverse map `z = d / (1 - alpha)`.
pub fn depth_from_alpha(alpha: f64, d_m: f64) -> Result<f64> {
    if !alpha.is_finite() || alpha <= 0.0 || alpha >= 1.0 {
        return Err(Error::Domain(format!(
            "depth_from_alpha requires alpha in (0, 1), got {alpha}"
        )));
    }
    if d_m <= 0.0 || !d_m.is_finite() {
        return Err(Error::Domain("mask-sensor distance must be positive".into()));
    }
    Ok(d_m / (1.0 - alpha))
}

/// Uniformly spaced angles over `[-half_fov, +half_fov]`, returned as
/// their tangents.
pub fn make_angle_grid(n: usize, half_fov_deg: f64) -> AngleGrid {
    AngleGrid::new(n, half_fov_deg)
}
