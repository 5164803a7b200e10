//! Separable MLS mask patterns and smoothed 1-D transmittance profiles.
//!
//! The mask is a binary pattern derived from a maximum length sequence,
//! upsampled to a fine spatial grid and convolved with a small Gaussian
//! kernel so the transmittance is smooth and differentiable. Both the
//! profile and its spatial derivative are tabulated on the fine grid and
//! evaluated at continuous coordinates by linear interpolation.

use crate::geometry::CameraGeometry;
use crate::{Error, Result};

/// Known-primitive LFSR feedback taps for orders 3 through 12.
///
/// Bit `e - 1` of the mask corresponds to the `x^e` term of the feedback
/// polynomial (the constant term is implicit). Every entry is checked by
/// the full-period test in `generate_mls`.
pub fn default_taps(order: u32) -> Option<u64> {
    let taps: u64 = match order {
        3 => (1 << 2) | 1,                               // x^3 + x + 1
        4 => (1 << 3) | 1,                               // x^4 + x + 1
        5 => (1 << 4) | (1 << 1),                        // x^5 + x^2 + 1
        6 => (1 << 5) | 1,                               // x^6 + x + 1
        7 => (1 << 6) | 1,                               // x^7 + x + 1
        8 => (1 << 7) | (1 << 3) | (1 << 2) | (1 << 1),  // x^8 + x^4 + x^3 + x^2 + 1
        9 => (1 << 8) | (1 << 3),                        // x^9 + x^4 + 1
        10 => (1 << 9) | (1 << 2),                       // x^10 + x^3 + 1
        11 => (1 << 10) | (1 << 1),                      // x^11 + x^2 + 1
        12 => (1 << 11) | (1 << 5) | (1 << 3) | 1,       // x^12 + x^6 + x^4 + x + 1
        _ => return None,
    };
    Some(taps)
}

/// Binary mask code with its physical feature pitch.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryPattern {
    /// 0/1 code, length `2^order - 1` for an MLS (plus optional padding).
    pub bits: Vec<u8>,
    /// Physical width of one mask feature in meters.
    pub feature_width_m: f64,
}

impl BinaryPattern {
    pub fn new(bits: Vec<u8>, feature_width_m: f64) -> Result<Self> {
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::Domain("pattern bits must be 0 or 1".into()));
        }
        if !(feature_width_m > 0.0) {
            return Err(Error::Domain("feature width must be positive".into()));
        }
        Ok(Self { bits, feature_width_m })
    }

    /// Append `n` zero (opaque) features at the end of the code.
    pub fn zero_padded(mut self, n: usize) -> Self {
        self.bits.extend(std::iter::repeat(0).take(n));
        self
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }
}

/// Maximum length sequence from a Fibonacci LFSR, with the -1 entries of
/// the +-1 code mapped to 0.
///
/// `taps` is a feedback bitmask (see [`default_taps`]); pass `None` to
/// use the built-in table. The full period `2^order - 1` is verified:
/// non-primitive taps are rejected rather than silently producing a
/// short cycle.
pub fn generate_mls(
    order: u32,
    taps: Option<u64>,
    seed_state: u64,
    feature_width_m: f64,
) -> Result<BinaryPattern> {
    if !(3..=20).contains(&order) {
        return Err(Error::Domain(format!("unsupported LFSR order {order}")));
    }
    let taps = match taps {
        Some(t) => t,
        None => default_taps(order).ok_or_else(|| {
            Error::Domain(format!("no built-in taps for order {order}; provide them explicitly"))
        })?,
    };
    let state_mask: u64 = (1u64 << order) - 1;
    if seed_state & state_mask == 0 {
        return Err(Error::Domain("LFSR seed state must be nonzero".into()));
    }
    if taps & state_mask == 0 || taps & !state_mask != 0 {
        return Err(Error::Domain("taps out of range for this order".into()));
    }

    let period = (1usize << order) - 1;
    let mut state = seed_state & state_mask;
    let mut visited = vec![false; 1 << order];
    let mut bits = Vec::with_capacity(period);
    for _ in 0..period {
        if visited[state as usize] {
            return Err(Error::Domain(
                "taps are not primitive: LFSR cycle shorter than 2^order - 1".into(),
            ));
        }
        visited[state as usize] = true;
        let fb = ((state & taps).count_ones() & 1) as u64;
        bits.push(fb as u8);
        state = ((state << 1) | fb) & state_mask;
    }
    BinaryPattern::new(bits, feature_width_m)
}

/// Smoothed transmittance profile tabulated on a fine spatial grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskProfile {
    /// Transmittance samples in [0, 1].
    pub samples: Vec<f64>,
    /// Spatial derivative (per meter): the slope of each interpolation
    /// segment, so it is the exact a.e. derivative of [`eval_mask`].
    pub deriv_samples: Vec<f64>,
    /// Fine-grid step in meters.
    pub grid_step_m: f64,
    /// Coordinate of sample 0; the mask is centered at 0.
    pub origin_m: f64,
    /// Transmittance is defined as 0 outside `[-w, +w]`.
    pub support_halfwidth_m: f64,
}

impl MaskProfile {
    /// Rebuild from raw samples (e.g. after reading a mask file); the
    /// derivative table is recomputed.
    pub fn from_samples(samples: Vec<f64>, grid_step_m: f64, origin_m: f64) -> Result<Self> {
        if samples.len() < 3 {
            return Err(Error::Domain("mask profile needs at least 3 samples".into()));
        }
        if !(grid_step_m > 0.0) {
            return Err(Error::Domain("grid step must be positive".into()));
        }
        let end = origin_m + (samples.len() - 1) as f64 * grid_step_m;
        let support_halfwidth_m = origin_m.abs().max(end.abs());
        let deriv_samples = segment_slopes(&samples, grid_step_m);
        Ok(Self {
            samples,
            deriv_samples,
            grid_step_m,
            origin_m,
            support_halfwidth_m,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Per-cell slopes of the linear interpolant: `d[i]` is the exact
/// derivative on the segment `[u_i, u_{i+1})`, so evaluation and
/// differentiation stay mutually consistent (the last entry repeats its
/// neighbour to keep the table square with the samples).
fn segment_slopes(samples: &[f64], step: f64) -> Vec<f64> {
    let n = samples.len();
    let mut d = vec![0.0; n];
    for i in 0..n - 1 {
        d[i] = (samples[i + 1] - samples[i]) / step;
    }
    d[n - 1] = d[n - 2];
    d
}

/// Upsample the binary code to the fine grid and blur it with a
/// truncated, unit-sum Gaussian kernel.
///
/// `blur_len_m` is the physical kernel length; `blur_sigma_samples` is
/// the standard deviation measured in fine-grid samples.
pub fn build_mask_profile(
    pattern: &BinaryPattern,
    blur_len_m: f64,
    blur_sigma_samples: f64,
    grid_step_m: f64,
) -> Result<MaskProfile> {
    if pattern.is_empty() {
        return Err(Error::Domain("empty mask pattern".into()));
    }
    if !(grid_step_m > 0.0) || grid_step_m > pattern.feature_width_m / 10.0 {
        return Err(Error::Domain(format!(
            "grid step {grid_step_m} must be positive and at most feature_width/10 = {}",
            pattern.feature_width_m / 10.0
        )));
    }
    if !(blur_len_m > 0.0) || !(blur_sigma_samples > 0.0) {
        return Err(Error::Domain("blur length and sigma must be positive".into()));
    }

    let per_feature = (pattern.feature_width_m / grid_step_m).round() as usize;
    let n = per_feature * pattern.len();
    let mut fine = vec![0.0f64; n];
    for (f, &b) in pattern.bits.iter().enumerate() {
        if b == 1 {
            fine[f * per_feature..(f + 1) * per_feature].fill(1.0);
        }
    }

    let mut klen = (blur_len_m / grid_step_m).round() as usize;
    if klen % 2 == 0 {
        klen += 1;
    }
    klen = klen.max(1);
    if klen > n {
        return Err(Error::Domain("blur kernel longer than the mask profile".into()));
    }
    let half = (klen / 2) as isize;
    let mut kernel = Vec::with_capacity(klen);
    for i in -half..=half {
        let x = i as f64 / blur_sigma_samples;
        kernel.push((-0.5 * x * x).exp());
    }
    let ksum: f64 = kernel.iter().sum();
    for k in &mut kernel {
        *k /= ksum;
    }

    // same-size convolution, zero beyond the printed pattern
    let mut samples = vec![0.0f64; n];
    for i in 0..n {
        let mut acc = 0.0;
        for (ki, &kv) in kernel.iter().enumerate() {
            let j = i as isize + ki as isize - half;
            if j >= 0 && (j as usize) < n {
                acc += kv * fine[j as usize];
            }
        }
        samples[i] = acc.clamp(0.0, 1.0);
    }

    let width = n as f64 * grid_step_m;
    // sample i sits at the center of fine cell i, mask centered at 0
    let origin_m = -width / 2.0 + grid_step_m / 2.0;
    let deriv_samples = segment_slopes(&samples, grid_step_m);
    Ok(MaskProfile {
        samples,
        deriv_samples,
        grid_step_m,
        origin_m,
        support_halfwidth_m: width / 2.0,
    })
}

#[inline]
fn interp(samples: &[f64], profile: &MaskProfile, u: f64) -> f64 {
    if !u.is_finite() || u.abs() > profile.support_halfwidth_m {
        return 0.0;
    }
    let t = (u - profile.origin_m) / profile.grid_step_m;
    let n = samples.len();
    if t <= 0.0 {
        return samples[0];
    }
    let i = t.floor() as usize;
    if i >= n - 1 {
        return samples[n - 1];
    }
    let f = t - i as f64;
    samples[i] * (1.0 - f) + samples[i + 1] * f
}

/// Transmittance at continuous coordinate `u` (meters), by linear
/// interpolation; exactly 0 beyond the mask support.
#[inline]
pub fn eval_mask(profile: &MaskProfile, u: f64) -> f64 {
    interp(&profile.samples, profile, u)
}

/// Spatial derivative of the transmittance at `u` (per meter): the
/// slope of the interpolation segment containing `u`, i.e. the exact
/// derivative of [`eval_mask`] away from the grid nodes.
#[inline]
pub fn eval_mask_derivative(profile: &MaskProfile, u: f64) -> f64 {
    if !u.is_finite() || u.abs() > profile.support_halfwidth_m {
        return 0.0;
    }
    let t = (u - profile.origin_m) / profile.grid_step_m;
    if t < 0.0 {
        return 0.0;
    }
    let i = t.floor() as usize;
    if i >= profile.deriv_samples.len() - 1 {
        return 0.0;
    }
    profile.deriv_samples[i]
}

/// 1-D basis vector: mask transmittance sampled at
/// `alpha * s_u(k) + d * tan_theta` for every sensor pixel `k`.
pub fn psi_1d(
    profile: &MaskProfile,
    geom: &CameraGeometry,
    tan_theta: f64,
    alpha: f64,
) -> Vec<f64> {
    let shift = geom.mask_sensor_distance_m * tan_theta;
    (0..geom.sensor_pixels)
        .map(|k| eval_mask(profile, alpha * geom.sensor_coord(k) + shift))
        .collect()
}

/// 1-D sub-gradient vector: the mask's spatial derivative sampled at the
/// same argument as [`psi_1d`].
pub fn g_1d(
    profile: &MaskProfile,
    geom: &CameraGeometry,
    tan_theta: f64,
    alpha: f64,
) -> Vec<f64> {
    let shift = geom.mask_sensor_distance_m * tan_theta;
    (0..geom.sensor_pixels)
        .map(|k| eval_mask_derivative(profile, alpha * geom.sensor_coord(k) + shift))
        .collect()
}

/// Convenience: the default simulation mask family (order-10 MLS padded
/// to 1024 features of 30 um, 15 um Gaussian blur of sigma 5 samples,
/// fine grid at feature/20).
pub fn default_simulation_profile() -> Result<MaskProfile> {
    let feature = 30e-6;
    let pattern = generate_mls(10, None, 1, feature)?.zero_padded(1);
    build_mask_profile(&pattern, 15e-6, 5.0, feature / 20.0)
}
