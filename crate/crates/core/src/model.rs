//! Semicircle law, characteristic flow, variance profile, and derived scales.
//!
//! The Stieltjes transform of the semicircle density `ρ(x) = √(4-x²)/(2π)`
//! is the root of `m² + z·m + 1 = 0` with `Im m > 0` when `Im z > 0`;
//! equivalently the root inside the unit disk (the two roots multiply to 1).
//! On the real bulk `|E| < 2` its boundary value is
//! `m(E) = (-E + i·√(4-E²))/2`, which has modulus exactly 1.
//!
//! The characteristic flow keeps an energy `E` fixed and moves the spectral
//! parameter along `z_t = E + (1-t)·m(E)`, so the imaginary part
//! `η_t = (1-t)·Im m(E)` shrinks linearly to 0 as `t -> 1`. The flow is
//! matched to the matrix scaling `H_t = √t·H`: per sample,
//! `(√t·H - z_t)^{-1} = t^{-1/2}·(H - z_t/√t)^{-1}`, so resolvent statistics
//! of the flowed ensemble at `z_t` are exactly rescaled statistics of the
//! fixed ensemble at `z = z_t/√t`. [`inverse_flow`] inverts that
//! correspondence: given `z` in the upper half plane it finds `(E, t)` with
//! `√t·z = z_t(E, t)`.
//!
//! Two families of length scales control error envelopes. At a bare spectral
//! parameter `z = E + iη`: `ℓ(z) = min(η^{-1/2}, L) + 1` and
//! `M_η = W²·ℓ(z)²·η`. Along the flow: `ℓ_t = min((1-t)^{-1/2}, L)` and
//! `M_t = W²·ℓ_t²·η_t`; more generally `ℓ̂(ξ) = min(|1-ξ|^{-1/2}, L)` for a
//! complex coupling `ξ`.

use crate::lattice::{BlockGeometry, BlockIndex};
use num_complex::Complex64;
use thiserror::Error;

/// Errors from spectral-parameter and flow computations.
#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    /// The spectral parameter sits on the spectrum (real axis inside
    /// `[-2, 2]`), where the two branch roots are indistinguishable.
    #[error("spectral parameter {0} lies on the branch cut [-2, 2]")]
    OnSpectrum(Complex64),
    /// Energy outside the open bulk `(-2, 2)`.
    #[error("energy {0} outside the open bulk (-2, 2)")]
    OutOfBulk(f64),
    /// Flow time outside `[0, 1)`.
    #[error("flow time {0} outside [0, 1)")]
    BadFlowTime(f64),
    /// The spectral parameter has no bulk pre-image under the flow.
    #[error("spectral parameter {0} has no bulk flow pre-image")]
    NoPreimage(Complex64),
}

/// Stieltjes transform of the semicircle law: the root of `m² + z·m + 1 = 0`
/// with modulus < 1 (equivalently `Im m·Im z > 0` off the real axis).
///
/// Known values: `m(2i) = i·(√2 - 1)`, `m(i) = i·(√5 - 1)/2`.
pub fn semicircle_m(z: Complex64) -> Result<Complex64, ModelError> {
    let w = (z * z - 4.0).sqrt();
    let m1 = (-z + w) / 2.0;
    let m2 = (-z - w) / 2.0;
    let (inner, outer) = if m1.norm_sqr() <= m2.norm_sqr() {
        (m1, m2)
    } else {
        (m2, m1)
    };
    // The roots multiply to 1; on the cut both sit on the unit circle.
    if (inner.norm_sqr() - outer.norm_sqr()).abs() < 1e-12 {
        return Err(ModelError::OnSpectrum(z));
    }
    Ok(inner)
}

/// Boundary value of the semicircle transform on the bulk:
/// `m(E) = (-E + i·√(4 - E²))/2`, of modulus exactly 1.
pub fn boundary_m(e: f64) -> Result<Complex64, ModelError> {
    if e.is_nan() || e.abs() >= 2.0 {
        return Err(ModelError::OutOfBulk(e));
    }
    Ok(Complex64::new(-e / 2.0, (4.0 - e * e).sqrt() / 2.0))
}

/// A point on the characteristic flow at fixed bulk energy `E`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralParams {
    /// Bulk energy, `|E| < 2`.
    pub e: f64,
    /// Flow time in `[0, 1)`.
    pub t: f64,
    /// Flowed spectral parameter `z_t = E + (1 - t)·m(E)`.
    pub z_t: Complex64,
    /// Its height `η_t = (1 - t)·Im m(E) = Im z_t`.
    pub eta_t: f64,
    /// Boundary transform `m(E)` at the base energy.
    pub m_e: Complex64,
}

/// Builds the flow point `z_t = E + (1 - t)·m(E)` for `|E| < 2`, `t ∈ [0, 1)`.
pub fn flow_point(e: f64, t: f64) -> Result<SpectralParams, ModelError> {
    if !(0.0..1.0).contains(&t) {
        return Err(ModelError::BadFlowTime(t));
    }
    let m_e = boundary_m(e)?;
    let z_t = Complex64::new(e, 0.0) + (1.0 - t) * m_e;
    Ok(SpectralParams {
        e,
        t,
        z_t,
        eta_t: (1.0 - t) * m_e.im,
        m_e,
    })
}

/// Inverts the flow/scaling correspondence: finds `(E, t)` with
/// `√t·z = E + (1 - t)·m(E)`, i.e. the flow point whose rescaled resolvent
/// matches the bare resolvent at `z`.
///
/// Requires `Im z > 0`. Solved by bisection on
/// `f(t) = (1 - t)·√(4 - E(t)²)/2 - √t·Im z` with `E(t) = 2√t·Re z/(1 + t)`
/// (monotone sign change from `f(0) = 1 > 0` to `f(1) = -Im z < 0`), then
/// polished by Newton; the returned pair reproduces `√t·z` to within
/// `1e-12·(1 + |z|)`.
///
/// Example: `z = i` maps to `E = 0`, `t = (3 - √5)/2`.
pub fn inverse_flow(z: Complex64) -> Result<SpectralParams, ModelError> {
    if z.im.is_nan() || z.im <= 0.0 {
        return Err(ModelError::NoPreimage(z));
    }
    let energy = |t: f64| 2.0 * t.sqrt() * z.re / (1.0 + t);
    let f = |t: f64| -> f64 {
        let e = energy(t);
        if e.abs() >= 2.0 {
            // Outside the bulk the flow image does not exist; steer the
            // bracket back toward smaller t.
            return -1.0 - t.sqrt() * z.im;
        }
        (1.0 - t) * (4.0 - e * e).sqrt() / 2.0 - t.sqrt() * z.im
    };
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    // f(lo) = 1 > 0, f(hi) = -Im z < 0.
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut t = 0.5 * (lo + hi);
    // Newton polish with a numerical derivative.
    for _ in 0..4 {
        let h = 1e-9;
        let df = (f((t + h).min(1.0 - 1e-15)) - f((t - h).max(1e-15))) / (2.0 * h);
        if df.abs() > 1e-14 {
            let step = f(t) / df;
            let t_new = t - step;
            if t_new > 0.0 && t_new < 1.0 {
                t = t_new;
            }
        }
    }
    let e = energy(t);
    if e.is_nan() || e.abs() >= 2.0 || t <= 0.0 || t >= 1.0 {
        return Err(ModelError::NoPreimage(z));
    }
    let params = flow_point(e, t)?;
    let defect = (t.sqrt() * z - params.z_t).norm();
    if defect > 1e-12 * (1.0 + z.norm()) {
        return Err(ModelError::NoPreimage(z));
    }
    Ok(params)
}

/// Length scale at a bare spectral parameter: `ℓ(z) = min(η^{-1/2}, L) + 1`.
pub fn ell_z(z: Complex64, l: usize) -> f64 {
    let eta = z.im.abs();
    (eta.powf(-0.5)).min(l as f64) + 1.0
}

/// Effective size at a bare spectral parameter: `M_η = W²·ℓ(z)²·η`.
pub fn cap_m_eta(geom: &BlockGeometry, z: Complex64) -> f64 {
    let ell = ell_z(z, geom.l());
    (geom.w() * geom.w()) as f64 * ell * ell * z.im.abs()
}

/// Decay length of the block propagator at coupling `ξ`:
/// `ℓ̂(ξ) = min(|1 - ξ|^{-1/2}, L)`.
pub fn ell_hat(xi: Complex64, l: usize) -> f64 {
    let gap = (Complex64::new(1.0, 0.0) - xi).norm();
    gap.powf(-0.5).min(l as f64)
}

/// Scales attached to a flow point on a given geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleParams {
    /// Flow length scale `ℓ_t = ℓ̂(t) = min((1-t)^{-1/2}, L)`.
    pub ell_t: f64,
    /// Spectral length scale `ℓ(z_t) = min(η_t^{-1/2}, L) + 1`.
    pub ell_z: f64,
    /// Flow effective size `M_t = W²·ℓ_t²·η_t`.
    pub cap_m_t: f64,
    /// Spectral effective size `M_η = W²·ℓ(z_t)²·η_t`.
    pub cap_m_eta: f64,
}

impl ScaleParams {
    /// Computes all scales at a flow point.
    pub fn at_flow(geom: &BlockGeometry, params: &SpectralParams) -> Self {
        let w2 = (geom.w() * geom.w()) as f64;
        let ell_t = ell_hat(Complex64::new(params.t, 0.0), geom.l());
        let ell_zv = ell_z(params.z_t, geom.l());
        ScaleParams {
            ell_t,
            ell_z: ell_zv,
            cap_m_t: w2 * ell_t * ell_t * params.eta_t,
            cap_m_eta: w2 * ell_zv * ell_zv * params.eta_t,
        }
    }
}

/// Entry variances of the ensemble: `S_{xy} = W^{-2}·s_B([x], [y])` where
/// `s_B(a, b) = 1/5` when the blocks are within periodic L¹ distance 1 and 0
/// otherwise. Every row sums to exactly 1 (five blocks of `W²` sites each).
#[derive(Debug, Clone, Copy)]
pub struct VarianceProfile {
    geom: BlockGeometry,
}

impl VarianceProfile {
    /// The 5-point stencil offsets carrying weight `1/5` at block level.
    pub const STENCIL: [(i64, i64); 5] = [(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)];

    pub fn new(geom: BlockGeometry) -> Self {
        Self { geom }
    }

    pub fn geom(&self) -> &BlockGeometry {
        &self.geom
    }

    /// Block-level weight `s_B(a, b) = (1/5)·1(dist(a, b) <= 1)`.
    pub fn block_weight(&self, a: BlockIndex, b: BlockIndex) -> f64 {
        if self.geom.block_distance(a, b) <= 1 {
            0.2
        } else {
            0.0
        }
    }

    /// Site-level variance `S_{xy}` for flattened site indices.
    pub fn entry_flat(&self, x: usize, y: usize) -> f64 {
        let a = self.geom.block_of_flat(x);
        let b = self.geom.block_of_flat(y);
        self.block_weight(a, b) / (self.geom.w() * self.geom.w()) as f64
    }

    /// Row sum `Σ_y S_{xy}`, by direct enumeration of the five neighbouring
    /// blocks: each contributes `W²` sites of weight `(1/5)·W^{-2}`, so the
    /// sum is 1 up to rounding.
    pub fn row_sum_flat(&self, x: usize) -> f64 {
        let a = self.geom.block_of_flat(x);
        let mut sum = 0.0;
        for &(d1, d2) in Self::STENCIL.iter() {
            let b = BlockIndex::wrap(a.0 as i64 + d1, a.1 as i64 + d2, self.geom.l());
            sum += self.block_weight(a, b);
        }
        sum
    }
}
