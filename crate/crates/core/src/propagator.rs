//! The block propagator `Θ_ξ = (1 - ξ·S_B)^{-1}` on the torus `(Z/L)²`.
//!
//! `S_B` is the 5-point stencil operator averaging a block with its four
//! lattice neighbours (weight 1/5 each). It is circulant, so `Θ_ξ` is a
//! translation-invariant kernel `k` with `(Θ_ξ)_{ab} = k(a - b)`, constructed
//! exactly in `O(L² log L)` from the Fourier symbol
//! `λ(p) = (1 + 2cos(2πp₁/L) + 2cos(2πp₂/L))/5 ∈ [-3/5, 1]`:
//! the kernel is the inverse transform of `1/(1 - ξ·λ(p))`.
//!
//! Companion constructions used as independent oracles:
//! - the Neumann series `Σ_j ξ^j (S_B)^j` with a certified geometric tail
//!   bound (valid when `max_p |ξ·λ(p)| < 1`),
//! - the lazy 5-point random-walk heat kernel on the free lattice `Z²`,
//!   whose wrapped partial sums reproduce the series.
//!
//! Diagnostics fit the constants in the decay and difference envelopes
//! (rates in units of the decay length `ℓ̂(ξ) = min(|1-ξ|^{-1/2}, L)`):
//!
//! - `|k(r)| <= C·exp(-c·|r|/ℓ̂) / (|1-ξ|·ℓ̂²)`,
//! - `|k(r) - k(r+s)| <= C·(|s|/(|r|+1) + |s|/(ℓ̂²·|1-ξ|^{1/2}))`,
//! - `|2k(r) - k(r+s) - k(r-s)| <= C·(|s|²/(|r|²+1) + |s|²/ℓ̂²)`,
//!
//! with `|·|` the periodic L¹ norm. Couplings with a vanishing symbol factor
//! `1 - ξ·λ(p)` are rejected outright: every coupling arising from the flow
//! (`ξ = t·m_i·m_j` with `t < 1` and `|m_i| <= 1`) stays strictly inside the
//! resolvent set.

use crate::lattice::{BlockGeometry, BlockIndex};
use crate::model::ell_hat;
use num_complex::Complex64;
use rustfft::FftPlanner;
use thiserror::Error;

/// Errors from propagator construction and application.
#[derive(Debug, Error, PartialEq)]
pub enum PropagatorError {
    /// `1 - ξ·λ(p)` vanishes at some frequency: the operator is singular.
    #[error("singular coupling: 1 - xi·lambda vanishes at frequency ({0}, {1})")]
    Singular(usize, usize),
    /// The Neumann series needs spectral radius `max_p |ξ·λ(p)| < 1`.
    #[error("series diverges: spectral radius {0} >= 1")]
    SeriesDiverges(f64),
    /// The heat-kernel window must contain the walk's support.
    #[error("window half-width {half_width} cannot hold {steps} walk steps")]
    WindowTooSmall { steps: usize, half_width: usize },
    /// Same minimum as the block lattice: five distinct stencil blocks.
    #[error("side length must be >= 3, got {0}")]
    SideTooSmall(usize),
    /// Field length must equal `L²`.
    #[error("field length {0} does not match L² = {1}")]
    FieldLength(usize, usize),
}

/// Translation-invariant complex kernel on `(Z/L)²` representing `Θ_ξ`:
/// `(Θ_ξ)_{ab} = k(a - b)`, with `k(s) = k(-s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagatorKernel {
    l: usize,
    xi: Complex64,
    values: Vec<Complex64>,
}

impl PropagatorKernel {
    /// Torus side `L`.
    pub fn l(&self) -> usize {
        self.l
    }

    /// Coupling `ξ`.
    pub fn xi(&self) -> Complex64 {
        self.xi
    }

    /// Kernel value at an offset (coordinates wrapped mod `L`).
    pub fn at_offset(&self, s1: i64, s2: i64) -> Complex64 {
        let s = BlockIndex::wrap(s1, s2, self.l);
        self.values[s.flat(self.l)]
    }

    /// Matrix entry `(Θ_ξ)_{ab} = k(a - b)`.
    pub fn entry(&self, a: BlockIndex, b: BlockIndex) -> Complex64 {
        let s = a.offset_from(b, self.l);
        self.values[s.flat(self.l)]
    }

    /// Row sum `Σ_s k(s)`; equals `1/(1 - ξ)` (the zero-frequency symbol).
    pub fn row_sum(&self) -> Complex64 {
        self.values.iter().sum()
    }

    /// Raw kernel values in row-major offset order.
    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    /// Decay length `ℓ̂(ξ) = min(|1-ξ|^{-1/2}, L)` of this kernel.
    pub fn decay_length(&self) -> f64 {
        ell_hat(self.xi, self.l)
    }

    /// Periodic L¹ norm of an offset.
    pub fn offset_norm(&self, s1: i64, s2: i64) -> usize {
        BlockIndex::wrap(s1, s2, self.l).norm(self.l)
    }
}

/// The stencil symbol `λ(p) = (1 + 2cos(2πp₁/L) + 2cos(2πp₂/L))/5`.
pub fn stencil_symbol(p1: usize, p2: usize, l: usize) -> f64 {
    let w = 2.0 * std::f64::consts::PI / l as f64;
    (1.0 + 2.0 * (w * p1 as f64).cos() + 2.0 * (w * p2 as f64).cos()) / 5.0
}

/// Builds `Θ_ξ = (1 - ξ·S_B)^{-1}` exactly via the Fourier symbol.
pub fn theta_kernel(xi: Complex64, l: usize) -> Result<PropagatorKernel, PropagatorError> {
    if l < 3 {
        return Err(PropagatorError::SideTooSmall(l));
    }
    let one = Complex64::new(1.0, 0.0);
    let mut freq = vec![Complex64::default(); l * l];
    for p1 in 0..l {
        for p2 in 0..l {
            let denom = one - xi * stencil_symbol(p1, p2, l);
            if denom.norm() <= 1e-12 * (1.0 + xi.norm()) {
                return Err(PropagatorError::Singular(p1, p2));
            }
            freq[p1 * l + p2] = one / denom;
        }
    }
    let mut values = ifft2(freq, l);
    symmetrize(&mut values, l);
    Ok(PropagatorKernel { l, xi, values })
}

/// Inverse-transforms an even momentum-space symbol table (row-major
/// `p1·L + p2`) into an offset-space kernel table, enforcing evenness.
pub(crate) fn kernel_from_even_symbol(freq: Vec<Complex64>, l: usize) -> Vec<Complex64> {
    let mut values = ifft2(freq, l);
    symmetrize(&mut values, l);
    values
}

/// Unnormalized 2D inverse DFT divided by `L²`:
/// `out(s) = L^{-2} Σ_p in(p)·exp(+2πi p·s/L)`.
fn ifft2(mut data: Vec<Complex64>, l: usize) -> Vec<Complex64> {
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_inverse(l);
    for row in data.chunks_mut(l) {
        fft.process(row);
    }
    let mut t = transpose(&data, l);
    for row in t.chunks_mut(l) {
        fft.process(row);
    }
    let mut out = transpose(&t, l);
    let scale = 1.0 / (l * l) as f64;
    for v in &mut out {
        *v *= scale;
    }
    out
}

fn transpose(data: &[Complex64], l: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::default(); l * l];
    for i in 0..l {
        for j in 0..l {
            out[j * l + i] = data[i * l + j];
        }
    }
    out
}

/// Enforces the exact evenness `k(s) = k(-s)` (true analytically because the
/// symbol is even; this removes last-bit FFT asymmetry).
fn symmetrize(values: &mut [Complex64], l: usize) {
    for s1 in 0..l {
        for s2 in 0..l {
            let m1 = (l - s1) % l;
            let m2 = (l - s2) % l;
            if (s1, s2) < (m1, m2) {
                let avg = (values[s1 * l + s2] + values[m1 * l + m2]) / 2.0;
                values[s1 * l + s2] = avg;
                values[m1 * l + m2] = avg;
            }
        }
    }
}

/// A truncated Neumann series for `Θ_ξ` together with a certified bound on
/// the entrywise truncation error.
#[derive(Debug, Clone)]
pub struct SeriesKernel {
    /// Partial sum `Σ_{j<=k_max} ξ^j (S_B)^j` as a kernel.
    pub kernel: PropagatorKernel,
    /// Entrywise tail bound `r^{k_max+1}/(1-r)` with `r = max_p |ξ·λ(p)|`.
    pub tail_bound: f64,
}

/// Builds the Neumann partial sum by repeated stencil convolution.
///
/// Each entry of the remainder kernel is bounded by the symbol tail:
/// `|tail(s)| <= L^{-2} Σ_p Σ_{j>k} |ξ·λ(p)|^j <= r^{k+1}/(1-r)`.
pub fn theta_series(
    xi: Complex64,
    l: usize,
    k_max: usize,
) -> Result<SeriesKernel, PropagatorError> {
    if l < 3 {
        return Err(PropagatorError::SideTooSmall(l));
    }
    let mut radius: f64 = 0.0;
    for p1 in 0..l {
        for p2 in 0..l {
            radius = radius.max((xi * stencil_symbol(p1, p2, l)).norm());
        }
    }
    if radius >= 1.0 {
        return Err(PropagatorError::SeriesDiverges(radius));
    }
    let n = l * l;
    // power = (ξ S_B)^j δ_0, accumulated into the partial sum.
    let mut power = vec![Complex64::default(); n];
    power[0] = Complex64::new(1.0, 0.0);
    let mut sum = power.clone();
    for _ in 1..=k_max {
        let mut next = vec![Complex64::default(); n];
        for s1 in 0..l {
            for s2 in 0..l {
                let mut acc = Complex64::default();
                for &(d1, d2) in crate::model::VarianceProfile::STENCIL.iter() {
                    let r = BlockIndex::wrap(s1 as i64 - d1, s2 as i64 - d2, l);
                    acc += power[r.flat(l)];
                }
                next[s1 * l + s2] = xi * acc / 5.0;
            }
        }
        for (a, b) in sum.iter_mut().zip(next.iter()) {
            *a += *b;
        }
        power = next;
    }
    let tail_bound = radius.powi(k_max as i32 + 1) / (1.0 - radius);
    Ok(SeriesKernel {
        kernel: PropagatorKernel { l, xi, values: sum },
        tail_bound,
    })
}

/// Distribution of the lazy 5-point random walk on the free lattice `Z²`
/// after a fixed number of steps, tabulated on a centred square window.
#[derive(Debug, Clone)]
pub struct HeatKernelTable {
    steps: usize,
    half_width: usize,
    values: Vec<f64>,
}

impl HeatKernelTable {
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn half_width(&self) -> usize {
        self.half_width
    }

    /// Probability `p_k(s)`; zero outside the window (exact, since the walk
    /// cannot leave it when `half_width >= steps`).
    pub fn at(&self, s1: i64, s2: i64) -> f64 {
        let h = self.half_width as i64;
        if s1.abs() > h || s2.abs() > h {
            return 0.0;
        }
        let side = 2 * self.half_width + 1;
        self.values[(s1 + h) as usize * side + (s2 + h) as usize]
    }

    /// Total mass `Σ_s p_k(s)` (analytically 1).
    pub fn mass(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Evolves the lazy walk `p_{j+1}(s) = (1/5)·Σ_stencil p_j(s - d)` from a
/// point mass, on the free lattice.
pub fn heat_kernel(steps: usize, half_width: usize) -> Result<HeatKernelTable, PropagatorError> {
    if half_width < steps {
        return Err(PropagatorError::WindowTooSmall { steps, half_width });
    }
    let side = 2 * half_width + 1;
    let idx = |i: i64, j: i64| -> usize {
        ((i + half_width as i64) as usize) * side + (j + half_width as i64) as usize
    };
    let mut p = vec![0.0f64; side * side];
    p[idx(0, 0)] = 1.0;
    let h = half_width as i64;
    for step in 1..=steps {
        let mut next = vec![0.0f64; side * side];
        let r = step as i64; // support radius after `step` steps
        for i in -r.min(h)..=r.min(h) {
            for j in -r.min(h)..=r.min(h) {
                let mut acc = 0.0;
                for &(d1, d2) in crate::model::VarianceProfile::STENCIL.iter() {
                    let (si, sj) = (i - d1, j - d2);
                    if si.abs() <= h && sj.abs() <= h {
                        acc += p[idx(si, sj)];
                    }
                }
                next[idx(i, j)] = acc / 5.0;
            }
        }
        p = next;
    }
    Ok(HeatKernelTable {
        steps,
        half_width,
        values: p,
    })
}

/// Applies the kernel to a field on the torus by circular convolution:
/// `(Θ v)(s) = Σ_r k(s - r)·v(r)`.
pub fn theta_apply(
    kernel: &PropagatorKernel,
    field: &[Complex64],
) -> Result<Vec<Complex64>, PropagatorError> {
    let l = kernel.l;
    if field.len() != l * l {
        return Err(PropagatorError::FieldLength(field.len(), l * l));
    }
    let mut out = vec![Complex64::default(); l * l];
    for s1 in 0..l {
        for s2 in 0..l {
            let mut acc = Complex64::default();
            for r1 in 0..l {
                for r2 in 0..l {
                    let k = kernel.at_offset(s1 as i64 - r1 as i64, s2 as i64 - r2 as i64);
                    acc += k * field[r1 * l + r2];
                }
            }
            out[s1 * l + s2] = acc;
        }
    }
    Ok(out)
}

/// Circular convolution of two kernels on the same torus (their operator
/// composition).
pub fn compose(
    a: &PropagatorKernel,
    b: &PropagatorKernel,
) -> Result<Vec<Complex64>, PropagatorError> {
    theta_apply(a, b.values())
}

/// Fitted constants for the pointwise exponential-decay envelope
/// `|k(r)| <= amplitude·exp(-rate·|r|/ℓ̂)/(|1-ξ|·ℓ̂²)`.
#[derive(Debug, Clone, Copy)]
pub struct DecayFit {
    /// Decay rate per unit `|r|/ℓ̂` from a log-linear least-squares fit.
    pub rate: f64,
    /// Smallest prefactor making the envelope dominate the kernel pointwise.
    pub amplitude: f64,
}

impl DecayFit {
    /// The fitted envelope evaluated at periodic distance `d`.
    pub fn envelope(&self, kernel: &PropagatorKernel, d: usize) -> f64 {
        let ell = kernel.decay_length();
        let gap = (Complex64::new(1.0, 0.0) - kernel.xi()).norm();
        self.amplitude * (-self.rate * d as f64 / ell).exp() / (gap * ell * ell)
    }
}

/// Fits the exponential decay envelope: a log-linear regression of the
/// per-distance maxima determines the rate, then the amplitude is raised to
/// dominate every data point.
pub fn decay_diagnostics(kernel: &PropagatorKernel) -> DecayFit {
    let l = kernel.l;
    let ell = kernel.decay_length();
    let gap = (Complex64::new(1.0, 0.0) - kernel.xi()).norm();
    let base = 1.0 / (gap * ell * ell);
    // Per-distance maxima of |k|.
    let mut max_at = vec![0.0f64; l + 1];
    for s1 in 0..l {
        for s2 in 0..l {
            let d = BlockIndex(s1, s2).norm(l);
            max_at[d] = max_at[d].max(kernel.values[s1 * l + s2].norm());
        }
    }
    let peak = max_at[0].max(f64::MIN_POSITIVE);
    // Regression points: x = d/ℓ̂, y = ln|k|, above the relative noise floor.
    let pts: Vec<(f64, f64)> = max_at
        .iter()
        .enumerate()
        .filter(|(_, &m)| m > 1e-13 * peak)
        .map(|(d, &m)| (d as f64 / ell, m.ln()))
        .collect();
    let rate = if pts.len() >= 2 {
        let n = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        let denom = n * sxx - sx * sx;
        if denom.abs() > 1e-30 {
            -(n * sxy - sx * sy) / denom
        } else {
            1.0
        }
    } else {
        1.0
    };
    let rate = rate.max(1e-6);
    let mut amplitude: f64 = 0.0;
    for (d, &m) in max_at.iter().enumerate() {
        if m > 0.0 {
            amplitude = amplitude.max(m / (base * (-rate * d as f64 / ell).exp()));
        }
    }
    DecayFit { rate, amplitude }
}

/// Fitted constants for the first and second discrete difference envelopes.
#[derive(Debug, Clone, Copy)]
pub struct DerivativeFit {
    /// Smallest `C` with `|k(r) - k(r+s)| <= C·(|s|/(|r|+1) + |s|/(ℓ̂²·|1-ξ|^{1/2}))`.
    pub c1: f64,
    /// Smallest `C` with `|2k(r) - k(r+s) - k(r-s)| <= C·(|s|²/(|r|²+1) + |s|²/ℓ̂²)`.
    pub c2: f64,
}

/// Measures both difference envelopes over all offsets `r` and shifts `s != 0`.
pub fn derivative_diagnostics(kernel: &PropagatorKernel) -> DerivativeFit {
    let l = kernel.l;
    let ell = kernel.decay_length();
    let gap = (Complex64::new(1.0, 0.0) - kernel.xi()).norm();
    let mut c1: f64 = 0.0;
    let mut c2: f64 = 0.0;
    for r1 in 0..l as i64 {
        for r2 in 0..l as i64 {
            let dr = kernel.offset_norm(r1, r2) as f64;
            let k_r = kernel.at_offset(r1, r2);
            for s1 in 0..l as i64 {
                for s2 in 0..l as i64 {
                    if s1 == 0 && s2 == 0 {
                        continue;
                    }
                    let ds = kernel.offset_norm(s1, s2) as f64;
                    let k_plus = kernel.at_offset(r1 + s1, r2 + s2);
                    let k_minus = kernel.at_offset(r1 - s1, r2 - s2);
                    let env1 = ds / (dr + 1.0) + ds / (ell * ell * gap.sqrt());
                    c1 = c1.max((k_r - k_plus).norm() / env1);
                    let env2 = ds * ds / (dr * dr + 1.0) + ds * ds / (ell * ell);
                    c2 = c2.max((2.0 * k_r - k_plus - k_minus).norm() / env2);
                }
            }
        }
    }
    DerivativeFit { c1, c2 }
}

/// Convenience: the kernel for the coupling `ξ = t·m_i·m_j` arising from a
/// flow at block geometry `geom`.
pub fn theta_flow_kernel(
    t: f64,
    mi: Complex64,
    mj: Complex64,
    geom: &BlockGeometry,
) -> Result<PropagatorKernel, PropagatorError> {
    theta_kernel(t * mi * mj, geom.l())
}
