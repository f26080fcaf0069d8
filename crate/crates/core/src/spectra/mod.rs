//! Eigensystems, resolvents, and spectral statistics.
//!
//! The dense path diagonalizes a draw once (`O(N³)`, but with the constant
//! of a real symmetric tridiagonal reduction) and derives every resolvent
//! `G(z) = Ψ·diag((λ_k - z)^{-1})·Ψ*` from it with two matrix products.
//! For dimensions where a full diagonalization is too expensive, the
//! [`rgf`] submodule computes resolvent panels and diagonals exactly via a
//! folded block-tridiagonal Schur recursion instead.
//!
//! Statistics:
//! - local-law deviations `max_xy |G_xy - m(z)·δ_xy|` and per-block trace
//!   deviations `max_a |W^{-2} Σ_{x∈I_a} G_xx - m(z)|` (each block's `E_a`
//!   has unit trace), with the natural comparison scales `M_η^{-1/2}` and
//!   `M_η^{-1}`;
//! - delocalization: `N·max_k ‖ψ_k‖_∞²` over bulk eigenvectors;
//! - eigenvector equidistribution over one block: the largest squared
//!   rescaled overlap `|N·⟨ψ_k, E_a ψ_l⟩ - δ_kl|²` over a window of
//!   eigenvalues nearest a target energy (a localized basis vector scores
//!   `(L² - 1)²`, the equidistributed limit scores ~0);
//! - consecutive-gap ratio statistics `r̃ = min(δ_i, δ_{i+1})/max(δ_i, δ_{i+1})`
//!   whose mean separates integrable (`2·ln 2 - 1 ≈ 0.386`) from GUE
//!   (`≈ 0.60`) level statistics.

pub mod rgf;

use crate::lattice::{BlockGeometry, BlockIndex};
use crate::model::semicircle_m;
use crate::sampler::{BandSample, EnsembleTag, SeedSpec, C64};
use faer::{Mat, Side};
use num_complex::Complex64;
use thiserror::Error;

/// Errors from spectral computations.
#[derive(Debug, Error, PartialEq)]
pub enum SpectraError {
    #[error("eigendecomposition failed to converge")]
    EigenFailed,
    #[error("spectral parameter must be off the real axis")]
    RealSpectralParameter,
    #[error("no eigenvalues in the bulk window |lambda| <= 2 - {0}")]
    EmptyBulk(f64),
    #[error("window of {requested} eigenvalues exceeds spectrum size {available}")]
    WindowTooLarge { requested: usize, available: usize },
    #[error("bulk window contains {0} gaps; at least 2 needed for ratios")]
    TooFewGaps(usize),
}

/// Full spectral decomposition of one draw: `H = Ψ·diag(λ)·Ψ*` with `λ`
/// ascending and `Ψ` unitary (columns are eigenvectors).
#[derive(Debug, Clone)]
pub struct EigenSystem {
    pub geom: BlockGeometry,
    pub lambda: Vec<f64>,
    pub psi: Mat<C64>,
    pub seed: SeedSpec,
    pub tag: EnsembleTag,
}

impl EigenSystem {
    pub fn n(&self) -> usize {
        self.lambda.len()
    }
}

/// Diagonalizes a Hermitian draw; eigenvalues are sorted ascending and the
/// eigenvector columns are permuted to match.
pub fn eigensystem(sample: &BandSample) -> Result<EigenSystem, SpectraError> {
    let n = sample.n();
    let evd = sample
        .h
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| SpectraError::EigenFailed)?;
    let s = evd.S().column_vector();
    let u = evd.U();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| s[i].re.total_cmp(&s[j].re));
    let lambda: Vec<f64> = order.iter().map(|&i| s[i].re).collect();
    let psi = Mat::from_fn(n, n, |r, c| u[(r, order[c])]);
    Ok(EigenSystem {
        geom: sample.geom,
        lambda,
        psi,
        seed: sample.seed,
        tag: sample.tag,
    })
}

/// The full resolvent `G(z) = (H - z)^{-1} = Ψ·diag((λ_k - z)^{-1})·Ψ*`.
pub fn resolvent(eig: &EigenSystem, z: Complex64) -> Result<Mat<C64>, SpectraError> {
    if z.im == 0.0 {
        return Err(SpectraError::RealSpectralParameter);
    }
    let n = eig.n();
    let weights: Vec<Complex64> = eig
        .lambda
        .iter()
        .map(|&l| Complex64::new(1.0, 0.0) / (Complex64::new(l, 0.0) - z))
        .collect();
    let weighted = Mat::from_fn(n, n, |r, c| eig.psi[(r, c)] * weights[c]);
    Ok(&weighted * eig.psi.adjoint())
}

/// Local-law deviation statistics of one draw at a spectral parameter.
#[derive(Debug, Clone, Copy)]
pub struct LocalLawStats {
    /// `max_xy |G_xy - m(z)·δ_xy|`.
    pub max_entry_dev: f64,
    /// `max_a |W^{-2} Σ_{x∈I_a} G_xx - m(z)|`.
    pub max_block_trace_dev: f64,
    /// The effective size `M_η = W²·ℓ(z)²·η` at this parameter.
    pub cap_m_eta: f64,
}

/// Measures entrywise and per-block-trace deviations of `G(z)` from
/// `m(z)·Id`.
pub fn local_law_stats(eig: &EigenSystem, z: Complex64) -> Result<LocalLawStats, SpectraError> {
    let g = resolvent(eig, z)?;
    let m = semicircle_m(z).map_err(|_| SpectraError::RealSpectralParameter)?;
    let geom = eig.geom;
    let n = eig.n();
    let mut max_entry_dev: f64 = 0.0;
    for x in 0..n {
        for y in 0..n {
            let target = if x == y { m } else { Complex64::default() };
            max_entry_dev = max_entry_dev.max((g[(x, y)] - target).norm());
        }
    }
    let w2 = (geom.w() * geom.w()) as f64;
    let mut max_block_trace_dev: f64 = 0.0;
    for a in geom.blocks() {
        let mut tr = Complex64::default();
        for x in geom.block_sites(a) {
            tr += g[(x, x)];
        }
        max_block_trace_dev = max_block_trace_dev.max((tr / w2 - m).norm());
    }
    Ok(LocalLawStats {
        max_entry_dev,
        max_block_trace_dev,
        cap_m_eta: crate::model::cap_m_eta(&geom, z),
    })
}

/// Indices of eigenvalues in the bulk window `[-2 + κ, 2 - κ]`.
pub fn bulk_window(eig: &EigenSystem, kappa: f64) -> Vec<usize> {
    let lo = -2.0 + kappa;
    let hi = 2.0 - kappa;
    (0..eig.n())
        .filter(|&k| eig.lambda[k] >= lo && eig.lambda[k] <= hi)
        .collect()
}

/// Delocalization statistic `N·max_{k bulk} ‖ψ_k‖_∞²` (≈ polylog for
/// delocalized vectors, ≈ N for a localized one).
pub fn deloc_stat(eig: &EigenSystem, kappa: f64) -> Result<(f64, usize), SpectraError> {
    let bulk = bulk_window(eig, kappa);
    if bulk.is_empty() {
        return Err(SpectraError::EmptyBulk(kappa));
    }
    let n = eig.n();
    let mut max_sq: f64 = 0.0;
    for &k in &bulk {
        for x in 0..n {
            max_sq = max_sq.max(eig.psi[(x, k)].norm_sqr());
        }
    }
    Ok((n as f64 * max_sq, bulk.len()))
}

/// Equidistribution statistic of eigenvectors over one block: the largest
/// `|N·⟨ψ_k, E_a ψ_l⟩ - δ_kl|²` over all pairs in the window of `window`
/// eigenvalues nearest `e_center` (ties broken by index).
pub fn que_stat(
    eig: &EigenSystem,
    e_center: f64,
    a: BlockIndex,
    window: usize,
) -> Result<f64, SpectraError> {
    let n = eig.n();
    if window == 0 || window > n {
        return Err(SpectraError::WindowTooLarge {
            requested: window,
            available: n,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        (eig.lambda[i] - e_center)
            .abs()
            .total_cmp(&(eig.lambda[j] - e_center).abs())
            .then(i.cmp(&j))
    });
    let win = &order[..window];
    let sites = eig.geom.block_sites(a);
    let w2 = (eig.geom.w() * eig.geom.w()) as f64;
    let nf = n as f64;
    let mut stat: f64 = 0.0;
    for (i, &k) in win.iter().enumerate() {
        for &l in win.iter().skip(i) {
            let mut overlap = Complex64::default();
            for &x in &sites {
                overlap += eig.psi[(x, k)].conj() * eig.psi[(x, l)];
            }
            let delta = if k == l { 1.0 } else { 0.0 };
            let dev = nf * overlap / w2 - delta;
            stat = stat.max(dev.norm_sqr());
        }
    }
    Ok(stat)
}

/// Mean consecutive-gap ratio over a sorted spectrum slice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapRatioStats {
    /// Mean of `r̃_i = min(δ_i, δ_{i+1})/max(δ_i, δ_{i+1})`.
    pub mean: f64,
    /// Number of ratios averaged.
    pub count: usize,
}

/// Gap ratios from an ascending eigenvalue slice restricted to the bulk
/// window `[-2 + κ, 2 - κ]`.
pub fn gap_ratio_from_sorted(lambda: &[f64], kappa: f64) -> Result<GapRatioStats, SpectraError> {
    let lo = -2.0 + kappa;
    let hi = 2.0 - kappa;
    let bulk: Vec<f64> = lambda
        .iter()
        .copied()
        .filter(|&l| l >= lo && l <= hi)
        .collect();
    let n_gaps = bulk.len().saturating_sub(1);
    if n_gaps < 2 {
        return Err(SpectraError::TooFewGaps(n_gaps));
    }
    let gaps: Vec<f64> = bulk.windows(2).map(|w| w[1] - w[0]).collect();
    let mut sum = 0.0;
    let mut count = 0usize;
    for pair in gaps.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let hi_g = a.max(b);
        if hi_g > 0.0 {
            sum += a.min(b) / hi_g;
            count += 1;
        }
    }
    if count == 0 {
        return Err(SpectraError::TooFewGaps(0));
    }
    Ok(GapRatioStats {
        mean: sum / count as f64,
        count,
    })
}

/// Gap ratios of a diagonalized draw over the bulk window.
pub fn gap_ratio_stats(eig: &EigenSystem, kappa: f64) -> Result<GapRatioStats, SpectraError> {
    gap_ratio_from_sorted(&eig.lambda, kappa)
}

/// Sorted iid-uniform "spectrum" on `[-2, 2]` — the integrable (Poisson)
/// reference for gap-ratio statistics, drawn from the same counter-based
/// source as the matrix ensembles.
pub fn poisson_spectrum(n: usize, seed: SeedSpec) -> Vec<f64> {
    use rand_chacha::rand_core::{RngCore, SeedableRng};
    let mut state = seed.master;
    let mut key = [0u8; 32];
    for chunk in key.chunks_mut(8) {
        let mut s = state;
        // Same SplitMix64 expansion as the samplers, separate domain via the
        // stream id below.
        s = s.wrapping_add(0x9E37_79B9_7F4A_7C15);
        state = s;
        let mut z = s;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        chunk.copy_from_slice(&(z ^ (z >> 31)).to_le_bytes());
    }
    let mut rng = rand_chacha::ChaCha12Rng::from_seed(key);
    rng.set_stream(seed.index);
    const SCALE: f64 = 1.0 / 9007199254740992.0; // 2^-53
    let mut out: Vec<f64> = (0..n)
        .map(|_| ((rng.next_u64() >> 11) as f64 * SCALE) * 4.0 - 2.0)
        .collect();
    out.sort_by(|a, b| a.total_cmp(b));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::VarianceProfile;
    use crate::sampler::{sample_band, sample_gue};
    use approx::assert_relative_eq;

    fn small_eig() -> EigenSystem {
        let prof = VarianceProfile::new(BlockGeometry::new(2, 3).unwrap());
        let s = sample_band(
            &prof,
            SeedSpec {
                master: 5,
                index: 0,
            },
        );
        eigensystem(&s).unwrap()
    }

    #[test]
    fn decomposition_reconstructs_matrix() {
        let prof = VarianceProfile::new(BlockGeometry::new(2, 3).unwrap());
        let s = sample_band(
            &prof,
            SeedSpec {
                master: 5,
                index: 0,
            },
        );
        let eig = eigensystem(&s).unwrap();
        let n = eig.n();
        assert!(eig.lambda.windows(2).all(|w| w[0] <= w[1]), "ascending");
        let lam = Mat::from_fn(n, n, |r, c| {
            if r == c {
                Complex64::new(eig.lambda[r], 0.0)
            } else {
                Complex64::default()
            }
        });
        let rebuilt = &eig.psi * &lam * eig.psi.adjoint();
        let mut max_err: f64 = 0.0;
        for x in 0..n {
            for y in 0..n {
                max_err = max_err.max((rebuilt[(x, y)] - s.h[(x, y)]).norm());
            }
        }
        assert!(max_err < 1e-12, "reconstruction error {max_err}");
        // Unitarity.
        let gram = eig.psi.adjoint() * &eig.psi;
        for x in 0..n {
            for y in 0..n {
                let target = if x == y { 1.0 } else { 0.0 };
                assert!((gram[(x, y)] - Complex64::new(target, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn trace_identities() {
        let prof = VarianceProfile::new(BlockGeometry::new(2, 3).unwrap());
        let s = sample_band(
            &prof,
            SeedSpec {
                master: 6,
                index: 1,
            },
        );
        let eig = eigensystem(&s).unwrap();
        let sum_lambda: f64 = eig.lambda.iter().sum();
        let tr: f64 = (0..s.n()).map(|x| s.h[(x, x)].re).sum();
        assert_relative_eq!(sum_lambda, tr, epsilon = 1e-11);
        let sum_sq: f64 = eig.lambda.iter().map(|l| l * l).sum();
        let frob: f64 = {
            let mut acc = 0.0;
            for x in 0..s.n() {
                for y in 0..s.n() {
                    acc += s.h[(x, y)].norm_sqr();
                }
            }
            acc
        };
        assert_relative_eq!(sum_sq, frob, epsilon = 1e-11);
    }

    #[test]
    fn resolvent_inverts_and_satisfies_ward() {
        let eig = small_eig();
        let n = eig.n();
        let prof = VarianceProfile::new(BlockGeometry::new(2, 3).unwrap());
        let s = sample_band(
            &prof,
            SeedSpec {
                master: 5,
                index: 0,
            },
        );
        let z = Complex64::new(0.3, 0.7);
        let g = resolvent(&eig, z).unwrap();
        // (H - z)·G = I.
        let hz = Mat::from_fn(n, n, |r, c| {
            s.h[(r, c)] - if r == c { z } else { Complex64::default() }
        });
        let prod = &hz * &g;
        for x in 0..n {
            for y in 0..n {
                let target = if x == y { 1.0 } else { 0.0 };
                assert!((prod[(x, y)] - Complex64::new(target, 0.0)).norm() < 1e-11);
            }
        }
        // G·G* = (G - G*)/(2i·η), exact per sample.
        let gg = &g * g.adjoint();
        let denom = Complex64::new(0.0, 2.0 * z.im);
        for x in 0..n {
            for y in 0..n {
                let rhs = (g[(x, y)] - g[(y, x)].conj()) / denom;
                assert!((gg[(x, y)] - rhs).norm() < 1e-11);
            }
        }
        assert_eq!(
            resolvent(&eig, Complex64::new(0.5, 0.0)).unwrap_err(),
            SpectraError::RealSpectralParameter
        );
    }

    #[test]
    fn zero_matrix_resolvent_is_scalar() {
        // H = 0: G(z) = -1/z on the diagonal — degenerate geometry guard.
        let geom = BlockGeometry::new(1, 3).unwrap();
        let zero = BandSample {
            geom,
            h: Mat::<C64>::zeros(9, 9),
            seed: SeedSpec {
                master: 0,
                index: 0,
            },
            tag: EnsembleTag::Band,
        };
        let eig = eigensystem(&zero).unwrap();
        let z = Complex64::new(0.4, 0.9);
        let g = resolvent(&eig, z).unwrap();
        for x in 0..9 {
            for y in 0..9 {
                let target = if x == y {
                    -Complex64::new(1.0, 0.0) / z
                } else {
                    Complex64::default()
                };
                assert!((g[(x, y)] - target).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn bulk_window_and_deloc() {
        let eig = small_eig();
        let bulk = bulk_window(&eig, 0.5);
        for &k in &bulk {
            assert!(eig.lambda[k].abs() <= 1.5);
        }
        let (stat, n_bulk) = deloc_stat(&eig, 0.5).unwrap();
        assert_eq!(n_bulk, bulk.len());
        // sup-norm² of a unit vector is within [1/N, 1].
        assert!(stat >= 1.0 && stat <= eig.n() as f64);
        assert_eq!(
            deloc_stat(&eig, 1.999).unwrap_err(),
            SpectraError::EmptyBulk(1.999)
        );
    }

    #[test]
    fn que_stat_of_basis_vectors_is_extremal() {
        // ψ = identity basis: overlaps are W^{-2}·1(x∈I_a) so the statistic
        // is exactly (L² - 1)².
        let geom = BlockGeometry::new(2, 3).unwrap();
        let n = geom.n_sites();
        let eig = EigenSystem {
            geom,
            lambda: (0..n).map(|k| k as f64 / n as f64).collect(),
            psi: Mat::from_fn(n, n, |r, c| {
                if r == c {
                    Complex64::new(1.0, 0.0)
                } else {
                    Complex64::default()
                }
            }),
            seed: SeedSpec {
                master: 0,
                index: 0,
            },
            tag: EnsembleTag::Band,
        };
        // Window centred at the bottom of the fake spectrum, so it contains
        // the basis vectors of block (0,0)'s own sites (flat 0, 1, 6, 7).
        let stat = que_stat(&eig, 0.0, BlockIndex(0, 0), 8).unwrap();
        let l2 = (geom.l() * geom.l()) as f64;
        assert_relative_eq!(stat, (l2 - 1.0).powi(2), max_relative = 1e-12);
        // A window that misses the block entirely scores |0 - 1|² = 1.
        let far = que_stat(&eig, 0.5, BlockIndex(0, 0), 8).unwrap();
        assert_relative_eq!(far, 1.0, max_relative = 1e-12);
        assert!(matches!(
            que_stat(&eig, 0.0, BlockIndex(0, 0), n + 1),
            Err(SpectraError::WindowTooLarge { .. })
        ));
    }

    #[test]
    fn gap_ratio_known_sequences() {
        // Equally spaced: all ratios 1.
        let lam: Vec<f64> = (0..100).map(|i| -1.0 + i as f64 * 0.02).collect();
        let s = gap_ratio_from_sorted(&lam, 0.5).unwrap();
        assert_relative_eq!(s.mean, 1.0, max_relative = 1e-12);
        // Geometric gaps with ratio 2: every r̃ = 1/2.
        let mut lam = vec![0.0f64];
        for i in 0..20 {
            let last = *lam.last().unwrap();
            lam.push(last + 0.001 * 2.0f64.powi(i));
        }
        let s = gap_ratio_from_sorted(&lam, 0.5).unwrap();
        assert_relative_eq!(s.mean, 0.5, max_relative = 1e-12);
        assert!(gap_ratio_from_sorted(&[0.0, 0.1], 0.5).is_err());
    }

    #[test]
    fn poisson_spectrum_reproducible_and_sorted() {
        let a = poisson_spectrum(
            500,
            SeedSpec {
                master: 9,
                index: 2,
            },
        );
        let b = poisson_spectrum(
            500,
            SeedSpec {
                master: 9,
                index: 2,
            },
        );
        let c = poisson_spectrum(
            500,
            SeedSpec {
                master: 9,
                index: 3,
            },
        );
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.windows(2).all(|w| w[0] <= w[1]));
        assert!(a.iter().all(|&x| (-2.0..=2.0).contains(&x)));
    }

    #[test]
    fn gue_sample_diagonalizes() {
        let geom = BlockGeometry::new(2, 3).unwrap();
        let g = sample_gue(
            &geom,
            SeedSpec {
                master: 1,
                index: 0,
            },
        );
        let eig = eigensystem(&g).unwrap();
        assert_eq!(eig.tag, EnsembleTag::Gue);
        assert_eq!(eig.n(), 36);
    }
}
