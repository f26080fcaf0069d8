//! Resolvent loop observables.
//!
//! A loop of length `n` multiplies resolvents of the flowed matrix
//! `H_t = √t·H` at the flow point `z_t` against block projections:
//!
//! `L_{t,σ,a} = tr[ G_t(σ_1) E_{a_1} G_t(σ_2) E_{a_2} ... G_t(σ_n) E_{a_n} ]`
//!
//! where `G_t(+) = (H_t - z_t)^{-1}`, `G_t(-) = (H_t - z̄_t)^{-1} = G_t(+)*`,
//! and `E_a = W^{-2}·1_{I_a}` is the normalized block projector
//! (`tr E_a = 1`, `Σ_a E_a = W^{-2}·Id`).
//!
//! Everything is evaluated from one eigendecomposition `H = Ψ·λ·Ψ*`:
//! `G_t(σ)` has eigenweights `(√t·λ_k - z_t^{(σ)})^{-1}`, so the block slice
//! `P_a G_t(σ) P_b` is a small `W²×W²` product of eigenvector panels, and a
//! loop is the trace of a ring of such slices.
//!
//! Ward identities: summing the last block index closes the loop through
//! `G_t(σ_n)G_t(σ_1)`; whenever `σ_n ≠ σ_1` the exact resolvent algebra
//! `G G* = (G - G*)/(2i·η_t)` (valid entrywise for every sample — the two
//! resolvents commute) turns the sum into two loops of length `n - 1`:
//!
//! `Σ_{a_n} L_{t,σ,a} = (2i·W²·η_t)^{-1}·(L_{t,(+,σ_2..σ_{n-1})} - L_{t,(-,σ_2..σ_{n-1})})`.
//!
//! The T-matrices are the two-leg loop tables of the *unflowed* matrix at a
//! bare spectral parameter: `T^{+-}_{ab} = tr[G E_a G* E_b]`,
//! `T^{++}_{ab} = tr[G E_a G E_b]`; they relate to flowed two-loops by the
//! exact rescaling `G_t(z_t) = t^{-1/2}·G(z_t/√t)`.

use crate::lattice::BlockIndex;
use crate::model::SpectralParams;
use crate::sampler::C64;
use crate::spectra::{resolvent, EigenSystem, SpectraError};
use faer::Mat;
use num_complex::Complex64;
use thiserror::Error;

/// Errors from loop evaluation.
#[derive(Debug, Error, PartialEq)]
pub enum LoopsError {
    #[error("loop needs equal numbers of signs and blocks, got {signs} and {blocks}")]
    MismatchedLengths { signs: usize, blocks: usize },
    #[error("loop must have length >= 1")]
    Empty,
    #[error("Ward reduction needs sigma_1 != sigma_n and length >= 2")]
    BadWardSignature,
    #[error(transparent)]
    Spectra(#[from] SpectraError),
}

/// Resolvent sign: which side of the real axis the spectral parameter sits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn flip(self) -> Sign {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Sign::Plus => '+',
            Sign::Minus => '-',
        }
    }
}

/// Parses a sign word like `"+-"` or `"++-"`.
pub fn parse_signs(s: &str) -> Option<Vec<Sign>> {
    s.chars()
        .map(|c| match c {
            '+' => Some(Sign::Plus),
            '-' => Some(Sign::Minus),
            _ => None,
        })
        .collect()
}

/// A loop specification: signs `σ` and block indices `a`, equal lengths.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopSpec {
    pub sigma: Vec<Sign>,
    pub a: Vec<BlockIndex>,
}

impl LoopSpec {
    pub fn new(sigma: Vec<Sign>, a: Vec<BlockIndex>) -> Result<Self, LoopsError> {
        if sigma.is_empty() {
            return Err(LoopsError::Empty);
        }
        if sigma.len() != a.len() {
            return Err(LoopsError::MismatchedLengths {
                signs: sigma.len(),
                blocks: a.len(),
            });
        }
        Ok(LoopSpec { sigma, a })
    }

    pub fn n(&self) -> usize {
        self.sigma.len()
    }
}

/// Eigenweights of `G_t(σ)`: `(√t·λ_k - z)^{-1}` with `z = z_t` or `z̄_t`.
fn flow_weights(eig: &EigenSystem, params: &SpectralParams, sigma: Sign) -> Vec<Complex64> {
    let z = match sigma {
        Sign::Plus => params.z_t,
        Sign::Minus => params.z_t.conj(),
    };
    let rt = params.t.sqrt();
    eig.lambda
        .iter()
        .map(|&l| Complex64::new(1.0, 0.0) / (Complex64::new(rt * l, 0.0) - z))
        .collect()
}

/// The `W²×W²` slice `P_a G_t(σ) P_b` between two blocks, as
/// `U_a·diag(w_σ)·U_b*` with `U_a = Ψ[I_a, :]`.
fn block_slice(eig: &EigenSystem, weights: &[Complex64], a: BlockIndex, b: BlockIndex) -> Mat<C64> {
    let rows = eig.geom.block_sites(a);
    let cols = eig.geom.block_sites(b);
    let n = eig.n();
    // (U_a diag w)·U_b^H as one matrix product over the w2 × n slabs.
    let ua_w = Mat::<C64>::from_fn(rows.len(), n, |i, k| eig.psi[(rows[i], k)] * weights[k]);
    let ub = Mat::<C64>::from_fn(cols.len(), n, |j, k| eig.psi[(cols[j], k)]);
    &ua_w * ub.adjoint()
}

/// Evaluates the loop `L_{t,σ,a}` from an eigensystem at a flow point.
pub fn eval_loop(
    eig: &EigenSystem,
    params: &SpectralParams,
    spec: &LoopSpec,
) -> Result<Complex64, LoopsError> {
    let n_legs = spec.n();
    let w2 = eig.geom.block_size();
    let w2f = w2 as f64;
    // Slices M_i = P_{a_i} G_t(σ_{i+1}) P_{a_{i+1}} (indices cyclic); the
    // loop is W^{-2n}·tr(M_1 M_2 ... M_n).
    let mut ring: Option<Mat<C64>> = None;
    for i in 0..n_legs {
        let sigma = spec.sigma[(i + 1) % n_legs];
        let weights = flow_weights(eig, params, sigma);
        let slice = block_slice(eig, &weights, spec.a[i], spec.a[(i + 1) % n_legs]);
        ring = Some(match ring {
            None => slice,
            Some(prev) => &prev * &slice,
        });
    }
    let ring = ring.expect("n >= 1");
    let mut tr = Complex64::default();
    for i in 0..w2 {
        tr += ring[(i, i)];
    }
    Ok(tr / w2f.powi(n_legs as i32))
}

/// Relative Ward residual: compares `Σ_{a_n} L_{t,σ,(a.., a_n)}` against the
/// two shorter loops `(±, σ_2, ..., σ_{n-1})` at blocks `a`, normalized by
/// the larger magnitude. Requires `σ_1 ≠ σ_n`.
pub fn ward_residual(
    eig: &EigenSystem,
    params: &SpectralParams,
    sigma: &[Sign],
    a_fixed: &[BlockIndex],
) -> Result<f64, LoopsError> {
    let n = sigma.len();
    if n < 2 || sigma[0] == sigma[n - 1] {
        return Err(LoopsError::BadWardSignature);
    }
    if a_fixed.len() != n - 1 {
        return Err(LoopsError::MismatchedLengths {
            signs: n,
            blocks: a_fixed.len() + 1,
        });
    }
    let geom = eig.geom;
    let mut lhs = Complex64::default();
    for a_n in geom.blocks() {
        let mut blocks = a_fixed.to_vec();
        blocks.push(a_n);
        let spec = LoopSpec::new(sigma.to_vec(), blocks)?;
        lhs += eval_loop(eig, params, &spec)?;
    }
    let mut short = vec![Sign::Plus];
    short.extend_from_slice(&sigma[1..n - 1]);
    let plus_spec = LoopSpec::new(short.clone(), a_fixed.to_vec())?;
    let l_plus = eval_loop(eig, params, &plus_spec)?;
    short[0] = Sign::Minus;
    let minus_spec = LoopSpec::new(short, a_fixed.to_vec())?;
    let l_minus = eval_loop(eig, params, &minus_spec)?;
    let w2 = (geom.w() * geom.w()) as f64;
    let rhs = (l_plus - l_minus) / Complex64::new(0.0, 2.0 * w2 * params.eta_t);
    let scale = lhs.norm().max(rhs.norm());
    if scale == 0.0 {
        return Ok(0.0);
    }
    Ok((lhs - rhs).norm() / scale)
}

/// Which two-leg table to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TKind {
    /// `T_{ab} = tr[G E_a G* E_b] = W^{-4} Σ_{x∈I_a, y∈I_b} |G_yx|²`.
    PlusMinus,
    /// `T_{ab} = tr[G E_a G E_b] = W^{-4} Σ_{x∈I_a, y∈I_b} G_yx G_xy`.
    PlusPlus,
}

/// Two-leg loop table over all block pairs at a bare spectral parameter.
#[derive(Debug, Clone)]
pub struct TMatrix {
    pub l: usize,
    pub kind: TKind,
    /// Row-major over `(a, b)` flat block indices.
    values: Vec<Complex64>,
}

impl TMatrix {
    pub fn entry(&self, a: BlockIndex, b: BlockIndex) -> Complex64 {
        self.values[a.flat(self.l) * self.l * self.l + b.flat(self.l)]
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }
}

/// Builds a T-matrix by one pass over the full resolvent.
pub fn t_matrix(eig: &EigenSystem, z: Complex64, kind: TKind) -> Result<TMatrix, LoopsError> {
    let g = resolvent(eig, z)?;
    let geom = eig.geom;
    let l = geom.l();
    let n = eig.n();
    let nb = l * l;
    let site_block: Vec<usize> = (0..n).map(|x| geom.block_of_flat(x).flat(l)).collect();
    let mut values = vec![Complex64::default(); nb * nb];
    for y in 0..n {
        let by = site_block[y];
        for x in 0..n {
            let bx = site_block[x];
            // x ∈ I_a (first leg), y ∈ I_b (second leg).
            let v = match kind {
                TKind::PlusMinus => Complex64::new(g[(y, x)].norm_sqr(), 0.0),
                TKind::PlusPlus => g[(y, x)] * g[(x, y)],
            };
            values[bx * nb + by] += v;
        }
    }
    let w4 = ((geom.w() * geom.w()) as f64).powi(2);
    for v in &mut values {
        *v /= w4;
    }
    Ok(TMatrix { l, kind, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::BlockGeometry;
    use crate::model::{flow_point, VarianceProfile};
    use crate::sampler::{sample_band, BandSample, EnsembleTag, SeedSpec};
    use crate::spectra::eigensystem;
    use faer::prelude::*;

    fn setup(w: usize, l: usize, seed: u64) -> (BandSample, EigenSystem) {
        let prof = VarianceProfile::new(BlockGeometry::new(w, l).unwrap());
        let s = sample_band(
            &prof,
            SeedSpec {
                master: seed,
                index: 0,
            },
        );
        let eig = eigensystem(&s).unwrap();
        (s, eig)
    }

    /// Dense oracle: G_t(σ) by direct LU inversion of (√t·H - z).
    fn dense_flow_resolvent(s: &BandSample, params: &SpectralParams, sigma: Sign) -> Mat<C64> {
        let n = s.n();
        let z = match sigma {
            Sign::Plus => params.z_t,
            Sign::Minus => params.z_t.conj(),
        };
        let rt = params.t.sqrt();
        let hz = Mat::from_fn(n, n, |r, c| {
            rt * s.h[(r, c)] - if r == c { z } else { Complex64::default() }
        });
        let eye = Mat::<C64>::identity(n, n);
        hz.partial_piv_lu().solve(&eye)
    }

    /// Dense oracle for a whole loop.
    fn dense_loop(s: &BandSample, params: &SpectralParams, spec: &LoopSpec) -> Complex64 {
        let n = s.n();
        let geom = s.geom;
        let w2 = geom.block_size() as f64;
        let mut prod = Mat::<C64>::identity(n, n);
        for i in 0..spec.n() {
            let g = dense_flow_resolvent(s, params, spec.sigma[i]);
            // E_a = W^{-2} projector.
            let sites = geom.block_sites(spec.a[i]);
            let mut proj = Mat::<C64>::zeros(n, n);
            for &x in &sites {
                proj[(x, x)] = Complex64::new(1.0 / w2, 0.0);
            }
            prod = &prod * &g * &proj;
        }
        let mut tr = Complex64::default();
        for i in 0..n {
            tr += prod[(i, i)];
        }
        tr
    }

    #[test]
    fn matches_dense_oracle_n1_n2_n3() {
        let (s, eig) = setup(2, 3, 11);
        let params = flow_point(0.3, 0.6).unwrap();
        let specs = [
            LoopSpec::new(vec![Sign::Plus], vec![BlockIndex(1, 2)]).unwrap(),
            LoopSpec::new(
                vec![Sign::Plus, Sign::Minus],
                vec![BlockIndex(0, 0), BlockIndex(2, 1)],
            )
            .unwrap(),
            LoopSpec::new(
                vec![Sign::Plus, Sign::Plus, Sign::Minus],
                vec![BlockIndex(0, 1), BlockIndex(1, 1), BlockIndex(2, 0)],
            )
            .unwrap(),
        ];
        for spec in &specs {
            let fast = eval_loop(&eig, &params, spec).unwrap();
            let oracle = dense_loop(&s, &params, spec);
            assert!(
                (fast - oracle).norm() <= 1e-12 * (1.0 + oracle.norm()),
                "spec {spec:?}: {fast} vs {oracle}"
            );
        }
    }

    #[test]
    fn two_loop_mixed_signs_is_sum_of_squares() {
        let (s, eig) = setup(2, 3, 7);
        let params = flow_point(0.0, 0.4).unwrap();
        let a1 = BlockIndex(1, 0);
        let a2 = BlockIndex(0, 2);
        let spec = LoopSpec::new(vec![Sign::Plus, Sign::Minus], vec![a1, a2]).unwrap();
        let val = eval_loop(&eig, &params, &spec).unwrap();
        // W^{-4} Σ_{x∈I_{a2}, y∈I_{a1}} |G_t(x,y)|².
        let g = dense_flow_resolvent(&s, &params, Sign::Plus);
        let w4 = (s.geom.block_size() as f64).powi(2);
        let mut direct = 0.0;
        for x in s.geom.block_sites(a2) {
            for y in s.geom.block_sites(a1) {
                direct += g[(x, y)].norm_sqr();
            }
        }
        direct /= w4;
        assert!((val.re - direct).abs() <= 1e-12 * (1.0 + direct));
        assert!(val.im.abs() <= 1e-14, "mixed two-loop is real");
        assert!(val.re >= 0.0);
    }

    #[test]
    fn cyclic_invariance() {
        let (_, eig) = setup(2, 3, 13);
        let params = flow_point(0.5, 0.25).unwrap();
        let sigma = vec![Sign::Plus, Sign::Minus, Sign::Plus];
        let blocks = vec![BlockIndex(0, 0), BlockIndex(1, 2), BlockIndex(2, 2)];
        let base = eval_loop(
            &eig,
            &params,
            &LoopSpec::new(sigma.clone(), blocks.clone()).unwrap(),
        )
        .unwrap();
        for rot in 1..3 {
            let mut sig = sigma.clone();
            let mut blo = blocks.clone();
            sig.rotate_left(rot);
            blo.rotate_left(rot);
            let v = eval_loop(&eig, &params, &LoopSpec::new(sig, blo).unwrap()).unwrap();
            assert!((v - base).norm() <= 1e-13 * (1.0 + base.norm()));
        }
    }

    #[test]
    fn zero_matrix_degenerates_to_scalar() {
        let geom = BlockGeometry::new(2, 3).unwrap();
        let zero = BandSample {
            geom,
            h: Mat::<C64>::zeros(36, 36),
            seed: SeedSpec {
                master: 0,
                index: 0,
            },
            tag: EnsembleTag::Band,
        };
        let eig = eigensystem(&zero).unwrap();
        let params = flow_point(0.7, 0.3).unwrap();
        // G_t = -1/z_t: two-loop is |z_t|^{-2}·W^{-2}·δ_ab.
        let same = LoopSpec::new(
            vec![Sign::Plus, Sign::Minus],
            vec![BlockIndex(1, 1), BlockIndex(1, 1)],
        )
        .unwrap();
        let diff = LoopSpec::new(
            vec![Sign::Plus, Sign::Minus],
            vec![BlockIndex(1, 1), BlockIndex(0, 1)],
        )
        .unwrap();
        let w2 = geom.block_size() as f64;
        let expect = 1.0 / (params.z_t.norm_sqr() * w2);
        let v_same = eval_loop(&eig, &params, &same).unwrap();
        let v_diff = eval_loop(&eig, &params, &diff).unwrap();
        assert!((v_same - Complex64::new(expect, 0.0)).norm() < 1e-13);
        assert!(v_diff.norm() < 1e-15);
    }

    #[test]
    fn ward_identity_holds_per_sample() {
        let (_, eig) = setup(2, 3, 21);
        for &(e, t) in &[(0.0, 0.5), (0.8, 0.3)] {
            let params = flow_point(e, t).unwrap();
            // n = 2: σ = (+,-), one fixed block.
            let r2 = ward_residual(
                &eig,
                &params,
                &[Sign::Plus, Sign::Minus],
                &[BlockIndex(1, 2)],
            )
            .unwrap();
            assert!(r2 <= 1e-12, "n=2 residual {r2}");
            // n = 3: σ = (+,+,-) and (-,+,+) style signatures.
            let r3 = ward_residual(
                &eig,
                &params,
                &[Sign::Plus, Sign::Plus, Sign::Minus],
                &[BlockIndex(0, 0), BlockIndex(2, 1)],
            )
            .unwrap();
            assert!(r3 <= 1e-11, "n=3 residual {r3}");
        }
        let params = flow_point(0.0, 0.5).unwrap();
        assert_eq!(
            ward_residual(
                &eig,
                &params,
                &[Sign::Plus, Sign::Plus],
                &[BlockIndex(0, 0)]
            )
            .unwrap_err(),
            LoopsError::BadWardSignature
        );
    }

    #[test]
    fn t_matrix_properties_and_flow_relation() {
        let (s, eig) = setup(2, 3, 31);
        let params = flow_point(0.2, 0.45).unwrap();
        let z = params.z_t / params.t.sqrt();
        let tm = t_matrix(&eig, z, TKind::PlusMinus).unwrap();
        let geom = s.geom;
        for a in geom.blocks() {
            for b in geom.blocks() {
                let v = tm.entry(a, b);
                // tr[G E_a G* E_b] is a sum of |G_yx|²: exactly real, >= 0.
                assert!(v.im.abs() < 1e-14);
                assert!(v.re >= 0.0);
            }
        }
        // tr[G E_a G* E_b] = t · L_{t,(+,-),(a,b)} under z = z_t/√t.
        let a = BlockIndex(0, 1);
        let b = BlockIndex(2, 0);
        let spec = LoopSpec::new(vec![Sign::Plus, Sign::Minus], vec![a, b]).unwrap();
        let lv = eval_loop(&eig, &params, &spec).unwrap();
        let lhs = tm.entry(a, b);
        assert!(
            (lhs - params.t * lv).norm() <= 1e-12 * (1.0 + lhs.norm()),
            "{lhs} vs {}",
            params.t * lv
        );
        // Ward-form row sums: Σ_b T_ab = W^{-2}·(tr G E_a - tr G* E_a)/(2iη).
        let g = resolvent(&eig, z).unwrap();
        let w2 = geom.block_size() as f64;
        for a in geom.blocks() {
            let mut row = Complex64::default();
            for b in geom.blocks() {
                row += tm.entry(a, b);
            }
            let mut tr_a = Complex64::default();
            for x in geom.block_sites(a) {
                tr_a += g[(x, x)];
            }
            let rhs = (tr_a - tr_a.conj()) / Complex64::new(0.0, 2.0 * z.im) / (w2 * w2);
            assert!((row - rhs).norm() <= 1e-12 * (1.0 + rhs.norm()));
        }
    }

    #[test]
    fn sign_parsing() {
        assert_eq!(
            parse_signs("+-+").unwrap(),
            vec![Sign::Plus, Sign::Minus, Sign::Plus]
        );
        assert!(parse_signs("+x").is_none());
        assert_eq!(Sign::Plus.flip(), Sign::Minus);
        assert_eq!(Sign::Minus.as_char(), '-');
    }
}
