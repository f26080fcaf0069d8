//! Deterministic loop hierarchy on the block lattice.
//!
//! The sample averages of resolvent loops are tracked by a family of
//! *primitive* tensors `K_{t,σ,a}` indexed by a sign word `σ` and block
//! tuple `a`. The family solves an autonomous quadratic flow: cutting the
//! loop at a pair of legs `k < l` and gluing each half to a fresh block
//! index produces two shorter words, and
//!
//! `dK_{t,σ,a}/dt = W² Σ_{k<l} Σ_{g,h} K_{t,σ_R,(a_k..a_{l-1},g)} · S_{gh} · K_{t,σ_L,(a_l..a_n,a_1..a_{k-1},h)}`
//!
//! with `S` the nearest-neighbour block stencil (weight 1/5) and initial
//! data `K_0 = W^{-2(n-1)}·(∏_i m_{σ_i})·1(a_1 = ... = a_n)`, where
//! `m_+ = m(E)` is the bulk Stieltjes value kept constant along the flow
//! and `m_- = conj(m_+)`.
//!
//! Everything here works with the dimensionless reduced tensor
//! `k̂ = W^{2(n-1)}·K` stored over block *differences* `d_i = a_i - a_1`
//! (translation invariance); at that level the flow is free of `W`
//! entirely, so one integration serves every band width.
//!
//! Closed forms exist for short words and are kept as an independent route:
//!
//! - `n = 1`: `k̂ = m_{σ_1}` (constant in `t`);
//! - `n = 2`: `k̂(d) = m_1 m_2 · Θ_{t·m_1 m_2}(d)` with `Θ_ξ = (1 - ξS)^{-1}`;
//! - `n = 3`: a star sum `k̂(d_2,d_3) = m_1 m_2 m_3 · Σ_b ∏_i Θ_{t·m_i m_{i+1}}(a_i - b)`,
//!   each leg `i` carrying the product of the two signs adjacent to `a_i`.
//!
//! The module also provides the block-profile operators used to split
//! tensors into a mass mode and a sum-zero remainder — the profile
//! `ϑ_{t}(d_2..d_n) = (1-t)^{n-1} ∏_i Θ_t(d_i)`, the projection `P` (sum
//! over all free indices, normalized so `P∘ϑ = 1`), `Q = Id - ϑ·P` — and
//! the per-leg transfer operator `U_{s,t,σ}` with leg symbols
//! `(1 - s·ξ_i·λ)/(1 - t·ξ_i·λ)`, `ξ_i = m_i m_{i+1}`, which moves profiles
//! between flow times and satisfies `U_{s,t} = Id - (s-t)·ξ·Θ_{tξ}·S` per
//! leg.

use crate::lattice::BlockIndex;
use crate::loops::Sign;
use crate::model::{boundary_m, ModelError};
use crate::propagator::{kernel_from_even_symbol, stencil_symbol, theta_kernel, PropagatorError};
use num_complex::Complex64;
use std::collections::HashMap;
use thiserror::Error;

/// Errors from the primitive-loop machinery.
#[derive(Debug, Error)]
pub enum PrimitiveError {
    #[error("no closed form for words of length {0} (supported: 1..=3)")]
    UnsupportedLength(usize),
    #[error("flow time {0} outside [0, 1)")]
    BadFlowTime(f64),
    #[error("tensor rank {got} does not match expected rank {expected}")]
    RankMismatch { expected: usize, got: usize },
    #[error("cut positions k={k}, l={l} invalid for word length {n}")]
    BadCut { k: usize, l: usize, n: usize },
    #[error("word {0} not present in the evolved family")]
    MissingWord(String),
    #[error("Ward reduction needs sigma_1 != sigma_n and length >= 2")]
    BadWardSignature,
    #[error("flow integration did not converge: {steps} steps, relative error {rel_err:.3e}")]
    NoConvergence { steps: usize, rel_err: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Propagator(#[from] PropagatorError),
}

/// `m` attached to a resolvent sign: the bulk value for `+`, its conjugate
/// for `-`.
pub fn sign_m(m_e: Complex64, s: Sign) -> Complex64 {
    match s {
        Sign::Plus => m_e,
        Sign::Minus => m_e.conj(),
    }
}

fn word_string(w: &[Sign]) -> String {
    w.iter().map(|s| s.as_char()).collect()
}

/// A translation-invariant tensor over `rank` block-difference slots,
/// stored row-major with the last slot fastest; `rank = 0` is a scalar.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockTensor {
    l: usize,
    rank: usize,
    values: Vec<Complex64>,
}

impl BlockTensor {
    pub fn zeros(l: usize, rank: usize) -> BlockTensor {
        let nb = l * l;
        BlockTensor {
            l,
            rank,
            values: vec![Complex64::default(); nb.pow(rank as u32)],
        }
    }

    /// Point mass `weight` at all differences zero.
    pub fn delta(l: usize, rank: usize, weight: Complex64) -> BlockTensor {
        let mut t = BlockTensor::zeros(l, rank);
        t.values[0] = weight;
        t
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    fn flat_index(&self, diffs: &[BlockIndex]) -> usize {
        assert_eq!(diffs.len(), self.rank, "tensor rank mismatch");
        let nb = self.l * self.l;
        let mut idx = 0;
        for d in diffs {
            idx = idx * nb + d.flat(self.l);
        }
        idx
    }

    /// Value at the given difference tuple (length must equal the rank).
    pub fn at(&self, diffs: &[BlockIndex]) -> Complex64 {
        self.values[self.flat_index(diffs)]
    }

    /// Sum over all difference tuples.
    pub fn sum(&self) -> Complex64 {
        self.values.iter().sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

/// A reduced primitive tensor together with its sign word.
#[derive(Debug, Clone)]
pub struct KTensor {
    sigma: Vec<Sign>,
    tensor: BlockTensor,
}

impl KTensor {
    pub fn sigma(&self) -> &[Sign] {
        &self.sigma
    }

    pub fn n(&self) -> usize {
        self.sigma.len()
    }

    pub fn tensor(&self) -> &BlockTensor {
        &self.tensor
    }

    /// Dimensionless value `k̂(d_2..d_n)` at explicit differences.
    pub fn reduced(&self, diffs: &[BlockIndex]) -> Complex64 {
        self.tensor.at(diffs)
    }

    /// Dimensionless value at a block tuple, using translation invariance.
    pub fn at_blocks(&self, blocks: &[BlockIndex]) -> Complex64 {
        assert_eq!(blocks.len(), self.n(), "block tuple length mismatch");
        let l = self.tensor.l;
        let diffs: Vec<BlockIndex> = blocks[1..]
            .iter()
            .map(|b| b.offset_from(blocks[0], l))
            .collect();
        self.tensor.at(&diffs)
    }

    /// Physical value `K = W^{-2(n-1)}·k̂` for band width `w`.
    pub fn value(&self, blocks: &[BlockIndex], w: usize) -> Complex64 {
        let scale = ((w * w) as f64).powi(-(self.n() as i32 - 1));
        self.at_blocks(blocks) * scale
    }
}

/// Right glue at cut `1 <= k < l <= n`: keeps legs `k..l`, closes with a
/// fresh block in the last slot.
pub fn glue_right(
    sigma: &[Sign],
    a: &[BlockIndex],
    k: usize,
    l: usize,
    g: BlockIndex,
) -> Result<(Vec<Sign>, Vec<BlockIndex>), PrimitiveError> {
    let n = sigma.len();
    if a.len() != n || k < 1 || k >= l || l > n {
        return Err(PrimitiveError::BadCut { k, l, n });
    }
    let sig = sigma[k - 1..l].to_vec();
    let mut blocks = a[k - 1..l - 1].to_vec();
    blocks.push(g);
    Ok((sig, blocks))
}

/// Left glue at cut `1 <= k < l <= n`: keeps the complementary legs
/// `l..n, 1..k` (cyclically), closes with a fresh block in the last slot.
pub fn glue_left(
    sigma: &[Sign],
    a: &[BlockIndex],
    k: usize,
    l: usize,
    g: BlockIndex,
) -> Result<(Vec<Sign>, Vec<BlockIndex>), PrimitiveError> {
    let n = sigma.len();
    if a.len() != n || k < 1 || k >= l || l > n {
        return Err(PrimitiveError::BadCut { k, l, n });
    }
    let mut sig = sigma[l - 1..].to_vec();
    sig.extend_from_slice(&sigma[..k]);
    let mut blocks = a[l - 1..].to_vec();
    blocks.extend_from_slice(&a[..k.saturating_sub(1)]);
    blocks.push(g);
    Ok((sig, blocks))
}

/// All sign words reachable from `sigma` by repeated cut-and-glue
/// (deduplicated, the seed word first).
pub fn sign_closure(sigma: &[Sign]) -> Vec<Vec<Sign>> {
    let mut words: Vec<Vec<Sign>> = vec![sigma.to_vec()];
    let mut i = 0;
    while i < words.len() {
        let w = words[i].clone();
        let n = w.len();
        for k in 1..n {
            for l in (k + 1)..=n {
                let right = w[k - 1..l].to_vec();
                let mut left = w[l - 1..].to_vec();
                left.extend_from_slice(&w[..k]);
                for cand in [right, left] {
                    if !words.contains(&cand) {
                        words.push(cand);
                    }
                }
            }
        }
        i += 1;
    }
    words
}

/// Closed-form primitive tensor for words of length 1..=3.
pub fn k_closed(
    l: usize,
    m_e: Complex64,
    t: f64,
    sigma: &[Sign],
) -> Result<KTensor, PrimitiveError> {
    if !(0.0..1.0).contains(&t) {
        return Err(PrimitiveError::BadFlowTime(t));
    }
    let n = sigma.len();
    let ms: Vec<Complex64> = sigma.iter().map(|&s| sign_m(m_e, s)).collect();
    let pref: Complex64 = ms.iter().product();
    let tensor = match n {
        1 => BlockTensor {
            l,
            rank: 0,
            values: vec![pref],
        },
        2 => {
            let th = theta_kernel(t * ms[0] * ms[1], l)?;
            let values = th.values().iter().map(|&v| pref * v).collect();
            BlockTensor { l, rank: 1, values }
        }
        3 => {
            // Star sum over a hub block: leg i carries ξ_i = t·m_i·m_{i+1}.
            let legs: Vec<_> = (0..3)
                .map(|i| theta_kernel(t * ms[i] * ms[(i + 1) % 3], l))
                .collect::<Result<_, _>>()?;
            let nb = l * l;
            let sub = offset_sub_table(l);
            let mut values = vec![Complex64::default(); nb * nb];
            for d2 in 0..nb {
                for d3 in 0..nb {
                    let mut acc = Complex64::default();
                    for b in 0..nb {
                        // Θ is even, so Θ(a_i - b) = Θ(b - a_i); use b ⊖ d.
                        acc += legs[0].values()[b]
                            * legs[1].values()[sub[d2 * nb + b]]
                            * legs[2].values()[sub[d3 * nb + b]];
                    }
                    values[d2 * nb + d3] = pref * acc;
                }
            }
            BlockTensor { l, rank: 2, values }
        }
        _ => return Err(PrimitiveError::UnsupportedLength(n)),
    };
    Ok(KTensor {
        sigma: sigma.to_vec(),
        tensor,
    })
}

/// Table `sub[a·nb + b] = flat(a ⊖ b)` of componentwise wrapped
/// differences of block offsets.
fn offset_sub_table(l: usize) -> Vec<usize> {
    let nb = l * l;
    let mut sub = vec![0usize; nb * nb];
    for a in 0..nb {
        let (a1, a2) = (a / l, a % l);
        for b in 0..nb {
            let (b1, b2) = (b / l, b % l);
            sub[a * nb + b] = ((a1 + l - b1) % l) * l + (a2 + l - b2) % l;
        }
    }
    sub
}

/// Table `add[v·nb + u] = flat(u ⊕ v)`, one contiguous row per shift `v`.
fn offset_add_table(l: usize) -> Vec<usize> {
    let nb = l * l;
    let mut add = vec![0usize; nb * nb];
    for v in 0..nb {
        let (v1, v2) = (v / l, v % l);
        for u in 0..nb {
            let (u1, u2) = (u / l, u % l);
            add[v * nb + u] = ((u1 + v1) % l) * l + (u2 + v2) % l;
        }
    }
    add
}

/// Flat offsets of the five-point block stencil.
fn stencil_flats(l: usize) -> [usize; 5] {
    [
        0,
        l, // (1, 0)
        (l - 1) * l,
        1,
        l - 1,
    ]
}

/// One cut of a word: positions `k < l` (1-based) and the closure indices
/// of the two glued pieces.
struct PairRule {
    k: usize,
    l: usize,
    right: usize,
    left: usize,
}

/// The glue-closed word system driving the flow.
struct GlueSystem {
    nb: usize,
    words: Vec<Vec<Sign>>,
    rules: Vec<Vec<PairRule>>,
    add: Vec<usize>,
    sub: Vec<usize>,
    stencil: [usize; 5],
}

impl GlueSystem {
    fn build(sigma: &[Sign], l: usize) -> GlueSystem {
        let words = sign_closure(sigma);
        let index: HashMap<&[Sign], usize> = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.as_slice(), i))
            .collect();
        let mut rules = Vec::with_capacity(words.len());
        for w in &words {
            let n = w.len();
            let mut list = Vec::new();
            for k in 1..n {
                for lc in (k + 1)..=n {
                    let right = w[k - 1..lc].to_vec();
                    let mut left = w[lc - 1..].to_vec();
                    left.extend_from_slice(&w[..k]);
                    list.push(PairRule {
                        k,
                        l: lc,
                        right: index[right.as_slice()],
                        left: index[left.as_slice()],
                    });
                }
            }
            rules.push(list);
        }
        GlueSystem {
            nb: l * l,
            words,
            rules,
            add: offset_add_table(l),
            sub: offset_sub_table(l),
            stencil: stencil_flats(l),
        }
    }

    fn tensor_len(&self, word_idx: usize) -> usize {
        self.nb.pow(self.words[word_idx].len() as u32 - 1)
    }

    /// Stencil convolution over the last (glue) slot:
    /// `Φ(.., c) = (1/5) Σ_step κ(.., c ⊖ step)`.
    fn stencil_conv_last(&self, vals: &[Complex64]) -> Vec<Complex64> {
        let nb = self.nb;
        let mut out = vec![Complex64::default(); vals.len()];
        for (chunk, out_chunk) in vals.chunks(nb).zip(out.chunks_mut(nb)) {
            for c in 0..nb {
                let mut acc = Complex64::default();
                for &step in &self.stencil {
                    acc += chunk[self.sub[c * nb + step]];
                }
                out_chunk[c] = acc / 5.0;
            }
        }
        out
    }

    /// Quadratic flow right-hand side for every word tensor, evaluated at
    /// reduced block tuples `a = (0, d_2, .., d_n)`.
    fn rhs(&self, state: &[Vec<Complex64>]) -> Vec<Vec<Complex64>> {
        let nb = self.nb;
        let phis: Vec<Vec<Complex64>> = state.iter().map(|v| self.stencil_conv_last(v)).collect();
        let mut out: Vec<Vec<Complex64>> = Vec::with_capacity(state.len());
        let mut a = [0usize; 8];
        for (wi, word) in self.words.iter().enumerate() {
            let nw = word.len();
            let size = self.tensor_len(wi);
            let mut acc = vec![Complex64::default(); size];
            if nw >= 2 {
                for rule in &self.rules[wi] {
                    let right_vals = &state[rule.right];
                    let left_phi = &phis[rule.left];
                    for (flat, slot) in acc.iter_mut().enumerate() {
                        // Decode the reduced tuple: a[0] = 0, last slot
                        // fastest.
                        let mut f = flat;
                        for pos in (1..nw).rev() {
                            a[pos] = f % nb;
                            f /= nb;
                        }
                        a[0] = 0;
                        let base_r = a[rule.k - 1];
                        let mut idx_r = 0;
                        for &ap in &a[rule.k..rule.l - 1] {
                            idx_r = idx_r * nb + self.sub[ap * nb + base_r];
                        }
                        let base_l = a[rule.l - 1];
                        let mut idx_l = 0;
                        for &ap in &a[rule.l..nw] {
                            idx_l = idx_l * nb + self.sub[ap * nb + base_l];
                        }
                        for &ap in &a[..rule.k - 1] {
                            idx_l = idx_l * nb + self.sub[ap * nb + base_l];
                        }
                        let shift = self.sub[base_r * nb + base_l];
                        let add_row = &self.add[shift * nb..(shift + 1) * nb];
                        let right_row = &right_vals[idx_r * nb..(idx_r + 1) * nb];
                        let left_row = &left_phi[idx_l * nb..(idx_l + 1) * nb];
                        let mut term = Complex64::default();
                        for (u, &rv) in right_row.iter().enumerate() {
                            term += rv * left_row[add_row[u]];
                        }
                        *slot += term;
                    }
                }
            }
            out.push(acc);
        }
        out
    }
}

type State = Vec<Vec<Complex64>>;

fn state_axpy(y: &State, c: f64, x: &State) -> State {
    y.iter()
        .zip(x)
        .map(|(yv, xv)| yv.iter().zip(xv).map(|(&a, &b)| a + c * b).collect())
        .collect()
}

fn rk4_integrate(sys: &GlueSystem, init: &State, t_final: f64, steps: usize) -> State {
    let h = t_final / steps as f64;
    let mut y = init.clone();
    for _ in 0..steps {
        let k1 = sys.rhs(&y);
        let k2 = sys.rhs(&state_axpy(&y, h / 2.0, &k1));
        let k3 = sys.rhs(&state_axpy(&y, h / 2.0, &k2));
        let k4 = sys.rhs(&state_axpy(&y, h, &k3));
        let mut next = state_axpy(&y, h / 6.0, &k1);
        next = state_axpy(&next, h / 3.0, &k2);
        next = state_axpy(&next, h / 3.0, &k3);
        next = state_axpy(&next, h / 6.0, &k4);
        y = next;
    }
    y
}

/// The evolved family: one reduced tensor per word in the glue closure.
#[derive(Debug, Clone)]
pub struct FlowFamily {
    l: usize,
    e: f64,
    t: f64,
    m_e: Complex64,
    eta_t: f64,
    /// Steps of the accepted integration run.
    pub steps: usize,
    /// Relative change between the last two step-doublings.
    pub achieved_rel: f64,
    tensors: HashMap<Vec<Sign>, KTensor>,
}

impl FlowFamily {
    pub fn l(&self) -> usize {
        self.l
    }

    pub fn e(&self) -> f64 {
        self.e
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn m_e(&self) -> Complex64 {
        self.m_e
    }

    pub fn eta_t(&self) -> f64 {
        self.eta_t
    }

    pub fn tensor(&self, sigma: &[Sign]) -> Option<&KTensor> {
        self.tensors.get(sigma)
    }

    pub fn words(&self) -> impl Iterator<Item = &[Sign]> {
        self.tensors.keys().map(|w| w.as_slice())
    }

    /// Physical value `K_{t,σ,a}` for band width `w`.
    pub fn value(
        &self,
        sigma: &[Sign],
        blocks: &[BlockIndex],
        w: usize,
    ) -> Result<Complex64, PrimitiveError> {
        let kt = self
            .tensor(sigma)
            .ok_or_else(|| PrimitiveError::MissingWord(word_string(sigma)))?;
        if blocks.len() != kt.n() {
            return Err(PrimitiveError::RankMismatch {
                expected: kt.n(),
                got: blocks.len(),
            });
        }
        Ok(kt.value(blocks, w))
    }
}

/// Integrates the primitive flow from `t = 0` to `t`, refining the step
/// count until the seed word's tensor changes by at most `rel_tol` between
/// consecutive doublings.
pub fn k_evolve(
    l: usize,
    e: f64,
    sigma: &[Sign],
    t: f64,
    rel_tol: f64,
) -> Result<FlowFamily, PrimitiveError> {
    let n = sigma.len();
    if n == 0 || n > 4 {
        return Err(PrimitiveError::UnsupportedLength(n));
    }
    if !(0.0..1.0).contains(&t) {
        return Err(PrimitiveError::BadFlowTime(t));
    }
    let m_e = boundary_m(e)?;
    let sys = GlueSystem::build(sigma, l);
    let init: State = sys
        .words
        .iter()
        .enumerate()
        .map(|(wi, w)| {
            let weight: Complex64 = w.iter().map(|&s| sign_m(m_e, s)).product();
            let mut v = vec![Complex64::default(); sys.tensor_len(wi)];
            v[0] = weight;
            v
        })
        .collect();
    let pack = |state: State, steps: usize, rel: f64| -> FlowFamily {
        let tensors = sys
            .words
            .iter()
            .zip(state)
            .map(|(w, values)| {
                (
                    w.clone(),
                    KTensor {
                        sigma: w.clone(),
                        tensor: BlockTensor {
                            l,
                            rank: w.len() - 1,
                            values,
                        },
                    },
                )
            })
            .collect();
        FlowFamily {
            l,
            e,
            t,
            m_e,
            eta_t: (1.0 - t) * m_e.im,
            steps,
            achieved_rel: rel,
            tensors,
        }
    };
    if t == 0.0 {
        return Ok(pack(init, 0, 0.0));
    }
    let mut steps = 8usize.max((t / 0.05).ceil() as usize);
    let mut prev = rk4_integrate(&sys, &init, t, steps);
    loop {
        steps *= 2;
        let cur = rk4_integrate(&sys, &init, t, steps);
        let scale = cur[0]
            .iter()
            .map(|v| v.norm())
            .fold(0.0f64, f64::max)
            .max(1e-300);
        let diff = cur[0]
            .iter()
            .zip(&prev[0])
            .map(|(a, b)| (a - b).norm())
            .fold(0.0f64, f64::max);
        let rel = diff / scale;
        if rel <= rel_tol {
            return Ok(pack(cur, steps, rel));
        }
        if steps >= 4096 {
            return Err(PrimitiveError::NoConvergence {
                steps,
                rel_err: rel,
            });
        }
        prev = cur;
    }
}

/// Shared core of the Ward residual: compares the glue-summed tensor
/// against the sign-split pair, all at the reduced level.
fn ward_core(target: &KTensor, plus: &KTensor, minus: &KTensor, eta_t: f64) -> f64 {
    let n = target.n();
    let l = target.tensor.l;
    let nb = l * l;
    let prefixes = nb.pow(n as u32 - 2);
    let denom = Complex64::new(0.0, 2.0 * eta_t);
    let mut max_diff = 0.0f64;
    let mut scale = 0.0f64;
    for p in 0..prefixes {
        let mut lhs = Complex64::default();
        for d in 0..nb {
            lhs += target.tensor.values[p * nb + d];
        }
        let rhs = (plus.tensor.values[p] - minus.tensor.values[p]) / denom;
        max_diff = max_diff.max((lhs - rhs).norm());
        scale = scale.max(lhs.norm()).max(rhs.norm());
    }
    if scale == 0.0 {
        0.0
    } else {
        max_diff / scale
    }
}

fn ward_words(sigma: &[Sign]) -> Result<(Vec<Sign>, Vec<Sign>), PrimitiveError> {
    let n = sigma.len();
    if n < 2 || sigma[0] == sigma[n - 1] {
        return Err(PrimitiveError::BadWardSignature);
    }
    let mut plus = vec![Sign::Plus];
    plus.extend_from_slice(&sigma[1..n - 1]);
    let mut minus = vec![Sign::Minus];
    minus.extend_from_slice(&sigma[1..n - 1]);
    Ok((plus, minus))
}

/// Relative residual of the glue-sum identity
/// `Σ_{d_n} k̂_σ = (2i·η_t)^{-1}·(k̂_{(+,σ_2..)} - k̂_{(-,σ_2..)})`
/// for a tensor of the evolved family (short words fall back to closed
/// forms when the closure does not contain them).
pub fn k_ward_residual(family: &FlowFamily, sigma: &[Sign]) -> Result<f64, PrimitiveError> {
    let (wp, wm) = ward_words(sigma)?;
    let target = family
        .tensor(sigma)
        .ok_or_else(|| PrimitiveError::MissingWord(word_string(sigma)))?;
    let fetch = |w: &[Sign]| -> Result<KTensor, PrimitiveError> {
        match family.tensor(w) {
            Some(t) => Ok(t.clone()),
            None => k_closed(family.l, family.m_e, family.t, w),
        }
    };
    let plus = fetch(&wp)?;
    let minus = fetch(&wm)?;
    Ok(ward_core(target, &plus, &minus, family.eta_t))
}

/// Ward residual of the closed forms alone (exact identity, any bulk `e`).
pub fn k_ward_residual_closed(
    l: usize,
    e: f64,
    t: f64,
    sigma: &[Sign],
) -> Result<f64, PrimitiveError> {
    let (wp, wm) = ward_words(sigma)?;
    let m_e = boundary_m(e)?;
    let target = k_closed(l, m_e, t, sigma)?;
    let plus = k_closed(l, m_e, t, &wp)?;
    let minus = k_closed(l, m_e, t, &wm)?;
    Ok(ward_core(&target, &plus, &minus, (1.0 - t) * m_e.im))
}

/// The scale-free sum rule `|Σ_d k̂|·η_t^{n-1}`, bounded by an order-one
/// constant for every word via repeated glue-sum reduction.
pub fn k_sum_rule(tensor: &KTensor, eta_t: f64) -> f64 {
    tensor.tensor.sum().norm() * eta_t.powi(tensor.n() as i32 - 1)
}

/// The mass-mode profile `ϑ(d_2..d_n) = (1-t)^{n-1}·∏_i Θ_t(d_i)`,
/// normalized so that its full sum is exactly 1.
pub fn vartheta_profile(l: usize, t: f64, rank: usize) -> Result<BlockTensor, PrimitiveError> {
    if !(0.0..1.0).contains(&t) {
        return Err(PrimitiveError::BadFlowTime(t));
    }
    let th = theta_kernel(Complex64::new(t, 0.0), l)?;
    let nb = l * l;
    let scale = (1.0 - t).powi(rank as i32);
    let mut values = vec![Complex64::new(scale, 0.0); nb.pow(rank as u32)];
    for (flat, v) in values.iter_mut().enumerate() {
        let mut f = flat;
        for _ in 0..rank {
            *v *= th.values()[f % nb];
            f /= nb;
        }
    }
    Ok(BlockTensor { l, rank, values })
}

/// Projection onto the mass mode: the sum over all free block indices.
pub fn p_project(a: &BlockTensor) -> Complex64 {
    a.sum()
}

/// Complementary sum-zero part `Q∘A = A - ϑ_t·(P∘A)`; `P∘(Q∘A) = 0` and
/// `Q∘Q = Q` exactly.
pub fn q_sumzero(a: &BlockTensor, t: f64) -> Result<BlockTensor, PrimitiveError> {
    let profile = vartheta_profile(a.l, t, a.rank)?;
    let mass = p_project(a);
    let values = a
        .values
        .iter()
        .zip(&profile.values)
        .map(|(&v, &p)| v - p * mass)
        .collect();
    Ok(BlockTensor {
        l: a.l,
        rank: a.rank,
        values,
    })
}

/// Per-leg transfer kernel table: inverse transform of
/// `(1 - s·ξ·λ(p))/(1 - t·ξ·λ(p))`.
fn ratio_kernel(s: f64, t: f64, xi: Complex64, l: usize) -> Result<Vec<Complex64>, PrimitiveError> {
    let one = Complex64::new(1.0, 0.0);
    let mut freq = vec![Complex64::default(); l * l];
    for p1 in 0..l {
        for p2 in 0..l {
            let lam = stencil_symbol(p1, p2, l);
            let denom = one - t * xi * lam;
            if denom.norm() <= 1e-12 * (1.0 + (t * xi).norm()) {
                return Err(PropagatorError::Singular(p1, p2).into());
            }
            freq[p1 * l + p2] = (one - s * xi * lam) / denom;
        }
    }
    Ok(kernel_from_even_symbol(freq, l))
}

/// Applies the leg-factorized transfer operator `U_{s,t,σ}` to a reduced
/// tensor: each of the `n = rank + 1` legs is convolved with the ratio
/// kernel for `ξ_i = m_i·m_{i+1}` (cyclic).
pub fn u_apply(
    a: &BlockTensor,
    s: f64,
    t: f64,
    m_e: Complex64,
    sigma: &[Sign],
) -> Result<BlockTensor, PrimitiveError> {
    let n = a.rank + 1;
    if sigma.len() != n {
        return Err(PrimitiveError::RankMismatch {
            expected: n,
            got: sigma.len(),
        });
    }
    let l = a.l;
    let nb = l * l;
    let ms: Vec<Complex64> = sigma.iter().map(|&sg| sign_m(m_e, sg)).collect();
    let legs: Vec<Vec<Complex64>> = (0..n)
        .map(|i| ratio_kernel(s, t, ms[i] * ms[(i + 1) % n], l))
        .collect::<Result<_, _>>()?;
    let sub = offset_sub_table(l);
    // Combined reduced kernel R(f_2..f_n) = Σ_c u_1(-c)·∏_j u_j(f_j - c):
    // the base-point leg is summed out by translation invariance.
    let mut combined = vec![Complex64::default(); nb.pow(a.rank as u32)];
    for (flat, slot) in combined.iter_mut().enumerate() {
        let mut digits = [0usize; 8];
        let mut f = flat;
        for j in (0..a.rank).rev() {
            digits[j] = f % nb;
            f /= nb;
        }
        let mut acc = Complex64::default();
        for c in 0..nb {
            let mut prod = legs[0][sub[c]]; // u_1(0 - c), evenness-free form
            for j in 0..a.rank {
                prod *= legs[j + 1][sub[digits[j] * nb + c]];
            }
            acc += prod;
        }
        *slot = acc;
    }
    // Circular convolution out = R ⋆ κ over all rank slots.
    let mut out = vec![Complex64::default(); a.values.len()];
    let mut fd = [0usize; 8];
    let mut ed = [0usize; 8];
    for (fo, slot) in out.iter_mut().enumerate() {
        let mut f = fo;
        for j in (0..a.rank).rev() {
            fd[j] = f % nb;
            f /= nb;
        }
        let mut acc = Complex64::default();
        for (eo, &kv) in a.values.iter().enumerate() {
            let mut e = eo;
            for j in (0..a.rank).rev() {
                ed[j] = e % nb;
                e /= nb;
            }
            let mut idx = 0;
            for j in 0..a.rank {
                idx = idx * nb + sub[fd[j] * nb + ed[j]];
            }
            acc += combined[idx] * kv;
        }
        *slot = acc;
    }
    Ok(BlockTensor {
        l,
        rank: a.rank,
        values: out,
    })
}
