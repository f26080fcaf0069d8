//! Reproducible Gaussian sampling of Hermitian ensembles.
//!
//! Entries are generated counter-style: a ChaCha12 cipher is keyed from the
//! master seed, each sample index gets its own cipher stream, and each matrix
//! entry `(x, y)` (upper triangle, `x <= y`) reads exactly two 64-bit words
//! at word position `4·(x·N + y)`, independent of iteration order. A draw is
//! therefore a pure function of `(profile, master, index)`; skipped entries
//! (outside the band support) cost nothing; and parallel sample generation
//! never shares state.
//!
//! Streams: sample `i` uses cipher stream `2i` for the matrix body and
//! stream `2i + 1` for its Ornstein-Uhlenbeck refresh noise, so interpolated
//! and initial matrices stay independent.
//!
//! Conventions: off-diagonal entries are complex Gaussian with
//! `E|H_xy|² = S_xy` (real and imaginary parts independent, variance
//! `S_xy/2` each); diagonal entries are real Gaussians with variance
//! `S_xx`. Both normals of a Box-Muller pair are consumed per entry, with
//! the uniform mapped into `(0, 1]` so the logarithm never sees zero.
//!
//! The Ornstein-Uhlenbeck flow `dH_t = -H_t/2 dt + N^{-1/2} dB_t` is sampled
//! at its exact marginal: `H_t = e^{-t/2}·H_0 + (1 - e^{-t})^{1/2}·Ξ` with
//! `Ξ` an independent flat-profile (GUE) draw, so the time-`t` variance
//! profile is `e^{-t}·S_xy + (1 - e^{-t})/N`.

use crate::lattice::{BlockGeometry, BlockIndex};
use crate::model::VarianceProfile;
use faer::Mat;
use num_complex::Complex64;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use std::io::{self, Read, Write};

/// Complex matrix element type shared with the linear algebra backend.
pub type C64 = Complex64;

/// Identifies one draw: a master seed for the whole run and the sample index
/// within the run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedSpec {
    pub master: u64,
    pub index: u64,
}

/// Which law a sample was drawn from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EnsembleTag {
    /// Block band profile `S`.
    Band,
    /// Flat profile `1/N`.
    Gue,
    /// Ornstein-Uhlenbeck marginal at the given time, started from a band
    /// draw.
    Ou { t: f64 },
}

/// One Hermitian draw.
#[derive(Debug, Clone)]
pub struct BandSample {
    pub geom: BlockGeometry,
    pub h: Mat<C64>,
    pub seed: SeedSpec,
    pub tag: EnsembleTag,
}

impl BandSample {
    /// Matrix dimension `N`.
    pub fn n(&self) -> usize {
        self.geom.n_sites()
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Positioned Gaussian source: one cipher stream, addressed by entry rank.
struct EntryRng {
    rng: ChaCha12Rng,
    n: u128,
}

impl EntryRng {
    /// `noise = false` for the matrix body stream, `true` for the OU refresh
    /// stream of the same sample index.
    fn new(seed: SeedSpec, noise: bool, n: usize) -> Self {
        let mut state = seed.master;
        let mut key = [0u8; 32];
        for chunk in key.chunks_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut rng = ChaCha12Rng::from_seed(key);
        rng.set_stream(seed.index.wrapping_mul(2).wrapping_add(noise as u64));
        EntryRng { rng, n: n as u128 }
    }

    /// Two standard normals for entry `(x, y)`, read at a fixed counter
    /// position so the result does not depend on visit order.
    fn normal_pair(&mut self, x: usize, y: usize) -> (f64, f64) {
        let rank = x as u128 * self.n + y as u128;
        self.rng.set_word_pos(rank * 4);
        let w1 = self.rng.next_u64();
        let w2 = self.rng.next_u64();
        // 53-bit mantissas; u1 ∈ (0, 1] keeps the logarithm finite.
        const SCALE: f64 = 1.0 / 9007199254740992.0; // 2^-53
        let u1 = ((w1 >> 11) + 1) as f64 * SCALE;
        let u2 = (w2 >> 11) as f64 * SCALE;
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        (r * theta.cos(), r * theta.sin())
    }
}

/// Writes the Gaussian value for one upper-triangle entry into `h` (and its
/// mirror), given the entry variance `s`.
fn put_entry(h: &mut Mat<C64>, rng: &mut EntryRng, x: usize, y: usize, s: f64) {
    let (g1, g2) = rng.normal_pair(x, y);
    if x == y {
        h[(x, x)] = Complex64::new(g1 * s.sqrt(), 0.0);
    } else {
        let v = Complex64::new(g1, g2) * (s / 2.0).sqrt();
        h[(x, y)] = v;
        h[(y, x)] = v.conj();
    }
}

/// Draws one Hermitian matrix with the block band variance profile.
/// Entries outside the 5-block support are exactly zero.
pub fn sample_band(profile: &VarianceProfile, seed: SeedSpec) -> BandSample {
    let geom = *profile.geom();
    let n = geom.n_sites();
    let mut h = Mat::<C64>::zeros(n, n);
    let mut rng = EntryRng::new(seed, false, n);
    for x in 0..n {
        let a = geom.block_of_flat(x);
        for &(d1, d2) in VarianceProfile::STENCIL.iter() {
            let b = BlockIndex::wrap(a.0 as i64 + d1, a.1 as i64 + d2, geom.l());
            for y in geom.block_sites(b) {
                if y < x {
                    continue;
                }
                put_entry(&mut h, &mut rng, x, y, profile.entry_flat(x, y));
            }
        }
    }
    BandSample {
        geom,
        h,
        seed,
        tag: EnsembleTag::Band,
    }
}

/// Draws one GUE matrix (`E|H_xy|² = E H_xx² = 1/N`) of dimension
/// `N = geom.n_sites()`. The geometry only labels blocks for downstream
/// block statistics; the law is block-independent.
pub fn sample_gue(geom: &BlockGeometry, seed: SeedSpec) -> BandSample {
    let n = geom.n_sites();
    let s = 1.0 / n as f64;
    let mut h = Mat::<C64>::zeros(n, n);
    let mut rng = EntryRng::new(seed, false, n);
    for x in 0..n {
        for y in x..n {
            put_entry(&mut h, &mut rng, x, y, s);
        }
    }
    BandSample {
        geom: *geom,
        h,
        seed,
        tag: EnsembleTag::Gue,
    }
}

/// Draws from the exact time-`t` Ornstein-Uhlenbeck marginal started at
/// `h0`: `e^{-t/2}·h0 + (1 - e^{-t})^{1/2}·Ξ` with `Ξ` an independent flat
/// `1/N` draw taken from the refresh stream of `seed`.
///
/// `t = 0` returns `h0`'s matrix unchanged (the decay factor is exactly 1
/// and the noise amplitude exactly 0).
pub fn ou_interpolate(h0: &BandSample, t: f64, seed: SeedSpec) -> BandSample {
    assert!(t >= 0.0, "OU time must be nonnegative, got {t}");
    let n = h0.n();
    let decay = (-t / 2.0).exp();
    let amp = (1.0 - (-t).exp()).sqrt();
    let mut h = Mat::<C64>::zeros(n, n);
    if amp > 0.0 {
        let s = 1.0 / n as f64;
        let mut rng = EntryRng::new(seed, true, n);
        for x in 0..n {
            for y in x..n {
                put_entry(&mut h, &mut rng, x, y, s);
            }
        }
    }
    for x in 0..n {
        for y in 0..n {
            h[(x, y)] = decay * h0.h[(x, y)] + amp * h[(x, y)];
        }
    }
    BandSample {
        geom: h0.geom,
        h,
        seed,
        tag: EnsembleTag::Ou { t },
    }
}

/// Serializes a sample: header of four little-endian u64 (`W`, `L`, master
/// seed, sample index) followed by the lower triangle (rows `x`, columns
/// `y <= x`) as little-endian `f64` pairs (re, im).
pub fn write_sample<W: Write>(sample: &BandSample, mut out: W) -> io::Result<()> {
    for v in [
        sample.geom.w() as u64,
        sample.geom.l() as u64,
        sample.seed.master,
        sample.seed.index,
    ] {
        out.write_all(&v.to_le_bytes())?;
    }
    let n = sample.n();
    for x in 0..n {
        for y in 0..=x {
            let v = sample.h[(x, y)];
            out.write_all(&v.re.to_le_bytes())?;
            out.write_all(&v.im.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Reads a sample back; the mirror triangle is reconstructed by conjugation.
/// The ensemble tag is not part of the format and defaults to `Band`.
pub fn read_sample<R: Read>(mut input: R) -> io::Result<BandSample> {
    let mut u64buf = [0u8; 8];
    let mut next_u64 = |input: &mut R| -> io::Result<u64> {
        input.read_exact(&mut u64buf)?;
        Ok(u64::from_le_bytes(u64buf))
    };
    let w = next_u64(&mut input)? as usize;
    let l = next_u64(&mut input)? as usize;
    let master = next_u64(&mut input)?;
    let index = next_u64(&mut input)?;
    let geom = BlockGeometry::new(w, l)
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))?;
    let n = geom.n_sites();
    let mut h = Mat::<C64>::zeros(n, n);
    let mut f64buf = [0u8; 8];
    for x in 0..n {
        for y in 0..=x {
            input.read_exact(&mut f64buf)?;
            let re = f64::from_le_bytes(f64buf);
            input.read_exact(&mut f64buf)?;
            let im = f64::from_le_bytes(f64buf);
            h[(x, y)] = Complex64::new(re, im);
            if x != y {
                h[(y, x)] = Complex64::new(re, -im);
            }
        }
    }
    Ok(BandSample {
        geom,
        h,
        seed: SeedSpec { master, index },
        tag: EnsembleTag::Band,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_profile() -> VarianceProfile {
        VarianceProfile::new(BlockGeometry::new(2, 3).unwrap())
    }

    #[test]
    fn deterministic_and_index_separated() {
        let prof = small_profile();
        let a = sample_band(
            &prof,
            SeedSpec {
                master: 7,
                index: 3,
            },
        );
        let b = sample_band(
            &prof,
            SeedSpec {
                master: 7,
                index: 3,
            },
        );
        let c = sample_band(
            &prof,
            SeedSpec {
                master: 7,
                index: 4,
            },
        );
        let d = sample_band(
            &prof,
            SeedSpec {
                master: 8,
                index: 3,
            },
        );
        let n = a.n();
        let mut max_ab = 0.0f64;
        let mut max_ac = 0.0f64;
        let mut max_ad = 0.0f64;
        for x in 0..n {
            for y in 0..n {
                max_ab = max_ab.max((a.h[(x, y)] - b.h[(x, y)]).norm());
                max_ac = max_ac.max((a.h[(x, y)] - c.h[(x, y)]).norm());
                max_ad = max_ad.max((a.h[(x, y)] - d.h[(x, y)]).norm());
            }
        }
        assert_eq!(max_ab, 0.0);
        assert!(max_ac > 1e-3);
        assert!(max_ad > 1e-3);
    }

    #[test]
    fn hermitian_and_support_exact() {
        let prof = small_profile();
        let s = sample_band(
            &prof,
            SeedSpec {
                master: 1,
                index: 0,
            },
        );
        let n = s.n();
        for x in 0..n {
            assert_eq!(s.h[(x, x)].im, 0.0);
            for y in 0..n {
                assert_eq!(s.h[(x, y)], s.h[(y, x)].conj());
                if prof.entry_flat(x, y) == 0.0 {
                    assert_eq!(s.h[(x, y)], Complex64::new(0.0, 0.0));
                } else {
                    // In-band entries vanish with probability zero.
                    assert!(s.h[(x, y)].norm() > 0.0);
                }
            }
        }
        // L = 3 has no blocks at distance > 1, so take L = 4 for a true
        // out-of-band check.
        let far = VarianceProfile::new(BlockGeometry::new(2, 4).unwrap());
        let s4 = sample_band(
            &far,
            SeedSpec {
                master: 1,
                index: 0,
            },
        );
        let sites0 = far.geom().block_sites(BlockIndex(0, 0));
        let sites_far = far.geom().block_sites(BlockIndex(2, 2));
        for &x in &sites0 {
            for &y in &sites_far {
                assert_eq!(s4.h[(x, y)], Complex64::new(0.0, 0.0));
            }
        }
    }

    #[test]
    fn visit_order_independent() {
        // Reading entry (x, y) directly, out of order, reproduces the
        // full-matrix values: the counter addressing is absolute.
        let prof = small_profile();
        let seed = SeedSpec {
            master: 99,
            index: 5,
        };
        let s = sample_band(&prof, seed);
        let n = s.n();
        let mut rng = EntryRng::new(seed, false, n);
        for (x, y) in [(5usize, 6usize), (0, 0), (10, 12), (3, 3)] {
            let sv = prof.entry_flat(x, y);
            if sv == 0.0 {
                continue;
            }
            let (g1, g2) = rng.normal_pair(x, y);
            let expect = if x == y {
                Complex64::new(g1 * sv.sqrt(), 0.0)
            } else {
                Complex64::new(g1, g2) * (sv / 2.0).sqrt()
            };
            assert_eq!(s.h[(x, y)], expect);
        }
    }

    #[test]
    fn gue_is_dense_hermitian() {
        let geom = BlockGeometry::new(2, 3).unwrap();
        let g = sample_gue(
            &geom,
            SeedSpec {
                master: 2,
                index: 1,
            },
        );
        assert_eq!(g.tag, EnsembleTag::Gue);
        let n = g.n();
        let mut zeros = 0;
        for x in 0..n {
            for y in 0..n {
                assert_eq!(g.h[(x, y)], g.h[(y, x)].conj());
                if g.h[(x, y)].norm() == 0.0 {
                    zeros += 1;
                }
            }
        }
        assert_eq!(zeros, 0);
    }

    #[test]
    fn ou_time_zero_is_identity() {
        let prof = small_profile();
        let h0 = sample_band(
            &prof,
            SeedSpec {
                master: 11,
                index: 2,
            },
        );
        let h = ou_interpolate(&h0, 0.0, h0.seed);
        let n = h0.n();
        for x in 0..n {
            for y in 0..n {
                assert_eq!(h.h[(x, y)], h0.h[(x, y)]);
            }
        }
        assert_eq!(h.tag, EnsembleTag::Ou { t: 0.0 });
    }

    #[test]
    fn ou_noise_stream_differs_from_body() {
        // The refresh noise of sample i must not replay the body of sample i.
        let geom = BlockGeometry::new(2, 3).unwrap();
        let seed = SeedSpec {
            master: 4,
            index: 9,
        };
        let body = sample_gue(&geom, seed);
        let zero = BandSample {
            geom,
            h: Mat::<C64>::zeros(body.n(), body.n()),
            seed,
            tag: EnsembleTag::Band,
        };
        // Large t: marginal ≈ pure refresh noise.
        let refresh = ou_interpolate(&zero, 200.0, seed);
        let mut max_diff = 0.0f64;
        for x in 0..body.n() {
            for y in 0..body.n() {
                max_diff = max_diff.max((refresh.h[(x, y)] - body.h[(x, y)]).norm());
            }
        }
        assert!(max_diff > 1e-3, "streams must be separated");
    }

    #[test]
    fn dump_roundtrip() {
        let prof = small_profile();
        let s = sample_band(
            &prof,
            SeedSpec {
                master: 3,
                index: 7,
            },
        );
        let mut buf = Vec::new();
        write_sample(&s, &mut buf).unwrap();
        // 4 header words + N(N+1)/2 complex entries.
        let n = s.n();
        assert_eq!(buf.len(), 32 + n * (n + 1) / 2 * 16);
        let back = read_sample(buf.as_slice()).unwrap();
        assert_eq!(back.seed, s.seed);
        assert_eq!(back.geom, s.geom);
        for x in 0..n {
            for y in 0..n {
                assert_eq!(back.h[(x, y)], s.h[(x, y)]);
            }
        }
    }
}
