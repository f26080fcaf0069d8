//! Cross-module consistency at medium size: the folded block solver against
//! the eigendecomposition route, exact loop identities on sampled matrices,
//! and the integrated flow against its closed forms on larger lattices than
//! the unit tests use.

use bandlab_core::lattice::{BlockGeometry, BlockIndex};
use bandlab_core::loops::{eval_loop, t_matrix, ward_residual, LoopSpec, Sign, TKind};
use bandlab_core::model::{flow_point, VarianceProfile};
use bandlab_core::primitive::{k_closed, k_evolve};
use bandlab_core::sampler::{sample_band, SeedSpec};
use bandlab_core::spectra::eigensystem;
use bandlab_core::spectra::rgf::FoldedResolvent;
use num_complex::Complex64;

/// The sliced block solver and the eigendecomposition produce the same
/// two-leg loop table.
#[test]
fn folded_solver_matches_eigen_t_matrix() {
    let geom = BlockGeometry::new(4, 4).unwrap();
    let prof = VarianceProfile::new(geom);
    let s = sample_band(
        &prof,
        SeedSpec {
            master: 77,
            index: 0,
        },
    );
    let z = Complex64::new(0.4, 0.2);
    let eig = eigensystem(&s).unwrap();
    let tm = t_matrix(&eig, z, TKind::PlusMinus).unwrap();

    let folded = FoldedResolvent::new(&s, z).unwrap();
    let l = geom.l();
    let w4 = (geom.block_size() as f64).powi(2);
    for a in geom.blocks() {
        let cols = geom.block_sites(a);
        let g_cols = folded.solve_columns(&cols);
        // Accumulate W^{-4}·Σ_{x∈I_a, y∈I_b} |G_yx|² per block b.
        let mut acc = vec![0.0f64; l * l];
        for j in 0..cols.len() {
            for y in 0..s.n() {
                acc[geom.block_of_flat(y).flat(l)] += g_cols[(y, j)].norm_sqr();
            }
        }
        for b in geom.blocks() {
            let direct = acc[b.flat(l)] / w4;
            let via_eig = tm.entry(a, b).re;
            assert!(
                (direct - via_eig).abs() <= 1e-10 * (1.0 + via_eig),
                "block ({a:?},{b:?}): {direct} vs {via_eig}"
            );
        }
    }
}

/// Loop-level Ward identities hold to near round-off on a 256-site sample
/// for both two- and three-leg signatures.
#[test]
fn ward_identities_medium_sample() {
    let geom = BlockGeometry::new(4, 4).unwrap();
    let prof = VarianceProfile::new(geom);
    let s = sample_band(
        &prof,
        SeedSpec {
            master: ide(),
            index: 3,
        },
    );
    let eig = eigensystem(&s).unwrap();
    for &(e, t) in &[(0.0, 0.5), (1.0, 0.3)] {
        let params = flow_point(e, t).unwrap();
        let r2 = ward_residual(
            &eig,
            &params,
            &[Sign::Plus, Sign::Minus],
            &[BlockIndex(2, 1)],
        )
        .unwrap();
        assert!(r2 <= 1e-11, "n=2 residual {r2} at e={e}, t={t}");
        let r3 = ward_residual(
            &eig,
            &params,
            &[Sign::Plus, Sign::Minus, Sign::Minus],
            &[BlockIndex(0, 3), BlockIndex(1, 1)],
        )
        .unwrap();
        assert!(r3 <= 1e-11, "n=3 residual {r3} at e={e}, t={t}");
    }
}

const fn ide() -> u64 {
    0x1dea
}

/// A sampled loop at two block separations agrees in order of magnitude
/// with its deterministic tensor — a smoke check that the two sides of the
/// comparison are wired consistently (tight statistical comparisons live in
/// the acceptance suite).
#[test]
fn loop_and_tensor_same_scale() {
    let geom = BlockGeometry::new(6, 4).unwrap();
    let prof = VarianceProfile::new(geom);
    let (e, t) = (0.0, 0.5);
    let params = flow_point(e, t).unwrap();
    let k2 = k_closed(geom.l(), params.m_e, t, &[Sign::Plus, Sign::Minus]).unwrap();
    let blocks = [BlockIndex(0, 0), BlockIndex(0, 0)];
    let predicted = k2.value(&blocks, geom.w());
    let samples = 20;
    let mut mean = Complex64::default();
    for index in 0..samples {
        let s = sample_band(
            &prof,
            SeedSpec {
                master: 0x10c4,
                index,
            },
        );
        let eig = eigensystem(&s).unwrap();
        let spec = LoopSpec::new(vec![Sign::Plus, Sign::Minus], blocks.to_vec()).unwrap();
        mean += eval_loop(&eig, &params, &spec).unwrap();
    }
    mean /= samples as f64;
    let ratio = mean.norm() / predicted.norm();
    assert!(
        (0.5..2.0).contains(&ratio),
        "sampled {mean} vs predicted {predicted} (ratio {ratio})"
    );
}

/// The integrated flow reproduces the closed forms on lattices larger than
/// the unit-test size, for both word lengths used downstream.
#[test]
fn evolved_flow_matches_closed_forms_medium() {
    for &(l, e, t) in &[(4usize, 0.3, 0.5), (8, 0.3, 0.5)] {
        let sigma = [Sign::Plus, Sign::Minus];
        let fam = k_evolve(l, e, &sigma, t, 1e-8).unwrap();
        let closed = k_closed(l, fam.m_e(), t, &sigma).unwrap();
        let got = fam.tensor(&sigma).unwrap();
        let scale = closed.tensor().max_abs();
        for (a, b) in got.tensor().values().iter().zip(closed.tensor().values()) {
            assert!((a - b).norm() <= 1e-7 * scale, "l={l}: {a} vs {b}");
        }
    }
    let sigma = [Sign::Plus, Sign::Plus, Sign::Minus];
    let fam = k_evolve(4, 0.0, &sigma, 0.3, 1e-7).unwrap();
    let closed = k_closed(4, fam.m_e(), 0.3, &sigma).unwrap();
    let got = fam.tensor(&sigma).unwrap();
    let scale = closed.tensor().max_abs();
    for (a, b) in got.tensor().values().iter().zip(closed.tensor().values()) {
        assert!((a - b).norm() <= 1e-6 * scale, "{a} vs {b}");
    }
}
