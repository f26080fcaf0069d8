//! `ward`: resolvent summation identities on sampled matrices.
//!
//! For each draw, sums a loop observable over its last block index and
//! compares against the exact two-point reduction; the relative residual is
//! limited only by floating-point roundoff, so this probes the numerics end
//! to end. The same identity is then checked at the deterministic level for
//! both the closed-form and the integrated loop hierarchy.

use super::{bad_value, sigma_string, Ctx, ExpOutput, RunError};
use crate::config::Config;
use crate::report::{fmt_f64, Csv, Probe, Report};
use crate::runner::map_samples;
use bandlab_core::lattice::{BlockGeometry, BlockIndex};
use bandlab_core::loops::{ward_residual, Sign};
use bandlab_core::model::{flow_point, VarianceProfile};
use bandlab_core::primitive::{k_evolve, k_ward_residual, k_ward_residual_closed};
use bandlab_core::sampler::{sample_band, SeedSpec};
use bandlab_core::spectra::eigensystem;

/// The sign words exercised per sample, with a small fixed set of prefix
/// tuples each (the summed index is the last one).
fn probe_set(l: usize) -> Vec<(Vec<Sign>, Vec<Vec<BlockIndex>>)> {
    use Sign::{Minus, Plus};
    let b = |c1: usize, c2: usize| BlockIndex(c1 % l, c2 % l);
    vec![
        (
            vec![Plus, Minus],
            vec![vec![b(0, 0)], vec![b(1, 0)], vec![b(1, 1)]],
        ),
        (
            vec![Plus, Plus, Minus],
            vec![vec![b(0, 0), b(0, 0)], vec![b(0, 0), b(1, 0)]],
        ),
    ]
}

pub fn run(mut cfg: Config, ctx: &Ctx, mut report: Report) -> Result<ExpOutput, RunError> {
    let w = cfg.take_usize("w")?;
    let l = cfg.take_usize("l")?;
    let e = cfg.take_f64("e")?;
    let t = cfg.take_f64("t")?;
    let samples = cfg.take_usize("samples")?;
    let rel_tol = cfg.take_f64_or("rel_tol", 1e-8)?;
    cfg.finish()?;

    let geom = BlockGeometry::new(w, l).map_err(|err| bad_value("w", err))?;
    let params = flow_point(e, t).map_err(|err| bad_value("t", err))?;
    let profile = VarianceProfile::new(geom);
    let probes = probe_set(l);

    let outcome = map_samples(samples, ctx.workers, |i| {
        let sample = sample_band(
            &profile,
            SeedSpec {
                master: ctx.seed,
                index: i as u64,
            },
        );
        let eig = eigensystem(&sample).map_err(|e| e.to_string())?;
        let mut residuals = Vec::new();
        for (sigma, prefixes) in &probes {
            for prefix in prefixes {
                residuals
                    .push(ward_residual(&eig, &params, sigma, prefix).map_err(|e| e.to_string())?);
            }
        }
        Ok(residuals)
    });

    report.n_samples = outcome.n_ok();
    report.n_failed = outcome.failures.len();
    report.degenerate = outcome.n_ok() == 0;

    let mut csv = Csv::new(&["n", "sigma", "a", "residual"]);
    let mut loop_max: f64 = 0.0;
    if !report.degenerate {
        let mut slot = 0usize;
        for (sigma, prefixes) in &probes {
            for prefix in prefixes {
                let worst = outcome
                    .values
                    .iter()
                    .map(|r| r[slot])
                    .fold(0.0f64, f64::max);
                loop_max = loop_max.max(worst);
                csv.row(&[
                    sigma.len().to_string(),
                    sigma_string(sigma),
                    super::blocks_string(prefix),
                    fmt_f64(worst),
                ]);
                slot += 1;
            }
        }
        report.push(Probe::le("loop_ward_residual", loop_max, 0.0, 1e-9));
    }

    // Deterministic identity at both levels, independent of the samples.
    let mut csv_k = Csv::new(&["n", "sigma", "level", "residual"]);
    let mut k_closed_max: f64 = 0.0;
    let mut k_evolved_max: f64 = 0.0;
    for (sigma, _) in &probes {
        let closed = k_ward_residual_closed(l, e, t, sigma).map_err(|err| bad_value("e", err))?;
        let family = k_evolve(l, e, sigma, t, rel_tol).map_err(|err| bad_value("t", err))?;
        let evolved = k_ward_residual(&family, sigma).map_err(|err| bad_value("e", err))?;
        k_closed_max = k_closed_max.max(closed);
        k_evolved_max = k_evolved_max.max(evolved);
        csv_k.row(&[
            sigma.len().to_string(),
            sigma_string(sigma),
            "closed".to_string(),
            fmt_f64(closed),
        ]);
        csv_k.row(&[
            sigma.len().to_string(),
            sigma_string(sigma),
            "evolved".to_string(),
            fmt_f64(evolved),
        ]);
    }
    report.push(Probe::le(
        "k_ward_residual_closed",
        k_closed_max,
        0.0,
        1e-10,
    ));
    report.push(Probe::le(
        "k_ward_residual_evolved",
        k_evolved_max,
        0.0,
        1e-6,
    ));

    Ok(ExpOutput {
        report,
        files: vec![
            ("ward.csv".to_string(), csv.into_string()),
            ("ward_k.csv".to_string(), csv_k.into_string()),
        ],
    })
}
