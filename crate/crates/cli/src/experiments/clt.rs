//! `clt`: spatial correlation of block-trace fluctuations.
//!
//! Block traces of the resolvent fluctuate jointly like a Gaussian field
//! with a finite correlation length: imaginary parts of `tr[G E_a]` for
//! blocks beyond a few spectral lengths `ℓ(z)` should decorrelate, while
//! coincident blocks correlate perfectly. Correlations are estimated across
//! draws for every unordered block pair and grouped by torus distance.

use super::{bad_value, Ctx, ExpOutput, RunError};
use crate::config::Config;
use crate::report::{fmt_f64, Csv, Probe, Report};
use crate::runner::{map_samples, mean_stderr};
use bandlab_core::lattice::{BlockGeometry, BlockIndex};
use bandlab_core::model::{ell_z, VarianceProfile};
use bandlab_core::sampler::{sample_band, SeedSpec};
use bandlab_core::spectra::rgf::FoldedResolvent;
use bandlab_core::Complex64;

/// Pearson correlation of two equal-length samples.
fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        cov += (x - mx) * (y - my);
        vx += (x - mx) * (x - mx);
        vy += (y - my) * (y - my);
    }
    if vx == 0.0 || vy == 0.0 {
        0.0
    } else {
        cov / (vx * vy).sqrt()
    }
}

pub fn run(mut cfg: Config, ctx: &Ctx, mut report: Report) -> Result<ExpOutput, RunError> {
    let w = cfg.take_usize("w")?;
    let l = cfg.take_usize("l")?;
    let e = cfg.take_f64("e")?;
    let eta = cfg.take_f64("eta")?;
    let samples = cfg.take_usize("samples")?;
    cfg.finish()?;

    if eta <= 0.0 {
        return Err(bad_value("eta", "must be positive"));
    }
    let geom = BlockGeometry::new(w, l).map_err(|err| bad_value("w", err))?;
    let z = Complex64::new(e, eta);
    let nb = l * l;
    let w2 = (w * w) as f64;

    let profile = VarianceProfile::new(geom);
    let outcome = map_samples(samples, ctx.workers, |i| {
        let sample = sample_band(
            &profile,
            SeedSpec {
                master: ctx.seed,
                index: i as u64,
            },
        );
        let folded = FoldedResolvent::new(&sample, z).map_err(|e| e.to_string())?;
        let diag = folded.diagonal();
        let mut traces = vec![0.0f64; nb];
        for (x, g) in diag.iter().enumerate() {
            traces[geom.block_of_flat(x).flat(l)] += g.im;
        }
        for v in traces.iter_mut() {
            *v /= w2;
        }
        Ok(traces)
    });

    report.n_samples = outcome.n_ok();
    report.n_failed = outcome.failures.len();
    report.degenerate = outcome.n_ok() == 0;

    let mut csv = Csv::new(&["dist", "corr", "stderr"]);
    if !report.degenerate {
        let n_ok = outcome.n_ok();
        // Per-block series across samples.
        let series: Vec<Vec<f64>> = (0..nb)
            .map(|bf| outcome.values.iter().map(|v| v[bf]).collect())
            .collect();
        let max_dist = (0..nb)
            .map(|bf| geom.block_distance(BlockIndex(0, 0), BlockIndex::from_flat(bf, l)))
            .max()
            .unwrap_or(0);
        let mut by_dist: Vec<Vec<f64>> = vec![Vec::new(); max_dist + 1];
        for af in 0..nb {
            for bf in af..nb {
                let d =
                    geom.block_distance(BlockIndex::from_flat(af, l), BlockIndex::from_flat(bf, l));
                let c = if af == bf {
                    1.0
                } else {
                    pearson(&series[af], &series[bf])
                };
                by_dist[d].push(c);
            }
        }

        let ell = ell_z(z, l);
        let far_cut = 4.0 * ell;
        let mut corr_zero = f64::NAN;
        let mut far_max: f64 = 0.0;
        let mut far_groups = 0usize;
        for (d, pairs) in by_dist.iter().enumerate() {
            if pairs.is_empty() {
                continue;
            }
            let (mean, se) = mean_stderr(pairs);
            if d == 0 {
                corr_zero = mean;
            }
            if (d as f64) > far_cut {
                far_max = far_max.max(mean.abs());
                far_groups += 1;
            }
            csv.row(&[d.to_string(), fmt_f64(mean), fmt_f64(se)]);
        }

        report.push(Probe::ge("coincident_correlation", corr_zero, 0.0, 0.5));
        if far_groups > 0 {
            report.push(Probe::le("far_correlation", far_max, 0.0, 0.1));
        }
        report.push(Probe::info("far_distance_groups", far_groups as f64));
        report.push(Probe::info("spectral_length", ell));
        report.push(Probe::info("sample_count", n_ok as f64));
    }

    Ok(ExpOutput {
        report,
        files: vec![("clt.csv".to_string(), csv.into_string())],
    })
}
