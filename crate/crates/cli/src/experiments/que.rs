//! `que`: eigenvector equidistribution over blocks.
//!
//! For eigenvectors in a narrow spectral window around `E`, the rescaled
//! block overlaps `N·⟨ψ_k, E_a ψ_l⟩/W²` should approach `δ_kl`; the
//! statistic is the largest squared deviation over all pairs in the window.
//! A localized vector would score near `(L²-1)²`, equidistributed ones stay
//! order one.

use super::{bad_value, Ctx, ExpOutput, RunError};
use crate::config::Config;
use crate::report::{fmt_f64, Csv, Probe, Report};
use crate::runner::{map_samples, mean_stderr};
use bandlab_core::lattice::{BlockGeometry, BlockIndex};
use bandlab_core::model::VarianceProfile;
use bandlab_core::sampler::{sample_band, SeedSpec};
use bandlab_core::spectra::{eigensystem, que_stat};

pub fn run(mut cfg: Config, ctx: &Ctx, mut report: Report) -> Result<ExpOutput, RunError> {
    let w = cfg.take_usize("w")?;
    let l = cfg.take_usize("l")?;
    let e = cfg.take_f64("e")?;
    let window = cfg.take_usize_or("window", 8)?;
    let samples = cfg.take_usize("samples")?;
    let threshold = cfg.take_f64_or("threshold", 1.0)?;
    cfg.finish()?;

    let geom = BlockGeometry::new(w, l).map_err(|err| bad_value("w", err))?;
    let blocks = [BlockIndex(0, 0), BlockIndex(l / 2, l / 2)];
    let profile = VarianceProfile::new(geom);

    let outcome = map_samples(samples, ctx.workers, |i| {
        let sample = sample_band(
            &profile,
            SeedSpec {
                master: ctx.seed,
                index: i as u64,
            },
        );
        let eig = eigensystem(&sample).map_err(|e| e.to_string())?;
        let mut stats = Vec::with_capacity(blocks.len());
        for &a in &blocks {
            stats.push(que_stat(&eig, e, a, window).map_err(|e| e.to_string())?);
        }
        Ok(stats)
    });

    report.n_samples = outcome.n_ok();
    report.n_failed = outcome.failures.len();
    report.degenerate = outcome.n_ok() == 0;

    let mut csv = Csv::new(&["sample", "block_a1", "block_a2", "stat"]);
    if !report.degenerate {
        let mut all = Vec::new();
        for (i, stats) in outcome.values.iter().enumerate() {
            for (b, &s) in blocks.iter().zip(stats) {
                csv.row(&[i.to_string(), b.0.to_string(), b.1.to_string(), fmt_f64(s)]);
                all.push(s);
            }
        }
        let (mean, se) = mean_stderr(&all);
        report.push(Probe::le("mean_overlap_dev", mean, se, threshold));
        report.push(Probe::info(
            "max_overlap_dev",
            all.iter().copied().fold(0.0, f64::max),
        ));
        let localized = ((l * l - 1) as f64).powi(2);
        report.push(Probe::info("localized_scale", localized));
    }

    Ok(ExpOutput {
        report,
        files: vec![("que.csv".to_string(), csv.into_string())],
    })
}
