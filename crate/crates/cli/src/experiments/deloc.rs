//! `deloc`: sup-norm delocalization of bulk eigenvectors.
//!
//! For each draw, the statistic is `N·max‖ψ‖∞²` over bulk eigenvectors —
//! order `log N` for delocalized vectors and order `N` for localized ones.
//! The run passes when nearly all draws stay under `(ln N)³` and the median
//! matches a mean-field reference ensemble within a factor of two. The
//! reference draws use the same seeds and are written to a second table.

use super::{bad_value, Ctx, ExpOutput, RunError};
use crate::config::Config;
use crate::report::{fmt_f64, Csv, Probe, Report};
use crate::runner::map_samples;
use bandlab_core::lattice::BlockGeometry;
use bandlab_core::model::VarianceProfile;
use bandlab_core::sampler::{sample_band, sample_gue, SeedSpec};
use bandlab_core::spectra::{deloc_stat, eigensystem};

fn median(xs: &[f64]) -> f64 {
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

pub fn run(mut cfg: Config, ctx: &Ctx, mut report: Report) -> Result<ExpOutput, RunError> {
    let w = cfg.take_usize("w")?;
    let l = cfg.take_usize("l")?;
    let kappa = cfg.take_f64_or("kappa", 0.5)?;
    let samples = cfg.take_usize("samples")?;
    cfg.finish()?;

    let geom = BlockGeometry::new(w, l).map_err(|err| bad_value("w", err))?;
    let n_sites = geom.n_sites();
    let bound = (n_sites as f64).ln().powi(3);
    let profile = VarianceProfile::new(geom);

    let outcome = map_samples(samples, ctx.workers, |i| {
        let seed = SeedSpec {
            master: ctx.seed,
            index: i as u64,
        };
        let band = eigensystem(&sample_band(&profile, seed)).map_err(|e| e.to_string())?;
        let (band_stat, band_bulk) = deloc_stat(&band, kappa).map_err(|e| e.to_string())?;
        let gue = eigensystem(&sample_gue(profile.geom(), seed)).map_err(|e| e.to_string())?;
        let (gue_stat, gue_bulk) = deloc_stat(&gue, kappa).map_err(|e| e.to_string())?;
        Ok((band_stat, band_bulk, gue_stat, gue_bulk))
    });

    report.n_samples = outcome.n_ok();
    report.n_failed = outcome.failures.len();
    report.degenerate = outcome.n_ok() == 0;

    let mut csv = Csv::new(&["sample", "stat", "n_bulk"]);
    let mut csv_oracle = Csv::new(&["sample", "stat", "n_bulk"]);
    if !report.degenerate {
        let band_stats: Vec<f64> = outcome.values.iter().map(|v| v.0).collect();
        let gue_stats: Vec<f64> = outcome.values.iter().map(|v| v.2).collect();
        for (i, (bs, bn, gs, gn)) in outcome.values.iter().enumerate() {
            csv.row(&[i.to_string(), fmt_f64(*bs), bn.to_string()]);
            csv_oracle.row(&[i.to_string(), fmt_f64(*gs), gn.to_string()]);
        }
        let within = band_stats.iter().filter(|&&s| s <= bound).count();
        let frac = within as f64 / band_stats.len() as f64;
        report.push(Probe::ge("bounded_fraction", frac, 0.0, 0.95));
        let ratio = median(&band_stats) / median(&gue_stats);
        report.push(Probe::le("median_ratio_vs_reference", ratio, 0.0, 2.0));
        report.push(Probe::ge(
            "median_ratio_vs_reference_lower",
            ratio,
            0.0,
            0.5,
        ));
        report.push(Probe::info("sup_norm_bound", bound));
        report.push(Probe::info(
            "max_stat",
            band_stats.iter().copied().fold(0.0, f64::max),
        ));
    }

    Ok(ExpOutput {
        report,
        files: vec![
            ("deloc.csv".to_string(), csv.into_string()),
            ("deloc_oracle.csv".to_string(), csv_oracle.into_string()),
        ],
    })
}
