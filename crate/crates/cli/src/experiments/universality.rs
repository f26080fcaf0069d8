//! `universality`: bulk gap-ratio statistics across ensembles.
//!
//! The mean consecutive-gap ratio `r̃` is a spacing statistic that
//! distinguishes level repulsion (mean-field value ≈ 0.5996) from
//! uncorrelated spectra (2·ln 2 − 1 ≈ 0.3863). The band ensemble must match
//! the mean-field reference to high precision while staying far from the
//! uncorrelated one; an optional sweep follows the statistic along the
//! matrix Ornstein-Uhlenbeck interpolation.

use super::{bad_value, Ctx, ExpOutput, RunError};
use crate::config::Config;
use crate::report::{fmt_f64, Csv, Probe, Report};
use crate::runner::map_samples;
use bandlab_core::lattice::BlockGeometry;
use bandlab_core::model::VarianceProfile;
use bandlab_core::sampler::{ou_interpolate, sample_band, sample_gue, SeedSpec};
use bandlab_core::spectra::{
    eigensystem, gap_ratio_from_sorted, gap_ratio_stats, poisson_spectrum, GapRatioStats,
};

const OU_TIMES: [f64; 4] = [0.0, 0.1, 1.0, 10.0];
const GAP_TARGET: f64 = 1e4;

/// Count-weighted mean and standard error over per-sample gap statistics.
fn pool(stats: &[GapRatioStats]) -> (f64, f64, usize) {
    let total: usize = stats.iter().map(|s| s.count).sum();
    if total == 0 {
        return (f64::NAN, f64::NAN, 0);
    }
    let tf = total as f64;
    let mean = stats.iter().map(|s| s.mean * s.count as f64).sum::<f64>() / tf;
    let var = stats
        .iter()
        .map(|s| {
            let w = s.count as f64;
            w * w * (s.mean - mean) * (s.mean - mean)
        })
        .sum::<f64>();
    (mean, var.sqrt() / tf, total)
}

pub fn run(mut cfg: Config, ctx: &Ctx, mut report: Report) -> Result<ExpOutput, RunError> {
    let w = cfg.take_usize("w")?;
    let l = cfg.take_usize("l")?;
    let kappa = cfg.take_f64_or("kappa", 0.5)?;
    let samples = cfg.take_usize("samples")?;
    let ou_sweep = cfg.take_bool_or("ou_sweep", false)?;
    cfg.finish()?;

    let geom = BlockGeometry::new(w, l).map_err(|err| bad_value("w", err))?;
    let n_sites = geom.n_sites();
    let profile = VarianceProfile::new(geom);

    let outcome = map_samples(samples, ctx.workers, |i| {
        let seed = SeedSpec {
            master: ctx.seed,
            index: i as u64,
        };
        let band_sample = sample_band(&profile, seed);
        let band = gap_ratio_stats(
            &eigensystem(&band_sample).map_err(|e| e.to_string())?,
            kappa,
        )
        .map_err(|e| e.to_string())?;
        let gue = gap_ratio_stats(
            &eigensystem(&sample_gue(profile.geom(), seed)).map_err(|e| e.to_string())?,
            kappa,
        )
        .map_err(|e| e.to_string())?;
        let poisson = gap_ratio_from_sorted(&poisson_spectrum(n_sites, seed), kappa)
            .map_err(|e| e.to_string())?;
        let mut ou = Vec::new();
        if ou_sweep {
            for &t in &OU_TIMES {
                let flowed = ou_interpolate(&band_sample, t, seed);
                ou.push(
                    gap_ratio_stats(&eigensystem(&flowed).map_err(|e| e.to_string())?, kappa)
                        .map_err(|e| e.to_string())?,
                );
            }
        }
        Ok((band, gue, poisson, ou))
    });

    report.n_samples = outcome.n_ok();
    report.n_failed = outcome.failures.len();
    report.degenerate = outcome.n_ok() == 0;

    let mut csv = Csv::new(&["ensemble", "ou_t", "mean_r", "stderr", "n_gaps"]);
    if !report.degenerate {
        let band: Vec<GapRatioStats> = outcome.values.iter().map(|v| v.0).collect();
        let gue: Vec<GapRatioStats> = outcome.values.iter().map(|v| v.1).collect();
        let poisson: Vec<GapRatioStats> = outcome.values.iter().map(|v| v.2).collect();
        let (band_mean, band_se, band_gaps) = pool(&band);
        let (gue_mean, gue_se, gue_gaps) = pool(&gue);
        let (poi_mean, poi_se, poi_gaps) = pool(&poisson);

        let mut write = |ensemble: &str, ou_t: f64, mean: f64, se: f64, gaps: usize| {
            csv.row(&[
                ensemble.to_string(),
                fmt_f64(ou_t),
                fmt_f64(mean),
                fmt_f64(se),
                gaps.to_string(),
            ]);
        };
        write("band", 0.0, band_mean, band_se, band_gaps);
        write("gue", f64::INFINITY, gue_mean, gue_se, gue_gaps);
        write("poisson", f64::NAN, poi_mean, poi_se, poi_gaps);
        if ou_sweep {
            for (ti, &t) in OU_TIMES.iter().enumerate() {
                let stats: Vec<GapRatioStats> = outcome.values.iter().map(|v| v.3[ti]).collect();
                let (m, se, gaps) = pool(&stats);
                write("ou", t, m, se, gaps);
            }
        }

        report.push(Probe::le(
            "band_vs_meanfield_gap_ratio",
            (band_mean - gue_mean).abs(),
            (band_se * band_se + gue_se * gue_se).sqrt(),
            0.01,
        ));
        report.push(Probe::ge("n_gaps_band", band_gaps as f64, 0.0, GAP_TARGET));
        report.push(Probe::ge(
            "n_gaps_meanfield",
            gue_gaps as f64,
            0.0,
            GAP_TARGET,
        ));
        let separation = (poi_mean - band_mean)
            .abs()
            .min((poi_mean - gue_mean).abs());
        report.push(Probe::ge(
            "uncorrelated_separation",
            separation,
            (poi_se * poi_se + band_se.max(gue_se).powi(2)).sqrt(),
            0.15,
        ));
        report.push(Probe::info(
            "uncorrelated_reference",
            2.0 * (2.0f64).ln() - 1.0,
        ));
    }

    Ok(ExpOutput {
        report,
        files: vec![("universality.csv".to_string(), csv.into_string())],
    })
}
