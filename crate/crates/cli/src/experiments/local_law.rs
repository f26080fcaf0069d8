//! `local-law`: entrywise and block-trace resolvent concentration.
//!
//! At a fixed spectral parameter `z = E + iη`, each draw's resolvent is
//! compared against `m(z)·Id`. The natural fluctuation scales are
//! `M_η^{-1/2}` for single entries and `M_η^{-1}` for block traces, with
//! `M_η = W²·ℓ(z)²·η`; the run passes when only a small fraction of draws
//! exceeds ten times those scales.

use super::{bad_value, Ctx, ExpOutput, RunError};
use crate::config::Config;
use crate::report::{fmt_f64, Csv, Probe, Report};
use crate::runner::map_samples;
use bandlab_core::lattice::BlockGeometry;
use bandlab_core::model::{cap_m_eta, VarianceProfile};
use bandlab_core::sampler::{sample_band, SeedSpec};
use bandlab_core::spectra::{eigensystem, local_law_stats};
use bandlab_core::Complex64;

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
    let m_eta = cap_m_eta(&geom, z);
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
        let stats = local_law_stats(&eig, z).map_err(|e| e.to_string())?;
        Ok((stats.max_entry_dev, stats.max_block_trace_dev))
    });

    report.n_samples = outcome.n_ok();
    report.n_failed = outcome.failures.len();
    report.degenerate = outcome.n_ok() == 0;

    let mut csv = Csv::new(&["sample", "max_entry_dev", "max_block_trace_dev", "M_eta"]);
    if !report.degenerate {
        let n = outcome.n_ok() as f64;
        let entry_scale = 10.0 / m_eta.sqrt();
        let trace_scale = 10.0 / m_eta;
        let mut entry_exceed = 0usize;
        let mut trace_exceed = 0usize;
        for (i, (entry, trace)) in outcome.values.iter().enumerate() {
            if *entry > entry_scale {
                entry_exceed += 1;
            }
            if *trace > trace_scale {
                trace_exceed += 1;
            }
            csv.row(&[
                i.to_string(),
                fmt_f64(*entry),
                fmt_f64(*trace),
                fmt_f64(m_eta),
            ]);
        }
        let frac = |k: usize| k as f64 / n;
        let frac_se = |p: f64| (p * (1.0 - p) / n).sqrt();
        let p_entry = frac(entry_exceed);
        let p_trace = frac(trace_exceed);
        report.push(Probe::le(
            "entry_exceed_fraction",
            p_entry,
            frac_se(p_entry),
            0.05,
        ));
        report.push(Probe::le(
            "block_trace_exceed_fraction",
            p_trace,
            frac_se(p_trace),
            0.05,
        ));
        report.push(Probe::info("m_eta", m_eta));
        report.push(Probe::info(
            "mean_entry_dev",
            outcome.values.iter().map(|v| v.0).sum::<f64>() / n,
        ));
        report.push(Probe::info(
            "mean_block_trace_dev",
            outcome.values.iter().map(|v| v.1).sum::<f64>() / n,
        ));
    }

    Ok(ExpOutput {
        report,
        files: vec![("local_law.csv".to_string(), csv.into_string())],
    })
}
