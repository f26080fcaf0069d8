//! `theta`: deterministic block-propagator diagnostics.
//!
//! Builds the kernel `Θ_ξ = (1 - ξ·S_B)^{-1}` on the requested torus,
//! checks its exact row sum against `1/(1-ξ)`, validates the truncated
//! Neumann series against its certified tail bound, and fits the
//! exponential-decay and discrete-difference envelopes. The CSV lists every
//! offset with its kernel value and fitted envelope.

use super::{bad_value, Ctx, ExpOutput, RunError};
use crate::config::Config;
use crate::report::{fmt_f64, Csv, Probe, Report};
use bandlab_core::propagator::{
    decay_diagnostics, derivative_diagnostics, theta_kernel, theta_series,
};
use bandlab_core::Complex64;

pub fn run(mut cfg: Config, _ctx: &Ctx, mut report: Report) -> Result<ExpOutput, RunError> {
    let l = cfg.take_usize("l")?;
    let xi_re = cfg.take_f64("xi_re")?;
    let xi_im = cfg.take_f64_or("xi_im", 0.0)?;
    let k_max = cfg.take_usize_or("series_kmax", 64)?;
    cfg.finish()?;

    let xi = Complex64::new(xi_re, xi_im);
    let kernel = theta_kernel(xi, l).map_err(|e| bad_value("xi_re", e))?;
    let series = theta_series(xi, l, k_max).map_err(|e| bad_value("series_kmax", e))?;

    // Exact row sum: the p = 0 symbol value 1/(1-ξ).
    let expected_row = Complex64::new(1.0, 0.0) / (Complex64::new(1.0, 0.0) - xi);
    let row_residual = (kernel.row_sum() - expected_row).norm();
    report.push(Probe::le("row_sum_residual", row_residual, 0.0, 1e-10));

    // Truncated series must sit within its own certified tail bound. The
    // bound speaks about exact arithmetic, so allow for the roundoff of
    // k_max stencil convolutions on order-one entries on top of it.
    let series_dev = kernel
        .values()
        .iter()
        .zip(series.kernel.values())
        .map(|(a, b)| (a - b).norm())
        .fold(0.0f64, f64::max);
    let fp_slack = (k_max as f64 + 16.0) * f64::EPSILON;
    report.push(Probe::le(
        "series_truncation_dev",
        series_dev,
        0.0,
        series.tail_bound + fp_slack,
    ));
    report.push(Probe::info("series_tail_bound", series.tail_bound));
    report.push(Probe::info("series_fp_slack", fp_slack));

    let fit = decay_diagnostics(&kernel);
    report.push(Probe::ge("decay_rate", fit.rate, 0.0, 0.05));
    report.push(Probe::le("decay_amplitude", fit.amplitude, 0.0, 100.0));
    let diff = derivative_diagnostics(&kernel);
    report.push(Probe::le("first_difference_prefactor", diff.c1, 0.0, 100.0));
    report.push(Probe::le(
        "second_difference_prefactor",
        diff.c2,
        0.0,
        100.0,
    ));
    report.push(Probe::info("decay_length", kernel.decay_length()));

    let mut csv = Csv::new(&["s1", "s2", "re", "im", "abs", "envelope_value"]);
    for s1 in 0..l {
        for s2 in 0..l {
            let v = kernel.at_offset(s1 as i64, s2 as i64);
            let d = kernel.offset_norm(s1 as i64, s2 as i64);
            csv.row(&[
                s1.to_string(),
                s2.to_string(),
                fmt_f64(v.re),
                fmt_f64(v.im),
                fmt_f64(v.norm()),
                fmt_f64(fit.envelope(&kernel, d)),
            ]);
        }
    }

    Ok(ExpOutput {
        report,
        files: vec![("theta.csv".to_string(), csv.into_string())],
    })
}
