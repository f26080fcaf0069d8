//! `qdiff`: two-leg loop means against the diffusion profile.
//!
//! The block-averaged observables `tr[G E_a G* E_b]` and `tr[G E_a G E_b]`
//! concentrate around explicit deterministic profiles: a propagator kernel
//! at coupling `|m(z)|²` (respectively `m(z)²`) scaled by the same factor
//! and `W^{-2}`. The empirical means over the draws are tabulated next to
//! the predictions; the run passes when the worst entrywise deviation stays
//! within ten times `M_η^{-2}` plus statistical slack.

use super::{bad_value, Ctx, ExpOutput, RunError};
use crate::config::Config;
use crate::report::{fmt_f64, Csv, Probe, Report};
use crate::runner::map_samples;
use bandlab_core::lattice::{BlockGeometry, BlockIndex};
use bandlab_core::loops::{t_matrix, TKind};
use bandlab_core::model::{cap_m_eta, semicircle_m, VarianceProfile};
use bandlab_core::propagator::{theta_kernel, PropagatorKernel};
use bandlab_core::sampler::{sample_band, SeedSpec};
use bandlab_core::spectra::eigensystem;
use bandlab_core::Complex64;

/// Running mean/variance accumulators for a vector of complex entries.
struct Accum {
    n: f64,
    sum_re: Vec<f64>,
    sum_im: Vec<f64>,
    sq_re: Vec<f64>,
    sq_im: Vec<f64>,
}

impl Accum {
    fn new(len: usize) -> Accum {
        Accum {
            n: 0.0,
            sum_re: vec![0.0; len],
            sum_im: vec![0.0; len],
            sq_re: vec![0.0; len],
            sq_im: vec![0.0; len],
        }
    }

    fn add(&mut self, values: &[Complex64]) {
        self.n += 1.0;
        for (i, v) in values.iter().enumerate() {
            self.sum_re[i] += v.re;
            self.sum_im[i] += v.im;
            self.sq_re[i] += v.re * v.re;
            self.sq_im[i] += v.im * v.im;
        }
    }

    fn mean(&self, i: usize) -> Complex64 {
        Complex64::new(self.sum_re[i] / self.n, self.sum_im[i] / self.n)
    }

    /// Standard error of the complex mean: combined spread of both parts.
    fn stderr(&self, i: usize) -> f64 {
        if self.n < 2.0 {
            return 0.0;
        }
        let var = |sum: f64, sq: f64| (sq - sum * sum / self.n).max(0.0) / (self.n - 1.0);
        ((var(self.sum_re[i], self.sq_re[i]) + var(self.sum_im[i], self.sq_im[i])) / self.n).sqrt()
    }
}

struct Kind {
    file: &'static str,
    probe: &'static str,
    kind: TKind,
    prediction: Vec<Complex64>,
}

fn prediction_table(
    scale: Complex64,
    kernel: &PropagatorKernel,
    w: usize,
    l: usize,
) -> Vec<Complex64> {
    let nb = l * l;
    let w2 = (w * w) as f64;
    let mut table = vec![Complex64::default(); nb * nb];
    for af in 0..nb {
        let a = BlockIndex::from_flat(af, l);
        for bf in 0..nb {
            let b = BlockIndex::from_flat(bf, l);
            table[af * nb + bf] = scale * kernel.entry(a, b) / w2;
        }
    }
    table
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
    let m = semicircle_m(z).map_err(|err| bad_value("e", err))?;
    let m_eta = cap_m_eta(&geom, z);
    let nb = l * l;

    let xi_pm = Complex64::new(m.norm_sqr(), 0.0);
    let xi_pp = m * m;
    let kinds = [
        Kind {
            file: "qdiff.csv",
            probe: "max_dev_mixed",
            kind: TKind::PlusMinus,
            prediction: prediction_table(
                xi_pm,
                &theta_kernel(xi_pm, l).map_err(|err| bad_value("eta", err))?,
                w,
                l,
            ),
        },
        Kind {
            file: "qdiff_pp.csv",
            probe: "max_dev_aligned",
            kind: TKind::PlusPlus,
            prediction: prediction_table(
                xi_pp,
                &theta_kernel(xi_pp, l).map_err(|err| bad_value("eta", err))?,
                w,
                l,
            ),
        },
    ];

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
        let mut tables = Vec::with_capacity(kinds.len());
        for kind in &kinds {
            tables.push(
                t_matrix(&eig, z, kind.kind)
                    .map_err(|e| e.to_string())?
                    .values()
                    .to_vec(),
            );
        }
        Ok(tables)
    });

    report.n_samples = outcome.n_ok();
    report.n_failed = outcome.failures.len();
    report.degenerate = outcome.n_ok() == 0;

    let mut files = Vec::new();
    let threshold = 10.0 / (m_eta * m_eta);
    for (ki, kind) in kinds.iter().enumerate() {
        let mut csv = Csv::new(&[
            "a1", "a2", "b1", "b2", "emp_re", "emp_im", "pred_re", "pred_im", "stderr",
        ]);
        if !report.degenerate {
            let mut acc = Accum::new(nb * nb);
            // Reduced accumulator over the translation-averaged tables.
            let mut red = Accum::new(nb);
            let mut red_buf = vec![Complex64::default(); nb];
            for tables in &outcome.values {
                acc.add(&tables[ki]);
                if ctx.reduce {
                    for v in red_buf.iter_mut() {
                        *v = Complex64::default();
                    }
                    for af in 0..nb {
                        let a = BlockIndex::from_flat(af, l);
                        for (df, slot) in red_buf.iter_mut().enumerate() {
                            let b = a.shifted_by(BlockIndex::from_flat(df, l), l);
                            *slot += tables[ki][af * nb + b.flat(l)];
                        }
                    }
                    for v in red_buf.iter_mut() {
                        *v /= nb as f64;
                    }
                    red.add(&red_buf);
                }
            }

            let mut max_dev: f64 = 0.0;
            let mut se_at_max: f64 = 0.0;
            for idx in 0..nb * nb {
                let dev = (acc.mean(idx) - kind.prediction[idx]).norm();
                if dev > max_dev {
                    max_dev = dev;
                    se_at_max = acc.stderr(idx);
                }
            }
            report.push(Probe::le(kind.probe, max_dev, se_at_max, threshold));

            if ctx.reduce {
                let origin = BlockIndex(0, 0);
                for df in 0..nb {
                    let d = BlockIndex::from_flat(df, l);
                    let mean = red.mean(df);
                    let pred = kind.prediction[df];
                    csv.row(&[
                        origin.0.to_string(),
                        origin.1.to_string(),
                        d.0.to_string(),
                        d.1.to_string(),
                        fmt_f64(mean.re),
                        fmt_f64(mean.im),
                        fmt_f64(pred.re),
                        fmt_f64(pred.im),
                        fmt_f64(red.stderr(df)),
                    ]);
                }
            } else {
                for af in 0..nb {
                    let a = BlockIndex::from_flat(af, l);
                    for bf in 0..nb {
                        let b = BlockIndex::from_flat(bf, l);
                        let idx = af * nb + bf;
                        let mean = acc.mean(idx);
                        let pred = kind.prediction[idx];
                        csv.row(&[
                            a.0.to_string(),
                            a.1.to_string(),
                            b.0.to_string(),
                            b.1.to_string(),
                            fmt_f64(mean.re),
                            fmt_f64(mean.im),
                            fmt_f64(pred.re),
                            fmt_f64(pred.im),
                            fmt_f64(acc.stderr(idx)),
                        ]);
                    }
                }
            }
        }
        files.push((kind.file.to_string(), csv.into_string()));
    }
    if !report.degenerate {
        report.push(Probe::info("m_eta", m_eta));
        report.push(Probe::info("deviation_scale", threshold));
    }

    Ok(ExpOutput { report, files })
}
