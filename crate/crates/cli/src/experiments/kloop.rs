//! `kloop`: the deterministic loop hierarchy under the characteristic flow.
//!
//! Integrates the reduced flow hierarchy for the requested sign word and
//! every word reachable through its closure, then compares each evolved
//! tensor against the closed-form answer, checks the summation identity
//! connecting opposite-sign words, and reports the sum rule that fixes the
//! overall normalization. The CSV lists every tensor entry next to its
//! closed-form value.

use super::{bad_value, sigma_string, Ctx, ExpOutput, RunError};
use crate::config::{Config, ConfigError};
use crate::report::{fmt_f64, Csv, Probe, Report};
use bandlab_core::lattice::BlockIndex;
use bandlab_core::loops::{parse_signs, Sign};
use bandlab_core::model::boundary_m;
use bandlab_core::primitive::{
    k_closed, k_evolve, k_sum_rule, k_ward_residual, k_ward_residual_closed,
};

pub fn run(mut cfg: Config, _ctx: &Ctx, mut report: Report) -> Result<ExpOutput, RunError> {
    let l = cfg.take_usize("l")?;
    let e = cfg.take_f64("e")?;
    let t = cfg.take_f64("t")?;
    let sigma_text = cfg.take_string_or("sigma", "+-")?;
    let rel_tol = cfg.take_f64_or("rel_tol", 1e-8)?;
    let t_cap = cfg.take_f64_or("t_cap", 0.95)?;
    cfg.finish()?;

    let sigma = parse_signs(&sigma_text).ok_or_else(|| {
        RunError::Config(ConfigError::BadValue {
            key: "sigma".to_string(),
            msg: format!("`{sigma_text}` is not a word over +/-"),
        })
    })?;
    if sigma.is_empty() || sigma.len() > 3 {
        return Err(RunError::Config(ConfigError::BadValue {
            key: "sigma".to_string(),
            msg: "word length must be 1..=3".to_string(),
        }));
    }
    if t > t_cap {
        return Err(RunError::Config(ConfigError::BadValue {
            key: "t".to_string(),
            msg: format!("flow time {t} exceeds cap {t_cap}"),
        }));
    }

    let m_e = boundary_m(e).map_err(|err| bad_value("e", err))?;
    let family = k_evolve(l, e, &sigma, t, rel_tol).map_err(|err| bad_value("t", err))?;
    report.push(Probe::info("flow_steps", family.steps as f64));
    report.push(Probe::info("flow_achieved_rel", family.achieved_rel));

    let mut words: Vec<Vec<Sign>> = family.words().map(|w| w.to_vec()).collect();
    words.sort_by_key(|w| (w.len(), sigma_string(w)));

    let nb = l * l;
    let mut max_dev: f64 = 0.0;
    let mut csv = Csv::new(&["sigma", "diffs", "re", "im", "closed_re", "closed_im"]);
    for word in &words {
        let evolved = family.tensor(word).expect("closure word present");
        let closed = k_closed(l, m_e, t, word).map_err(|err| bad_value("sigma", err))?;
        let rank = evolved.tensor().rank();
        let label = sigma_string(word);
        for flat in 0..nb.pow(rank as u32) {
            let mut diffs = Vec::with_capacity(rank);
            for slot in 0..rank {
                let digit = (flat / nb.pow((rank - 1 - slot) as u32)) % nb;
                diffs.push(BlockIndex::from_flat(digit, l));
            }
            let v = evolved.tensor().values()[flat];
            let c = closed.tensor().values()[flat];
            max_dev = max_dev.max((v - c).norm());
            csv.row(&[
                label.clone(),
                super::blocks_string(&diffs),
                fmt_f64(v.re),
                fmt_f64(v.im),
                fmt_f64(c.re),
                fmt_f64(c.im),
            ]);
        }
    }
    report.push(Probe::le("evolved_vs_closed", max_dev, 0.0, 1e-6));

    if sigma.len() >= 2 && sigma[0] != sigma[sigma.len() - 1] {
        let ward_closed =
            k_ward_residual_closed(l, e, t, &sigma).map_err(|err| bad_value("sigma", err))?;
        let ward_evolved =
            k_ward_residual(&family, &sigma).map_err(|err| bad_value("sigma", err))?;
        report.push(Probe::le("ward_residual_closed", ward_closed, 0.0, 1e-10));
        report.push(Probe::le("ward_residual_evolved", ward_evolved, 0.0, 1e-6));
    }

    let seed_tensor = family.tensor(&sigma).expect("seed word present");
    report.push(Probe::le(
        "sum_rule",
        k_sum_rule(seed_tensor, family.eta_t()),
        0.0,
        10.0,
    ));

    Ok(ExpOutput {
        report,
        files: vec![("kloop.csv".to_string(), csv.into_string())],
    })
}
