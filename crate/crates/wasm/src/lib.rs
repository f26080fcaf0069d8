//! Browser bindings for the exact (sample-free) kernels.
//!
//! Three interactive operations back the static demo page in `www/`:
//!
//! - [`theta_heatmap`]: magnitudes of the block propagator `Θ_ξ` over a
//!   centered offset grid, with [`theta_decay_length`] for the scale label,
//! - [`heat_kernel_heatmap`]: the lazy 5-point random-walk distribution
//!   after a given number of steps,
//! - [`loop_profile`]: per-distance peak magnitude of the dimensionless
//!   closed-form two-leg loop along the resolvent flow.
//!
//! Every table is returned as a flat row-major `Float64Array` so the page
//! can feed it straight into a canvas. The numeric work lives in plain
//! functions (unit-tested on the host); the exported wrappers only
//! translate errors for JavaScript.

use bandlab_core::lattice::BlockIndex;
use bandlab_core::loops::Sign;
use bandlab_core::model::flow_point;
use bandlab_core::primitive::k_closed;
use bandlab_core::propagator::{heat_kernel, theta_kernel};
use num_complex::Complex64;
use wasm_bindgen::prelude::*;

/// `|Θ_ξ|` on the `l × l` grid of centered offsets, row-major with the
/// zero offset in the middle cell: entry `(i, j)` holds the magnitude at
/// offset `(i - l/2, j - l/2)`.
fn theta_table(l: usize, xi_re: f64, xi_im: f64) -> Result<Vec<f64>, String> {
    let kernel = theta_kernel(Complex64::new(xi_re, xi_im), l).map_err(|e| e.to_string())?;
    let h = (l / 2) as i64;
    let mut out = Vec::with_capacity(l * l);
    for i in 0..l as i64 {
        for j in 0..l as i64 {
            out.push(kernel.at_offset(i - h, j - h).norm());
        }
    }
    Ok(out)
}

fn theta_scale(l: usize, xi_re: f64, xi_im: f64) -> Result<f64, String> {
    let kernel = theta_kernel(Complex64::new(xi_re, xi_im), l).map_err(|e| e.to_string())?;
    Ok(kernel.decay_length())
}

/// Walk distribution after `steps` steps on the `(2·half_width + 1)²`
/// window; `half_width` must hold the whole support (`>= steps`).
fn heat_table(steps: usize, half_width: usize) -> Result<Vec<f64>, String> {
    let table = heat_kernel(steps, half_width).map_err(|e| e.to_string())?;
    let h = half_width as i64;
    let side = 2 * half_width + 1;
    let mut out = Vec::with_capacity(side * side);
    for i in -h..=h {
        for j in -h..=h {
            out.push(table.at(i, j));
        }
    }
    Ok(out)
}

/// Peak `|k̂|` of the mixed-sign two-leg loop per torus distance
/// `d = 0 ..= 2·(l/2)`, indexed by `d`.
fn profile_table(l: usize, e: f64, t: f64) -> Result<Vec<f64>, String> {
    let params = flow_point(e, t).map_err(|e| e.to_string())?;
    let tensor =
        k_closed(l, params.m_e, t, &[Sign::Plus, Sign::Minus]).map_err(|e| e.to_string())?;
    let mut out = vec![0.0f64; 2 * (l / 2) + 1];
    for flat in 0..l * l {
        let d = BlockIndex::from_flat(flat, l);
        let v = tensor.reduced(&[d]).norm();
        let bin = &mut out[d.norm(l)];
        *bin = bin.max(v);
    }
    Ok(out)
}

#[wasm_bindgen]
pub fn theta_heatmap(l: usize, xi_re: f64, xi_im: f64) -> Result<Vec<f64>, JsError> {
    theta_table(l, xi_re, xi_im).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn theta_decay_length(l: usize, xi_re: f64, xi_im: f64) -> Result<f64, JsError> {
    theta_scale(l, xi_re, xi_im).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn heat_kernel_heatmap(steps: usize, half_width: usize) -> Result<Vec<f64>, JsError> {
    heat_table(steps, half_width).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn loop_profile(l: usize, e: f64, t: f64) -> Result<Vec<f64>, JsError> {
    profile_table(l, e, t).map_err(|e| JsError::new(&e))
}
