//! Central finite-difference check of tape gradients.

use super::array::Tensor;
use super::graph::{Graph, Var};
use super::params::{ParamId, ParamStore};
use crate::error::Result;

/// Outcome of comparing analytic and numeric gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub checked: usize,
}

/// Denominator floor for [`relative_error`]. Central differences at `h = 1e-3` carry an absolute
/// truncation error near `1e-6` for smooth transformer losses, so entries with `|g| < 1e-2` are
/// judged by absolute error `< 1e-6` rather than by a relative error that would be pure noise.
pub const DEFAULT_FLOOR: f64 = 1e-2;

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares the tape gradient of `loss_fn` with central differences of step `h` for every
/// scalar of the listed parameters, or at most `max_per_param` evenly spaced entries of each.
pub fn check_params<F>(
    store: &mut ParamStore<f64>,
    ids: &[ParamId],
    h: f64,
    floor: f64,
    max_per_param: Option<usize>,
    mut loss_fn: F,
) -> Result<GradCheckReport>
where
    F: FnMut(&mut Graph<'_, f64>) -> Result<Var>,
{
    let grads = {
        let mut g = Graph::new(store);
        let loss = loss_fn(&mut g)?;
        g.backward(loss)?;
        g.param_grads()
    };
    let eval = |store: &ParamStore<f64>, f: &mut F| -> Result<f64> {
        let mut g = Graph::inference(store);
        let loss = f(&mut g)?;
        Ok(g.value(loss).item())
    };
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        checked: 0,
    };
    for &id in ids {
        let n = store.get(id).numel();
        let analytic = grads.get(id).map(<[f64]>::to_vec).unwrap_or(vec![0.0; n]);
        let stride = match max_per_param {
            Some(k) if k > 0 && n > k => n.div_ceil(k),
            _ => 1,
        };
        for i in (0..n).step_by(stride) {
            let orig = store.get(id).data()[i];
            store.get_mut(id).data_mut()[i] = orig + h;
            let plus = eval(store, &mut loss_fn)?;
            store.get_mut(id).data_mut()[i] = orig - h;
            let minus = eval(store, &mut loss_fn)?;
            store.get_mut(id).data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let rel = relative_error(analytic[i], numeric, floor);
            report.checked += 1;
            report.max_abs_error = report.max_abs_error.max((analytic[i] - numeric).abs());
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst_param = store.name(id).to_string();
                report.worst_index = i;
            }
        }
    }
    Ok(report)
}

/// Same check for a function of free-standing input tensors.
pub fn check_inputs<F>(inputs: &[Tensor<f64>], h: f64, floor: f64, mut f: F) -> Result<GradCheckReport>
where
    F: FnMut(&mut Graph<'_, f64>, &[Var]) -> Result<Var>,
{
    let mut store = ParamStore::new();
    let ids: Vec<ParamId> = inputs
        .iter()
        .enumerate()
        .map(|(i, t)| store.add(format!("input{i}"), t.clone()))
        .collect();
    let ids_inner = ids.clone();
    check_params(&mut store, &ids, h, floor, None, move |g| {
        let vars: Vec<Var> = ids_inner.iter().map(|&id| g.param(id)).collect();
        f(g, &vars)
    })
}
