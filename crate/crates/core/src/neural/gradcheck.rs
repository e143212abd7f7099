//! Central finite differences, used as the oracle for the analytic backward passes.

use super::params::{Gradients, ModelParameters};
use crate::error::{Error, Result};

/// `(f(x + ε e_k) − f(x − ε e_k)) / 2ε` for every coordinate `k`.
pub fn central_difference<F>(mut f: F, x: &[f64], epsilon: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for k in 0..x.len() {
        let orig = probe[k];
        probe[k] = orig + epsilon;
        let plus = f(&probe)?;
        probe[k] = orig - epsilon;
        let minus = f(&probe)?;
        probe[k] = orig;
        if !(plus.is_finite() && minus.is_finite()) {
            return Err(Error::NonFiniteValue(format!("loss at coordinate {k}")));
        }
        grad.push((plus - minus) / (2.0 * epsilon));
    }
    Ok(grad)
}

pub fn finite_difference_gradient<F>(loss_fn: F, params: &ModelParameters, epsilon: f64) -> Result<Gradients>
where
    F: Fn(&ModelParameters) -> Result<f64>,
{
    let mut scratch = params.clone();
    let flat = central_difference(
        |x| {
            scratch.set_flat(x)?;
            loss_fn(&scratch)
        },
        &params.to_flat(),
        epsilon,
    )?;
    let mut grads = Gradients::zeros_like(params);
    grads.set_flat(&flat)?;
    Ok(grads)
}

/// `max_k |a_k − b_k| / max(|a_k|, |b_k|, floor)`.
///
/// The floor keeps entries whose true gradient is (near) zero from turning
/// round-off into a large relative error.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(floor))
        .fold(0.0, f64::max)
}
