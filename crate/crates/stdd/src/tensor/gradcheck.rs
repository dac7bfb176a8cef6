//! Finite-difference gradient verification.

use super::{Array, Real};
use crate::error::Result;

/// Central-difference gradient of `loss` with respect to the entries of
/// `params`, perturbing one entry at a time.
///
/// `loss` must rebuild the whole forward pass from the given parameter
/// arrays so each perturbation is evaluated on a fresh tape.
pub fn finite_diff_gradients<F>(params: &[Array], step: Real, mut loss: F) -> Result<Vec<Array>>
where
    F: FnMut(&[Array]) -> Result<Real>,
{
    let mut work: Vec<Array> = params.to_vec();
    let mut grads = Vec::with_capacity(params.len());
    for p in 0..params.len() {
        let mut g = Array::zeros(params[p].shape().to_vec());
        for i in 0..params[p].numel() {
            let orig = work[p].data()[i];
            work[p].data_mut()[i] = orig + step;
            let up = loss(&work)?;
            work[p].data_mut()[i] = orig - step;
            let down = loss(&work)?;
            work[p].data_mut()[i] = orig;
            g.data_mut()[i] = (up - down) / (2.0 * step);
        }
        grads.push(g);
    }
    Ok(grads)
}

/// Largest elementwise discrepancy between analytic and finite-difference
/// gradients, relative to the largest finite-difference magnitude seen
/// anywhere (floored at 1 so tiny gradients compare absolutely).
pub fn max_rel_error(analytic: &[Array], numeric: &[Array]) -> Real {
    let denom = numeric
        .iter()
        .map(|a| a.max_abs())
        .fold(1.0 as Real, Real::max);
    let mut worst = 0.0;
    for (a, n) in analytic.iter().zip(numeric) {
        for (&av, &nv) in a.data().iter().zip(n.data()) {
            worst = (worst as Real).max((av - nv).abs() / denom);
        }
    }
    worst
}
