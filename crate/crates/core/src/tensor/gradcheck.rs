//! Central finite differences, used as an independent oracle for the tape.

use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Central-difference gradient of `f` at `x`.
pub fn numeric_gradient(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], eps: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + eps;
            let up = f(&probe);
            probe[i] = x[i] - eps;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * eps)
        })
        .collect()
}

/// `max_i |a_i - n_i| / max(1e-8, |a_i| + |n_i|)`.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / (a.abs() + n.abs()).max(1e-8))
        .fold(0.0, f64::max)
}

/// Builds the graph `f` over leaves holding `params`, differentiates it on
/// the tape, and compares against central differences of the forward value.
/// Returns the largest relative error over all coordinates.
pub fn finite_difference_check<F>(f: F, params: &[Tensor], eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if eps <= 0.0 || !eps.is_finite() {
        return Err(Error::Argument(format!("step {eps} must be positive")));
    }
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.leaf(p.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    let grads = tape.backward(loss, &vars)?;
    let analytic: Vec<f64> = grads.into_tensors().into_iter().flat_map(Tensor::into_data).collect();

    let flat: Vec<f64> = params.iter().flat_map(|p| p.data().iter().copied()).collect();
    let mut failure = None;
    let numeric = numeric_gradient(
        |x| {
            let mut tape = Tape::new();
            let mut offset = 0;
            let vars: Vec<Var> = params
                .iter()
                .map(|p| {
                    let data = x[offset..offset + p.len()].to_vec();
                    offset += p.len();
                    tape.leaf(Tensor::from_parts(p.shape().to_vec(), data))
                })
                .collect();
            match f(&mut tape, &vars).and_then(|l| tape.value(l).item()) {
                Ok(v) => v,
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            }
        },
        &flat,
        eps,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(max_relative_error(&analytic, &numeric))
}
