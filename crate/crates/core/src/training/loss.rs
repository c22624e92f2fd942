use apjfnn_autograd::{Graph, Real, Var};

use crate::error::{Error, Result};

/// Predictions are clamped into `[ε, 1 − ε]` before taking logarithms.
pub const BCE_EPS: f64 = 1e-7;

/// Mean binary cross entropy over the predictions `y_hat` (each of one element).
pub fn bce_loss<T: Real>(g: &mut Graph<T>, y_hat: &[Var], labels: &[u8]) -> Result<Var> {
    if y_hat.len() != labels.len() || y_hat.is_empty() {
        return Err(Error::Validation(format!(
            "bce_loss: {} predictions for {} labels",
            y_hat.len(),
            labels.len()
        )));
    }
    let mut terms = Vec::with_capacity(y_hat.len());
    for (&y, &label) in y_hat.iter().zip(labels) {
        if g.value(y).numel() != 1 {
            return Err(Error::Validation(format!(
                "bce_loss: prediction of shape {:?}",
                g.shape(y)
            )));
        }
        let p = g.clamp(y, T::c(BCE_EPS), T::c(1.0 - BCE_EPS));
        let q = match label {
            1 => p,
            0 => g.affine(p, -T::one(), T::one()),
            other => {
                return Err(Error::Validation(format!(
                    "bce_loss: label {other} is not binary"
                )))
            }
        };
        let l = g.ln(q);
        terms.push(g.sum(l));
    }
    let mut total = terms[0];
    for &t in &terms[1..] {
        total = g.add(total, t)?;
    }
    Ok(g.scale(total, T::c(-1.0 / labels.len() as f64)))
}

/// Plain-number BCE of one prediction, with the same clamping.
pub fn bce_value(y_hat: f64, label: u8) -> f64 {
    let p = y_hat.clamp(BCE_EPS, 1.0 - BCE_EPS);
    if label == 1 {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}
