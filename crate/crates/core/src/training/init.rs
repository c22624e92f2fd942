use apjfnn_autograd::{Real, Tensor};
use rand::Rng;

use crate::error::{Error, Result};

/// Half-width of the Glorot uniform interval, `sqrt(6 / (n_in + n_out))`.
///
/// A matrix `[rows × cols]` maps `cols` inputs to `rows` outputs. A vector
/// of length `n` counts as `n` inputs and one output.
pub fn glorot_bound(shape: &[usize]) -> Result<f64> {
    let (n_in, n_out) = match shape {
        [n] => (*n, 1),
        [rows, cols] => (*cols, *rows),
        _ => {
            return Err(Error::Config(format!(
                "glorot init supports rank 1 or 2, got shape {shape:?}"
            )))
        }
    };
    if shape.contains(&0) {
        return Err(Error::Config(format!("zero extent in shape {shape:?}")));
    }
    Ok((6.0 / (n_in + n_out) as f64).sqrt())
}

/// I.i.d. uniform draws in `[-bound, bound]` with the Glorot bound.
pub fn glorot_init<T: Real, R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Result<Tensor<T>> {
    let bound = glorot_bound(shape)?;
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| T::c(rng.gen_range(-bound..=bound)))
        .collect();
    Ok(Tensor::new(shape.to_vec(), data)?)
}
