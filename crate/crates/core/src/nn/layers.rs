use apjfnn_autograd::{Graph, ParamId, ParamStore, Real, Tensor, Var};
use rand::Rng;

use crate::error::{Error, Result};
use crate::training::init::glorot_init;

/// Forward-pass mode. Dropout is only active in `Train`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Mode {
    Train { keep_prob: f64 },
    Eval,
}

/// Word embedding matrix `W_e [vocab × dim]`, shared by every encoder.
#[derive(Clone, Debug)]
pub struct EmbeddingTable {
    pub table: ParamId,
    pub vocab: usize,
    pub dim: usize,
}

impl EmbeddingTable {
    pub fn new<T: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        vocab: usize,
        dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let table = store.add(name, glorot_init(&[vocab, dim], rng)?);
        Ok(Self { table, vocab, dim })
    }

    /// Embeds `ids`, giving `[ids.len() × dim]`.
    pub fn lookup<T: Real>(&self, g: &mut Graph<T>, ids: &[u32]) -> Result<Var> {
        if let Some(&bad) = ids.iter().find(|&&id| id as usize >= self.vocab) {
            return Err(Error::Config(format!(
                "token id {bad} outside vocabulary of {} entries",
                self.vocab
            )));
        }
        let idx: Vec<usize> = ids.iter().map(|&i| i as usize).collect();
        let t = g.param(self.table);
        Ok(g.gather_rows(t, &idx)?)
    }
}

/// Fully connected layer `W x + b`.
#[derive(Clone, Debug)]
pub struct Dense {
    pub w: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub output: usize,
}

impl Dense {
    pub fn new<T: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        w_name: &str,
        b_name: &str,
        input: usize,
        output: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let w = store.add(w_name, glorot_init(&[output, input], rng)?);
        let b = store.add(b_name, glorot_init(&[output], rng)?);
        Ok(Self {
            w,
            b,
            input,
            output,
        })
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        let (w, b) = (g.param(self.w), g.param(self.b));
        Ok(g.linear(w, x, Some(b))?)
    }
}

/// Mean of the unmasked rows of `vs [n×d]`; divides by the real count.
pub fn mean_pool<T: Real>(g: &mut Graph<T>, vs: Var, mask: &[bool]) -> Result<Var> {
    let count = mask.iter().filter(|&&m| m).count();
    if count == 0 || g.shape(vs).first() != Some(&mask.len()) {
        return Err(Error::Validation(format!(
            "mean_pool: {count} real rows in input of shape {:?}",
            g.shape(vs)
        )));
    }
    let inv = 1.0 / count as f64;
    let weights = mask
        .iter()
        .map(|&m| if m { T::c(inv) } else { T::zero() })
        .collect();
    let w = g.constant(Tensor::vector(weights));
    Ok(g.weighted_sum(w, vs)?)
}

/// Inverted dropout: zero each entry with probability `1 - keep_prob` and
/// scale survivors by `1 / keep_prob`. Identity in `Eval` mode.
pub fn dropout<T: Real, R: Rng + ?Sized>(
    g: &mut Graph<T>,
    x: Var,
    mode: Mode,
    rng: &mut R,
) -> Result<Var> {
    let Mode::Train { keep_prob } = mode else {
        return Ok(x);
    };
    check_keep_prob(keep_prob)?;
    if keep_prob == 1.0 {
        return Ok(x);
    }
    let scale = T::c(1.0 / keep_prob);
    let shape = g.shape(x).to_vec();
    let n = shape.iter().product();
    let mask = (0..n)
        .map(|_| {
            if rng.gen_bool(keep_prob) {
                scale
            } else {
                T::zero()
            }
        })
        .collect();
    let m = g.constant(Tensor::new(shape, mask)?);
    Ok(g.mul(x, m)?)
}

pub fn check_keep_prob(keep_prob: f64) -> Result<()> {
    if !(keep_prob > 0.0 && keep_prob <= 1.0) {
        return Err(Error::Config(format!(
            "keep probability {keep_prob} outside (0, 1]"
        )));
    }
    Ok(())
}
