//! Additive attention in two flavours: a learned context vector
//! (`e_t = vᵀ tanh(W h_t + b)`) and a condition vector
//! (`e_t = vᵀ tanh(W c + U h_t)`).

use apjfnn_autograd::{Graph, ParamId, ParamStore, Real, Var};
use rand::Rng;

use crate::error::{Error, Result};
use crate::training::init::glorot_init;

#[derive(Clone, Debug)]
pub struct SelfAttentionParams {
    pub v: ParamId,
    pub w: ParamId,
    pub b: ParamId,
    pub dim: usize,
    pub input: usize,
}

impl SelfAttentionParams {
    pub fn new<T: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        prefix: &str,
        input: usize,
        dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let v = store.add(format!("{prefix}.v"), glorot_init(&[dim], rng)?);
        let w = store.add(format!("{prefix}.W"), glorot_init(&[dim, input], rng)?);
        let b = store.add(format!("{prefix}.b"), glorot_init(&[dim], rng)?);
        Ok(Self {
            v,
            w,
            b,
            dim,
            input,
        })
    }

    pub fn ids(&self) -> [ParamId; 3] {
        [self.v, self.w, self.b]
    }
}

#[derive(Clone, Debug)]
pub struct ConditionedAttentionParams {
    pub v: ParamId,
    /// Projects the condition vector, `[dim × cond]`.
    pub w: ParamId,
    /// Projects each attended vector, `[dim × input]`.
    pub u: ParamId,
    pub dim: usize,
    pub cond: usize,
    pub input: usize,
}

impl ConditionedAttentionParams {
    pub fn new<T: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        prefix: &str,
        input: usize,
        cond: usize,
        dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let v = store.add(format!("{prefix}.v"), glorot_init(&[dim], rng)?);
        let w = store.add(format!("{prefix}.W"), glorot_init(&[dim, cond], rng)?);
        let u = store.add(format!("{prefix}.U"), glorot_init(&[dim, input], rng)?);
        Ok(Self {
            v,
            w,
            u,
            dim,
            cond,
            input,
        })
    }

    pub fn ids(&self) -> [ParamId; 3] {
        [self.v, self.w, self.u]
    }
}

fn check_rows<T: Real>(g: &Graph<T>, hs: Var, mask: &[bool], input: usize, op: &str) -> Result<()> {
    let shape = g.shape(hs);
    if shape.len() != 2 || shape[0] != mask.len() || shape[1] != input {
        return Err(Error::Config(format!(
            "{op}: inputs {shape:?} do not match mask length {} and width {input}",
            mask.len()
        )));
    }
    Ok(())
}

fn attend<T: Real>(
    g: &mut Graph<T>,
    hs: Var,
    projected: Var,
    v: Var,
    mask: &[bool],
) -> Result<(Var, Var)> {
    let act = g.tanh(projected);
    let scores = g.matmul(act, v)?;
    let weights = g.softmax_masked(scores, mask)?;
    let context = g.weighted_sum(weights, hs)?;
    Ok((context, weights))
}

/// Attention over the rows of `hs [n×d]` against a learned context vector.
/// Returns `(Σ_t w_t hs[t], w)`.
pub fn self_attention<T: Real>(
    g: &mut Graph<T>,
    hs: Var,
    mask: &[bool],
    p: &SelfAttentionParams,
) -> Result<(Var, Var)> {
    check_rows(g, hs, mask, p.input, "self_attention")?;
    let (w, b, v) = (g.param(p.w), g.param(p.b), g.param(p.v));
    let proj = g.linear(w, hs, Some(b))?;
    attend(g, hs, proj, v, mask)
}

/// `U·hs[t]` for every row; reusable across several conditions.
pub fn project_inputs<T: Real>(
    g: &mut Graph<T>,
    hs: Var,
    p: &ConditionedAttentionParams,
) -> Result<Var> {
    let u = g.param(p.u);
    Ok(g.linear(u, hs, None)?)
}

/// `W·cond`; reusable across several attended sequences.
pub fn project_condition<T: Real>(
    g: &mut Graph<T>,
    cond: Var,
    p: &ConditionedAttentionParams,
) -> Result<Var> {
    if g.shape(cond) != [p.cond] {
        return Err(Error::Config(format!(
            "conditioned_attention: condition {:?} does not match width {}",
            g.shape(cond),
            p.cond
        )));
    }
    let w = g.param(p.w);
    Ok(g.linear(w, cond, None)?)
}

/// Conditioned attention from precomputed projections.
pub fn conditioned_attention_projected<T: Real>(
    g: &mut Graph<T>,
    hs: Var,
    projected_inputs: Var,
    projected_cond: Var,
    mask: &[bool],
    p: &ConditionedAttentionParams,
) -> Result<(Var, Var)> {
    let pre = g.add_row(projected_inputs, projected_cond)?;
    let v = g.param(p.v);
    attend(g, hs, pre, v, mask)
}

/// Attention over `hs [n×d]` scored by `vᵀ tanh(W·cond + U·hs[t])`.
pub fn conditioned_attention<T: Real>(
    g: &mut Graph<T>,
    hs: Var,
    cond: Var,
    mask: &[bool],
    p: &ConditionedAttentionParams,
) -> Result<(Var, Var)> {
    check_rows(g, hs, mask, p.input, "conditioned_attention")?;
    let uh = project_inputs(g, hs, p)?;
    let wc = project_condition(g, cond, p)?;
    conditioned_attention_projected(g, hs, uh, wc, mask, p)
}
