use apjfnn_autograd::{Graph, Real, Tensor, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{PaddedDoc, Sample};
use crate::error::{Error, Result};
use crate::model::config::{ModelConfig, OutputHead};
use crate::model::params::{HierarchicalLayers, ModelParams};
use crate::nn::{
    bilstm_encode, bilstm_encode_padded, conditioned_attention, conditioned_attention_projected,
    dropout, project_condition, project_inputs, self_attention, BiLstmParams, Mode,
};

/// Attention weights of one hierarchical forward pass.
///
/// Vectors cover padded positions too; padding always carries weight 0.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AttentionTrace {
    /// `alpha[k][t]`: word `t` of real requirement `k`.
    pub alpha: Vec<Vec<f64>>,
    /// `beta[k]`: requirement slot `k`.
    pub beta: Vec<f64>,
    /// `gamma[l][k][t]`: word `t` of real experience `l`, conditioned on real requirement `k`.
    pub gamma: Vec<Vec<Vec<f64>>>,
    /// `delta[l]`: experience slot `l`.
    pub delta: Vec<f64>,
}

/// Graph handles of one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardOutput {
    pub y_hat: Var,
    pub d: Var,
    pub g_j: Var,
    pub g_r: Var,
    pub trace: Option<AttentionTrace>,
}

/// Plain values of one eval-mode prediction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionOutput {
    pub y_hat: f64,
    pub d: Vec<f64>,
    pub g_j: Vec<f64>,
    pub g_r: Vec<f64>,
    pub trace: AttentionTrace,
}

/// Job-side encoding: `g^J` plus the requirement vectors `s^J_k` of real slots.
#[derive(Clone, Debug)]
pub struct JobEncoding {
    pub g_j: Var,
    pub s_j: Vec<Var>,
}

fn to_f64<T: Real>(g: &Graph<T>, v: Var) -> Vec<f64> {
    g.value(v).data().iter().map(|&x| Real::to_f64(x)).collect()
}

/// One-hot side feature, or `None` for models without one.
pub fn side_vector<T: Real>(config: &ModelConfig, side: Option<&str>) -> Result<Option<Vec<T>>> {
    match (config.kind.uses_side(), side) {
        (false, None) => Ok(None),
        (false, Some(s)) => Err(Error::Config(format!(
            "side feature {s:?} given to {} model, which has no side input",
            config.kind
        ))),
        (true, None) => Err(Error::Validation(format!(
            "{} model needs a side feature",
            config.kind
        ))),
        (true, Some(s)) => {
            let pos = config
                .side_categories
                .iter()
                .position(|c| c == s)
                .ok_or_else(|| {
                    Error::Validation(format!("side {s:?} not in {:?}", config.side_categories))
                })?;
            Ok(Some(
                (0..config.side_categories.len())
                    .map(|i| if i == pos { T::one() } else { T::zero() })
                    .collect(),
            ))
        }
    }
}

/// Embeds real tokens (with dropout in training) and returns one row per token.
fn embed<T: Real, R: Rng + ?Sized>(
    params: &ModelParams<T>,
    g: &mut Graph<T>,
    tokens: &[u32],
    mode: Mode,
    rng: &mut R,
) -> Result<Vec<Var>> {
    let m = params.layout.embedding.lookup(g, tokens)?;
    let m = dropout(g, m, mode, rng)?;
    (0..tokens.len()).map(|i| Ok(g.row(m, i)?)).collect()
}

/// Word BiLSTM over slot `k` of `doc`, giving `[words × 2h]` with zero padding rows.
fn encode_words<T: Real, R: Rng + ?Sized>(
    params: &ModelParams<T>,
    g: &mut Graph<T>,
    doc: &PaddedDoc,
    k: usize,
    lstm: &BiLstmParams,
    mode: Mode,
    rng: &mut R,
    what: &str,
) -> Result<Var> {
    let tokens = doc.real_tokens(k);
    if tokens.is_empty() {
        return Err(Error::Validation(format!("{what} {k} has no words")));
    }
    let xs = embed(params, g, &tokens, mode, rng)?;
    bilstm_encode_padded(g, &xs, &doc.word_mask[k], lstm)
}

fn hier(params: &ModelParams<impl Real>) -> Result<&HierarchicalLayers> {
    params.layout.hier.as_ref().ok_or_else(|| {
        Error::Config(format!(
            "{} model has no hierarchical layers",
            params.config.kind
        ))
    })
}

/// Requirement vectors via the word BiLSTM and α, then `g^J` via the ability
/// BiLSTM and β.
pub fn encode_job<T: Real, R: Rng + ?Sized>(
    params: &ModelParams<T>,
    g: &mut Graph<T>,
    job: &PaddedDoc,
    mode: Mode,
    rng: &mut R,
    mut trace: Option<&mut AttentionTrace>,
) -> Result<JobEncoding> {
    let h = hier(params)?;
    if job.real_slots() == 0 {
        return Err(Error::Validation("job posting has no requirements".into()));
    }
    let mut s_j = Vec::new();
    for k in (0..job.slots()).filter(|&k| job.slot_mask[k]) {
        let hs = encode_words(
            params,
            g,
            job,
            k,
            &params.layout.word_j,
            mode,
            rng,
            "requirement",
        )?;
        let (s, alpha) = self_attention(g, hs, &job.word_mask[k], &h.alpha)?;
        if let Some(t) = trace.as_deref_mut() {
            t.alpha.push(to_f64(g, alpha));
        }
        s_j.push(s);
    }
    let c_j = bilstm_encode_padded(g, &s_j, &job.slot_mask, &h.ability)?;
    let (g_j, beta) = self_attention(g, c_j, &job.slot_mask, &h.beta)?;
    if let Some(t) = trace {
        t.beta = to_f64(g, beta);
    }
    Ok(JobEncoding { g_j, s_j })
}

/// Experience vectors attended under each requirement (γ), averaged over
/// requirements, then `g^R` via the experience BiLSTM and δ conditioned on `g^J`.
pub fn encode_resume<T: Real, R: Rng + ?Sized>(
    params: &ModelParams<T>,
    g: &mut Graph<T>,
    resume: &PaddedDoc,
    job: &JobEncoding,
    mode: Mode,
    rng: &mut R,
    mut trace: Option<&mut AttentionTrace>,
) -> Result<Var> {
    let h = hier(params)?;
    if resume.real_slots() == 0 {
        return Err(Error::Validation("resume has no experiences".into()));
    }
    let conds: Vec<Var> = job
        .s_j
        .iter()
        .map(|&s| project_condition(g, s, &h.gamma))
        .collect::<Result<_>>()?;
    let mut u_r = Vec::new();
    for l in (0..resume.slots()).filter(|&l| resume.slot_mask[l]) {
        let hs = encode_words(
            params,
            g,
            resume,
            l,
            &params.layout.word_r,
            mode,
            rng,
            "experience",
        )?;
        let uh = project_inputs(g, hs, &h.gamma)?;
        let mut per_req = Vec::with_capacity(conds.len());
        let mut gammas = Vec::with_capacity(conds.len());
        for &wc in &conds {
            let (s, gamma) =
                conditioned_attention_projected(g, hs, uh, wc, &resume.word_mask[l], &h.gamma)?;
            per_req.push(s);
            if trace.is_some() {
                gammas.push(to_f64(g, gamma));
            }
        }
        if let Some(t) = trace.as_deref_mut() {
            t.gamma.push(gammas);
        }
        let stacked = g.stack(&per_req)?;
        u_r.push(g.mean_rows(stacked)?);
    }
    let c_r = bilstm_encode_padded(g, &u_r, &resume.slot_mask, &h.experience)?;
    let (g_r, delta) = conditioned_attention(g, c_r, job.g_j, &resume.slot_mask, &h.delta)?;
    if let Some(t) = trace {
        t.delta = to_f64(g, delta);
    }
    Ok(g_r)
}

/// Flat encoding: all words of a document as one sequence, mean pooled.
fn encode_flat<T: Real, R: Rng + ?Sized>(
    params: &ModelParams<T>,
    g: &mut Graph<T>,
    doc: &PaddedDoc,
    lstm: &BiLstmParams,
    mode: Mode,
    rng: &mut R,
    what: &str,
) -> Result<Var> {
    let tokens: Vec<u32> = doc.unpad().concat();
    if tokens.is_empty() {
        return Err(Error::Validation(format!("{what} has no words")));
    }
    let xs = embed(params, g, &tokens, mode, rng)?;
    let hs = bilstm_encode(g, &xs, lstm)?;
    let m = g.stack(&hs)?;
    Ok(g.mean_rows(m)?)
}

/// `D = tanh(W_d [o; g^J; g^R; g^J − g^R] + b_d)` and the output probability.
fn head<T: Real, R: Rng + ?Sized>(
    params: &ModelParams<T>,
    g: &mut Graph<T>,
    side: Option<Vec<T>>,
    g_j: Var,
    g_r: Var,
    mode: Mode,
    rng: &mut R,
) -> Result<(Var, Var)> {
    let diff = g.sub(g_j, g_r)?;
    let mut parts = Vec::with_capacity(4);
    if let Some(o) = side {
        parts.push(g.constant(Tensor::vector(o)));
    }
    parts.extend([g_j, g_r, diff]);
    let x = g.concat(&parts)?;
    let pre = params.layout.head_d.forward(g, x)?;
    let d = g.tanh(pre);
    let d_drop = dropout(g, d, mode, rng)?;
    let z = params.layout.head_y.forward(g, d_drop)?;
    let y = match params.config.output {
        OutputHead::Sigmoid => g.sigmoid(z),
        OutputHead::Softmax2 => {
            let p = g.softmax_masked(z, &[true, true])?;
            g.slice(p, 1, 1)?
        }
    };
    Ok((d, y))
}

/// Builds the full forward pass of `sample` into `g`, which must have been
/// created with [`Graph::with_params`] on `params.store`.
pub fn forward<T: Real, R: Rng + ?Sized>(
    params: &ModelParams<T>,
    g: &mut Graph<T>,
    sample: &Sample,
    mode: Mode,
    rng: &mut R,
    record_trace: bool,
) -> Result<ForwardOutput> {
    let side = side_vector::<T>(&params.config, sample.side.as_deref())?;
    if params.config.kind.is_hierarchical() {
        let mut trace = record_trace.then(AttentionTrace::default);
        let job = encode_job(params, g, &sample.job, mode, rng, trace.as_mut())?;
        let g_r = encode_resume(params, g, &sample.resume, &job, mode, rng, trace.as_mut())?;
        let (d, y_hat) = head(params, g, side, job.g_j, g_r, mode, rng)?;
        Ok(ForwardOutput {
            y_hat,
            d,
            g_j: job.g_j,
            g_r,
            trace,
        })
    } else {
        let l = &params.layout;
        let g_j = encode_flat(params, g, &sample.job, &l.word_j, mode, rng, "job posting")?;
        let g_r = encode_flat(params, g, &sample.resume, &l.word_r, mode, rng, "resume")?;
        let (d, y_hat) = head(params, g, side, g_j, g_r, mode, rng)?;
        Ok(ForwardOutput {
            y_hat,
            d,
            g_j,
            g_r,
            trace: record_trace.then(AttentionTrace::default),
        })
    }
}

/// Eval-mode prediction with the attention trace.
pub fn predict<T: Real>(params: &ModelParams<T>, sample: &Sample) -> Result<PredictionOutput> {
    let mut g = Graph::with_params(&params.store);
    let mut unused = rand::rngs::mock::StepRng::new(0, 0);
    let out = forward(params, &mut g, sample, Mode::Eval, &mut unused, true)?;
    Ok(PredictionOutput {
        y_hat: Real::to_f64(g.item(out.y_hat)),
        d: to_f64(&g, out.d),
        g_j: to_f64(&g, out.g_j),
        g_r: to_f64(&g, out.g_r),
        trace: out.trace.unwrap_or_default(),
    })
}

/// Eval-mode scores only; skips trace bookkeeping.
pub fn score<T: Real>(params: &ModelParams<T>, sample: &Sample) -> Result<f64> {
    let mut g = Graph::with_params(&params.store);
    let mut unused = rand::rngs::mock::StepRng::new(0, 0);
    let out = forward(params, &mut g, sample, Mode::Eval, &mut unused, false)?;
    Ok(Real::to_f64(g.item(out.y_hat)))
}
