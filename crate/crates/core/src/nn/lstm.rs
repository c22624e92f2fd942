use apjfnn_autograd::{Graph, ParamId, ParamStore, Real, Tensor, Var};
use rand::Rng;

use crate::error::{Error, Result};
use crate::training::init::glorot_init;

/// Gate weights of one LSTM direction. Every `W` is `[hidden × (input+hidden)]`
/// and acts on the concatenation `[x_t; h_{t-1}]`.
#[derive(Clone, Debug)]
pub struct LstmParams {
    pub w_i: ParamId,
    pub w_f: ParamId,
    pub w_c: ParamId,
    pub w_o: ParamId,
    pub b_i: ParamId,
    pub b_f: ParamId,
    pub b_c: ParamId,
    pub b_o: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl LstmParams {
    pub fn new<T: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        prefix: &str,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut mat = |name: &str, store: &mut ParamStore<T>| -> Result<ParamId> {
            Ok(store.add(
                format!("{prefix}.{name}"),
                glorot_init(&[hidden, input + hidden], rng)?,
            ))
        };
        let w_i = mat("W_i", store)?;
        let w_f = mat("W_f", store)?;
        let w_c = mat("W_C", store)?;
        let w_o = mat("W_o", store)?;
        let mut vec = |name: &str, store: &mut ParamStore<T>| -> Result<ParamId> {
            Ok(store.add(format!("{prefix}.{name}"), glorot_init(&[hidden], rng)?))
        };
        let b_i = vec("b_i", store)?;
        let b_f = vec("b_f", store)?;
        let b_c = vec("b_C", store)?;
        let b_o = vec("b_o", store)?;
        Ok(Self {
            w_i,
            w_f,
            w_c,
            w_o,
            b_i,
            b_f,
            b_c,
            b_o,
            input,
            hidden,
        })
    }

    pub fn ids(&self) -> [ParamId; 8] {
        [
            self.w_i, self.w_f, self.w_c, self.w_o, self.b_i, self.b_f, self.b_c, self.b_o,
        ]
    }
}

/// Forward and backward directions of a bidirectional LSTM.
#[derive(Clone, Debug)]
pub struct BiLstmParams {
    pub fwd: LstmParams,
    pub bwd: LstmParams,
}

impl BiLstmParams {
    pub fn new<T: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        prefix: &str,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Self {
            fwd: LstmParams::new(store, &format!("{prefix}.fwd"), input, hidden, rng)?,
            bwd: LstmParams::new(store, &format!("{prefix}.bwd"), input, hidden, rng)?,
        })
    }

    /// Width of each output vector, `2·hidden`.
    pub fn output_dim(&self) -> usize {
        self.fwd.hidden + self.bwd.hidden
    }

    pub fn ids(&self) -> Vec<ParamId> {
        self.fwd.ids().into_iter().chain(self.bwd.ids()).collect()
    }
}

fn check_gate<T: Real>(
    g: &Graph<T>,
    gate: &str,
    w: Var,
    b: Var,
    cols: usize,
    hidden: usize,
) -> Result<()> {
    if g.shape(w) != [hidden, cols] || g.shape(b) != [hidden] {
        return Err(Error::Config(format!(
            "{gate}: weight {:?} / bias {:?} do not fit input+hidden = {cols}, hidden = {hidden}",
            g.shape(w),
            g.shape(b)
        )));
    }
    Ok(())
}

/// One LSTM cell update; returns `(h_t, C_t)`.
pub fn lstm_step<T: Real>(
    g: &mut Graph<T>,
    x: Var,
    h_prev: Var,
    c_prev: Var,
    p: &LstmParams,
) -> Result<(Var, Var)> {
    let hidden = g.shape(h_prev).first().copied().unwrap_or(0);
    if g.shape(c_prev) != [hidden] || g.shape(x).len() != 1 {
        return Err(Error::Config(format!(
            "lstm_step: x {:?}, h {:?}, c {:?} are not vectors of matching hidden size",
            g.shape(x),
            g.shape(h_prev),
            g.shape(c_prev)
        )));
    }
    let cols = g.shape(x)[0] + hidden;
    let gates = [
        ("input gate W_i", p.w_i, p.b_i),
        ("forget gate W_f", p.w_f, p.b_f),
        ("candidate W_C", p.w_c, p.b_c),
        ("output gate W_o", p.w_o, p.b_o),
    ];
    let mut bound = Vec::with_capacity(4);
    for (name, w, b) in gates {
        let (w, b) = (g.param(w), g.param(b));
        check_gate(g, name, w, b, cols, hidden)?;
        bound.push((w, b));
    }
    let xh = g.concat(&[x, h_prev])?;
    let zi = g.linear(bound[0].0, xh, Some(bound[0].1))?;
    let zf = g.linear(bound[1].0, xh, Some(bound[1].1))?;
    let zc = g.linear(bound[2].0, xh, Some(bound[2].1))?;
    let zo = g.linear(bound[3].0, xh, Some(bound[3].1))?;
    let i = g.sigmoid(zi);
    let f = g.sigmoid(zf);
    let cand = g.tanh(zc);
    let o = g.sigmoid(zo);
    let keep = g.mul(f, c_prev)?;
    let write = g.mul(i, cand)?;
    let c = g.add(keep, write)?;
    let tc = g.tanh(c);
    let h = g.mul(o, tc)?;
    Ok((h, c))
}

fn run_direction<T: Real>(
    g: &mut Graph<T>,
    xs: &[Var],
    p: &LstmParams,
    reverse: bool,
) -> Result<Vec<Var>> {
    let w = [
        g.param(p.w_i),
        g.param(p.w_f),
        g.param(p.w_c),
        g.param(p.w_o),
    ];
    let b = [
        g.param(p.b_i),
        g.param(p.b_f),
        g.param(p.b_c),
        g.param(p.b_o),
    ];
    let names = [
        "input gate W_i",
        "forget gate W_f",
        "candidate W_C",
        "output gate W_o",
    ];
    for k in 0..4 {
        check_gate(g, names[k], w[k], b[k], p.input + p.hidden, p.hidden)?;
    }
    let mut state = g.constant(Tensor::zeros(&[2 * p.hidden]));
    let mut out = vec![state; xs.len()];
    let order: Box<dyn Iterator<Item = usize>> = if reverse {
        Box::new((0..xs.len()).rev())
    } else {
        Box::new(0..xs.len())
    };
    for t in order {
        if g.shape(xs[t]) != [p.input] {
            return Err(Error::Config(format!(
                "lstm input {:?} does not match width {}",
                g.shape(xs[t]),
                p.input
            )));
        }
        state = g.lstm_cell(xs[t], state, w, b)?;
        out[t] = g.slice(state, 0, p.hidden)?;
    }
    Ok(out)
}

/// Runs both directions from zero initial states; `out[t] = [→h_t; ←h_t]`.
pub fn bilstm_encode<T: Real>(g: &mut Graph<T>, xs: &[Var], p: &BiLstmParams) -> Result<Vec<Var>> {
    if xs.is_empty() {
        return Err(Error::Validation(
            "bilstm_encode: empty input sequence".into(),
        ));
    }
    let fwd = run_direction(g, xs, &p.fwd, false)?;
    let bwd = run_direction(g, xs, &p.bwd, true)?;
    fwd.into_iter()
        .zip(bwd)
        .map(|(f, b)| Ok(g.concat(&[f, b])?))
        .collect()
}

/// Encodes the real positions of a padded sequence and returns the
/// `[mask.len() × 2·hidden]` output matrix with zero rows at padding.
///
/// `real` holds one input per `true` entry of `mask`, in order.
pub fn bilstm_encode_padded<T: Real>(
    g: &mut Graph<T>,
    real: &[Var],
    mask: &[bool],
    p: &BiLstmParams,
) -> Result<Var> {
    let count = mask.iter().filter(|&&m| m).count();
    if count != real.len() {
        return Err(Error::Validation(format!(
            "bilstm_encode_padded: {} inputs for {count} unmasked positions",
            real.len()
        )));
    }
    let encoded = bilstm_encode(g, real, p)?;
    if count == mask.len() {
        return Ok(g.stack(&encoded)?);
    }
    let zero = g.constant(Tensor::zeros(&[p.output_dim()]));
    let mut it = encoded.into_iter();
    let rows: Vec<Var> = mask
        .iter()
        .map(|&m| if m { it.next().expect("counted") } else { zero })
        .collect();
    Ok(g.stack(&rows)?)
}
