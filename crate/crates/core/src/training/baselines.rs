//! Logistic regression over bag-of-words or mean-embedding features.

use apjfnn_autograd::{Gradients, ParamId, ParamStore, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Caps, EncodedApplication};
use crate::error::{Error, Result};
use crate::eval::{evaluate, MetricsReport, DEFAULT_THRESHOLD};
use crate::training::adam::{AdamConfig, AdamState};
use crate::training::loss::bce_value;
use crate::training::trainer::mix_seed;

/// How an application becomes a feature vector. Both variants splice the
/// posting half and the resume half together.
#[derive(Clone, Debug)]
pub enum Features {
    /// Word counts over the vocabulary.
    BagOfWords { vocab_size: usize },
    /// Mean word vector under a fixed `[vocab × dim]` table.
    MeanEmbedding { table: Tensor<f64> },
}

impl Features {
    pub fn width(&self) -> usize {
        match self {
            Features::BagOfWords { vocab_size } => 2 * vocab_size,
            Features::MeanEmbedding { table } => 2 * table.cols(),
        }
    }

    fn half(&self, docs: &[Vec<u32>], out: &mut [f64]) {
        match self {
            Features::BagOfWords { vocab_size } => {
                for &t in docs.iter().flatten() {
                    if (t as usize) < *vocab_size {
                        out[t as usize] += 1.0;
                    }
                }
            }
            Features::MeanEmbedding { table } => {
                let n = docs.iter().map(Vec::len).sum::<usize>().max(1) as f64;
                for &t in docs.iter().flatten() {
                    if (t as usize) < table.rows() {
                        for (o, v) in out.iter_mut().zip(table.row(t as usize)) {
                            *o += v / n;
                        }
                    }
                }
            }
        }
    }

    /// Features after the same truncation the neural models see.
    pub fn extract(&self, app: &EncodedApplication, caps: &Caps) -> Vec<f64> {
        let app = caps.truncate(app);
        let w = self.width() / 2;
        let mut out = vec![0.0; 2 * w];
        let (j, r) = out.split_at_mut(w);
        self.half(&app.requirements, j);
        self.half(&app.experiences, r);
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticConfig {
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self {
            adam: AdamConfig {
                lr: 1e-2,
                ..AdamConfig::default()
            },
            batch_size: 64,
            epochs: 50,
            seed: 0,
            patience: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl LogisticModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        sigmoid(self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias)
    }
}

#[derive(Clone, Debug)]
pub struct LogisticOutcome {
    pub model: LogisticModel,
    pub best_epoch: usize,
    /// Validation metrics of the selected model.
    pub val: MetricsReport,
    pub train_losses: Vec<f64>,
}

/// Mini-batch Adam on mean BCE; keeps the epoch with the best validation AUC.
pub fn train_logistic(
    train_x: &[Vec<f64>],
    train_y: &[u8],
    val_x: &[Vec<f64>],
    val_y: &[u8],
    cfg: &LogisticConfig,
) -> Result<LogisticOutcome> {
    cfg.adam.validate()?;
    if train_x.is_empty()
        || val_x.is_empty()
        || train_x.len() != train_y.len()
        || val_x.len() != val_y.len()
    {
        return Err(Error::Validation(
            "logistic regression needs matching, non-empty train and validation sets".into(),
        ));
    }
    if cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(Error::Config(
            "batch_size and epochs must be positive".into(),
        ));
    }
    let dim = train_x[0].len();
    let mut store = ParamStore::<f64>::new();
    let w = store.add("w", Tensor::zeros(&[dim]));
    let b = store.add("b", Tensor::zeros(&[1]));
    let mut adam = AdamState::new(&store);
    let model_of = |s: &ParamStore<f64>| LogisticModel {
        weights: s.get(w).data().to_vec(),
        bias: s.get(b).data()[0],
    };

    let mut best: Option<(f64, usize, LogisticModel, MetricsReport)> = None;
    let mut stale = 0;
    let mut train_losses = Vec::new();
    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..train_x.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(&[
            cfg.seed,
            epoch as u64,
        ])));
        let mut loss_sum = 0.0;
        for idx in order.chunks(cfg.batch_size) {
            let model = model_of(&store);
            let mut gw = vec![0.0; dim];
            let mut gb = 0.0;
            for &i in idx {
                let p = model.predict(&train_x[i]);
                loss_sum += bce_value(p, train_y[i]);
                let r = (p - f64::from(train_y[i])) / idx.len() as f64;
                for (g, x) in gw.iter_mut().zip(&train_x[i]) {
                    *g += r * x;
                }
                gb += r;
            }
            let mut grads = Gradients::empty(2);
            grads.set(ParamId(w.0), gw);
            grads.set(ParamId(b.0), vec![gb]);
            adam.step(&mut store, &grads, &cfg.adam)?;
        }
        train_losses.push(loss_sum / train_x.len() as f64);
        let model = model_of(&store);
        let scores: Vec<f64> = val_x.iter().map(|x| model.predict(x)).collect();
        let report = evaluate(&scores, val_y, DEFAULT_THRESHOLD)?;
        let s = report.auc.unwrap_or(report.accuracy);
        if best.as_ref().is_none_or(|(bs, ..)| s > *bs) {
            best = Some((s, epoch, model, report));
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    let (_, best_epoch, model, val) = best.expect("at least one epoch");
    Ok(LogisticOutcome {
        model,
        best_epoch,
        val,
        train_losses,
    })
}

/// Extracts features for both sets and trains.
pub fn train_baseline(
    features: &Features,
    train_set: &[EncodedApplication],
    val_set: &[EncodedApplication],
    caps: &Caps,
    cfg: &LogisticConfig,
) -> Result<LogisticOutcome> {
    let fx = |s: &[EncodedApplication]| {
        s.iter()
            .map(|a| features.extract(a, caps))
            .collect::<Vec<_>>()
    };
    let fy = |s: &[EncodedApplication]| s.iter().map(|a| a.label).collect::<Vec<_>>();
    train_logistic(
        &fx(train_set),
        &fy(train_set),
        &fx(val_set),
        &fy(val_set),
        cfg,
    )
}
