use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use apjfnn_autograd::{Gradients, Graph, Real};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{truncate_pad, Batch, Caps, EncodedApplication, Sample};
use crate::error::{Error, Result};
use crate::eval::{evaluate, MetricsReport, DEFAULT_THRESHOLD};
use crate::model::{forward, score, ModelConfig, ModelParams};
use crate::nn::{check_keep_prob, Mode};
use crate::training::adam::{AdamConfig, AdamState};
use crate::training::loss::bce_loss;
use crate::training::DivergenceReport;

/// Samples per gradient partial sum. Fixed so that the reduction order, and
/// therefore every float, does not depend on the thread count.
const REDUCE_CHUNK: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Upper bound on epochs; early stopping may end sooner.
    pub epochs: usize,
    /// Dropout keep probability.
    pub keep_prob: f64,
    pub seed: u64,
    /// Validate after every `eval_every` epochs (and after the last one).
    pub eval_every: usize,
    /// Validations without improvement before stopping.
    pub patience: usize,
    pub caps: Caps,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            adam: AdamConfig::default(),
            epochs: 20,
            keep_prob: 0.8,
            seed: 0,
            eval_every: 1,
            patience: 5,
            caps: Caps::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 || self.eval_every == 0 || self.patience == 0 {
            return Err(Error::Config(format!(
                "batch_size, epochs, eval_every and patience must be positive: {self:?}"
            )));
        }
        check_keep_prob(self.keep_prob)?;
        self.adam.validate()?;
        self.caps.validate()
    }
}

/// One line of the training history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Optimizer steps taken so far.
    pub steps: usize,
    /// Mean per-sample training loss over the epoch (dropout active).
    pub train_loss: f64,
    pub val: Option<MetricsReport>,
    /// This epoch produced the best validation score so far.
    pub best: bool,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    /// Parameters from the epoch with the best validation score.
    pub best: ModelParams<T>,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
    pub steps: usize,
}

/// Deterministic 64-bit mix of several integers (splitmix64 finalizer).
pub fn mix_seed(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x9E37_79B9_7F4A_7C15;
    for &p in parts {
        let mut z = h ^ p.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}

/// Truncated and padded samples; side features are dropped for models
/// that do not take them.
pub fn prepare_batch(config: &ModelConfig, apps: &[EncodedApplication], caps: &Caps) -> Batch {
    let mut batch = Batch::new(apps, caps);
    if !config.kind.uses_side() {
        for s in &mut batch.samples {
            s.side = None;
        }
    }
    batch
}

fn prepare_one(config: &ModelConfig, app: &EncodedApplication, caps: &Caps) -> Sample {
    let mut s = truncate_pad(app, caps);
    if !config.kind.uses_side() {
        s.side = None;
    }
    s
}

/// Eval-mode probabilities, in input order.
pub fn score_all<T: Real>(
    params: &ModelParams<T>,
    apps: &[EncodedApplication],
    caps: &Caps,
) -> Result<Vec<f64>> {
    apps.par_iter()
        .map(|a| score(params, &prepare_one(&params.config, a, caps)))
        .collect()
}

pub fn evaluate_model<T: Real>(
    params: &ModelParams<T>,
    apps: &[EncodedApplication],
    caps: &Caps,
) -> Result<(MetricsReport, Vec<f64>)> {
    let scores = score_all(params, apps, caps)?;
    let labels: Vec<u8> = apps.iter().map(|a| a.label).collect();
    Ok((evaluate(&scores, &labels, DEFAULT_THRESHOLD)?, scores))
}

/// Loss and gradient of a batch: each sample gets its own graph and dropout
/// stream, the loss is the batch mean.
pub fn batch_gradients<T: Real>(
    params: &ModelParams<T>,
    batch: &Batch,
    mode: Mode,
    seed: u64,
) -> Result<(f64, Gradients<T>)> {
    let inv = T::c(1.0 / batch.len() as f64);
    let indexed: Vec<(usize, &Sample)> = batch.samples.iter().enumerate().collect();
    let partials: Vec<Result<(f64, Gradients<T>)>> = indexed
        .par_chunks(REDUCE_CHUNK)
        .map(|chunk| {
            let mut loss_sum = 0.0;
            let mut grads = Gradients::empty(params.store.len());
            for &(i, sample) in chunk {
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[seed, i as u64]));
                let mut g = Graph::with_params(&params.store);
                let out = forward(params, &mut g, sample, mode, &mut rng, false)?;
                let loss = bce_loss(&mut g, &[out.y_hat], &[sample.label])?;
                loss_sum += g.item(loss).to_f64();
                let scaled = g.scale(loss, inv);
                g.backward(scaled)?;
                grads.accumulate(&g.into_param_grads());
            }
            Ok((loss_sum, grads))
        })
        .collect();
    let mut total = Gradients::empty(params.store.len());
    let mut loss_sum = 0.0;
    for p in partials {
        let (l, g) = p?;
        loss_sum += l;
        total.accumulate(&g);
    }
    Ok((loss_sum / batch.len() as f64, total))
}

fn selection_metric(m: &MetricsReport) -> f64 {
    m.auc.unwrap_or(m.accuracy)
}

/// Mini-batch Adam training with validation-based model selection and
/// early stopping. `on_epoch` sees every history record as it is produced.
pub fn train<T: Real>(
    init: ModelParams<T>,
    train_set: &[EncodedApplication],
    val_set: &[EncodedApplication],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::Validation(format!(
            "training needs non-empty train and validation sets, got {} and {}",
            train_set.len(),
            val_set.len()
        )));
    }
    let mut params = init;
    let mut adam = AdamState::new(&params.store);
    let mut best = params.clone();
    let mut best_epoch = 0;
    let mut best_score = f64::NEG_INFINITY;
    let mut stale = 0;
    let mut steps = 0;
    let mut history = Vec::new();
    let mode = Mode::Train {
        keep_prob: cfg.keep_prob,
    };

    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(&[
            cfg.seed,
            epoch as u64,
        ])));
        let mut epoch_loss = 0.0;
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let apps: Vec<EncodedApplication> = idx.iter().map(|&i| train_set[i].clone()).collect();
            let batch = prepare_batch(&params.config, &apps, &cfg.caps);
            let seed = mix_seed(&[cfg.seed, epoch as u64, b as u64]);
            let (loss, grads) = batch_gradients(&params, &batch, mode, seed)?;
            if !loss.is_finite() || !grads.all_finite() {
                return Err(Error::Divergence(Box::new(DivergenceReport {
                    epoch,
                    step: steps + 1,
                    loss,
                    params: params.store.cast(),
                })));
            }
            adam.step(&mut params.store, &grads, &cfg.adam)?;
            steps += 1;
            epoch_loss += loss * batch.len() as f64;
        }
        let train_loss = epoch_loss / train_set.len() as f64;

        let validate = epoch % cfg.eval_every == 0 || epoch == cfg.epochs;
        let mut record = EpochRecord {
            epoch,
            steps,
            train_loss,
            val: None,
            best: false,
        };
        if validate {
            let (report, _) = evaluate_model(&params, val_set, &cfg.caps)?;
            let s = selection_metric(&report);
            if s > best_score {
                best_score = s;
                best = params.clone();
                best_epoch = epoch;
                stale = 0;
                record.best = true;
            } else {
                stale += 1;
            }
            record.val = Some(report);
        }
        log::info!(
            "epoch {epoch}: loss {:.5}{}",
            record.train_loss,
            record.val.as_ref().map_or(String::new(), |v| format!(
                ", val acc {:.4}, auc {}",
                v.accuracy,
                v.auc.map_or("n/a".into(), |a| format!("{a:.4}"))
            ))
        );
        on_epoch(&record);
        history.push(record);
        if stale >= cfg.patience {
            log::info!("early stop after {epoch} epochs, best epoch {best_epoch}");
            break;
        }
    }
    Ok(TrainOutcome {
        best,
        best_epoch,
        history,
        steps,
    })
}

/// Writes one JSON record per line.
pub fn write_history(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in history {
        writeln!(w, "{}", serde_json::to_string(r)?).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
