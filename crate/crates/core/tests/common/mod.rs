//! Helpers shared by the integration and acceptance tests.
#![allow(dead_code)]

use apjfnn::data::{Batch, Caps, EncodedApplication};
use apjfnn::model::{ModelConfig, ModelKind, ModelParams};
use apjfnn::nn::Mode;
use apjfnn::training::batch_gradients;
use apjfnn_autograd::ParamId;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-6;

/// Word counts of one toy application.
pub struct Shape {
    pub requirement_words: Vec<usize>,
    pub experience_words: Vec<usize>,
}

pub fn toy_app(
    rng: &mut ChaCha8Rng,
    vocab: usize,
    shape: &Shape,
    label: u8,
    side: Option<&str>,
) -> EncodedApplication {
    let mut doc = |lens: &[usize]| -> Vec<Vec<u32>> {
        lens.iter()
            .map(|&n| (0..n).map(|_| rng.gen_range(2..vocab as u32)).collect())
            .collect()
    };
    EncodedApplication {
        job_id: "j".into(),
        resume_id: "r".into(),
        requirements: doc(&shape.requirement_words),
        experiences: doc(&shape.experience_words),
        label,
        side: side.map(str::to_owned),
    }
}

#[derive(Debug)]
pub struct GradCheck {
    pub max_rel_err: f64,
    pub worst: String,
    pub checked: usize,
}

/// `|a − n| / max(|a|, |n|, floor)`: relative where the gradient is
/// non-negligible, absolute (scaled by `1/floor`) near zero.
pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares every parameter gradient of the mean batch loss with central
/// differences. Dropout runs with a fixed mask seed so the loss is a
/// deterministic function of the parameters.
pub fn gradcheck(
    params: &ModelParams<f64>,
    apps: &[EncodedApplication],
    mode: Mode,
    floor: f64,
) -> GradCheck {
    let batch = Batch::new(apps, &Caps::default());
    let (_, grads) = batch_gradients(params, &batch, mode, 11).unwrap();
    let mut out = GradCheck {
        max_rel_err: 0.0,
        worst: String::new(),
        checked: 0,
    };
    let mut p = params.clone();
    for i in 0..params.store.len() {
        let id = ParamId(i);
        let analytic = grads
            .get(id)
            .expect("every parameter has a gradient")
            .to_vec();
        for j in 0..analytic.len() {
            let orig = p.store.get(id).data()[j];
            let mut at = |v: f64| {
                p.store.get_mut(id).data_mut()[j] = v;
                batch_gradients(&p, &batch, mode, 11).unwrap().0
            };
            let numeric = (at(orig + FD_STEP) - at(orig - FD_STEP)) / (2.0 * FD_STEP);
            p.store.get_mut(id).data_mut()[j] = orig;
            let e = rel_err(analytic[j], numeric, floor);
            out.checked += 1;
            if e > out.max_rel_err {
                out.max_rel_err = e;
                out.worst = format!(
                    "{}[{j}]: analytic {:e}, numeric {numeric:e}",
                    params.store.name(id),
                    analytic[j]
                );
            }
        }
    }
    out
}

pub fn toy_model(
    kind: ModelKind,
    vocab: usize,
    embed: usize,
    hidden: usize,
    seed: u64,
) -> ModelParams<f64> {
    let config = ModelConfig::small(kind, vocab, embed, hidden);
    ModelParams::init(config, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}
