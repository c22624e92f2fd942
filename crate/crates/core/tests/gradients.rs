mod common;

use apjfnn::model::ModelKind;
use apjfnn::nn::Mode;
use common::{gradcheck, toy_app, toy_model, Shape};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const VOCAB: usize = 24;

fn run(kind: ModelKind, mode: Mode, shapes: &[Shape]) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let side = kind.uses_side().then_some("female");
    let apps: Vec<_> = shapes
        .iter()
        .enumerate()
        .map(|(i, s)| toy_app(&mut rng, VOCAB, s, (i % 2) as u8, side))
        .collect();
    let params = toy_model(kind, VOCAB, 6, 4, 3);
    let r = gradcheck(&params, &apps, mode, 1e-6);
    assert!(r.max_rel_err < 1e-3, "{kind}: {r:?}");
}

fn full() -> Vec<Shape> {
    (0..2)
        .map(|_| Shape {
            requirement_words: vec![8, 8],
            experience_words: vec![12, 12],
        })
        .collect()
}

fn ragged() -> Vec<Shape> {
    vec![
        Shape {
            requirement_words: vec![8, 3],
            experience_words: vec![12],
        },
        Shape {
            requirement_words: vec![2],
            experience_words: vec![5, 12, 1],
        },
    ]
}

#[test]
fn apjfnn_matches_finite_differences() {
    run(ModelKind::Apjfnn, Mode::Eval, &full());
    run(ModelKind::Apjfnn, Mode::Eval, &ragged());
}

#[test]
fn apjfnn_with_dropout_matches_finite_differences() {
    run(ModelKind::Apjfnn, Mode::Train { keep_prob: 0.8 }, &ragged());
}

#[test]
fn bpjfnn_matches_finite_differences() {
    run(ModelKind::Bpjfnn, Mode::Eval, &ragged());
}

#[test]
fn side_model_matches_finite_differences() {
    run(ModelKind::ApjfnnSide, Mode::Eval, &ragged());
}
