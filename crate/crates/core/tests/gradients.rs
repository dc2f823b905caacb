mod common;

use bgsum::attention::{background_vector, prepare_keys, AttnParams};
use bgsum::autodiff::{ParamSet, Tensor};
use bgsum::decoder::{step_background, DecoderDims, DecoderParams, ExtendedVocab, SourceContext};
use bgsum::encoder::{encode, lstm_cell, BiRnnParams, LstmParams};
use bgsum::model::Variant;
use common::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-5;

#[test]
fn lstm_cell_inputs() {
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ps = ParamSet::new();
        let p = LstmParams::new(&mut ps, "cell", 3, 4, &mut rng);
        let inputs = [
            Tensor::uniform(&[3], 1.0, &mut rng),
            Tensor::uniform(&[4], 1.0, &mut rng),
            Tensor::uniform(&[4], 1.0, &mut rng),
        ];
        let err = leaf_grad_error(&ps, &inputs, |g, v| {
            let (s, c) = lstm_cell(g, v[0], v[1], v[2], &p).unwrap();
            let s = project(g, s, 1);
            let c = project(g, c, 2);
            g.add(s, c).unwrap()
        });
        assert!(err < TOL, "seed {seed}: {err}");
    }
}

#[test]
fn bidirectional_encoder_inputs() {
    for seed in 0..3 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ps = ParamSet::new();
        let p = BiRnnParams::new(&mut ps, "enc", 3, 4, 2, &mut rng);
        let inputs = [Tensor::uniform(&[4, 3], 1.0, &mut rng)];
        let err = leaf_grad_error(&ps, &inputs, |g, v| {
            let out = encode(g, v[0], &p).unwrap();
            let a = project(g, out.states, 3);
            let b = project(g, out.final_state, 4);
            g.add(a, b).unwrap()
        });
        assert!(err < TOL, "seed {seed}: {err}");
    }
}

#[test]
fn background_vector_wrt_states_and_query() {
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ps = ParamSet::new();
        let p = AttnParams::new(&mut ps, "bg", 4, 6, 5, &mut rng);
        let inputs = [Tensor::uniform(&[3, 4], 1.0, &mut rng), Tensor::uniform(&[6], 1.0, &mut rng)];
        let err = leaf_grad_error(&ps, &inputs, |g, v| {
            let b = background_vector(g, v[0], v[1], &p).unwrap();
            project(g, b, 5)
        });
        assert!(err < TOL, "seed {seed}: {err}");
    }
}

#[test]
fn gated_decoder_step_wrt_background() {
    let vocab = tiny_vocab();
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ps = ParamSet::new();
        let dims = DecoderDims { emb_dim: 3, context_dim: 4, hidden: 5, attn_dim: 3, proj_dim: 4, vocab_size: vocab.len() };
        let p = DecoderParams::new(&mut ps, "dec", dims, true, &mut rng);
        randomize(&mut ps, 0.5, &mut rng);
        let ext = ExtendedVocab::new(&vocab, &words("a zz c zz"));
        let inputs = [
            Tensor::uniform(&[4], 1.0, &mut rng),
            Tensor::uniform(&[5], 1.0, &mut rng),
            Tensor::uniform(&[5], 1.0, &mut rng),
            Tensor::uniform(&[3], 1.0, &mut rng),
            Tensor::uniform(&[4, 4], 1.0, &mut rng),
        ];
        let err = leaf_grad_error(&ps, &inputs, |g, v| {
            let keys = prepare_keys(g, v[4], &p.attn).unwrap();
            let src = SourceContext { keys, ext: &ext };
            let st = step_background(g, v[1], v[2], v[3], v[0], &src, &p).unwrap();
            let logp = g.log(st.dist).unwrap();
            let a = g.pick(logp, ext.len() - 1).unwrap();
            let b = project(g, st.s, 7);
            g.add(a, b).unwrap()
        });
        assert!(err < TOL, "seed {seed}: {err}");
    }
}

#[test]
fn end_to_end_every_parameter() {
    for (seed, variant) in [(0, Variant::BackgroundGated), (1, Variant::Plain), (2, Variant::PrependBackground)] {
        let (mut model, ex) = tiny_model(variant, seed);
        let err = model_grad_error(&mut model, &ex);
        assert!(err < TOL, "{variant:?}: {err}");
    }
}

#[test]
fn fd_oracle_agrees_on_a_closed_form() {
    let x = [0.3, -1.2, 2.0];
    let g = numeric_grad(&x, |v| v[0] * v[0] + (v[1] * v[2]).sin());
    let exact = [0.6, 2.0 * (-2.4f64).cos(), -1.2 * (-2.4f64).cos()];
    assert!(max_rel_err(&exact, &g) < 1e-8);
}
