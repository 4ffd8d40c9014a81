use approx::assert_relative_eq;

use super::*;
use crate::corpus::EOS;
use crate::error::Error;
use crate::nn::Mode;
use crate::testutil;

fn tiny() -> ModelConfig {
    ModelConfig::tiny()
}

#[test]
fn teacher_forcing_records_every_step() {
    let model = testutil::model(tiny(), 1);
    let sample = testutil::sample(&tiny(), 2);
    let tf = teacher_forced_pass(&model, &sample).unwrap();
    // six words plus EOS
    assert_eq!(tf.steps.len(), sample.annotation.caption.len() + 1);
    for (t, s) in tf.steps.iter().enumerate() {
        assert_eq!(s.t, t);
        assert_eq!(s.word_probs.len(), model.vocab().len());
        assert_relative_eq!(s.word_probs.iter().sum::<f64>(), 1.0, epsilon = 1e-9);
        assert_relative_eq!(s.alpha.iter().sum::<f64>(), 1.0, epsilon = 1e-9);
        assert_eq!(s.alpha.len(), testutil::FRAMES * testutil::PER_FRAME);
        assert_eq!(s.h_a.len(), model.config().hidden_dim);
        assert_eq!(s.beta.is_some(), t == 1 || t == 5, "step {t}");
    }
    assert_eq!(tf.steps.last().unwrap().token, EOS);
    for i in 0..tf.similarity.region_major().rows() {
        assert_relative_eq!(tf.similarity.region(i).iter().sum::<f64>(), 1.0, epsilon = 1e-9);
    }
}

#[test]
fn eval_passes_are_bit_identical() {
    let model = testutil::model(tiny(), 3);
    let sample = testutil::sample(&tiny(), 4);
    assert_eq!(
        teacher_forced_pass(&model, &sample).unwrap(),
        teacher_forced_pass(&model, &sample).unwrap()
    );
    let l = find_preset("sup-attn-grd-cls").unwrap().lambdas;
    let a = batch_objective(&model, &[&sample], &l, &mut Mode::eval(), true).unwrap();
    let b = batch_objective(&model, &[&sample], &l, &mut Mode::eval(), true).unwrap();
    assert_eq!(a.breakdown, b.breakdown);
    assert_eq!(a.grads, b.grads);
}

#[test]
fn sample_targets_follow_annotation() {
    let sample = testutil::sample(&tiny(), 0);
    let t: Vec<_> = sample.targets.iter().map(|t| (t.position, t.class_id, t.frame)).collect();
    assert_eq!(t, vec![(1, 0, 0), (5, 1, 1)]);
    assert_eq!(sample.targets[0].gamma, vec![true, false, false]);
    assert_eq!(sample.targets[1].gamma, vec![false, false, true]);
    assert_eq!(sample.targets[1].frame_regions, 3..6);
    assert_eq!(sample.cls_positives, vec![(0, 0), (5, 1)]);
}

#[test]
fn breakdown_identity_holds_for_every_preset() {
    let model = testutil::model(tiny(), 5);
    let s1 = testutil::sample(&tiny(), 6);
    let s2 = testutil::sample(&tiny(), 7);
    for p in PRESETS.iter() {
        let out = batch_objective(&model, &[&s1, &s2], &p.lambdas, &mut Mode::eval(), false).unwrap();
        let b = out.breakdown;
        let l = p.lambdas;
        assert_relative_eq!(
            b.total,
            b.sent + l.alpha * b.attn + l.cls * b.cls + l.beta * b.grd,
            max_relative = 1e-9
        );
        assert!(b.sent > 0.0 && b.attn > 0.0 && b.grd > 0.0 && b.cls > 0.0);
        assert!(out.grads.is_empty());
    }
}

#[test]
fn sentence_term_matches_recorded_probabilities() {
    let model = testutil::model(tiny(), 8);
    let sample = testutil::sample(&tiny(), 9);
    let tf = teacher_forced_pass(&model, &sample).unwrap();
    let expected = sentence_loss(&tf.steps, &sample.encoded.ids).unwrap();
    let out = batch_objective(&model, &[&sample], &LambdaWeights::default(), &mut Mode::eval(), false).unwrap();
    assert_relative_eq!(out.breakdown.sent, expected, max_relative = 1e-9);
    assert_relative_eq!(out.breakdown.total, expected, max_relative = 1e-9);
}

#[test]
fn batch_gradient_matches_finite_differences() {
    let base = testutil::model(tiny(), 10);
    let sample = testutil::sample(&tiny(), 11);
    let l = find_preset("sup-attn-grd-cls").unwrap().lambdas;
    let loss = |m: &GvdModel| {
        batch_objective(m, &[&sample], &l, &mut Mode::eval(), false)
            .unwrap()
            .breakdown
            .total
    };
    let grads = batch_objective(&base, &[&sample], &l, &mut Mode::eval(), true).unwrap().grads;
    let h = 1e-5;
    for pi in 0..base.params().len() {
        let n = base.params().param(pi).value.len();
        for &k in &[0, n / 2, n - 1] {
            let mut plus = base.clone();
            plus.params_mut().iter_mut().nth(pi).unwrap().value.data_mut()[k] += h;
            let mut minus = base.clone();
            minus.params_mut().iter_mut().nth(pi).unwrap().value.data_mut()[k] -= h;
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
            let analytic = grads[pi].data()[k];
            let err = crate::autodiff::relative_error(analytic, numeric, 1e-6);
            assert!(err < 1e-4, "{} [{k}]: {analytic} vs {numeric}", base.params().param(pi).name);
        }
    }
}

#[test]
fn out_of_range_token_is_rejected() {
    let model = testutil::model(tiny(), 12);
    let mut sample = testutil::sample(&tiny(), 13);
    sample.encoded.ids[2] = 999;
    assert!(matches!(
        teacher_forced_pass(&model, &sample),
        Err(Error::TokenOutOfRange { id: 999, .. })
    ));
}

#[test]
fn train_mode_dropout_changes_loss() {
    use rand::SeedableRng;
    let model = testutil::model(tiny(), 14);
    let sample = testutil::sample(&tiny(), 15);
    let l = find_preset("sup-cls").unwrap().lambdas;
    let eval = batch_objective(&model, &[&sample], &l, &mut Mode::eval(), false).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let train = batch_objective(&model, &[&sample], &l, &mut Mode::train(&mut rng), false).unwrap();
    assert_ne!(eval.breakdown.total, train.breakdown.total);
}

fn rig_output(model: &mut GvdModel, token: usize) {
    let (w, b) = model.output_params();
    let ps = model.params_mut();
    ps.get_mut(w).data_mut().iter_mut().for_each(|v| *v = 0.0);
    ps.get_mut(b).data_mut().iter_mut().for_each(|v| *v = 0.0);
    ps.get_mut(b).set(0, token, 50.0);
}

#[test]
fn rigged_output_repeats_until_max_len() {
    let mut model = testutil::model(tiny(), 16);
    let dog = model.vocab().id("dog");
    rig_output(&mut model, dog);
    let inputs = testutil::inputs(&tiny(), 17);
    for mode in [DecodeMode::Greedy, DecodeMode::Beam(3)] {
        let g = generate(&model, &inputs, mode, 5).unwrap();
        assert_eq!(g.tokens, vec![dog; 5]);
        assert_eq!(g.words, vec!["dog"; 5]);
        assert_eq!(g.steps.len(), 5);
        for s in &g.steps {
            let beta = s.beta.as_ref().expect("class word has beta");
            assert_relative_eq!(beta.iter().sum::<f64>(), 1.0, epsilon = 1e-9);
        }
    }
}

#[test]
fn immediate_eos_gives_empty_caption() {
    let mut model = testutil::model(tiny(), 18);
    rig_output(&mut model, EOS);
    let inputs = testutil::inputs(&tiny(), 19);
    for mode in [DecodeMode::Greedy, DecodeMode::Beam(4)] {
        let g = generate(&model, &inputs, mode, 10).unwrap();
        assert!(g.tokens.is_empty());
        assert!(g.steps.is_empty());
    }
}

#[test]
fn invalid_decode_settings() {
    let model = testutil::model(tiny(), 20);
    let inputs = testutil::inputs(&tiny(), 21);
    assert!(generate(&model, &inputs, DecodeMode::Beam(0), 5).is_err());
    assert!(generate(&model, &inputs, DecodeMode::Greedy, 0).is_err());
}

#[test]
fn beam_of_one_equals_greedy() {
    for trial in 0..50u64 {
        let model = testutil::model(tiny(), 100 + trial);
        let inputs = testutil::inputs(&tiny(), 200 + trial);
        let g = generate(&model, &inputs, DecodeMode::Greedy, 8).unwrap();
        let b = generate(&model, &inputs, DecodeMode::Beam(1), 8).unwrap();
        assert_eq!(g, b, "trial {trial}");
    }
}
