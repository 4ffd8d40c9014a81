use std::rc::Rc;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::grounding::{conditioned_logits, SimilarityMatrix};
use crate::nn::Mode;
use crate::params::Bound;
use crate::sample::{Sample, WordTarget};
use crate::tensor::Mat;

use super::config::SentenceAveraging;
use super::loss::{joint_loss, DecodeStep, LambdaWeights, LossBreakdown};
use super::model::{GvdModel, SegmentGraph, StepOut};

/// Records of a teacher-forced pass and the region-class similarity used.
#[derive(Clone, Debug, PartialEq)]
pub struct TeacherForced {
    pub steps: Vec<DecodeStep>,
    pub similarity: SimilarityMatrix,
}

struct TfGraph {
    seg: SegmentGraph,
    steps: Vec<StepOut>,
}

fn run(model: &GvdModel, tape: &Tape, p: &Bound, sample: &Sample, mode: &mut Mode) -> Result<TfGraph> {
    let ids = &sample.encoded.ids;
    let size = model.vocab().len();
    if let Some(&bad) = ids.iter().find(|&&id| id >= size) {
        return Err(Error::TokenOutOfRange { id: bad, size });
    }
    let seg = model.build_segment(tape, p, &sample.inputs, mode)?;
    let mut state = model.initial_state(tape);
    let mut steps = Vec::with_capacity(ids.len());
    let mut input = model.start_token();
    for &target in ids {
        let out = model.step(tape, p, &seg, state, input);
        state = out.state;
        steps.push(out);
        input = target;
    }
    Ok(TfGraph { seg, steps })
}

fn row_mask(len: usize, on: impl Fn(usize) -> bool) -> Rc<Mat> {
    Rc::new(Mat::row_vector((0..len).map(|i| if on(i) { 1.0 } else { 0.0 }).collect()))
}

/// `-sum_i gamma_i log softmax(logits restricted to the GT frame)_i`.
fn frame_nll(tape: &Tape, logits: Var, target: &WordTarget) -> Var {
    let cols: Vec<usize> = target.frame_regions.clone().collect();
    let lp = tape.log_softmax_rows(tape.select_cols(logits, &cols));
    let mask = row_mask(cols.len(), |i| target.gamma[i]);
    tape.scale(tape.sum_all(tape.mask_mul(lp, mask)), -1.0)
}

/// Unweighted loss sums of one segment.
struct SegmentTerms {
    sent: Var,
    attn: Option<Var>,
    grd: Option<Var>,
    cls: Option<Var>,
}

fn segment_terms(model: &GvdModel, tape: &Tape, g: &TfGraph, sample: &Sample) -> SegmentTerms {
    let ids = &sample.encoded.ids;
    let picks: Vec<Var> = g
        .steps
        .iter()
        .zip(ids)
        .map(|(s, &id)| tape.pick(s.logp, 0, id))
        .collect();
    let per = match model.config().sentence_averaging {
        SentenceAveraging::PerToken => -1.0 / ids.len() as f64,
        SentenceAveraging::PerSentence => -1.0,
    };
    let sent = tape.scale(tape.add_all(&picks), per);

    let supervised: Vec<&WordTarget> = sample.targets.iter().filter(|t| t.has_positive()).collect();
    let (attn, grd) = if supervised.is_empty() {
        (None, None)
    } else {
        let a: Vec<Var> = supervised
            .iter()
            .map(|t| frame_nll(tape, g.steps[t.position].alpha_logits, t))
            .collect();
        let b: Vec<Var> = supervised
            .iter()
            .map(|t| {
                let logits = conditioned_logits(tape, g.seg.base_logits, t.class_id, g.steps[t.position].alpha);
                frame_nll(tape, logits, t)
            })
            .collect();
        (Some(tape.add_all(&a)), Some(tape.add_all(&b)))
    };

    let cls = (!sample.cls_positives.is_empty()).then(|| {
        let (n, k) = tape.shape(g.seg.ms_logits);
        let mut mask = Mat::zeros(n, k);
        for &(region, class) in &sample.cls_positives {
            mask.set(region, class, 1.0);
        }
        let lp = tape.log_softmax_rows(g.seg.ms_logits);
        tape.scale(tape.sum_all(tape.mask_mul(lp, Rc::new(mask))), -1.0)
    });
    SegmentTerms { sent, attn, grd, cls }
}

/// Feeds the ground-truth caption and records every step (eval mode).
pub fn teacher_forced_pass(model: &GvdModel, sample: &Sample) -> Result<TeacherForced> {
    let tape = Tape::new();
    let p = model.params().bind(&tape);
    let g = run(model, &tape, &p, sample, &mut Mode::eval())?;
    let mut steps = Vec::with_capacity(g.steps.len());
    for (t, (s, &token)) in g.steps.iter().zip(&sample.encoded.ids).enumerate() {
        let beta = sample.encoded.grounding[t].as_ref().map(|w| {
            let logits = conditioned_logits(&tape, g.seg.base_logits, w.class_id, s.alpha);
            tape.value(tape.softmax_rows(logits)).data().to_vec()
        });
        steps.push(DecodeStep {
            t,
            h_a: tape.value(s.state.h_a).data().to_vec(),
            word_probs: tape.value(s.logp).data().iter().map(|v| v.exp()).collect(),
            alpha: tape.value(s.alpha).data().to_vec(),
            beta,
            token,
        });
    }
    let ms = tape.value(tape.softmax_rows(g.seg.ms_logits)).clone();
    Ok(TeacherForced {
        steps,
        similarity: SimilarityMatrix::from_region_major(ms),
    })
}

/// Loss of a batch and, optionally, its gradient for every parameter.
#[derive(Clone, Debug)]
pub struct BatchOutput {
    pub breakdown: LossBreakdown,
    /// Gradients aligned with the model's parameter order (empty if not
    /// requested).
    pub grads: Vec<Mat>,
}

/// Batch objective. Sentence losses are averaged over segments; attention
/// and grounding losses over all supervised words of the batch;
/// classification over all positive regions of the batch.
pub fn batch_objective(
    model: &GvdModel,
    samples: &[&Sample],
    lambdas: &LambdaWeights,
    mode: &mut Mode,
    with_grads: bool,
) -> Result<BatchOutput> {
    lambdas.validate()?;
    if samples.is_empty() {
        return Err(Error::Data("empty batch".into()));
    }
    let words: usize = samples
        .iter()
        .map(|s| s.targets.iter().filter(|t| t.has_positive()).count())
        .sum();
    let positives: usize = samples.iter().map(|s| s.cls_positives.len()).sum();
    let inv_b = 1.0 / samples.len() as f64;
    let inv_w = if words > 0 { 1.0 / words as f64 } else { 0.0 };
    let inv_p = if positives > 0 { 1.0 / positives as f64 } else { 0.0 };

    let mut grads = if with_grads { model.params().zeros_like() } else { Vec::new() };
    let (mut sent, mut attn, mut grd, mut cls) = (0.0, 0.0, 0.0, 0.0);
    for sample in samples {
        let tape = Tape::new();
        let p = model.params().bind(&tape);
        let g = run(model, &tape, &p, sample, mode)?;
        let terms = segment_terms(model, &tape, &g, sample);
        sent += tape.item(terms.sent) * inv_b;
        let mut weighted = vec![tape.scale(terms.sent, inv_b)];
        for (term, acc, lambda, inv) in [
            (terms.attn, &mut attn, lambdas.alpha, inv_w),
            (terms.grd, &mut grd, lambdas.beta, inv_w),
            (terms.cls, &mut cls, lambdas.cls, inv_p),
        ] {
            if let Some(v) = term {
                *acc += tape.item(v) * inv;
                if lambda > 0.0 {
                    weighted.push(tape.scale(v, lambda * inv));
                }
            }
        }
        if with_grads {
            let total = tape.add_all(&weighted);
            let tape_grads = tape.backward(total);
            p.accumulate(&tape_grads, 1.0, &mut grads);
        }
    }
    let breakdown = joint_loss(sent, attn, cls, grd, lambdas)?;
    if !breakdown.is_finite() {
        let keys: Vec<String> = samples
            .iter()
            .map(|s| format!("{}#{}", s.annotation.video_id, s.annotation.segment_index))
            .collect();
        return Err(Error::NonFinite(format!("loss {breakdown:?} on batch [{}]", keys.join(", "))));
    }
    Ok(BatchOutput { breakdown, grads })
}
