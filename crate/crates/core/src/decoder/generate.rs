use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::corpus::EOS;
use crate::error::{Error, Result};
use crate::grounding::conditioned_logits;
use crate::nn::Mode;
use crate::params::Bound;
use crate::sample::SegmentInputs;
use crate::tensor::argmax;

use super::loss::DecodeStep;
use super::model::{GvdModel, LstmState, SegmentGraph, StepOut};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeMode {
    #[default]
    Greedy,
    /// Beam search with the given width, scored by mean log probability.
    Beam(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Generated {
    pub tokens: Vec<usize>,
    pub words: Vec<String>,
    /// One record per emitted word.
    pub steps: Vec<DecodeStep>,
    /// Sum of log probabilities of the emitted tokens (and EOS if reached).
    pub log_prob: f64,
}

fn record(model: &GvdModel, tape: &Tape, g: &SegmentGraph, out: &StepOut, t: usize, token: usize) -> DecodeStep {
    let beta = model.word_class(token).map(|class| {
        let logits = conditioned_logits(tape, g.base_logits, class, out.alpha);
        tape.value(tape.softmax_rows(logits)).data().to_vec()
    });
    DecodeStep {
        t,
        h_a: tape.value(out.state.h_a).data().to_vec(),
        word_probs: tape.value(out.logp).data().iter().map(|v| v.exp()).collect(),
        alpha: tape.value(out.alpha).data().to_vec(),
        beta,
        token,
    }
}

/// Decodes a caption for one segment, stopping at EOS or after `max_len`
/// words.
pub fn generate(model: &GvdModel, inputs: &SegmentInputs, mode: DecodeMode, max_len: usize) -> Result<Generated> {
    if max_len < 1 {
        return Err(Error::Config("max_len must be at least 1".into()));
    }
    let tape = Tape::new();
    let p = model.params().bind(&tape);
    let g = model.build_segment(&tape, &p, inputs, &mut Mode::eval())?;
    let (tokens, steps, log_prob) = match mode {
        DecodeMode::Greedy => greedy(model, &tape, &p, &g, max_len),
        DecodeMode::Beam(0) => return Err(Error::Config("beam width must be at least 1".into())),
        DecodeMode::Beam(k) => beam(model, &tape, &p, &g, max_len, k),
    };
    let words = tokens.iter().map(|&t| model.vocab().token(t).to_string()).collect();
    Ok(Generated {
        tokens,
        words,
        steps,
        log_prob,
    })
}

fn greedy(model: &GvdModel, tape: &Tape, p: &Bound, g: &SegmentGraph, max_len: usize) -> (Vec<usize>, Vec<DecodeStep>, f64) {
    let mut state = model.initial_state(tape);
    let mut input = model.start_token();
    let (mut tokens, mut steps, mut log_prob) = (Vec::new(), Vec::new(), 0.0);
    for t in 0..max_len {
        let out = model.step(tape, p, g, state, input);
        let logp = tape.value(out.logp).data().to_vec();
        let token = argmax(&logp);
        log_prob += logp[token];
        if token == EOS {
            break;
        }
        steps.push(record(model, tape, g, &out, t, token));
        tokens.push(token);
        state = out.state;
        input = token;
    }
    (tokens, steps, log_prob)
}

struct Hyp {
    tokens: Vec<usize>,
    steps: Vec<DecodeStep>,
    log_prob: f64,
    state: LstmState,
    finished: bool,
}

impl Hyp {
    /// Mean log probability per scored token.
    fn normalized(&self) -> f64 {
        let n = self.tokens.len() + usize::from(self.finished);
        if n == 0 {
            self.log_prob
        } else {
            self.log_prob / n as f64
        }
    }
}

fn beam(model: &GvdModel, tape: &Tape, p: &Bound, g: &SegmentGraph, max_len: usize, k: usize) -> (Vec<usize>, Vec<DecodeStep>, f64) {
    let mut alive = vec![Hyp {
        tokens: vec![],
        steps: vec![],
        log_prob: 0.0,
        state: model.initial_state(tape),
        finished: false,
    }];
    let mut done: Vec<Hyp> = Vec::new();
    for t in 0..max_len {
        let outs: Vec<StepOut> = alive
            .iter()
            .map(|h| {
                let input = h.tokens.last().copied().unwrap_or(model.start_token());
                model.step(tape, p, g, h.state, input)
            })
            .collect();
        // candidates in (hypothesis, token) order; the stable sort keeps
        // that order among equal scores
        let mut cands: Vec<(f64, usize, usize)> = Vec::new();
        for (hi, out) in outs.iter().enumerate() {
            for (tok, lp) in tape.value(out.logp).data().iter().enumerate() {
                cands.push((alive[hi].log_prob + lp, hi, tok));
            }
        }
        cands.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut next = Vec::new();
        for &(score, hi, tok) in cands.iter().take(k - done.len().min(k - 1)) {
            let parent = &alive[hi];
            if tok == EOS {
                done.push(Hyp {
                    tokens: parent.tokens.clone(),
                    steps: parent.steps.clone(),
                    log_prob: score,
                    state: parent.state,
                    finished: true,
                });
            } else {
                let mut steps = parent.steps.clone();
                steps.push(record(model, tape, g, &outs[hi], t, tok));
                let mut tokens = parent.tokens.clone();
                tokens.push(tok);
                next.push(Hyp {
                    tokens,
                    steps,
                    log_prob: score,
                    state: outs[hi].state,
                    finished: false,
                });
            }
        }
        alive = next;
        if alive.is_empty() || done.len() >= k {
            break;
        }
    }
    done.extend(alive);
    let best = done
        .into_iter()
        .reduce(|best, h| if h.normalized() > best.normalized() { h } else { best })
        .expect("at least one hypothesis");
    (best.tokens, best.steps, best.log_prob)
}
