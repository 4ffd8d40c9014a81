use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::attention::{GlobalParams, RegionAttentionParams, TemporalParams};
use crate::autodiff::{Tape, Var};
use crate::corpus::{ObjectClassSet, Vocabulary, BOS};
use crate::error::{Error, Result};
use crate::grounding::{class_logits, init_classifier_transfer, ClassifierBank, EmbeddingTable, EncoderConfig, GroundingEncoderParams};
use crate::nn::{linear, lstm_cell, Mode};
use crate::params::{Bound, Init, ParamGroup, ParamId, ParamSet};
use crate::sample::SegmentInputs;
use crate::tensor::Mat;

use super::config::ModelConfig;

#[derive(Clone, Debug, PartialEq)]
struct Layout {
    embedding: ParamId,
    att_w: ParamId,
    att_b: ParamId,
    lang_w: ParamId,
    lang_b: ParamId,
    out_w: ParamId,
    out_b: ParamId,
    cls_w: ParamId,
    cls_b: ParamId,
    encoder: GroundingEncoderParams,
    region: RegionAttentionParams,
    temporal: TemporalParams,
    global: GlobalParams,
}

/// The full captioning model: grounding module, region and temporal
/// attention, and the two-LSTM language model.
#[derive(Clone, Debug, PartialEq)]
pub struct GvdModel {
    config: ModelConfig,
    vocab: Vocabulary,
    classes: ObjectClassSet,
    params: ParamSet,
    layout: Layout,
    word_class: Vec<Option<usize>>,
}

/// Per-segment nodes shared by every decode step.
pub(crate) struct SegmentGraph {
    /// `N x K` logits without dropout.
    pub base_logits: Var,
    /// `N x K` logits of the similarity matrix (dropout in train mode).
    pub ms_logits: Var,
    pub encoded: Var,
    enc_proj: Var,
    frames: Var,
    frames_proj: Var,
    global: Var,
}

#[derive(Clone, Copy)]
pub(crate) struct LstmState {
    pub h_a: Var,
    c_a: Var,
    h_l: Var,
    c_l: Var,
}

pub(crate) struct StepOut {
    pub state: LstmState,
    /// `1 x |V|` log probabilities.
    pub logp: Var,
    /// `1 x N` attention logits and weights.
    pub alpha_logits: Var,
    pub alpha: Var,
}

impl GvdModel {
    /// A freshly initialised model. The classifier bank is drawn with the
    /// random-fallback scheme of [`init_classifier_transfer`].
    pub fn new(config: ModelConfig, vocab: Vocabulary, classes: ObjectClassSet, seed: u64) -> Result<Self> {
        config.validate()?;
        if classes.is_empty() {
            return Err(Error::Config("the object class set is empty".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = &config;
        let (m, e, v, k) = (c.hidden_dim, c.embed_dim, vocab.len(), classes.len());
        let mut ps = ParamSet::new();
        let embedding = ps.add("embedding", ParamGroup::Embedding, v, e, Init::Normal(1.0), &mut rng);
        let att_w = ps.add("attention_lstm.w", ParamGroup::AttentionLstm, 3 * m + e, 4 * m, Init::FanIn, &mut rng);
        let att_b = ps.add("attention_lstm.b", ParamGroup::AttentionLstm, 1, 4 * m, Init::Zeros, &mut rng);
        let lang_w = ps.add("language_lstm.w", ParamGroup::LanguageLstm, 4 * m, 4 * m, Init::FanIn, &mut rng);
        let lang_b = ps.add("language_lstm.b", ParamGroup::LanguageLstm, 1, 4 * m, Init::Zeros, &mut rng);
        let out_w = ps.add("output.w", ParamGroup::Output, m, v, Init::FanIn, &mut rng);
        let out_b = ps.add("output.b", ParamGroup::Output, 1, v, Init::Zeros, &mut rng);
        let (bank, _) = init_classifier_transfer(classes.names(), c.feature_dim, &EmbeddingTable::default(), None, seed);
        let cls_w = ps.push("classifier.w", ParamGroup::Classifier, bank.w);
        let cls_b = ps.push("classifier.b", ParamGroup::Classifier, bank.b);
        let encoder = GroundingEncoderParams::register(
            &mut ps,
            EncoderConfig {
                feature_dim: c.feature_dim,
                num_classes: k,
                location_dim: c.location_dim,
                model_dim: m,
                heads: c.heads,
                layers: c.encoder_layers,
                ffn_dim: c.ffn_dim,
                self_attention: c.self_attention,
                encoding_relu: c.encoding_relu,
                dropout: c.dropout,
            },
            &mut rng,
        )?;
        let region = RegionAttentionParams::register(&mut ps, m, &mut rng);
        let temporal = TemporalParams::register(&mut ps, c.temporal_dim, m, &mut rng)?;
        let global = GlobalParams::register(&mut ps, c.temporal_dim, m, &mut rng);
        let word_class = vocab.tokens().iter().map(|t| classes.class_of(t)).collect();
        Ok(GvdModel {
            config,
            vocab,
            classes,
            params: ps,
            layout: Layout {
                embedding,
                att_w,
                att_b,
                lang_w,
                lang_b,
                out_w,
                out_b,
                cls_w,
                cls_b,
                encoder,
                region,
                temporal,
                global,
            },
            word_class,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn classes(&self) -> &ObjectClassSet {
        &self.classes
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    /// Object class of a vocabulary id, if the word is a class word.
    pub fn word_class(&self, token: usize) -> Option<usize> {
        self.word_class.get(token).copied().flatten()
    }

    pub fn classifier_bank(&self) -> ClassifierBank {
        ClassifierBank {
            w: self.params.get(self.layout.cls_w).clone(),
            b: self.params.get(self.layout.cls_b).clone(),
        }
    }

    pub fn set_classifier_bank(&mut self, bank: ClassifierBank) -> Result<()> {
        let (d, k) = (self.config.feature_dim, self.classes.len());
        if bank.w.shape() != (d, k) || bank.b.shape() != (1, k) {
            return Err(Error::shape("classifier bank", (d, k), bank.w.shape()));
        }
        *self.params.get_mut(self.layout.cls_w) = bank.w;
        *self.params.get_mut(self.layout.cls_b) = bank.b;
        Ok(())
    }

    pub fn encoder_params(&self) -> &GroundingEncoderParams {
        &self.layout.encoder
    }

    pub fn region_attention_params(&self) -> &RegionAttentionParams {
        &self.layout.region
    }

    pub fn temporal_params(&self) -> &TemporalParams {
        &self.layout.temporal
    }

    pub fn global_params(&self) -> &GlobalParams {
        &self.layout.global
    }

    /// Output projection `(W_o, b_o)`.
    pub fn output_params(&self) -> (ParamId, ParamId) {
        (self.layout.out_w, self.layout.out_b)
    }

    pub(crate) fn check_inputs(&self, inputs: &SegmentInputs) -> Result<()> {
        if inputs.regions.feature_dim() != self.config.feature_dim {
            return Err(Error::shape(
                "region features",
                self.config.feature_dim,
                inputs.regions.feature_dim(),
            ));
        }
        if inputs.temporal.dim() != self.config.temporal_dim {
            return Err(Error::shape("frame features", self.config.temporal_dim, inputs.temporal.dim()));
        }
        Ok(())
    }

    pub(crate) fn build_segment(
        &self,
        tape: &Tape,
        p: &Bound,
        inputs: &SegmentInputs,
        mode: &mut Mode,
    ) -> Result<SegmentGraph> {
        self.check_inputs(inputs)?;
        let l = &self.layout;
        let r = tape.constant(inputs.regions.feature_matrix());
        let loc = tape.constant(inputs.regions.location_matrix());
        let (w, b) = (p.var(l.cls_w), p.var(l.cls_b));
        let base_logits = class_logits(tape, r, w, b, &mut Mode::eval(), 0.0);
        let ms_logits = if mode.is_train() {
            class_logits(tape, r, w, b, mode, self.config.classifier_dropout)
        } else {
            base_logits
        };
        let ms = tape.softmax_rows(ms_logits);
        let encoded = l.encoder.encode(tape, p, r, ms, loc, mode);
        let encoded = l.encoder.context(tape, p, encoded);
        let enc_proj = l.region.project(tape, p, encoded);
        let raw_frames = tape.constant(inputs.temporal.features().clone());
        let frames = l.temporal.encode(tape, p, raw_frames);
        let frames_proj = l.temporal.project(tape, p, frames);
        let global = l.global.apply(tape, p, raw_frames, inputs.meta.positional_scalars()?);
        Ok(SegmentGraph {
            base_logits,
            ms_logits,
            encoded,
            enc_proj,
            frames,
            frames_proj,
            global,
        })
    }

    pub(crate) fn initial_state(&self, tape: &Tape) -> LstmState {
        let m = self.config.hidden_dim;
        let z = || tape.constant(Mat::zeros(1, m));
        LstmState {
            h_a: z(),
            c_a: z(),
            h_l: z(),
            c_l: z(),
        }
    }

    /// One decode step fed with `token`.
    pub(crate) fn step(&self, tape: &Tape, p: &Bound, g: &SegmentGraph, s: LstmState, token: usize) -> StepOut {
        let l = &self.layout;
        let y = tape.select_rows(p.var(l.embedding), &[token]);
        let x_a = tape.concat_cols(&[s.h_l, g.global, y]);
        let (h_a, c_a) = lstm_cell(tape, x_a, s.h_a, s.c_a, p.var(l.att_w), p.var(l.att_b));
        let alpha_logits = l.region.logits(tape, p, g.enc_proj, h_a);
        let alpha = tape.softmax_rows(alpha_logits);
        let region_ctx = tape.matmul(alpha, g.encoded);
        let (_, temporal_ctx) = l.temporal.attend(tape, p, g.frames, g.frames_proj, h_a);
        let x_l = tape.concat_cols(&[h_a, temporal_ctx, region_ctx]);
        let (h_l, c_l) = lstm_cell(tape, x_l, s.h_l, s.c_l, p.var(l.lang_w), p.var(l.lang_b));
        let logp = tape.log_softmax_rows(linear(tape, h_l, p.var(l.out_w), p.var(l.out_b)));
        StepOut {
            state: LstmState { h_a, c_a, h_l, c_l },
            logp,
            alpha_logits,
            alpha,
        }
    }

    pub(crate) fn start_token(&self) -> usize {
        BOS
    }
}
