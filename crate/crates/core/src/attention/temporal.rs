use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::nn::{additive_logits, gru_cell, linear, GruWeights};
use crate::params::{Bound, Init, ParamGroup, ParamId, ParamSet};
use crate::tensor::Mat;

/// Frame-wise appearance and motion features, `F_t x d_t`.
#[derive(Clone, Debug, PartialEq)]
pub struct TemporalFeatureMap {
    features: Mat,
}

impl TemporalFeatureMap {
    pub fn new(features: Mat) -> Result<Self> {
        if features.rows() == 0 {
            return Err(Error::Data("temporal feature map has no frames".into()));
        }
        if !features.is_finite() {
            return Err(Error::NonFinite("temporal features".into()));
        }
        Ok(TemporalFeatureMap { features })
    }

    pub fn num_frames(&self) -> usize {
        self.features.rows()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Mat {
        &self.features
    }
}

/// Position of a segment inside its video.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentMeta {
    pub total_segments: usize,
    pub segment_index: usize,
    pub start_s: f64,
    pub end_s: f64,
    pub duration_s: f64,
}

impl SegmentMeta {
    /// `(index / total, 1 / total, start / duration, end / duration)`, each
    /// clamped to `[0, 1]`.
    pub fn positional_scalars(&self) -> Result<[f64; 4]> {
        if !(self.duration_s > 0.0) || self.total_segments == 0 {
            return Err(Error::Data(format!(
                "segment meta needs positive duration and segment count, got {} s and {}",
                self.duration_s, self.total_segments
            )));
        }
        let total = self.total_segments as f64;
        let unit = |v: f64| v.clamp(0.0, 1.0);
        Ok([
            unit(self.segment_index as f64 / total),
            unit(1.0 / total),
            unit(self.start_s / self.duration_s),
            unit(self.end_s / self.duration_s),
        ])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct GruIds {
    wx: ParamId,
    wh: ParamId,
    bx: ParamId,
    bh: ParamId,
}

impl GruIds {
    fn register<R: Rng + ?Sized>(ps: &mut ParamSet, prefix: &str, input: usize, hidden: usize, rng: &mut R) -> Self {
        let g = ParamGroup::Temporal;
        GruIds {
            wx: ps.add(&format!("{prefix}.wx"), g, input, 3 * hidden, Init::FanIn, rng),
            wh: ps.add(&format!("{prefix}.wh"), g, hidden, 3 * hidden, Init::FanIn, rng),
            bx: ps.add(&format!("{prefix}.bx"), g, 1, 3 * hidden, Init::Zeros, rng),
            bh: ps.add(&format!("{prefix}.bh"), g, 1, 3 * hidden, Init::Zeros, rng),
        }
    }

    fn bind(&self, p: &Bound) -> GruWeights {
        GruWeights {
            wx: p.var(self.wx),
            wh: p.var(self.wh),
            bx: p.var(self.bx),
            bh: p.var(self.bh),
        }
    }
}

/// Bi-GRU frame encoder (hidden m/2 per direction), output projection to m
/// and the additive temporal attention.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemporalParams {
    hidden: usize,
    forward: GruIds,
    backward: GruIds,
    w_p: ParamId,
    b_p: ParamId,
    w_e: ParamId,
    w_h: ParamId,
    w_t: ParamId,
}

impl TemporalParams {
    pub fn register<R: Rng + ?Sized>(ps: &mut ParamSet, d_t: usize, m: usize, rng: &mut R) -> Result<Self> {
        if m % 2 != 0 || m == 0 || d_t == 0 {
            return Err(Error::Config(format!(
                "temporal encoder needs an even positive width, got m={m}, d_t={d_t}"
            )));
        }
        let h = m / 2;
        let g = ParamGroup::Temporal;
        Ok(TemporalParams {
            hidden: h,
            forward: GruIds::register(ps, "temporal.gru_fwd", d_t, h, rng),
            backward: GruIds::register(ps, "temporal.gru_bwd", d_t, h, rng),
            w_p: ps.add("temporal.w_p", g, m, m, Init::FanIn, rng),
            b_p: ps.add("temporal.b_p", g, 1, m, Init::Zeros, rng),
            w_e: ps.add("temporal.w_e", g, m, m, Init::FanIn, rng),
            w_h: ps.add("temporal.w_h", g, m, m, Init::FanIn, rng),
            w_t: ps.add("temporal.w_t", g, m, 1, Init::FanIn, rng),
        })
    }

    pub fn w_e(&self) -> ParamId {
        self.w_e
    }

    pub fn w_h(&self) -> ParamId {
        self.w_h
    }

    /// Encodes `F_t x d_t` frames into `F_t x m`.
    pub fn encode(&self, tape: &Tape, p: &Bound, frames: Var) -> Var {
        let n = tape.shape(frames).0;
        let rows: Vec<Var> = (0..n).map(|f| tape.select_rows(frames, &[f])).collect();
        let zero = tape.constant(Mat::zeros(1, self.hidden));
        let (fw, bw) = (self.forward.bind(p), self.backward.bind(p));
        let mut fwd = Vec::with_capacity(n);
        let mut h = zero;
        for &x in &rows {
            h = gru_cell(tape, x, h, &fw);
            fwd.push(h);
        }
        let mut bwd = vec![zero; n];
        let mut h = zero;
        for f in (0..n).rev() {
            h = gru_cell(tape, rows[f], h, &bw);
            bwd[f] = h;
        }
        let states: Vec<Var> = (0..n).map(|f| tape.concat_cols(&[fwd[f], bwd[f]])).collect();
        linear(tape, tape.concat_rows(&states), p.var(self.w_p), p.var(self.b_p))
    }

    /// `E W_e`, computed once per segment.
    pub fn project(&self, tape: &Tape, p: &Bound, encoded: Var) -> Var {
        tape.matmul(encoded, p.var(self.w_e))
    }

    /// Attention weights (`1 x F_t`) and context (`1 x m`) for hidden `h`.
    pub fn attend(&self, tape: &Tape, p: &Bound, encoded: Var, projected: Var, h: Var) -> (Var, Var) {
        let logits = additive_logits(tape, projected, h, p.var(self.w_h), p.var(self.w_t));
        let weights = tape.softmax_rows(logits);
        (weights, tape.matmul(weights, encoded))
    }
}

/// Frame context for one hidden state: returns the attention weights over
/// frames, the encoded frames (`F_t x m`) and the context vector.
pub fn temporal_context(
    ps: &ParamSet,
    params: &TemporalParams,
    frames: &TemporalFeatureMap,
    h: &[f64],
) -> Result<(Vec<f64>, Mat, Vec<f64>)> {
    let m = 2 * params.hidden;
    if h.len() != m || frames.dim() != ps.get(params.forward.wx).rows() {
        return Err(Error::shape("temporal input", (frames.num_frames(), m), frames.features.shape()));
    }
    let tape = Tape::new();
    let p = ps.bind(&tape);
    let enc = params.encode(&tape, &p, tape.leaf(frames.features.clone()));
    let proj = params.project(&tape, &p, enc);
    let (w, ctx) = params.attend(&tape, &p, enc, proj, tape.leaf(Mat::row_vector(h.to_vec())));
    let out = (
        tape.value(w).data().to_vec(),
        tape.value(enc).clone(),
        tape.value(ctx).data().to_vec(),
    );
    Ok(out)
}

/// Linear map from pooled frame features plus positional scalars to m.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalParams {
    w: ParamId,
    b: ParamId,
}

impl GlobalParams {
    pub fn register<R: Rng + ?Sized>(ps: &mut ParamSet, d_t: usize, m: usize, rng: &mut R) -> Self {
        let g = ParamGroup::Global;
        GlobalParams {
            w: ps.add("global.w", g, d_t + 4, m, Init::FanIn, rng),
            b: ps.add("global.b", g, 1, m, Init::Zeros, rng),
        }
    }

    /// `[mean_f frames | positional scalars] W + b`, `1 x m`.
    pub fn apply(&self, tape: &Tape, p: &Bound, frames: Var, scalars: [f64; 4]) -> Var {
        let pooled = tape.mean_rows(frames);
        let pos = tape.constant(Mat::row_vector(scalars.to_vec()));
        linear(tape, tape.concat_cols(&[pooled, pos]), p.var(self.w), p.var(self.b))
    }

    pub fn w(&self) -> ParamId {
        self.w
    }
}

/// The model's global segment vector.
pub fn global_feature(
    ps: &ParamSet,
    params: &GlobalParams,
    frames: &TemporalFeatureMap,
    meta: &SegmentMeta,
) -> Result<Vec<f64>> {
    let scalars = meta.positional_scalars()?;
    if ps.get(params.w).rows() != frames.dim() + 4 {
        return Err(Error::shape("frame features", (frames.num_frames(), ps.get(params.w).rows() - 4), frames.features.shape()));
    }
    let tape = Tape::new();
    let p = ps.bind(&tape);
    let out = params.apply(&tape, &p, tape.leaf(frames.features.clone()), scalars);
    let v = tape.value(out).data().to_vec();
    Ok(v)
}
