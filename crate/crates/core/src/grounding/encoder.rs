use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::nn::{linear, Mode};
use crate::params::{Bound, Init, ParamGroup, ParamId, ParamSet};
use crate::tensor::Mat;

use super::similarity::SimilarityMatrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    /// Region feature size d.
    pub feature_dim: usize,
    /// Number of object classes K.
    pub num_classes: usize,
    /// Location embedding size d_s.
    pub location_dim: usize,
    /// Encoded width m.
    pub model_dim: usize,
    pub heads: usize,
    pub layers: usize,
    pub ffn_dim: usize,
    /// Run the self-attention stack over the encoded regions.
    pub self_attention: bool,
    /// Apply ReLU and dropout after `W_g`.
    pub encoding_relu: bool,
    pub dropout: f64,
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || self.model_dim % self.heads != 0 {
            return Err(Error::Config(format!(
                "model width {} is not divisible by {} heads",
                self.model_dim, self.heads
            )));
        }
        if [self.feature_dim, self.num_classes, self.location_dim, self.model_dim, self.ffn_dim]
            .contains(&0)
        {
            return Err(Error::Config("encoder dimensions must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct LayerIds {
    wq: ParamId,
    wk: ParamId,
    wv: ParamId,
    wo: ParamId,
    bo: ParamId,
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

/// Location projection, `W_g` and the self-attention stack.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundingEncoderParams {
    pub config: EncoderConfig,
    w_loc: ParamId,
    b_loc: ParamId,
    w_g: ParamId,
    layers: Vec<LayerIds>,
}

impl GroundingEncoderParams {
    pub fn register<R: Rng + ?Sized>(ps: &mut ParamSet, config: EncoderConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let c = &config;
        let m = c.model_dim;
        let g = ParamGroup::Grounding;
        let w_loc = ps.add("grounding.w_loc", g, 5, c.location_dim, Init::FanIn, rng);
        let b_loc = ps.add("grounding.b_loc", g, 1, c.location_dim, Init::Zeros, rng);
        let concat = c.feature_dim + c.num_classes + c.location_dim;
        let w_g = ps.add("grounding.w_g", g, concat, m, Init::FanIn, rng);
        let mut layers = Vec::new();
        if c.self_attention {
            let s = ParamGroup::SelfAttention;
            for l in 0..c.layers {
                let mut add = |name: &str, rows, cols, init| {
                    ps.add(&format!("self_attention.{l}.{name}"), s, rows, cols, init, rng)
                };
                layers.push(LayerIds {
                    wq: add("wq", m, m, Init::FanIn),
                    wk: add("wk", m, m, Init::FanIn),
                    wv: add("wv", m, m, Init::FanIn),
                    wo: add("wo", m, m, Init::FanIn),
                    bo: add("bo", 1, m, Init::Zeros),
                    w1: add("w1", m, c.ffn_dim, Init::FanIn),
                    b1: add("b1", 1, c.ffn_dim, Init::Zeros),
                    w2: add("w2", c.ffn_dim, m, Init::FanIn),
                    b2: add("b2", 1, m, Init::Zeros),
                });
            }
        }
        Ok(GroundingEncoderParams {
            config,
            w_loc,
            b_loc,
            w_g,
            layers,
        })
    }

    /// `R~ = W_g [R | M_s | M_l]`, rows are regions. `loc` is `N x 5`.
    pub fn encode(&self, tape: &Tape, p: &Bound, r: Var, ms: Var, loc: Var, mode: &mut Mode) -> Var {
        let ml = linear(tape, loc, p.var(self.w_loc), p.var(self.b_loc));
        let x = tape.matmul(tape.concat_cols(&[r, ms, ml]), p.var(self.w_g));
        if self.config.encoding_relu {
            mode.dropout(tape, tape.relu(x), self.config.dropout)
        } else {
            x
        }
    }

    /// Self-attention context over the encoded regions (identity when the
    /// stack is disabled).
    pub fn context(&self, tape: &Tape, p: &Bound, x: Var) -> Var {
        let heads = self.config.heads;
        let dh = self.config.model_dim / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut x = x;
        for l in &self.layers {
            let q = tape.matmul(x, p.var(l.wq));
            let k = tape.matmul(x, p.var(l.wk));
            let v = tape.matmul(x, p.var(l.wv));
            let outs: Vec<Var> = (0..heads)
                .map(|h| {
                    let qh = tape.slice_cols(q, h * dh, dh);
                    let kh = tape.slice_cols(k, h * dh, dh);
                    let vh = tape.slice_cols(v, h * dh, dh);
                    let scores = tape.scale(tape.matmul(qh, tape.transpose(kh)), scale);
                    tape.matmul(tape.softmax_rows(scores), vh)
                })
                .collect();
            let attn = linear(tape, tape.concat_cols(&outs), p.var(l.wo), p.var(l.bo));
            let x1 = tape.layer_norm_rows(tape.add(x, attn));
            let hidden = tape.relu(linear(tape, x1, p.var(l.w1), p.var(l.b1)));
            let ffn = linear(tape, hidden, p.var(l.w2), p.var(l.b2));
            x = tape.layer_norm_rows(tape.add(x1, ffn));
        }
        x
    }
}

/// Grounding-aware encoding of `N` regions: `r` is `N x d`, `loc` is `N x 5`.
/// Returns `N x m` (one encoded region per row).
pub fn grounding_aware_encoding(
    ps: &ParamSet,
    params: &GroundingEncoderParams,
    r: &Mat,
    ms: &SimilarityMatrix,
    loc: &Mat,
) -> Result<Mat> {
    let c = &params.config;
    let n = r.rows();
    if n == 0 {
        return Err(Error::Data("no regions to encode".into()));
    }
    if r.cols() != c.feature_dim {
        return Err(Error::shape("region features", (n, c.feature_dim), r.shape()));
    }
    if ms.region_major().shape() != (n, c.num_classes) {
        return Err(Error::shape("similarity", (n, c.num_classes), ms.region_major().shape()));
    }
    if loc.shape() != (n, 5) {
        return Err(Error::shape("location features", (n, 5), loc.shape()));
    }
    let tape = Tape::new();
    let p = ps.bind(&tape);
    let out = params.encode(
        &tape,
        &p,
        tape.leaf(r.clone()),
        tape.leaf(ms.region_major().clone()),
        tape.leaf(loc.clone()),
        &mut Mode::eval(),
    );
    let value = tape.value(out).clone();
    Ok(value)
}

/// Self-attention context of encoded regions, same `N x m` shape.
pub fn encode_region_context(ps: &ParamSet, params: &GroundingEncoderParams, x: &Mat) -> Result<Mat> {
    if x.rows() == 0 {
        return Err(Error::Data("no regions to encode".into()));
    }
    if x.cols() != params.config.model_dim {
        return Err(Error::shape("encoded regions", (x.rows(), params.config.model_dim), x.shape()));
    }
    let tape = Tape::new();
    let p = ps.bind(&tape);
    let out = params.context(&tape, &p, tape.leaf(x.clone()));
    let value = tape.value(out).clone();
    Ok(value)
}
