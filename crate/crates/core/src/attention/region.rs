use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::grounding::{weighted_neg_log, LossValue};
use crate::nn::additive_logits;
use crate::params::{Bound, Init, ParamGroup, ParamId, ParamSet};
use crate::tensor::Mat;

/// `W_r`, `W_h` and `w_alpha` of the additive region attention.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionAttentionParams {
    w_r: ParamId,
    w_h: ParamId,
    w_alpha: ParamId,
}

/// A distribution over regions.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionWeights(pub Vec<f64>);

impl AttentionWeights {
    pub fn argmax(&self) -> usize {
        crate::tensor::argmax(&self.0)
    }
}

impl RegionAttentionParams {
    pub fn register<R: Rng + ?Sized>(ps: &mut ParamSet, m: usize, rng: &mut R) -> Self {
        let g = ParamGroup::RegionAttention;
        RegionAttentionParams {
            w_r: ps.add("region_attention.w_r", g, m, m, Init::FanIn, rng),
            w_h: ps.add("region_attention.w_h", g, m, m, Init::FanIn, rng),
            w_alpha: ps.add("region_attention.w_alpha", g, m, 1, Init::FanIn, rng),
        }
    }

    pub fn w_r(&self) -> ParamId {
        self.w_r
    }

    pub fn w_h(&self) -> ParamId {
        self.w_h
    }

    pub fn w_alpha(&self) -> ParamId {
        self.w_alpha
    }

    /// `R~' W_r`, computed once per segment.
    pub fn project(&self, tape: &Tape, p: &Bound, encoded: Var) -> Var {
        tape.matmul(encoded, p.var(self.w_r))
    }

    /// `1 x N` attention logits for hidden state `h` (`1 x m`).
    pub fn logits(&self, tape: &Tape, p: &Bound, projected: Var, h: Var) -> Var {
        additive_logits(tape, projected, h, p.var(self.w_h), p.var(self.w_alpha))
    }
}

/// Attention weights over the rows of `encoded` (`N x m`) and the context
/// vector `sum_i alpha_i r~'_i`.
pub fn region_attention(
    ps: &ParamSet,
    params: &RegionAttentionParams,
    encoded: &Mat,
    h: &[f64],
) -> Result<(AttentionWeights, Vec<f64>)> {
    let m = ps.get(params.w_r).rows();
    if encoded.rows() == 0 || encoded.cols() != m || h.len() != m {
        return Err(Error::shape("region attention input", (encoded.rows().max(1), m), encoded.shape()));
    }
    let tape = Tape::new();
    let p = ps.bind(&tape);
    let enc = tape.leaf(encoded.clone());
    let hv = tape.leaf(Mat::row_vector(h.to_vec()));
    let alpha = tape.softmax_rows(params.logits(&tape, &p, params.project(&tape, &p, enc), hv));
    let context = tape.matmul(alpha, enc);
    let weights = tape.value(alpha).data().to_vec();
    let ctx = tape.value(context).data().to_vec();
    Ok((AttentionWeights(weights), ctx))
}

/// `-sum_i gamma_i log alpha_i`; zero when no region is positive.
pub fn attention_loss(alpha: &AttentionWeights, gamma: &[bool]) -> LossValue {
    weighted_neg_log(&alpha.0, gamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::check_gradients;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(m: usize, seed: u64) -> (ParamSet, RegionAttentionParams) {
        let mut ps = ParamSet::new();
        let p = RegionAttentionParams::register(&mut ps, m, &mut ChaCha8Rng::seed_from_u64(seed));
        (ps, p)
    }

    fn random(rows: usize, cols: usize, seed: u64) -> Mat {
        Mat::randn(rows, cols, 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn zero_maps_give_uniform_weights() {
        let (mut ps, p) = setup(3, 0);
        *ps.get_mut(p.w_r) = Mat::zeros(3, 3);
        *ps.get_mut(p.w_h) = Mat::zeros(3, 3);
        let (alpha, _) = region_attention(&ps, &p, &random(4, 3, 1), &[1.0, 2.0, 3.0]).unwrap();
        assert!(alpha.0.iter().all(|&a| (a - 0.25).abs() < 1e-15));
    }

    #[test]
    fn hand_set_logits() {
        // m = 1: logit_i = w tanh(w_r r_i), with r = (atanh(0.5), 0) and w = 2 ln 3
        let (mut ps, p) = setup(1, 0);
        *ps.get_mut(p.w_r) = Mat::scalar(1.0);
        *ps.get_mut(p.w_h) = Mat::scalar(0.0);
        *ps.get_mut(p.w_alpha) = Mat::scalar(2.0 * 3f64.ln());
        let enc = Mat::column_vector(vec![0.5f64.atanh(), 0.0]);
        let (alpha, ctx) = region_attention(&ps, &p, &enc, &[0.0]).unwrap();
        assert_relative_eq!(alpha.0[0], 0.75, epsilon = 1e-12);
        assert_relative_eq!(alpha.0[1], 0.25, epsilon = 1e-12);
        assert_relative_eq!(ctx[0], 0.75 * 0.5f64.atanh(), epsilon = 1e-12);
    }

    #[test]
    fn loss_examples() {
        assert_eq!(attention_loss(&AttentionWeights(vec![1.0, 0.0]), &[true, false]).value, 0.0);
        assert_relative_eq!(
            attention_loss(&AttentionWeights(vec![0.5, 0.5]), &[true, false]).value,
            2f64.ln(),
            epsilon = 1e-12
        );
        assert_eq!(attention_loss(&AttentionWeights(vec![0.5, 0.5]), &[false, false]).value, 0.0);
    }

    #[test]
    fn attention_loss_gradients_match_finite_differences() {
        let m = 4;
        let inputs = [random(m, m, 1), random(m, m, 2), random(m, 1, 3), random(1, m, 4), random(5, m, 5)];
        let err = check_gradients(&inputs, 1e-5, |t, v| {
            let logits = additive_logits(t, t.matmul(v[4], v[0]), v[3], v[1], v[2]);
            let logp = t.log_softmax_rows(logits);
            t.scale(t.add(t.pick(logp, 0, 1), t.pick(logp, 0, 3)), -1.0)
        });
        assert!(err < 1e-4, "relative error {err}");
    }

    proptest! {
        #[test]
        fn simplex_and_scale_invariant_argmax(seed in 0u64..500, n in 1usize..8, c in 0.1f64..10.0) {
            let (mut ps, p) = setup(4, seed);
            let enc = random(n, 4, seed + 1);
            let h = random(1, 4, seed + 2).into_data();
            let (alpha, ctx) = region_attention(&ps, &p, &enc, &h).unwrap();
            prop_assert!((alpha.0.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            prop_assert!(alpha.0.iter().all(|&a| a >= 0.0));
            prop_assert_eq!(ctx.len(), 4);
            let scaled = ps.get(p.w_alpha).map(|v| v * c);
            *ps.get_mut(p.w_alpha) = scaled;
            let (alpha2, _) = region_attention(&ps, &p, &enc, &h).unwrap();
            prop_assert_eq!(alpha.argmax(), alpha2.argmax());
        }
    }
}
