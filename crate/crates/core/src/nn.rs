//! Small layers built on the tape: linear maps, dropout, recurrent cells and
//! additive attention scores.

use std::rc::Rc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Var};
use crate::tensor::Mat;

/// Train or eval mode. In train mode dropout masks are drawn from the
/// contained generator.
pub struct Mode<'a> {
    rng: Option<&'a mut ChaCha8Rng>,
}

impl<'a> Mode<'a> {
    pub fn eval() -> Self {
        Mode { rng: None }
    }

    pub fn train(rng: &'a mut ChaCha8Rng) -> Self {
        Mode { rng: Some(rng) }
    }

    pub fn is_train(&self) -> bool {
        self.rng.is_some()
    }

    /// Inverted dropout: kept units are scaled by `1 / (1 - rate)`.
    pub fn dropout(&mut self, tape: &Tape, x: Var, rate: f64) -> Var {
        let Some(rng) = self.rng.as_deref_mut() else {
            return x;
        };
        if rate <= 0.0 {
            return x;
        }
        let (rows, cols) = tape.shape(x);
        let keep = 1.0 - rate;
        let data = (0..rows * cols)
            .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let mask = Mat::from_vec(rows, cols, data).expect("mask shape");
        tape.mask_mul(x, Rc::new(mask))
    }
}

/// `x W + b` with `b` broadcast over rows.
pub fn linear(tape: &Tape, x: Var, w: Var, b: Var) -> Var {
    tape.add_row(tape.matmul(x, w), b)
}

/// One LSTM step. `w` maps `[x | h]` to the four gates `(i, f, g, o)`.
pub fn lstm_cell(tape: &Tape, x: Var, h: Var, c: Var, w: Var, b: Var) -> (Var, Var) {
    let hidden = tape.shape(h).1;
    let gates = linear(tape, tape.concat_cols(&[x, h]), w, b);
    let i = tape.sigmoid(tape.slice_cols(gates, 0, hidden));
    let f = tape.sigmoid(tape.slice_cols(gates, hidden, hidden));
    let g = tape.tanh(tape.slice_cols(gates, 2 * hidden, hidden));
    let o = tape.sigmoid(tape.slice_cols(gates, 3 * hidden, hidden));
    let c_next = tape.add(tape.mul(f, c), tape.mul(i, g));
    let h_next = tape.mul(o, tape.tanh(c_next));
    (h_next, c_next)
}

/// Weights of one GRU direction; gate order `(r, z, n)`.
#[derive(Clone, Copy)]
pub struct GruWeights {
    pub wx: Var,
    pub wh: Var,
    pub bx: Var,
    pub bh: Var,
}

pub fn gru_cell(tape: &Tape, x: Var, h: Var, w: &GruWeights) -> Var {
    let hidden = tape.shape(h).1;
    let gx = linear(tape, x, w.wx, w.bx);
    let gh = linear(tape, h, w.wh, w.bh);
    let r = tape.sigmoid(tape.add(tape.slice_cols(gx, 0, hidden), tape.slice_cols(gh, 0, hidden)));
    let z = tape.sigmoid(tape.add(
        tape.slice_cols(gx, hidden, hidden),
        tape.slice_cols(gh, hidden, hidden),
    ));
    let n = tape.tanh(tape.add(
        tape.slice_cols(gx, 2 * hidden, hidden),
        tape.mul(r, tape.slice_cols(gh, 2 * hidden, hidden)),
    ));
    // h' = (1 - z) * n + z * h
    tape.add(tape.mul(tape.affine(z, -1.0, 1.0), n), tape.mul(z, h))
}

/// Additive attention logits `w^T tanh(K_proj + q W_q)` as a `1 x n` row,
/// where `keys_proj` is the already projected `n x m` key matrix.
pub fn additive_logits(tape: &Tape, keys_proj: Var, query: Var, wq: Var, w: Var) -> Var {
    let q = tape.matmul(query, wq);
    let hidden = tape.tanh(tape.add_row(keys_proj, q));
    tape.transpose(tape.matmul(hidden, w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn eval_dropout_is_identity() {
        let tape = Tape::new();
        let x = tape.leaf(Mat::filled(2, 2, 3.0));
        assert_eq!(Mode::eval().dropout(&tape, x, 0.5), x);
    }

    #[test]
    fn train_dropout_scales_kept_units() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let tape = Tape::new();
        let x = tape.leaf(Mat::filled(20, 20, 1.0));
        let y = Mode::train(&mut rng).dropout(&tape, x, 0.5);
        let v = tape.value(y);
        assert!(v.data().iter().all(|&a| a == 0.0 || a == 2.0));
        let kept = v.data().iter().filter(|&&a| a > 0.0).count();
        assert!((150..250).contains(&kept));
    }

    #[test]
    fn lstm_zero_weights() {
        let tape = Tape::new();
        let x = tape.leaf(Mat::filled(1, 3, 1.0));
        let h = tape.leaf(Mat::zeros(1, 2));
        let c = tape.leaf(Mat::filled(1, 2, 1.0));
        let w = tape.leaf(Mat::zeros(5, 8));
        let b = tape.leaf(Mat::zeros(1, 8));
        let (h2, c2) = lstm_cell(&tape, x, h, c, w, b);
        // gates are 0.5 and g = 0, so c' = 0.5 c and h' = 0.5 tanh(c')
        assert!((tape.value(c2).get(0, 0) - 0.5).abs() < 1e-12);
        assert!((tape.value(h2).get(0, 1) - 0.5 * 0.5f64.tanh()).abs() < 1e-12);
    }

    #[test]
    fn gru_zero_weights_halves_state() {
        let tape = Tape::new();
        let zeros = |r, c| tape.leaf(Mat::zeros(r, c));
        let w = GruWeights {
            wx: zeros(3, 6),
            wh: zeros(2, 6),
            bx: zeros(1, 6),
            bh: zeros(1, 6),
        };
        let x = tape.leaf(Mat::filled(1, 3, 1.0));
        let h = tape.leaf(Mat::row_vector(vec![2.0, -4.0]));
        let out = gru_cell(&tape, x, h, &w);
        assert_eq!(tape.value(out).data(), &[1.0, -2.0]);
    }
}
