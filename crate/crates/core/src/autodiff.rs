//! A small reverse-mode tape over [`Mat`] values.
//!
//! Every forward computation in the model is recorded on a [`Tape`]; calling
//! [`Tape::backward`] on a scalar node returns the gradient of that scalar with
//! respect to every node on the tape. All arithmetic is `f64` so gradients can
//! be compared against central finite differences.

use std::cell::{Ref, RefCell};
use std::rc::Rc;

use crate::tensor::Mat;

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    AddCol(Var, Var),
    Affine(Var, f64),
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    LogClamped(Var, f64),
    Transpose(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    SelectRows(Var, Vec<usize>),
    SelectCols(Var, Vec<usize>),
    SumAll(Var),
    MeanRows(Var),
    LayerNormRows(Var),
    MaskMul(Var, Rc<Mat>),
}

struct Node {
    value: Mat,
    op: Op,
}

const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Gradients of a scalar with respect to every node of a tape.
pub struct Gradients {
    grads: Vec<Option<Mat>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Mat> {
        self.grads[var.0].as_ref()
    }

    /// Gradient of `var`, or zeros of the given shape if the scalar does not
    /// depend on it.
    pub fn get_or_zeros(&self, var: Var, rows: usize, cols: usize) -> Mat {
        self.get(var).cloned().unwrap_or_else(|| Mat::zeros(rows, cols))
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn value(&self, v: Var) -> Ref<'_, Mat> {
        Ref::map(self.nodes.borrow(), |nodes| &nodes[v.0].value)
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes.borrow()[v.0].value.shape()
    }

    /// Scalar value of a `1 x 1` node.
    pub fn item(&self, v: Var) -> f64 {
        self.value(v).item()
    }

    fn push(&self, value: Mat, op: Op) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op });
        Var(nodes.len() - 1)
    }

    fn unary(&self, a: Var, f: impl FnOnce(&Mat) -> Mat, op: Op) -> Var {
        let value = f(&self.nodes.borrow()[a.0].value);
        self.push(value, op)
    }

    fn binary(&self, a: Var, b: Var, f: impl FnOnce(&Mat, &Mat) -> Mat, op: Op) -> Var {
        let value = {
            let nodes = self.nodes.borrow();
            f(&nodes[a.0].value, &nodes[b.0].value)
        };
        self.push(value, op)
    }

    pub fn leaf(&self, value: Mat) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn constant(&self, value: Mat) -> Var {
        self.leaf(value)
    }

    pub fn matmul(&self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x.matmul(y), Op::MatMul(a, b))
    }

    pub fn add(&self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x.zip_map(y, |p, q| p + q), Op::Add(a, b))
    }

    pub fn sub(&self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x.zip_map(y, |p, q| p - q), Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x.zip_map(y, |p, q| p * q), Op::Mul(a, b))
    }

    /// Adds a `1 x c` row to every row of `a`.
    pub fn add_row(&self, a: Var, row: Var) -> Var {
        self.binary(
            a,
            row,
            |x, r| {
                assert_eq!((1, x.cols()), r.shape(), "add_row shape");
                let mut out = x.clone();
                for i in 0..x.rows() {
                    for (o, b) in out.row_mut(i).iter_mut().zip(r.data()) {
                        *o += b;
                    }
                }
                out
            },
            Op::AddRow(a, row),
        )
    }

    /// Multiplies every row of `a` elementwise by a `1 x c` row.
    pub fn mul_row(&self, a: Var, row: Var) -> Var {
        self.binary(
            a,
            row,
            |x, r| {
                assert_eq!((1, x.cols()), r.shape(), "mul_row shape");
                let mut out = x.clone();
                for i in 0..x.rows() {
                    for (o, b) in out.row_mut(i).iter_mut().zip(r.data()) {
                        *o *= b;
                    }
                }
                out
            },
            Op::MulRow(a, row),
        )
    }

    /// Adds an `r x 1` column to every column of `a`.
    pub fn add_col(&self, a: Var, col: Var) -> Var {
        self.binary(
            a,
            col,
            |x, c| {
                assert_eq!((x.rows(), 1), c.shape(), "add_col shape");
                let mut out = x.clone();
                for i in 0..x.rows() {
                    let b = c.data()[i];
                    for o in out.row_mut(i) {
                        *o += b;
                    }
                }
                out
            },
            Op::AddCol(a, col),
        )
    }

    /// `scale * a + shift`, elementwise.
    pub fn affine(&self, a: Var, scale: f64, shift: f64) -> Var {
        self.unary(a, |x| x.map(|v| scale * v + shift), Op::Affine(a, scale))
    }

    pub fn scale(&self, a: Var, s: f64) -> Var {
        self.affine(a, s, 0.0)
    }

    pub fn relu(&self, a: Var) -> Var {
        self.unary(a, |x| x.map(|v| v.max(0.0)), Op::Relu(a))
    }

    pub fn tanh(&self, a: Var) -> Var {
        self.unary(a, |x| x.map(f64::tanh), Op::Tanh(a))
    }

    pub fn sigmoid(&self, a: Var) -> Var {
        self.unary(a, |x| x.map(sigmoid), Op::Sigmoid(a))
    }

    /// Softmax along each row.
    pub fn softmax_rows(&self, a: Var) -> Var {
        self.unary(a, softmax_rows, Op::SoftmaxRows(a))
    }

    pub fn log_softmax_rows(&self, a: Var) -> Var {
        self.unary(a, log_softmax_rows, Op::LogSoftmaxRows(a))
    }

    /// `ln(max(a, eps))`; the gradient is zero where the clamp is active.
    pub fn log_clamped(&self, a: Var, eps: f64) -> Var {
        self.unary(a, |x| x.map(|v| v.max(eps).ln()), Op::LogClamped(a, eps))
    }

    pub fn transpose(&self, a: Var) -> Var {
        self.unary(a, Mat::transpose, Op::Transpose(a))
    }

    pub fn concat_cols(&self, parts: &[Var]) -> Var {
        let value = {
            let nodes = self.nodes.borrow();
            let rows = nodes[parts[0].0].value.rows();
            let cols: usize = parts.iter().map(|p| nodes[p.0].value.cols()).sum();
            let mut out = Mat::zeros(rows, cols);
            for r in 0..rows {
                let mut offset = 0;
                for p in parts {
                    let v = &nodes[p.0].value;
                    assert_eq!(v.rows(), rows, "concat_cols row mismatch");
                    out.row_mut(r)[offset..offset + v.cols()].copy_from_slice(v.row(r));
                    offset += v.cols();
                }
            }
            out
        };
        self.push(value, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&self, parts: &[Var]) -> Var {
        let value = {
            let nodes = self.nodes.borrow();
            let cols = nodes[parts[0].0].value.cols();
            let mut data = Vec::new();
            let mut rows = 0;
            for p in parts {
                let v = &nodes[p.0].value;
                assert_eq!(v.cols(), cols, "concat_rows column mismatch");
                data.extend_from_slice(v.data());
                rows += v.rows();
            }
            Mat::from_vec(rows, cols, data).expect("concat_rows")
        };
        self.push(value, Op::ConcatRows(parts.to_vec()))
    }

    /// Columns `start..start+len` of `a`.
    pub fn slice_cols(&self, a: Var, start: usize, len: usize) -> Var {
        self.unary(
            a,
            |x| {
                let mut out = Mat::zeros(x.rows(), len);
                for r in 0..x.rows() {
                    out.row_mut(r).copy_from_slice(&x.row(r)[start..start + len]);
                }
                out
            },
            Op::SliceCols(a, start),
        )
    }

    /// Gathers rows by index (indices may repeat).
    pub fn select_rows(&self, a: Var, indices: &[usize]) -> Var {
        self.unary(
            a,
            |x| {
                let mut data = Vec::with_capacity(indices.len() * x.cols());
                for &i in indices {
                    data.extend_from_slice(x.row(i));
                }
                Mat::from_vec(indices.len(), x.cols(), data).expect("select_rows")
            },
            Op::SelectRows(a, indices.to_vec()),
        )
    }

    pub fn select_cols(&self, a: Var, indices: &[usize]) -> Var {
        self.unary(
            a,
            |x| {
                let mut out = Mat::zeros(x.rows(), indices.len());
                for r in 0..x.rows() {
                    for (j, &c) in indices.iter().enumerate() {
                        out.set(r, j, x.get(r, c));
                    }
                }
                out
            },
            Op::SelectCols(a, indices.to_vec()),
        )
    }

    /// The single entry `(r, c)` as a `1 x 1` node.
    pub fn pick(&self, a: Var, r: usize, c: usize) -> Var {
        let row = self.select_rows(a, &[r]);
        self.select_cols(row, &[c])
    }

    pub fn sum_all(&self, a: Var) -> Var {
        self.unary(a, |x| Mat::scalar(x.sum()), Op::SumAll(a))
    }

    /// Column means, `1 x c`.
    pub fn mean_rows(&self, a: Var) -> Var {
        self.unary(
            a,
            |x| {
                let mut out = Mat::zeros(1, x.cols());
                for r in 0..x.rows() {
                    for (o, v) in out.data_mut().iter_mut().zip(x.row(r)) {
                        *o += v;
                    }
                }
                out.scale_assign(1.0 / x.rows() as f64);
                out
            },
            Op::MeanRows(a),
        )
    }

    /// Normalises each row to zero mean and unit variance (no affine part).
    pub fn layer_norm_rows(&self, a: Var) -> Var {
        self.unary(
            a,
            |x| {
                let mut out = x.clone();
                for r in 0..x.rows() {
                    let (mean, inv_std) = row_moments(x.row(r));
                    for v in out.row_mut(r) {
                        *v = (*v - mean) * inv_std;
                    }
                }
                out
            },
            Op::LayerNormRows(a),
        )
    }

    /// Elementwise product with a constant mask (dropout).
    pub fn mask_mul(&self, a: Var, mask: Rc<Mat>) -> Var {
        let value = {
            let nodes = self.nodes.borrow();
            nodes[a.0].value.zip_map(&mask, |p, q| p * q)
        };
        self.push(value, Op::MaskMul(a, mask))
    }

    /// Sum of several `1 x 1` scalars (or equally shaped nodes).
    pub fn add_all(&self, parts: &[Var]) -> Var {
        let mut acc = parts[0];
        for &p in &parts[1..] {
            acc = self.add(acc, p);
        }
        acc
    }

    /// Reverse sweep from the scalar node `loss`.
    pub fn backward(&self, loss: Var) -> Gradients {
        let nodes = self.nodes.borrow();
        assert_eq!(nodes[loss.0].value.shape(), (1, 1), "backward needs a scalar");
        let mut grads: Vec<Option<Mat>> = (0..nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Mat::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &nodes[idx];
            let val = &node.value;
            let mut acc = |v: Var, d: Mat| accumulate(&mut grads, v, d);
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let av = &nodes[a.0].value;
                    let bv = &nodes[b.0].value;
                    acc(*a, g.matmul_t(bv));
                    acc(*b, av.t_matmul(&g));
                }
                Op::Add(a, b) => {
                    acc(*a, g.clone());
                    acc(*b, g.clone());
                }
                Op::Sub(a, b) => {
                    acc(*b, g.map(|v| -v));
                    acc(*a, g.clone());
                }
                Op::Mul(a, b) => {
                    let av = &nodes[a.0].value;
                    let bv = &nodes[b.0].value;
                    acc(*a, g.zip_map(bv, |p, q| p * q));
                    acc(*b, g.zip_map(av, |p, q| p * q));
                }
                Op::AddRow(a, row) => {
                    acc(*row, column_sums(&g));
                    acc(*a, g.clone());
                }
                Op::MulRow(a, row) => {
                    let av = &nodes[a.0].value;
                    let rv = &nodes[row.0].value;
                    let mut da = g.clone();
                    for r in 0..da.rows() {
                        for (d, s) in da.row_mut(r).iter_mut().zip(rv.data()) {
                            *d *= s;
                        }
                    }
                    acc(*row, column_sums(&g.zip_map(av, |p, q| p * q)));
                    acc(*a, da);
                }
                Op::AddCol(a, col) => {
                    let sums = (0..g.rows()).map(|r| g.row(r).iter().sum()).collect();
                    acc(*col, Mat::column_vector(sums));
                    acc(*a, g.clone());
                }
                Op::Affine(a, scale) => acc(*a, g.map(|v| v * scale)),
                Op::Relu(a) => {
                    let av = &nodes[a.0].value;
                    acc(*a, g.zip_map(av, |d, x| if x > 0.0 { d } else { 0.0 }));
                }
                Op::Tanh(a) => acc(*a, g.zip_map(val, |d, y| d * (1.0 - y * y))),
                Op::Sigmoid(a) => acc(*a, g.zip_map(val, |d, y| d * y * (1.0 - y))),
                Op::SoftmaxRows(a) => {
                    let mut da = Mat::zeros(g.rows(), g.cols());
                    for r in 0..g.rows() {
                        let y = val.row(r);
                        let dy = g.row(r);
                        let dot: f64 = y.iter().zip(dy).map(|(p, q)| p * q).sum();
                        for (c, out) in da.row_mut(r).iter_mut().enumerate() {
                            *out = y[c] * (dy[c] - dot);
                        }
                    }
                    acc(*a, da);
                }
                Op::LogSoftmaxRows(a) => {
                    let mut da = Mat::zeros(g.rows(), g.cols());
                    for r in 0..g.rows() {
                        let y = val.row(r);
                        let dy = g.row(r);
                        let total: f64 = dy.iter().sum();
                        for (c, out) in da.row_mut(r).iter_mut().enumerate() {
                            *out = dy[c] - y[c].exp() * total;
                        }
                    }
                    acc(*a, da);
                }
                Op::LogClamped(a, eps) => {
                    let av = &nodes[a.0].value;
                    acc(*a, g.zip_map(av, |d, x| if x > *eps { d / x } else { 0.0 }));
                }
                Op::Transpose(a) => acc(*a, g.transpose()),
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let cols = nodes[p.0].value.cols();
                        let mut d = Mat::zeros(g.rows(), cols);
                        for r in 0..g.rows() {
                            d.row_mut(r).copy_from_slice(&g.row(r)[offset..offset + cols]);
                        }
                        offset += cols;
                        acc(*p, d);
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let rows = nodes[p.0].value.rows();
                        let cols = g.cols();
                        let d = Mat::from_vec(
                            rows,
                            cols,
                            g.data()[offset * cols..(offset + rows) * cols].to_vec(),
                        )
                        .expect("concat_rows grad");
                        offset += rows;
                        acc(*p, d);
                    }
                }
                Op::SliceCols(a, start) => {
                    let (rows, cols) = nodes[a.0].value.shape();
                    let mut d = Mat::zeros(rows, cols);
                    for r in 0..rows {
                        d.row_mut(r)[*start..*start + g.cols()].copy_from_slice(g.row(r));
                    }
                    acc(*a, d);
                }
                Op::SelectRows(a, indices) => {
                    let (rows, cols) = nodes[a.0].value.shape();
                    let mut d = Mat::zeros(rows, cols);
                    for (j, &i) in indices.iter().enumerate() {
                        for (o, v) in d.row_mut(i).iter_mut().zip(g.row(j)) {
                            *o += v;
                        }
                    }
                    acc(*a, d);
                }
                Op::SelectCols(a, indices) => {
                    let (rows, cols) = nodes[a.0].value.shape();
                    let mut d = Mat::zeros(rows, cols);
                    for r in 0..rows {
                        for (j, &c) in indices.iter().enumerate() {
                            let cur = d.get(r, c);
                            d.set(r, c, cur + g.get(r, j));
                        }
                    }
                    acc(*a, d);
                }
                Op::SumAll(a) => {
                    let (rows, cols) = nodes[a.0].value.shape();
                    acc(*a, Mat::filled(rows, cols, g.item()));
                }
                Op::MeanRows(a) => {
                    let (rows, cols) = nodes[a.0].value.shape();
                    let mut d = Mat::zeros(rows, cols);
                    let inv = 1.0 / rows as f64;
                    for r in 0..rows {
                        for (o, v) in d.row_mut(r).iter_mut().zip(g.data()) {
                            *o = v * inv;
                        }
                    }
                    acc(*a, d);
                }
                Op::LayerNormRows(a) => {
                    let x = &nodes[a.0].value;
                    let mut d = Mat::zeros(x.rows(), x.cols());
                    let n = x.cols() as f64;
                    for r in 0..x.rows() {
                        let (_, inv_std) = row_moments(x.row(r));
                        let xhat = val.row(r);
                        let dy = g.row(r);
                        let mean_dy = dy.iter().sum::<f64>() / n;
                        let mean_dy_xhat =
                            dy.iter().zip(xhat).map(|(p, q)| p * q).sum::<f64>() / n;
                        for (c, out) in d.row_mut(r).iter_mut().enumerate() {
                            *out = inv_std * (dy[c] - mean_dy - xhat[c] * mean_dy_xhat);
                        }
                    }
                    acc(*a, d);
                }
                Op::MaskMul(a, mask) => acc(*a, g.zip_map(mask, |p, q| p * q)),
            }
            grads[idx] = Some(g);
        }
        Gradients { grads }
    }
}

fn accumulate(grads: &mut [Option<Mat>], v: Var, d: Mat) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&d),
        slot @ None => *slot = Some(d),
    }
}

fn column_sums(g: &Mat) -> Mat {
    let mut out = Mat::zeros(1, g.cols());
    for r in 0..g.rows() {
        for (o, v) in out.data_mut().iter_mut().zip(g.row(r)) {
            *o += v;
        }
    }
    out
}

fn row_moments(row: &[f64]) -> (f64, f64) {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, 1.0 / (var + LAYER_NORM_EPS).sqrt())
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax_rows(x: &Mat) -> Mat {
    let mut out = x.clone();
    for r in 0..x.rows() {
        let p = crate::tensor::softmax(x.row(r));
        out.row_mut(r).copy_from_slice(&p);
    }
    out
}

fn log_softmax_rows(x: &Mat) -> Mat {
    let mut out = x.clone();
    for r in 0..x.rows() {
        let row = x.row(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        for v in out.row_mut(r) {
            *v -= lse;
        }
    }
    out
}

/// Relative error between an analytic and a numeric derivative. Values below
/// `floor` in magnitude are compared on an absolute scale.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares tape gradients of the scalar built by `build` against central
/// differences with step `h`, over every entry of every input. Returns the
/// largest relative error.
pub fn check_gradients(inputs: &[Mat], h: f64, build: impl Fn(&Tape, &[Var]) -> Var) -> f64 {
    let eval = |xs: &[Mat]| {
        let tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|m| tape.leaf(m.clone())).collect();
        let out = build(&tape, &vars);
        tape.item(out)
    };
    let tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|m| tape.leaf(m.clone())).collect();
    let out = build(&tape, &vars);
    let grads = tape.backward(out);
    let mut worst = 0.0f64;
    let mut xs = inputs.to_vec();
    for (k, v) in vars.iter().enumerate() {
        let analytic = grads.get_or_zeros(*v, inputs[k].rows(), inputs[k].cols());
        for i in 0..inputs[k].len() {
            let orig = xs[k].data()[i];
            xs[k].data_mut()[i] = orig + h;
            let plus = eval(&xs);
            xs[k].data_mut()[i] = orig - h;
            let minus = eval(&xs);
            xs[k].data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            worst = worst.max(relative_error(analytic.data()[i], numeric, 1e-6));
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Central-difference gradient of `f` at `x`.
    fn numeric_grad(x: &Mat, f: &dyn Fn(&Mat) -> f64) -> Mat {
        let h = 1e-6;
        let mut g = Mat::zeros(x.rows(), x.cols());
        for i in 0..x.len() {
            let mut plus = x.clone();
            plus.data_mut()[i] += h;
            let mut minus = x.clone();
            minus.data_mut()[i] -= h;
            g.data_mut()[i] = (f(&plus) - f(&minus)) / (2.0 * h);
        }
        g
    }

    fn check(x: Mat, build: impl Fn(&Tape, Var) -> Var) {
        let f = |m: &Mat| {
            let t = Tape::new();
            let v = t.leaf(m.clone());
            let out = build(&t, v);
            t.item(out)
        };
        let tape = Tape::new();
        let v = tape.leaf(x.clone());
        let out = build(&tape, v);
        let grads = tape.backward(out);
        let analytic = grads.get_or_zeros(v, x.rows(), x.cols());
        let numeric = numeric_grad(&x, &f);
        for (a, n) in analytic.data().iter().zip(numeric.data()) {
            assert!((a - n).abs() < 1e-6 * (1.0 + a.abs()), "analytic {a} numeric {n}");
        }
    }

    fn random(rows: usize, cols: usize, seed: u64) -> Mat {
        Mat::randn(rows, cols, 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn elementwise_ops() {
        let w = random(3, 4, 9);
        check(random(3, 4, 1), |t, x| {
            let c = t.constant(w.clone());
            let y = t.mul(t.tanh(x), c);
            let z = t.sub(t.sigmoid(y), t.affine(x, 0.3, 1.0));
            t.sum_all(t.relu(t.add(z, y)))
        });
    }

    #[test]
    fn softmax_variants() {
        let w = random(2, 5, 3);
        check(random(2, 5, 2), |t, x| {
            let c = t.constant(w.clone());
            let p = t.softmax_rows(x);
            let lp = t.log_softmax_rows(t.transpose(x));
            let a = t.sum_all(t.mul(p, c));
            let b = t.sum_all(t.mul(t.transpose(lp), c));
            let l = t.sum_all(t.log_clamped(p, 1e-12));
            t.add_all(&[a, b, l])
        });
    }

    #[test]
    fn structural_ops() {
        let w = random(4, 3, 5);
        let row = random(1, 3, 6);
        check(random(4, 3, 4), |t, x| {
            let wv = t.constant(w.clone());
            let r = t.constant(row.clone());
            let a = t.concat_cols(&[x, t.slice_cols(x, 1, 2)]);
            let b = t.concat_rows(&[t.select_rows(x, &[3, 0, 3]), x]);
            let m = t.matmul(x, t.transpose(wv));
            let col = t.slice_cols(m, 0, 1);
            let c = t.add_col(t.add_row(t.mul_row(x, r), r), col);
            let s = t.add_all(&[
                t.sum_all(t.tanh(a)),
                t.sum_all(t.sigmoid(b)),
                t.sum_all(t.mean_rows(t.tanh(c))),
                t.pick(m, 2, 1),
            ]);
            t.scale(s, 0.5)
        });
    }

    #[test]
    fn layer_norm_gradient() {
        let w = random(3, 6, 8);
        check(random(3, 6, 7), |t, x| {
            let c = t.constant(w.clone());
            t.sum_all(t.mul(t.layer_norm_rows(x), c))
        });
    }

    #[test]
    fn mask_mul_blocks_gradient() {
        let tape = Tape::new();
        let x = tape.leaf(Mat::row_vector(vec![1.0, 2.0]));
        let y = tape.mask_mul(x, Rc::new(Mat::row_vector(vec![0.0, 2.0])));
        let g = tape.backward(tape.sum_all(y));
        assert_eq!(g.get(x).unwrap().data(), &[0.0, 2.0]);
    }
}
