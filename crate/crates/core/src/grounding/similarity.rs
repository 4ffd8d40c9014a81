use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::nn::Mode;
use crate::regions::PositiveMatch;
use crate::tensor::Mat;

use super::bank::ClassifierBank;

/// Probabilities below this are clamped before taking logs.
pub const LOG_EPS: f64 = 1e-12;

/// Dropout rate after the classifier ReLU.
pub const CLASSIFIER_DROPOUT: f64 = 0.5;

/// Region-class similarity. Stored region-major: `probs` is `N x K` and
/// each region's class distribution (a column of the `K x N` matrix) is
/// one row here.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityMatrix {
    probs: Mat,
}

impl SimilarityMatrix {
    pub fn from_region_major(probs: Mat) -> Self {
        SimilarityMatrix { probs }
    }

    pub fn num_regions(&self) -> usize {
        self.probs.rows()
    }

    pub fn num_classes(&self) -> usize {
        self.probs.cols()
    }

    /// Probability of class `class` for region `region`.
    pub fn get(&self, class: usize, region: usize) -> f64 {
        self.probs.get(region, class)
    }

    /// Class distribution of one region.
    pub fn region(&self, region: usize) -> &[f64] {
        self.probs.row(region)
    }

    /// The `N x K` region-major matrix.
    pub fn region_major(&self) -> &Mat {
        &self.probs
    }

    /// The `K x N` class-major matrix.
    pub fn class_major(&self) -> Mat {
        self.probs.transpose()
    }
}

/// Sentence-conditioned similarity: `probs` is `K x N`, each class row a
/// distribution over regions.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionedSimilarity {
    probs: Mat,
}

impl ConditionedSimilarity {
    pub fn from_class_major(probs: Mat) -> Self {
        ConditionedSimilarity { probs }
    }

    /// Grounding distribution over regions for `class`.
    pub fn beta(&self, class: usize) -> &[f64] {
        self.probs.row(class)
    }

    pub fn class_major(&self) -> &Mat {
        &self.probs
    }
}

/// A loss value; `clamped` is set when a probability hit the log floor.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub clamped: bool,
}

/// Negative log of a probability with the clamp flag.
pub(crate) fn neg_log(p: f64) -> LossValue {
    LossValue {
        value: -p.max(LOG_EPS).ln(),
        clamped: p < LOG_EPS,
    }
}

/// `ReLU(R W_c)`, optionally followed by dropout, plus the bias row: the
/// `N x K` region-major logits.
pub fn class_logits(tape: &Tape, r: Var, w: Var, b: Var, mode: &mut Mode, rate: f64) -> Var {
    let act = tape.relu(tape.matmul(r, w));
    let act = mode.dropout(tape, act, rate);
    tape.add_row(act, b)
}

/// Logits of the grounding distribution for `class`: that class's column of
/// the base logits, transposed, plus the attention weights `alpha` (`1 x N`).
pub fn conditioned_logits(tape: &Tape, base: Var, class: usize, alpha: Var) -> Var {
    tape.add(tape.transpose(tape.select_cols(base, &[class])), alpha)
}

fn check_features(r: &Mat, bank: &ClassifierBank) -> Result<()> {
    if r.cols() != bank.feature_dim() {
        return Err(Error::shape(
            "region features",
            (r.rows(), bank.feature_dim()),
            r.shape(),
        ));
    }
    if !r.is_finite() {
        return Err(Error::NonFinite("region features".into()));
    }
    Ok(())
}

/// Class distribution of every region. `r` is `N x d` (one region per row).
pub fn region_class_similarity(r: &Mat, bank: &ClassifierBank, mode: &mut Mode) -> Result<SimilarityMatrix> {
    check_features(r, bank)?;
    let tape = Tape::new();
    let (rv, w, b) = (tape.leaf(r.clone()), tape.leaf(bank.w.clone()), tape.leaf(bank.b.clone()));
    let probs = tape.softmax_rows(class_logits(&tape, rv, w, b, mode, CLASSIFIER_DROPOUT));
    let out = tape.value(probs).clone();
    Ok(SimilarityMatrix { probs: out })
}

/// Region distribution of every class with `alpha` added to the logits.
pub fn conditioned_similarity(r: &Mat, bank: &ClassifierBank, alpha: &[f64]) -> Result<ConditionedSimilarity> {
    check_features(r, bank)?;
    if alpha.len() != r.rows() {
        return Err(Error::shape("attention weights", (1, r.rows()), (1, alpha.len())));
    }
    let tape = Tape::new();
    let (rv, w, b) = (tape.leaf(r.clone()), tape.leaf(bank.w.clone()), tape.leaf(bank.b.clone()));
    let base = class_logits(&tape, rv, w, b, &mut Mode::eval(), 0.0);
    let a = tape.leaf(Mat::row_vector(alpha.to_vec()));
    let ones = tape.leaf(Mat::filled(bank.num_classes(), 1, 1.0));
    let logits = tape.add(tape.transpose(base), tape.matmul(ones, a));
    let probs = tape.value(tape.softmax_rows(logits)).clone();
    Ok(ConditionedSimilarity { probs })
}

/// Mean of `-log M_s[j_i, i]` over positive regions; zero without positives.
pub fn classification_loss(ms: &SimilarityMatrix, matches: &PositiveMatch) -> LossValue {
    let mut total = 0.0;
    let mut clamped = false;
    let mut count = 0;
    for (region, class) in matches.positives() {
        let l = neg_log(ms.get(class, region));
        total += l.value;
        clamped |= l.clamped;
        count += 1;
    }
    LossValue {
        value: if count == 0 { 0.0 } else { total / count as f64 },
        clamped,
    }
}

/// `-sum_i gamma_i log beta_i` over the row of `class`.
pub fn grounding_loss(cs: &ConditionedSimilarity, class: usize, gamma: &[bool]) -> LossValue {
    weighted_neg_log(cs.beta(class), gamma)
}

pub(crate) fn weighted_neg_log(probs: &[f64], gamma: &[bool]) -> LossValue {
    let mut out = LossValue::default();
    for (&p, &g) in probs.iter().zip(gamma) {
        if g {
            let l = neg_log(p);
            out.value += l.value;
            out.clamped |= l.clamped;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::check_gradients;
    use crate::regions::{match_positives, BoundingBox, FrameRule, GtBox, Region, RegionSet};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> Mat {
        Mat::randn(rows, cols, 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn zero_inputs_give_uniform_columns() {
        let ms = region_class_similarity(&Mat::zeros(3, 5), &ClassifierBank::zeros(5, 4), &mut Mode::eval()).unwrap();
        assert!(ms.region_major().data().iter().all(|&p| (p - 0.25).abs() < 1e-15));
    }

    #[test]
    fn two_class_scalar_softmax() {
        // one region, feature 1, weights (ln 2, 0)
        let bank = ClassifierBank::new(Mat::row_vector(vec![2f64.ln(), 0.0]), Mat::zeros(1, 2)).unwrap();
        let ms = region_class_similarity(&Mat::scalar(1.0), &bank, &mut Mode::eval()).unwrap();
        assert_relative_eq!(ms.get(0, 0), 2.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(ms.get(1, 0), 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn errors() {
        let bank = ClassifierBank::zeros(3, 2);
        assert!(region_class_similarity(&Mat::zeros(2, 4), &bank, &mut Mode::eval()).is_err());
        let bad = Mat::from_rows(&[vec![f64::NAN, 0.0, 0.0]]).unwrap();
        assert!(matches!(
            region_class_similarity(&bad, &bank, &mut Mode::eval()),
            Err(Error::NonFinite(_))
        ));
        assert!(conditioned_similarity(&Mat::zeros(2, 3), &bank, &[0.5]).is_err());
    }

    #[test]
    fn alpha_prior_scalar_case() {
        let bank = ClassifierBank::zeros(1, 1);
        let cs = conditioned_similarity(&Mat::zeros(2, 1), &bank, &[3f64.ln(), 0.0]).unwrap();
        assert_relative_eq!(cs.beta(0)[0], 0.75, epsilon = 1e-12);
        assert_relative_eq!(cs.beta(0)[1], 0.25, epsilon = 1e-12);
    }

    #[test]
    fn uniform_alpha_equals_plain_row_softmax() {
        let r = random(4, 3, 1);
        let bank = ClassifierBank::new(random(3, 2, 2), random(1, 2, 3)).unwrap();
        let cs = conditioned_similarity(&r, &bank, &[0.25; 4]).unwrap();
        let base = r.matmul(&bank.w).map(|v| v.max(0.0));
        for k in 0..2 {
            let expect = crate::tensor::softmax(&base.column(k));
            for (a, b) in cs.beta(k).iter().zip(expect) {
                assert_relative_eq!(*a, b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn loss_examples() {
        let ms = SimilarityMatrix::from_region_major(Mat::from_rows(&[vec![0.5, 0.5], vec![0.75, 0.25]]).unwrap());
        let regions = RegionSet::new(
            1,
            10.0,
            10.0,
            1,
            (0..2)
                .map(|i| Region {
                    bbox: BoundingBox::new(i as f64 * 5.0, 0.0, i as f64 * 5.0 + 4.0, 4.0).unwrap(),
                    frame_index: 0,
                    confidence: 1.0,
                    feature: vec![0.0],
                })
                .collect(),
        )
        .unwrap();
        let gt = |x: f64, class_id| GtBox {
            bbox: BoundingBox::new(x, 0.0, x + 4.0, 4.0).unwrap(),
            class_id,
            frame: 0,
        };
        // region 0 is class 0 (p = 0.5), region 1 is class 1 (p = 0.25)
        let m = match_positives(&regions, &[gt(0.0, 0), gt(5.0, 1)], 0.5, FrameRule::SameFrame);
        assert_relative_eq!(classification_loss(&ms, &m).value, (2f64.ln() + 4f64.ln()) / 2.0, epsilon = 1e-12);
        let single = match_positives(&regions, &[gt(5.0, 1)], 0.5, FrameRule::SameFrame);
        assert_relative_eq!(classification_loss(&ms, &single).value, 4f64.ln(), epsilon = 1e-12);
        let none = match_positives(&regions, &[], 0.5, FrameRule::SameFrame);
        assert_eq!(classification_loss(&ms, &none).value, 0.0);

        let cs = ConditionedSimilarity::from_class_major(Mat::row_vector(vec![0.5, 0.3, 0.2]));
        assert_relative_eq!(
            grounding_loss(&cs, 0, &[true, false, true]).value,
            -(0.5f64.ln() + 0.2f64.ln()),
            epsilon = 1e-12
        );
        assert_eq!(grounding_loss(&cs, 0, &[false; 3]).value, 0.0);
        let one = ConditionedSimilarity::from_class_major(Mat::row_vector(vec![1.0, 0.0]));
        assert_eq!(grounding_loss(&one, 0, &[true, false]).value, 0.0);
        let zero = grounding_loss(&one, 0, &[false, true]);
        assert!(zero.clamped);
        assert_relative_eq!(zero.value, -LOG_EPS.ln());
    }

    #[test]
    fn cls_and_grd_gradients_match_finite_differences() {
        let inputs = [random(5, 4, 10), random(4, 3, 11), random(1, 3, 12), random(1, 5, 13)];
        let err = check_gradients(&inputs, 1e-5, |t, v| {
            let logits = class_logits(t, v[0], v[1], v[2], &mut Mode::eval(), 0.0);
            let logp = t.log_softmax_rows(logits);
            let cls = t.add(t.pick(logp, 0, 2), t.pick(logp, 3, 1));
            let grd = t.log_softmax_rows(conditioned_logits(t, logits, 1, t.softmax_rows(v[3])));
            let grd = t.add(t.pick(grd, 0, 1), t.pick(grd, 0, 4));
            t.scale(t.add(cls, grd), -1.0)
        });
        assert!(err < 1e-4, "relative error {err}");
    }

    proptest! {
        #[test]
        fn stochastic_and_shift_invariant(seed in 0u64..1000, n in 1usize..7, k in 1usize..5, shift in -5.0f64..5.0) {
            let r = random(n, 3, seed);
            let bank = ClassifierBank::new(random(3, k, seed + 1), random(1, k, seed + 2)).unwrap();
            let ms = region_class_similarity(&r, &bank, &mut Mode::eval()).unwrap();
            for i in 0..n {
                prop_assert!((ms.region(i).iter().sum::<f64>() - 1.0).abs() < 1e-6);
                prop_assert!(ms.region(i).iter().all(|p| (0.0..=1.0).contains(p)));
            }
            let alpha = crate::tensor::softmax(&random(1, n, seed + 3).into_data());
            let cs = conditioned_similarity(&r, &bank, &alpha).unwrap();
            let shifted: Vec<f64> = alpha.iter().map(|a| a + shift).collect();
            let cs2 = conditioned_similarity(&r, &bank, &shifted).unwrap();
            for c in 0..k {
                prop_assert!((cs.beta(c).iter().sum::<f64>() - 1.0).abs() < 1e-6);
                for (a, b) in cs.beta(c).iter().zip(cs2.beta(c)) {
                    prop_assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }
}
