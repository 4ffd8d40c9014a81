use std::collections::BTreeMap;

use crate::error::{Error, Result};

type Ngram<'a> = &'a [String];

fn ngram_counts(words: &[String], max_n: usize) -> BTreeMap<Ngram<'_>, usize> {
    let mut counts = BTreeMap::new();
    for k in 1..=max_n {
        for g in words.windows(k) {
            *counts.entry(g).or_insert(0) += 1;
        }
    }
    counts
}

fn check_corpus(candidates: &[Vec<String>], references: &[Vec<Vec<String>>]) -> Result<()> {
    if candidates.len() != references.len() {
        return Err(Error::shape("references per candidate", candidates.len(), references.len()));
    }
    if let Some(i) = references.iter().position(|r| r.is_empty()) {
        return Err(Error::Data(format!("candidate {i} has no reference")));
    }
    Ok(())
}

/// Corpus BLEU-1..4 with clipped n-gram precision and a brevity penalty
/// against the closest reference length.
pub fn bleu_scores(candidates: &[Vec<String>], references: &[Vec<Vec<String>>]) -> Result<[f64; 4]> {
    const TINY: f64 = 1e-15;
    const SMALL: f64 = 1e-9;
    check_corpus(candidates, references)?;
    let (mut test_len, mut ref_len) = (0usize, 0usize);
    let mut guess = [0usize; 4];
    let mut correct = [0usize; 4];
    for (cand, refs) in candidates.iter().zip(references) {
        let mut max_ref: BTreeMap<Ngram<'_>, usize> = BTreeMap::new();
        for r in refs {
            for (g, c) in ngram_counts(r, 4) {
                let e = max_ref.entry(g).or_insert(0);
                *e = (*e).max(c);
            }
        }
        let len = cand.len();
        test_len += len;
        ref_len += refs
            .iter()
            .map(|r| r.len())
            .min_by_key(|&l| (l.abs_diff(len), l))
            .expect("non-empty references");
        for k in 0..4 {
            guess[k] += (len + 1).saturating_sub(k + 1);
        }
        for (g, c) in ngram_counts(cand, 4) {
            correct[g.len() - 1] += c.min(max_ref.get(g).copied().unwrap_or(0));
        }
    }
    let mut out = [0.0; 4];
    let mut prod = 1.0;
    for k in 0..4 {
        prod *= (correct[k] as f64 + TINY) / (guess[k] as f64 + SMALL);
        out[k] = prod.powf(1.0 / (k + 1) as f64);
    }
    let r = (test_len as f64 + TINY) / (ref_len as f64 + SMALL);
    if r < 1.0 {
        let bp = (1.0 - 1.0 / r).exp();
        out.iter_mut().for_each(|v| *v *= bp);
    }
    Ok(out)
}

/// Corpus BLEU of order `n` in `[0, 1]`.
pub fn bleu(candidates: &[Vec<String>], references: &[Vec<Vec<String>>], n: usize) -> Result<f64> {
    if !(1..=4).contains(&n) {
        return Err(Error::Config(format!("BLEU order must be 1 to 4, got {n}")));
    }
    Ok(bleu_scores(candidates, references)?[n - 1])
}

const CIDER_N: usize = 4;
const CIDER_SIGMA: f64 = 6.0;

struct TfIdf<'a> {
    vec: [BTreeMap<Ngram<'a>, f64>; CIDER_N],
    norm: [f64; CIDER_N],
    /// Bigram count, which is what the length penalty of the reference
    /// scorer compares.
    length: f64,
}

fn tfidf<'a>(words: &'a [String], df: &BTreeMap<Ngram<'_>, f64>, log_docs: f64) -> TfIdf<'a> {
    let mut vec: [BTreeMap<Ngram<'a>, f64>; CIDER_N] = Default::default();
    let mut norm = [0.0; CIDER_N];
    let mut length = 0.0;
    for (g, tf) in ngram_counts(words, CIDER_N) {
        let n = g.len() - 1;
        let d = df.get(g).copied().unwrap_or(0.0).max(1.0).ln();
        let v = tf as f64 * (log_docs - d);
        vec[n].insert(g, v);
        norm[n] += v * v;
        if n == 1 {
            length += tf as f64;
        }
    }
    TfIdf {
        vec,
        norm: norm.map(f64::sqrt),
        length,
    }
}

fn cider_sim(hyp: &TfIdf<'_>, r: &TfIdf<'_>) -> [f64; CIDER_N] {
    let delta = hyp.length - r.length;
    let penalty = (-(delta * delta) / (2.0 * CIDER_SIGMA * CIDER_SIGMA)).exp();
    let mut val = [0.0; CIDER_N];
    for n in 0..CIDER_N {
        for (g, &h) in &hyp.vec[n] {
            let rv = r.vec[n].get(g).copied().unwrap_or(0.0);
            val[n] += h.min(rv) * rv;
        }
        if hyp.norm[n] != 0.0 && r.norm[n] != 0.0 {
            val[n] /= hyp.norm[n] * r.norm[n];
        }
        val[n] *= penalty;
    }
    val
}

/// CIDEr-D score of every candidate (document frequencies from the
/// references, Gaussian length penalty, clipped counts, scaled by 10).
pub fn cider_per_segment(candidates: &[Vec<String>], references: &[Vec<Vec<String>>]) -> Result<Vec<f64>> {
    check_corpus(candidates, references)?;
    if candidates.len() < 2 {
        log::warn!("CIDEr over {} document(s): idf is degenerate", candidates.len());
    }
    let mut df: BTreeMap<Ngram<'_>, f64> = BTreeMap::new();
    for refs in references {
        let mut seen: Vec<Ngram<'_>> = refs.iter().flat_map(|r| ngram_counts(r, CIDER_N).into_keys()).collect();
        seen.sort_unstable();
        seen.dedup();
        for g in seen {
            *df.entry(g).or_insert(0.0) += 1.0;
        }
    }
    let log_docs = (references.len() as f64).ln();
    Ok(candidates
        .iter()
        .zip(references)
        .map(|(cand, refs)| {
            let h = tfidf(cand, &df, log_docs);
            let mut total = [0.0; CIDER_N];
            for r in refs {
                let s = cider_sim(&h, &tfidf(r, &df, log_docs));
                (0..CIDER_N).for_each(|n| total[n] += s[n]);
            }
            total.iter().sum::<f64>() / CIDER_N as f64 / refs.len() as f64 * 10.0
        })
        .collect())
}

/// Corpus mean of [`cider_per_segment`].
pub fn cider(candidates: &[Vec<String>], references: &[Vec<Vec<String>>]) -> Result<f64> {
    let s = cider_per_segment(candidates, references)?;
    Ok(if s.is_empty() { 0.0 } else { s.iter().sum::<f64>() / s.len() as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn w(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn bleu_identity_and_clipping() {
        let c = vec![w("a man is riding a horse")];
        let r = vec![vec![w("a man is riding a horse")]];
        for n in 1..=4 {
            assert_relative_eq!(bleu(&c, &r, n).unwrap(), 1.0, epsilon = 1e-9);
        }
        let b1 = bleu(&[w("a a")], &[vec![w("a b")]], 1).unwrap();
        assert_relative_eq!(b1, 0.5, epsilon = 1e-9);
        assert!(bleu(&c, &r, 0).is_err());
        assert!(bleu(&c, &r, 5).is_err());
    }

    #[test]
    fn brevity_penalty_uses_closest_reference() {
        // candidate of 2 words, references of 3 and 6 words: closest is 3
        let b1 = bleu(&[w("a b")], &[vec![w("a b c"), w("a b c d e f")]], 1).unwrap();
        assert_relative_eq!(b1, (1.0f64 - 1.5).exp(), epsilon = 1e-9);
    }

    #[test]
    fn cider_disjoint_is_zero_and_order_invariant() {
        let cands = vec![w("x y z"), w("a dog runs"), w("a man sits")];
        let refs = vec![
            vec![w("a cat sleeps on the mat")],
            vec![w("a dog runs in the park"), w("the dog runs")],
            vec![w("a man sits on a bench")],
        ];
        let s = cider_per_segment(&cands, &refs).unwrap();
        assert_eq!(s[0], 0.0);
        assert!(s[1] > 0.0 && s[2] > 0.0);
        let rc: Vec<_> = cands.iter().rev().cloned().collect();
        let rr: Vec<_> = refs.iter().rev().cloned().collect();
        assert_relative_eq!(cider(&rc, &rr).unwrap(), cider(&cands, &refs).unwrap(), epsilon = 1e-12);
    }

    #[test]
    fn mismatched_corpus_is_an_error() {
        assert!(cider(&[w("a")], &[]).is_err());
        assert!(bleu(&[w("a")], &[vec![]], 1).is_err());
    }
}
