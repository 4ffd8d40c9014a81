use std::collections::HashMap;
use std::io::BufRead;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Mat;

/// Standard deviation of classifiers initialised without a source match.
pub const RANDOM_INIT_STD: f64 = 0.02;

/// Per-class linear classifiers over region features: `W_c` is `d x K`,
/// the biases `B` are a `1 x K` row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierBank {
    pub w: Mat,
    pub b: Mat,
}

impl ClassifierBank {
    pub fn new(w: Mat, b: Mat) -> Result<Self> {
        if b.rows() != 1 || b.cols() != w.cols() {
            return Err(Error::shape("classifier bias", (1, w.cols()), b.shape()));
        }
        if !w.is_finite() || !b.is_finite() {
            return Err(Error::NonFinite("classifier bank".into()));
        }
        Ok(ClassifierBank { w, b })
    }

    pub fn zeros(feature_dim: usize, num_classes: usize) -> Self {
        ClassifierBank {
            w: Mat::zeros(feature_dim, num_classes),
            b: Mat::zeros(1, num_classes),
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.w.rows()
    }

    pub fn num_classes(&self) -> usize {
        self.w.cols()
    }
}

/// Word vectors read from the whitespace-separated `word v1 ... vD` format.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EmbeddingTable {
    vectors: HashMap<String, Vec<f64>>,
    dim: usize,
}

impl EmbeddingTable {
    pub fn parse<R: BufRead>(reader: R) -> Result<Self> {
        let mut table = EmbeddingTable::default();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::Malformed {
                line: i + 1,
                message: e.to_string(),
            })?;
            let mut parts = line.split_whitespace();
            let Some(word) = parts.next() else { continue };
            let values = parts
                .map(str::parse::<f64>)
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Malformed {
                    line: i + 1,
                    message: e.to_string(),
                })?;
            table.insert(word, values).map_err(|_| Error::Malformed {
                line: i + 1,
                message: format!("expected {} values", table.dim),
            })?;
        }
        Ok(table)
    }

    pub fn insert(&mut self, word: &str, vector: Vec<f64>) -> Result<()> {
        if self.vectors.is_empty() {
            self.dim = vector.len();
        } else if vector.len() != self.dim {
            return Err(Error::shape("embedding", (1, self.dim), (1, vector.len())));
        }
        self.vectors.insert(word.to_lowercase(), vector);
        Ok(())
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.vectors.get(&word.to_lowercase()).map(Vec::as_slice)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

/// Classifiers of a pretrained detector, one column per source class.
#[derive(Clone, Debug)]
pub struct SourceClassifiers {
    pub names: Vec<String>,
    pub bank: ClassifierBank,
}

/// Index of the source class whose embedding is closest (Euclidean) to the
/// embedding of `name`; ties go to the lower index.
pub fn nearest_source(name: &str, table: &EmbeddingTable, source_names: &[String]) -> Option<usize> {
    let target = table.get(name)?;
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in source_names.iter().enumerate() {
        let Some(v) = table.get(s) else { continue };
        let d: f64 = v.iter().zip(target).map(|(a, b)| (a - b).powi(2)).sum();
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((i, d));
        }
    }
    best.map(|(i, _)| i)
}

/// Builds a bank for `class_names` by copying, for each class, the weights
/// and bias of its nearest source class in embedding space. Classes without
/// a match get random weights (std 0.02, drawn from `seed`) and zero bias.
pub fn init_classifier_transfer(
    class_names: &[String],
    feature_dim: usize,
    table: &EmbeddingTable,
    source: Option<&SourceClassifiers>,
    seed: u64,
) -> (ClassifierBank, Vec<Option<usize>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, RANDOM_INIT_STD).expect("finite std");
    let mut bank = ClassifierBank::zeros(feature_dim, class_names.len());
    let mut assignment = Vec::with_capacity(class_names.len());
    for (k, name) in class_names.iter().enumerate() {
        let matched = source
            .filter(|s| s.bank.feature_dim() == feature_dim)
            .and_then(|s| nearest_source(name, table, &s.names).map(|i| (s, i)));
        match matched {
            Some((s, i)) => {
                for r in 0..feature_dim {
                    bank.w.set(r, k, s.bank.w.get(r, i));
                }
                bank.b.set(0, k, s.bank.b.get(0, i));
                assignment.push(Some(i));
            }
            None => {
                for r in 0..feature_dim {
                    bank.w.set(r, k, normal.sample(&mut rng));
                }
                assignment.push(None);
            }
        }
    }
    (bank, assignment)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    fn source() -> SourceClassifiers {
        let w = Mat::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        let b = Mat::row_vector(vec![0.1, 0.2, 0.3]);
        SourceClassifiers {
            names: names(&["dog", "cat", "car"]),
            bank: ClassifierBank::new(w, b).unwrap(),
        }
    }

    #[test]
    fn parses_text_table() {
        let t = EmbeddingTable::parse("dog 1 0\ncat 0 1\n\n".as_bytes()).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.get("Dog"), Some(&[1.0, 0.0][..]));
        assert!(EmbeddingTable::parse("dog 1 0\ncat 0".as_bytes()).is_err());
        assert!(EmbeddingTable::parse("dog 1 x".as_bytes()).is_err());
    }

    #[test]
    fn verbatim_class_copies_its_own_classifier() {
        let t = EmbeddingTable::parse("dog 1 0\ncat 0 1\ncar 5 5\n".as_bytes()).unwrap();
        let (bank, assign) = init_classifier_transfer(&names(&["cat"]), 2, &t, Some(&source()), 0);
        assert_eq!(assign, vec![Some(1)]);
        assert_eq!(bank.w.column(0), vec![2.0, 5.0]);
        assert_eq!(bank.b.get(0, 0), 0.2);
    }

    #[test]
    fn matches_brute_force_nearest_neighbour() {
        let t = EmbeddingTable::parse(
            "dog 1 0\ncat 0 1\ncar 5 5\npuppy 0.9 0.2\nkitten -0.1 0.7\n".as_bytes(),
        )
        .unwrap();
        let src = source();
        let classes = names(&["puppy", "kitten"]);
        let (_, assign) = init_classifier_transfer(&classes, 2, &t, Some(&src), 0);
        for (k, c) in classes.iter().enumerate() {
            let v = t.get(c).unwrap();
            let dists: Vec<f64> = src
                .names
                .iter()
                .map(|s| {
                    let u = t.get(s).unwrap();
                    ((u[0] - v[0]).powi(2) + (u[1] - v[1]).powi(2)).sqrt()
                })
                .collect();
            let best = (0..dists.len())
                .min_by(|&a, &b| dists[a].partial_cmp(&dists[b]).unwrap())
                .unwrap();
            assert_eq!(assign[k], Some(best));
        }
    }

    #[test]
    fn random_fallback_is_seeded() {
        let t = EmbeddingTable::default();
        let cls = names(&["a", "b"]);
        let (a, assign) = init_classifier_transfer(&cls, 3, &t, None, 7);
        let (b, _) = init_classifier_transfer(&cls, 3, &t, None, 7);
        assert_eq!(a, b);
        assert_eq!(assign, vec![None, None]);
        assert!(a.w.max_abs() > 0.0 && a.w.max_abs() < 0.2);
        assert_eq!(a.b.max_abs(), 0.0);
    }
}
