use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Correct/total counts per class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Count {
    pub correct: u64,
    pub total: u64,
}

impl Count {
    pub fn percent(&self) -> f64 {
        ratio(self.correct, self.total)
    }
}

/// `100 * num / den`, with `0/0 = 0`.
pub fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

/// Per-class accuracy counts, macro-averaged on demand. Merging is
/// associative so partial tallies can be combined in any order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassTally {
    counts: BTreeMap<usize, Count>,
}

impl ClassTally {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, class_id: usize, correct: bool) {
        let c = self.counts.entry(class_id).or_default();
        c.total += 1;
        c.correct += u64::from(correct);
    }

    pub fn merge(&mut self, other: &ClassTally) {
        for (&k, c) in &other.counts {
            let e = self.counts.entry(k).or_default();
            e.correct += c.correct;
            e.total += c.total;
        }
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn counts(&self) -> &BTreeMap<usize, Count> {
        &self.counts
    }

    pub fn per_class(&self) -> BTreeMap<usize, f64> {
        self.counts.iter().map(|(&k, c)| (k, c.percent())).collect()
    }

    /// Mean of the per-class accuracies, in percent. Zero (with a warning)
    /// when nothing was counted.
    pub fn macro_percent(&self) -> f64 {
        if self.counts.is_empty() {
            log::warn!("macro accuracy over an empty set of classes");
            return 0.0;
        }
        self.counts.values().map(Count::percent).sum::<f64>() / self.counts.len() as f64
    }
}
