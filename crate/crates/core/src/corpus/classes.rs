use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::annotation::SegmentAnnotation;
use super::tagger::{lemmatize, LabelTagger};

/// The visually-groundable object classes, most frequent first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "ClassFile", into = "ClassFile")]
pub struct ObjectClassSet {
    names: Vec<String>,
    counts: Vec<usize>,
    threshold: usize,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct ClassFile {
    threshold: usize,
    classes: Vec<ClassEntry>,
}

#[derive(Serialize, Deserialize)]
struct ClassEntry {
    name: String,
    count: usize,
}

impl From<ClassFile> for ObjectClassSet {
    fn from(f: ClassFile) -> Self {
        let (names, counts) = f.classes.into_iter().map(|c| (c.name, c.count)).unzip();
        ObjectClassSet::new(names, counts, f.threshold)
    }
}

impl From<ObjectClassSet> for ClassFile {
    fn from(s: ObjectClassSet) -> Self {
        ClassFile {
            threshold: s.threshold,
            classes: s
                .names
                .into_iter()
                .zip(s.counts)
                .map(|(name, count)| ClassEntry { name, count })
                .collect(),
        }
    }
}

impl ObjectClassSet {
    fn new(names: Vec<String>, counts: Vec<usize>, threshold: usize) -> Self {
        let index = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i))
            .collect();
        ObjectClassSet {
            names,
            counts,
            threshold,
            index,
        }
    }

    /// Classes given explicitly, in order (counts unknown).
    pub fn from_names<I: IntoIterator<Item = String>>(names: I) -> Self {
        let names: Vec<String> = names.into_iter().collect();
        let counts = vec![0; names.len()];
        Self::new(names, counts, 0)
    }

    /// Number of classes K.
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn count(&self, id: usize) -> usize {
        self.counts[id]
    }

    pub fn threshold(&self) -> usize {
        self.threshold
    }

    /// Class of a caption word: exact lowercase match, then its lemma.
    pub fn class_of(&self, word: &str) -> Option<usize> {
        let lower = word.to_lowercase();
        self.index
            .get(&lower)
            .or_else(|| self.index.get(&lemmatize(&lower)))
            .copied()
    }
}

/// Counts every mention label occurrence (after lemmatisation) and keeps the
/// words seen at least `freq_threshold` times. Pass only train and val
/// segments here.
pub fn derive_object_classes(
    corpus: &[SegmentAnnotation],
    freq_threshold: usize,
    tagger: &dyn LabelTagger,
) -> Result<ObjectClassSet> {
    if freq_threshold < 1 {
        return Err(Error::Config("class frequency threshold must be at least 1".into()));
    }
    let counts = label_counts(corpus, tagger);
    let mut kept: Vec<(String, usize)> = counts
        .into_iter()
        .filter(|(_, c)| *c >= freq_threshold)
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let (names, counts) = kept.into_iter().unzip();
    Ok(ObjectClassSet::new(names, counts, freq_threshold))
}

/// Lemmatised label frequencies, one count per label per mention.
pub fn label_counts(corpus: &[SegmentAnnotation], tagger: &dyn LabelTagger) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for seg in corpus {
        for m in &seg.mentions {
            let labels = if m.labels.is_empty() {
                tagger.extract(&m.np_text)
            } else {
                m.labels.clone()
            };
            for l in labels {
                *counts.entry(tagger.lemma(&l)).or_default() += 1;
            }
        }
    }
    counts
}

/// Preset label-frequency thresholds.
pub fn class_threshold_preset(name: &str) -> Option<usize> {
    match name {
        "anet" | "activitynet" => Some(50),
        "flickr" | "flickr30k" => Some(100),
        _ => None,
    }
}
