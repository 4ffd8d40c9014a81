use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grounding::SimilarityMatrix;
use crate::regions::{iou, BoundingBox, RegionSet, POSITIVE_IOU};
use crate::tensor::argmax;

use super::tally::{ratio, ClassTally};

/// An annotated object word of a reference caption.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefObject {
    pub class_id: usize,
    pub frame: usize,
    pub boxes: Vec<BoundingBox>,
}

/// Region chosen for one object word and whether it hits a GT box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalizationRecord {
    pub class_id: usize,
    pub frame: usize,
    pub gt_boxes: Vec<BoundingBox>,
    /// Flat region index, `None` if the frame has no regions.
    pub predicted: Option<usize>,
    pub iou: f64,
    pub correct: bool,
}

/// Index of the highest weight among the regions of `frame` (lowest index on
/// ties).
pub fn frame_argmax(regions: &RegionSet, frame: usize, weights: &[f64]) -> Result<Option<usize>> {
    if weights.len() != regions.len() {
        return Err(Error::shape("region weights", regions.len(), weights.len()));
    }
    if frame >= regions.num_frames() {
        return Ok(None);
    }
    let range = regions.frame_range(frame);
    if range.is_empty() {
        return Ok(None);
    }
    Ok(Some(range.start + argmax(&weights[range])))
}

fn best_iou(b: &BoundingBox, gt: &[BoundingBox]) -> f64 {
    gt.iter().map(|g| iou(b, g)).fold(0.0, f64::max)
}

impl LocalizationRecord {
    /// Picks the arg-max region of `weights` within the object's frame.
    pub fn from_weights(regions: &RegionSet, object: &RefObject, weights: &[f64]) -> Result<Self> {
        let predicted = frame_argmax(regions, object.frame, weights)?;
        let iou = predicted.map_or(0.0, |i| best_iou(&regions.region(i).bbox, &object.boxes));
        Ok(LocalizationRecord {
            class_id: object.class_id,
            frame: object.frame,
            gt_boxes: object.boxes.clone(),
            predicted,
            iou,
            correct: iou > POSITIVE_IOU,
        })
    }
}

/// Per-class localization accuracy of records built on reference captions.
/// Callers pass one record per class and sentence (the first instance).
pub fn gt_localization_accuracy(records: &[LocalizationRecord]) -> ClassTally {
    let mut t = ClassTally::new();
    for r in records {
        t.add(r.class_id, r.correct);
    }
    t
}

/// Top-1 region classification over positive `(region, class)` pairs.
pub fn classification_accuracy<'a, I>(segments: I) -> ClassTally
where
    I: IntoIterator<Item = (&'a SimilarityMatrix, &'a [(usize, usize)])>,
{
    let mut t = ClassTally::new();
    for (ms, positives) in segments {
        for &(region, class) in positives {
            t.add(class, argmax(ms.region(region)) == class);
        }
    }
    t
}

/// Whether any region in the object's frame overlaps a GT box.
pub fn coverable(regions: &RegionSet, object: &RefObject) -> bool {
    object.frame < regions.num_frames()
        && regions
            .frame_range(object.frame)
            .any(|i| best_iou(&regions.region(i).bbox, &object.boxes) > POSITIVE_IOU)
}

/// Accuracy of an oracle that always picks the best region.
pub fn localization_upper_bound<'a, I>(segments: I) -> ClassTally
where
    I: IntoIterator<Item = (&'a RegionSet, &'a [RefObject])>,
{
    let mut t = ClassTally::new();
    for (regions, objects) in segments {
        for o in objects {
            t.add(o.class_id, coverable(regions, o));
        }
    }
    t
}

/// A class word of a generated caption and the attention weights used to
/// emit it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratedWord {
    pub class_id: usize,
    pub attention: Vec<f64>,
}

/// A generated caption next to its reference objects.
#[derive(Clone, Debug)]
pub struct F1Segment<'a> {
    pub regions: &'a RegionSet,
    pub generated: Vec<GeneratedWord>,
    /// Reference object words; only the first per class is used.
    pub reference: Vec<RefObject>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum F1Mode {
    /// Counts generation and localization errors.
    All,
    /// Only correctly predicted words.
    Loc,
}

/// Word counts of one class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct F1Counts {
    /// Generated occurrences.
    pub a: u64,
    /// Reference first instances.
    pub b: u64,
    /// Generated occurrences whose class is in the reference.
    pub c: u64,
    /// Reference first instances whose class was generated.
    pub d: u64,
    /// Generated occurrences correctly localized.
    pub e_precision: u64,
    /// Reference first instances whose first generated occurrence is
    /// correctly localized.
    pub e_recall: u64,
}

impl F1Counts {
    fn merge(&mut self, o: &F1Counts) {
        self.a += o.a;
        self.b += o.b;
        self.c += o.c;
        self.d += o.d;
        self.e_precision += o.e_precision;
        self.e_recall += o.e_recall;
    }

    /// Per-class precision and recall in percent.
    pub fn precision_recall(&self, mode: F1Mode) -> (f64, f64) {
        match mode {
            F1Mode::All => (ratio(self.e_precision, self.a), ratio(self.e_recall, self.b)),
            F1Mode::Loc => (ratio(self.e_precision, self.c), ratio(self.e_recall, self.d)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct F1Score {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// `(precision, recall)` per class.
    pub per_class: BTreeMap<usize, (f64, f64)>,
}

/// Harmonic mean, zero when both are zero.
pub fn harmonic_f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Counts per class over all segments.
pub fn f1_counts(segments: &[F1Segment<'_>]) -> Result<BTreeMap<usize, F1Counts>> {
    let mut all: BTreeMap<usize, F1Counts> = BTreeMap::new();
    for seg in segments {
        let mut firsts: Vec<&RefObject> = Vec::new();
        for o in &seg.reference {
            if !firsts.iter().any(|f| f.class_id == o.class_id) {
                firsts.push(o);
            }
        }
        let mut first_correct: BTreeMap<usize, bool> = BTreeMap::new();
        for w in &seg.generated {
            let c = all.entry(w.class_id).or_default();
            c.a += 1;
            let Some(obj) = firsts.iter().find(|f| f.class_id == w.class_id) else {
                continue;
            };
            c.c += 1;
            let ok = LocalizationRecord::from_weights(seg.regions, obj, &w.attention)?.correct;
            c.e_precision += u64::from(ok);
            first_correct.entry(w.class_id).or_insert(ok);
        }
        for o in firsts {
            let c = all.entry(o.class_id).or_default();
            c.b += 1;
            if let Some(&ok) = first_correct.get(&o.class_id) {
                c.d += 1;
                c.e_recall += u64::from(ok);
            }
        }
    }
    Ok(all)
}

/// Macro precision and recall over the classes present in the references,
/// and their harmonic mean. Classes never generated score zero.
pub fn generation_f1(segments: &[F1Segment<'_>], mode: F1Mode) -> Result<F1Score> {
    Ok(f1_from_counts(&f1_counts(segments)?, mode))
}

pub fn f1_from_counts(counts: &BTreeMap<usize, F1Counts>, mode: F1Mode) -> F1Score {
    let per_class: BTreeMap<usize, (f64, f64)> = counts
        .iter()
        .filter(|(_, c)| c.b > 0)
        .map(|(&k, c)| (k, c.precision_recall(mode)))
        .collect();
    if per_class.is_empty() {
        log::warn!("F1 over an empty set of reference classes");
    }
    let n = per_class.len().max(1) as f64;
    let precision = per_class.values().map(|p| p.0).sum::<f64>() / n;
    let recall = per_class.values().map(|p| p.1).sum::<f64>() / n;
    F1Score {
        precision,
        recall,
        f1: harmonic_f1(precision, recall),
        per_class,
    }
}

/// Merges partial count tables.
pub fn merge_f1_counts(into: &mut BTreeMap<usize, F1Counts>, other: &BTreeMap<usize, F1Counts>) {
    for (&k, c) in other {
        into.entry(k).or_default().merge(c);
    }
}
