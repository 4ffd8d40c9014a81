//! A segment paired with its features and precomputed supervision targets.

use std::ops::Range;

use crate::attention::{SegmentMeta, TemporalFeatureMap};
use crate::corpus::{encode_caption, segment_gt_boxes, EncodedCaption, ObjectClassSet, SegmentAnnotation, Vocabulary};
use crate::error::{Error, Result};
use crate::regions::{match_positives, BoundingBox, FrameRule, RegionSet, POSITIVE_IOU};

/// Visual inputs of one segment.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentInputs {
    pub regions: RegionSet,
    pub temporal: TemporalFeatureMap,
    pub meta: SegmentMeta,
}

impl SegmentInputs {
    pub fn new(regions: RegionSet, temporal: TemporalFeatureMap, meta: SegmentMeta) -> Result<Self> {
        if regions.is_empty() {
            return Err(Error::Data("segment has no regions".into()));
        }
        meta.positional_scalars()?;
        Ok(SegmentInputs { regions, temporal, meta })
    }
}

/// Supervision for one visually-groundable caption position.
#[derive(Clone, Debug, PartialEq)]
pub struct WordTarget {
    /// Index into the encoded caption (the decode step that emits the word).
    pub position: usize,
    pub class_id: usize,
    pub frame: usize,
    pub boxes: Vec<BoundingBox>,
    /// Flat region indices of the annotated frame.
    pub frame_regions: Range<usize>,
    /// Positive indicators over `frame_regions`.
    pub gamma: Vec<bool>,
    /// First occurrence of this class in the caption.
    pub first_instance: bool,
}

impl WordTarget {
    pub fn has_positive(&self) -> bool {
        self.gamma.iter().any(|&g| g)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub annotation: SegmentAnnotation,
    pub encoded: EncodedCaption,
    pub inputs: SegmentInputs,
    pub targets: Vec<WordTarget>,
    /// `(region, class)` pairs of positive regions for classification.
    pub cls_positives: Vec<(usize, usize)>,
}

impl Sample {
    pub fn new(
        annotation: SegmentAnnotation,
        vocab: &Vocabulary,
        classes: &ObjectClassSet,
        inputs: SegmentInputs,
    ) -> Result<Self> {
        let encoded = encode_caption(&annotation, vocab, classes);
        let regions = &inputs.regions;
        let mut seen = Vec::new();
        let mut targets = Vec::new();
        for (position, g) in encoded.grounding.iter().enumerate() {
            let Some(g) = g else { continue };
            if g.frame >= regions.num_frames() {
                return Err(Error::Data(format!(
                    "{}#{}: annotated frame {} but only {} frames of regions",
                    annotation.video_id,
                    annotation.segment_index,
                    g.frame,
                    regions.num_frames()
                )));
            }
            let m = match_positives(regions, &g.gt_boxes(), POSITIVE_IOU, FrameRule::SameFrame);
            let first_instance = !seen.contains(&g.class_id);
            seen.push(g.class_id);
            targets.push(WordTarget {
                position,
                class_id: g.class_id,
                frame: g.frame,
                boxes: g.boxes.clone(),
                frame_regions: regions.frame_range(g.frame),
                gamma: m.on_frame(regions, g.frame),
                first_instance,
            });
        }
        let cls = match_positives(regions, &segment_gt_boxes(&encoded), POSITIVE_IOU, FrameRule::SameFrame);
        let cls_positives = cls.positives().collect();
        Ok(Sample {
            annotation,
            encoded,
            inputs,
            targets,
            cls_positives,
        })
    }

    pub fn key(&self) -> (String, usize) {
        (self.annotation.video_id.clone(), self.annotation.segment_index)
    }

    /// Reference caption as lowercase words (truncated like the encoding).
    pub fn reference(&self) -> Vec<String> {
        self.annotation
            .caption
            .iter()
            .take(self.encoded.ids.len() - 1)
            .map(|w| w.to_lowercase())
            .collect()
    }

    pub fn first_instances(&self) -> impl Iterator<Item = &WordTarget> {
        self.targets.iter().filter(|t| t.first_instance)
    }
}
