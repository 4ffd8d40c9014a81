use crate::regions::{BoundingBox, GtBox};

use super::annotation::SegmentAnnotation;
use super::classes::ObjectClassSet;
use super::vocab::Vocabulary;

/// Ground truth attached to one visually-groundable caption position.
#[derive(Clone, Debug, PartialEq)]
pub struct WordGrounding {
    pub class_id: usize,
    pub frame: usize,
    pub boxes: Vec<BoundingBox>,
    pub mention: usize,
}

impl WordGrounding {
    pub fn gt_boxes(&self) -> Vec<GtBox> {
        self.boxes
            .iter()
            .map(|&bbox| GtBox {
                bbox,
                class_id: self.class_id,
                frame: self.frame,
            })
            .collect()
    }
}

/// Token ids (truncated caption followed by EOS) with per-position grounding.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedCaption {
    pub ids: Vec<usize>,
    /// `grounding[t]` is `Some` iff position `t` is visually groundable.
    pub grounding: Vec<Option<WordGrounding>>,
}

impl EncodedCaption {
    pub fn groundable_mask(&self) -> Vec<bool> {
        self.grounding.iter().map(Option::is_some).collect()
    }

    pub fn num_groundable(&self) -> usize {
        self.grounding.iter().filter(|g| g.is_some()).count()
    }
}

/// Encodes a caption and marks the positions whose word is an object class
/// inside an annotated mention. Positions past the length limit are dropped
/// together with their mentions.
pub fn encode_caption(
    annotation: &SegmentAnnotation,
    vocab: &Vocabulary,
    classes: &ObjectClassSet,
) -> EncodedCaption {
    let ids = vocab.encode(&annotation.caption);
    let kept = ids.len() - 1;
    let mut grounding = vec![None; ids.len()];
    for (mi, m) in annotation.mentions.iter().enumerate() {
        if m.boxes.is_empty() {
            continue;
        }
        for &t in m.token_span.iter().filter(|&&t| t < kept) {
            if let Some(class_id) = classes.class_of(&annotation.caption[t]) {
                grounding[t] = Some(WordGrounding {
                    class_id,
                    frame: m.frame_index,
                    boxes: m.boxes.clone(),
                    mention: mi,
                });
            }
        }
    }
    EncodedCaption { ids, grounding }
}

/// All GT boxes of an annotation whose words are in the class set, for
/// region classification.
pub fn segment_gt_boxes(encoded: &EncodedCaption) -> Vec<GtBox> {
    let mut seen = Vec::new();
    let mut out = Vec::new();
    for g in encoded.grounding.iter().flatten() {
        if seen.contains(&(g.mention, g.class_id)) {
            continue;
        }
        seen.push((g.mention, g.class_id));
        out.extend(g.gt_boxes());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::annotation::EntityMention;

    fn fixture(caption: &[&str], mentions: Vec<EntityMention>) -> SegmentAnnotation {
        SegmentAnnotation {
            video_id: "v".into(),
            segment_index: 0,
            total_segments: 1,
            start_s: 0.0,
            end_s: 1.0,
            caption: caption.iter().map(|s| s.to_string()).collect(),
            mentions,
        }
    }

    fn mention(tokens: Vec<usize>, label: &str) -> EntityMention {
        EntityMention {
            np_text: label.into(),
            token_span: tokens,
            frame_index: 2,
            boxes: vec![BoundingBox::new(0.0, 0.0, 4.0, 4.0).unwrap()],
            is_group: false,
            labels: vec![label.into()],
        }
    }

    fn setup() -> (Vocabulary, ObjectClassSet) {
        let vocab = Vocabulary::from_words(["a", "man", "runs", "dog"].map(String::from), 20);
        let classes = ObjectClassSet::from_names(["man", "dog"].map(String::from));
        (vocab, classes)
    }

    #[test]
    fn single_groundable_word() {
        let (vocab, classes) = setup();
        let ann = fixture(&["a", "man", "runs"], vec![mention(vec![1], "man")]);
        let enc = encode_caption(&ann, &vocab, &classes);
        assert_eq!(enc.groundable_mask(), vec![false, true, false, false]);
        let g = enc.grounding[1].as_ref().unwrap();
        assert_eq!((g.class_id, g.frame, g.boxes.len()), (0, 2, 1));
    }

    #[test]
    fn no_mentions() {
        let (vocab, classes) = setup();
        let enc = encode_caption(&fixture(&["a", "man"], vec![]), &vocab, &classes);
        assert!(enc.groundable_mask().iter().all(|m| !m));
    }

    #[test]
    fn word_outside_class_set() {
        let (vocab, classes) = setup();
        let ann = fixture(&["a", "runs"], vec![mention(vec![1], "runs")]);
        assert_eq!(encode_caption(&ann, &vocab, &classes).num_groundable(), 0);
    }

    #[test]
    fn truncated_mentions_discarded() {
        let (mut vocab, classes) = setup();
        vocab = Vocabulary::from_words(vocab.tokens()[4..].to_vec(), 2);
        let ann = fixture(&["a", "runs", "dog"], vec![mention(vec![2], "dog")]);
        let enc = encode_caption(&ann, &vocab, &classes);
        assert_eq!(enc.ids.len(), 3);
        assert_eq!(enc.num_groundable(), 0);
    }

    #[test]
    fn gt_boxes_per_mention() {
        let (vocab, classes) = setup();
        let ann = fixture(&["a", "man", "dog"], vec![mention(vec![1], "man"), mention(vec![2], "dog")]);
        let enc = encode_caption(&ann, &vocab, &classes);
        let gts = segment_gt_boxes(&enc);
        assert_eq!(gts.len(), 2);
        assert_eq!(gts[1].class_id, 1);
    }
}
