use serde::{Deserialize, Serialize};

use crate::regions::BoundingBox;

/// One annotated noun phrase of a caption.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntityMention {
    #[serde(rename = "np")]
    pub np_text: String,
    /// Caption token indices covered by the phrase, strictly increasing.
    #[serde(rename = "tokens")]
    pub token_span: Vec<usize>,
    #[serde(rename = "frame")]
    pub frame_index: usize,
    /// More than one box means distinct instances of the same phrase.
    pub boxes: Vec<BoundingBox>,
    #[serde(rename = "group")]
    pub is_group: bool,
    pub labels: Vec<String>,
}

impl EntityMention {
    /// Multi-instance: a group box or several boxes for one phrase.
    pub fn is_multi_instance(&self) -> bool {
        self.is_group || self.boxes.len() > 1
    }
}

/// A caption of one video segment with its grounded mentions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentAnnotation {
    pub video_id: String,
    pub segment_index: usize,
    pub total_segments: usize,
    pub start_s: f64,
    pub end_s: f64,
    pub caption: Vec<String>,
    pub mentions: Vec<EntityMention>,
}

impl SegmentAnnotation {
    pub fn key(&self) -> (String, usize) {
        (self.video_id.clone(), self.segment_index)
    }

    pub fn num_boxes(&self) -> usize {
        self.mentions.iter().map(|m| m.boxes.len()).sum()
    }
}
