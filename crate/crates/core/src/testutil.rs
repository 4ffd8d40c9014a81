//! Small hand-built fixtures shared by unit tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::attention::{SegmentMeta, TemporalFeatureMap};
use crate::corpus::{EntityMention, ObjectClassSet, SegmentAnnotation, Vocabulary};
use crate::decoder::{GvdModel, ModelConfig};
use crate::regions::{BoundingBox, Region, RegionSet};
use crate::sample::{Sample, SegmentInputs};
use crate::tensor::Mat;

pub const FRAMES: usize = 2;
pub const PER_FRAME: usize = 3;

pub fn vocab() -> Vocabulary {
    let words = ["a", "man", "dog", "ball", "runs", "with", "the"];
    Vocabulary::from_words(words.iter().map(|w| w.to_string()), 12)
}

pub fn classes() -> ObjectClassSet {
    ObjectClassSet::from_names(["man", "dog", "ball"].iter().map(|w| w.to_string()))
}

fn slot_box(i: usize) -> BoundingBox {
    let x = 10.0 + 30.0 * i as f64;
    BoundingBox::new(x, 10.0, x + 25.0, 40.0).unwrap()
}

pub fn inputs(config: &ModelConfig, seed: u64) -> SegmentInputs {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut regions = Vec::new();
    for f in 0..FRAMES {
        for i in 0..PER_FRAME {
            regions.push(Region {
                bbox: slot_box(i),
                frame_index: f,
                confidence: 0.9,
                feature: (0..config.feature_dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
            });
        }
    }
    let set = RegionSet::new(FRAMES, 100.0, 50.0, config.feature_dim, regions).unwrap();
    let frames = Mat::randn(4, config.temporal_dim, 1.0, &mut rng);
    let meta = SegmentMeta {
        total_segments: 3,
        segment_index: 1,
        start_s: 4.0,
        end_s: 9.0,
        duration_s: 20.0,
    };
    SegmentInputs::new(set, TemporalFeatureMap::new(frames).unwrap(), meta).unwrap()
}

/// "a man runs with the dog": `man` on region 0 of frame 0, `dog` on
/// region 2 of frame 1.
pub fn annotation() -> SegmentAnnotation {
    let caption: Vec<String> = "a man runs with the dog".split(' ').map(String::from).collect();
    SegmentAnnotation {
        video_id: "v_test".into(),
        segment_index: 1,
        total_segments: 3,
        start_s: 4.0,
        end_s: 9.0,
        caption,
        mentions: vec![
            EntityMention {
                np_text: "a man".into(),
                token_span: vec![0, 1],
                frame_index: 0,
                boxes: vec![slot_box(0)],
                is_group: false,
                labels: vec!["man".into()],
            },
            EntityMention {
                np_text: "the dog".into(),
                token_span: vec![4, 5],
                frame_index: 1,
                boxes: vec![slot_box(2)],
                is_group: false,
                labels: vec!["dog".into()],
            },
        ],
    }
}

pub fn model(config: ModelConfig, seed: u64) -> GvdModel {
    GvdModel::new(config, vocab(), classes(), seed).unwrap()
}

pub fn sample(config: &ModelConfig, seed: u64) -> Sample {
    Sample::new(annotation(), &vocab(), &classes(), inputs(config, seed)).unwrap()
}
