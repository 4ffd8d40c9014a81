//! Seeded synthetic corpora with planted region/class correlations.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand::distr::weighted::WeightedIndex;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::corpus::{build_vocabulary, derive_object_classes, EntityMention, HeuristicTagger, SegmentAnnotation};
use crate::error::{Error, Result};
use crate::regions::{segment_file, BoundingBox, RegionFile, RegionSidecar, TemporalFile, TemporalSidecar, REGION_EXT, TEMPORAL_EXT};
use crate::tensor::Mat;

use super::data::{write_dataset, DatasetManifest, Split, FEATURE_DIR};

pub const NOUNS: [&str; 16] = [
    "man", "woman", "dog", "ball", "horse", "guitar", "car", "bike", "tree", "boat", "cake", "table", "child", "camera",
    "rope", "hat",
];
const VERBS: [&str; 6] = ["holds", "watches", "pushes", "throws", "carries", "follows"];
const ENDINGS: [&str; 4] = ["outside", "slowly", "in the park", "again"];

const FRAME_W: f64 = 320.0;
const FRAME_H: f64 = 240.0;
const SEGMENTS_PER_VIDEO: usize = 3;
const SEGMENT_SECONDS: f64 = 10.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub frames: usize,
    pub regions_per_frame: usize,
    /// Regions per frame drawn from clusters of classes not in the caption.
    pub distractors: usize,
    pub feature_dim: usize,
    pub temporal_dim: usize,
    pub temporal_frames: usize,
    /// Distance of each class cluster centre from the origin.
    pub separation: f64,
    pub noise: f64,
    /// Scale of the class signature added to frame features.
    pub temporal_signal: f64,
    pub max_mentions: usize,
    /// Relative class sampling weights (uniform when empty).
    pub class_weights: Vec<f64>,
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            num_classes: 8,
            frames: 3,
            regions_per_frame: 5,
            distractors: 2,
            feature_dim: 64,
            temporal_dim: 32,
            temporal_frames: 4,
            separation: 3.0,
            noise: 1.0,
            temporal_signal: 1.0,
            max_mentions: 3,
            class_weights: Vec::new(),
            train: 500,
            val: 100,
            test: 0,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.num_classes < 1 || self.num_classes > NOUNS.len() {
            return bad(format!("num_classes must be in 1..={}", NOUNS.len()));
        }
        if self.feature_dim < self.num_classes {
            return bad("feature_dim must be at least num_classes".into());
        }
        if self.frames < 1 || self.temporal_frames < 1 || self.temporal_dim < 1 {
            return bad("frame counts and temporal_dim must be positive".into());
        }
        if !(1..=3).contains(&self.max_mentions) || self.max_mentions > self.num_classes {
            return bad("max_mentions must be 1 to 3 and at most num_classes".into());
        }
        if self.regions_per_frame < self.max_mentions {
            return bad("regions_per_frame must fit every mentioned object".into());
        }
        if !self.class_weights.is_empty()
            && (self.class_weights.len() != self.num_classes
                || self.class_weights.iter().any(|w| !(*w > 0.0 && w.is_finite())))
        {
            return bad("class_weights must hold one positive weight per class".into());
        }
        if self.train < 1 {
            return bad("train must be at least 1".into());
        }
        if !(self.separation >= 0.0 && self.noise >= 0.0 && self.temporal_signal >= 0.0) {
            return bad("separation, noise and temporal_signal must be non-negative".into());
        }
        Ok(())
    }

    pub fn weights(&self) -> Vec<f64> {
        if self.class_weights.is_empty() {
            vec![1.0; self.num_classes]
        } else {
            self.class_weights.clone()
        }
    }
}

/// One generated segment.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSegment {
    pub annotation: SegmentAnnotation,
    pub regions: RegionFile,
    pub temporal: TemporalFile,
}

struct Generator<'a> {
    spec: &'a SyntheticSpec,
    rng: ChaCha8Rng,
    signatures: Vec<Vec<f64>>,
    weights: WeightedIndex<f64>,
}

impl Generator<'_> {
    fn gauss(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    fn class_feature(&mut self, class: usize) -> Vec<f64> {
        (0..self.spec.feature_dim)
            .map(|i| {
                let centre = if i == class { self.spec.separation } else { 0.0 };
                centre + self.spec.noise * self.gauss()
            })
            .collect()
    }

    fn background_feature(&mut self) -> Vec<f64> {
        (0..self.spec.feature_dim).map(|_| self.spec.noise * self.gauss()).collect()
    }

    /// Box inside grid cell `slot`; distinct cells never overlap.
    fn slot_box(&mut self, slot: usize) -> BoundingBox {
        let cols = (self.spec.regions_per_frame as f64).sqrt().ceil() as usize;
        let rows = self.spec.regions_per_frame.div_ceil(cols);
        let (cw, ch) = (FRAME_W / cols as f64, FRAME_H / rows as f64);
        let (cx, cy) = ((slot % cols) as f64 * cw, (slot / cols) as f64 * ch);
        let x1 = cx + self.rng.random_range(0.0..0.25) * cw;
        let y1 = cy + self.rng.random_range(0.0..0.25) * ch;
        let w = self.rng.random_range(0.5..0.75) * cw;
        let h = self.rng.random_range(0.5..0.75) * ch;
        BoundingBox::new(x1.round(), y1.round(), (x1 + w).round(), (y1 + h).round()).expect("positive size")
    }

    fn draw_classes(&mut self) -> Vec<usize> {
        let k = self.rng.random_range(1..=self.spec.max_mentions);
        let mut out = Vec::with_capacity(k);
        while out.len() < k {
            let c = self.weights.sample(&mut self.rng);
            if !out.contains(&c) {
                out.push(c);
            }
        }
        out
    }

    fn segment(&mut self, video_id: &str, segment_index: usize) -> SyntheticSegment {
        let spec = self.spec;
        let classes = self.draw_classes();
        // caption: "a c0 verb the c1 near a c2 ending"
        let mut caption: Vec<String> = Vec::new();
        let mut spans = Vec::new();
        for (i, &c) in classes.iter().enumerate() {
            let lead: &[&str] = match i {
                0 => &["a"],
                1 => &["the"],
                _ => &["near", "a"],
            };
            if i == 1 {
                caption.push(VERBS.choose(&mut self.rng).expect("non-empty").to_string());
            }
            caption.extend(lead.iter().map(|w| w.to_string()));
            let start = caption.len() - 1;
            caption.push(NOUNS[c].to_string());
            spans.push(vec![start, caption.len() - 1]);
        }
        if classes.len() == 1 {
            caption.push(VERBS.choose(&mut self.rng).expect("non-empty").to_string());
        }
        let ending = ENDINGS.choose(&mut self.rng).expect("non-empty");
        caption.extend(ending.split(' ').map(String::from));

        let frames: Vec<usize> = classes.iter().map(|_| self.rng.random_range(0..spec.frames)).collect();
        let mut boxes = Vec::new();
        let mut frame_ids = Vec::new();
        let mut features = Vec::new();
        let mut planted: BTreeMap<usize, BoundingBox> = BTreeMap::new();
        for f in 0..spec.frames {
            let mut slots: Vec<usize> = (0..spec.regions_per_frame).collect();
            slots.shuffle(&mut self.rng);
            let here: Vec<usize> = (0..classes.len()).filter(|&i| frames[i] == f).collect();
            let others: Vec<usize> = (0..spec.num_classes).filter(|c| !classes.contains(c)).collect();
            for (k, &slot) in slots.iter().enumerate() {
                let b = self.slot_box(slot);
                let feat = if let Some(&mi) = here.get(k) {
                    planted.insert(mi, b);
                    self.class_feature(classes[mi])
                } else if k < here.len() + spec.distractors && !others.is_empty() {
                    let c = *others.choose(&mut self.rng).expect("non-empty");
                    self.class_feature(c)
                } else {
                    self.background_feature()
                };
                boxes.push(b.to_array());
                frame_ids.push(f);
                features.extend(feat);
            }
        }
        let mentions = classes
            .iter()
            .enumerate()
            .map(|(i, &c)| EntityMention {
                np_text: spans[i].iter().map(|&t| caption[t].as_str()).collect::<Vec<_>>().join(" "),
                token_span: spans[i].clone(),
                frame_index: frames[i],
                boxes: vec![planted[&i]],
                is_group: false,
                labels: vec![NOUNS[c].to_string()],
            })
            .collect();

        let n = boxes.len();
        let conf: Vec<f64> = (0..n).map(|_| (self.rng.random_range(0.3..1.0f64) * 100.0).round() / 100.0).collect();
        let mut tfeat = Vec::with_capacity(spec.temporal_frames * spec.temporal_dim);
        for _ in 0..spec.temporal_frames {
            for j in 0..spec.temporal_dim {
                let signal: f64 = classes.iter().map(|&c| self.signatures[c][j]).sum();
                tfeat.push(spec.temporal_signal * signal + spec.noise * self.gauss());
            }
        }
        let start_s = segment_index as f64 * SEGMENT_SECONDS;
        SyntheticSegment {
            annotation: SegmentAnnotation {
                video_id: video_id.to_string(),
                segment_index,
                total_segments: SEGMENTS_PER_VIDEO,
                start_s,
                end_s: start_s + SEGMENT_SECONDS,
                caption,
                mentions,
            },
            regions: RegionFile {
                meta: RegionSidecar {
                    n,
                    d: spec.feature_dim,
                    f: spec.frames,
                    frames: frame_ids,
                    boxes,
                    conf,
                    frame_w: FRAME_W,
                    frame_h: FRAME_H,
                },
                features: Mat::from_vec(n, spec.feature_dim, features).expect("consistent sizes"),
            },
            temporal: TemporalFile {
                meta: TemporalSidecar {
                    n: spec.temporal_frames,
                    d: spec.temporal_dim,
                    duration_s: Some(SEGMENTS_PER_VIDEO as f64 * SEGMENT_SECONDS),
                },
                features: Mat::from_vec(spec.temporal_frames, spec.temporal_dim, tfeat).expect("consistent sizes"),
            },
        }
    }
}

/// Generates every split in memory.
pub fn synthesize(spec: &SyntheticSpec) -> Result<BTreeMap<Split, Vec<SyntheticSegment>>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let signatures = (0..spec.num_classes)
        .map(|_| (0..spec.temporal_dim).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();
    let weights = WeightedIndex::new(spec.weights()).map_err(|e| Error::Config(e.to_string()))?;
    let mut g = Generator {
        spec,
        rng,
        signatures,
        weights,
    };
    let mut out = BTreeMap::new();
    for (split, count) in [(Split::Train, spec.train), (Split::Val, spec.val), (Split::Test, spec.test)] {
        if count == 0 {
            continue;
        }
        let segs = (0..count)
            .map(|i| {
                let video = format!("v_syn_{}_{:04}", split.name(), i / SEGMENTS_PER_VIDEO);
                g.segment(&video, i % SEGMENTS_PER_VIDEO)
            })
            .collect();
        out.insert(split, segs);
    }
    Ok(out)
}

/// Writes a synthetic dataset directory (annotations, vocabulary, classes,
/// manifest and feature files).
pub fn make_synthetic(spec: &SyntheticSpec, dir: &Path) -> Result<DatasetManifest> {
    let data = synthesize(spec)?;
    let features = dir.join(FEATURE_DIR);
    fs::create_dir_all(&features).map_err(|e| Error::io(&features, e))?;
    let mut splits = BTreeMap::new();
    for (&split, segs) in &data {
        for s in segs {
            let a = &s.annotation;
            s.regions.write(&segment_file(&features, &a.video_id, a.segment_index, REGION_EXT))?;
            s.temporal.write(&segment_file(&features, &a.video_id, a.segment_index, TEMPORAL_EXT))?;
        }
        splits.insert(split, segs.iter().map(|s| s.annotation.clone()).collect::<Vec<_>>());
    }
    let vocab = build_vocabulary(&splits[&Split::Train], 1, 20)?;
    let labelled: Vec<SegmentAnnotation> = [Split::Train, Split::Val]
        .iter()
        .filter_map(|s| splits.get(s))
        .flatten()
        .cloned()
        .collect();
    let classes = derive_object_classes(&labelled, 1, &HeuristicTagger)?;
    write_dataset(dir, &splits, &vocab, &classes, spec.frames, Path::new(FEATURE_DIR))
}
