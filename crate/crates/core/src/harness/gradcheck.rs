use std::collections::BTreeMap;

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attention::{SegmentMeta, TemporalFeatureMap};
use crate::autodiff::relative_error;
use crate::corpus::{EntityMention, ObjectClassSet, SegmentAnnotation, Vocabulary};
use crate::decoder::{batch_objective, GvdModel, LambdaWeights, ModelConfig, Preset};
use crate::error::{Error, Result};
use crate::nn::Mode;
use crate::regions::{BoundingBox, Region, RegionSet};
use crate::sample::{Sample, SegmentInputs};
use crate::tensor::Mat;

pub const GRADCHECK_STEP: f64 = 1e-5;
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;
/// Denominator floor of the relative error.
pub const GRADCHECK_FLOOR: f64 = 1e-6;
/// Entries checked per tensor; smaller tensors are checked in full.
pub const ENTRIES_PER_TENSOR: usize = 24;

const TINY_CLASSES: [&str; 5] = ["man", "woman", "dog", "ball", "horse"];

/// The gradient-check instance: 2 frames of 3 regions, 5 classes and a
/// three-word caption ("man holds dog", four decode steps with EOS).
pub fn tiny_instance(self_attention: bool, seed: u64) -> Result<(GvdModel, Sample)> {
    let mut config = ModelConfig::tiny();
    config.self_attention = self_attention;
    let vocab = Vocabulary::from_words(
        TINY_CLASSES.iter().chain(&["holds", "the", "a"]).map(|w| w.to_string()),
        8,
    );
    let classes = ObjectClassSet::from_names(TINY_CLASSES.iter().map(|w| w.to_string()));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cell = |i: usize| BoundingBox::new(10.0 + 30.0 * i as f64, 5.0, 35.0 + 30.0 * i as f64, 40.0);
    let mut regions = Vec::new();
    for f in 0..2 {
        for i in 0..3 {
            regions.push(Region {
                bbox: cell(i)?,
                frame_index: f,
                confidence: 0.9,
                feature: (0..config.feature_dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
            });
        }
    }
    let regions = RegionSet::new(2, 100.0, 50.0, config.feature_dim, regions)?;
    let frames = Mat::randn(3, config.temporal_dim, 1.0, &mut rng);
    let meta = SegmentMeta {
        total_segments: 2,
        segment_index: 0,
        start_s: 0.0,
        end_s: 6.0,
        duration_s: 12.0,
    };
    let inputs = SegmentInputs::new(regions, TemporalFeatureMap::new(frames)?, meta)?;
    let mention = |word: &str, token: usize, frame: usize, slot: usize| -> Result<EntityMention> {
        Ok(EntityMention {
            np_text: word.into(),
            token_span: vec![token],
            frame_index: frame,
            boxes: vec![cell(slot)?],
            is_group: false,
            labels: vec![word.into()],
        })
    };
    let annotation = SegmentAnnotation {
        video_id: "v_tiny".into(),
        segment_index: 0,
        total_segments: 2,
        start_s: 0.0,
        end_s: 6.0,
        caption: ["man", "holds", "dog"].iter().map(|w| w.to_string()).collect(),
        mentions: vec![mention("man", 0, 0, 1)?, mention("dog", 2, 1, 2)?],
    };
    let sample = Sample::new(annotation, &vocab, &classes, inputs)?;
    let model = GvdModel::new(config, vocab, classes, seed)?;
    Ok((model, sample))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupCheck {
    pub max_rel_error: f64,
    pub checked: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub preset: String,
    pub seed: u64,
    pub groups: BTreeMap<String, GroupCheck>,
    pub max_rel_error: f64,
    pub checked: usize,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < GRADCHECK_TOLERANCE
    }
}

fn loss(model: &GvdModel, sample: &Sample, lambdas: &LambdaWeights) -> Result<f64> {
    Ok(batch_objective(model, &[sample], lambdas, &mut Mode::eval(), false)?.breakdown.total)
}

/// Compares analytic gradients of the joint loss with central differences on
/// the tiny instance (dropout off), per parameter group.
pub fn finite_diff_check(preset: &Preset, seed: u64) -> Result<GradcheckReport> {
    let (mut model, sample) = tiny_instance(preset.self_attention, seed)?;
    let lambdas = preset.lambdas;
    let grads = batch_objective(&model, &[&sample], &lambdas, &mut Mode::eval(), true)?.grads;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let mut groups: BTreeMap<String, GroupCheck> = BTreeMap::new();
    let mut checked = 0;
    for pi in 0..model.params().len() {
        let (name, group, len) = {
            let p = model.params().param(pi);
            (p.name.clone(), p.group.name().to_string(), p.value.len())
        };
        if !grads[pi].is_finite() {
            return Err(Error::NonFinite(format!("gradient of {name} (group {group})")));
        }
        let entries: Vec<usize> = if len <= ENTRIES_PER_TENSOR {
            (0..len).collect()
        } else {
            sample_indices(&mut rng, len, ENTRIES_PER_TENSOR).into_vec()
        };
        let g = groups.entry(group).or_insert(GroupCheck {
            max_rel_error: 0.0,
            checked: 0,
        });
        for k in entries {
            let set = |m: &mut GvdModel, v: f64| {
                m.params_mut().iter_mut().nth(pi).expect("index in range").value.data_mut()[k] = v;
            };
            let orig = model.params().param(pi).value.data()[k];
            set(&mut model, orig + GRADCHECK_STEP);
            let plus = loss(&model, &sample, &lambdas)?;
            set(&mut model, orig - GRADCHECK_STEP);
            let minus = loss(&model, &sample, &lambdas)?;
            set(&mut model, orig);
            let numeric = (plus - minus) / (2.0 * GRADCHECK_STEP);
            let err = relative_error(grads[pi].data()[k], numeric, GRADCHECK_FLOOR);
            g.max_rel_error = g.max_rel_error.max(err);
            g.checked += 1;
            checked += 1;
        }
    }
    let max_rel_error = groups.values().map(|g| g.max_rel_error).fold(0.0, f64::max);
    Ok(GradcheckReport {
        preset: preset.name.to_string(),
        seed,
        groups,
        max_rel_error,
        checked,
    })
}
