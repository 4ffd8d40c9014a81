use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::decoder::{generate, teacher_forced_pass, DecodeMode, GvdModel};
use crate::error::Result;
use crate::metrics::{
    bleu_scores, cider, classification_accuracy, f1_counts, f1_from_counts, gt_localization_accuracy,
    localization_upper_bound, render_overlay, ClassRow, ClassTally, F1Mode, F1Segment, GeneratedWord,
    LocalizationRecord, MetricReport, OverlayWord, PrecisionRecall, RefObject,
};
use crate::sample::Sample;

#[derive(Clone, Debug, PartialEq)]
pub struct EvalOptions {
    /// Attn., Grd., Cls. and the upper bound on reference captions.
    pub gt_grounding: bool,
    /// Captions, language metrics and F1.
    pub generation: bool,
    pub per_class: bool,
    pub decode: DecodeMode,
    pub max_len: usize,
    pub overlay_dir: Option<PathBuf>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            gt_grounding: true,
            generation: true,
            per_class: false,
            decode: DecodeMode::Greedy,
            max_len: 20,
            overlay_dir: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaptionRecord {
    pub video_id: String,
    pub segment_index: usize,
    pub caption: String,
    pub reference: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalOutput {
    pub report: MetricReport,
    pub captions: Vec<CaptionRecord>,
    pub attention_records: Vec<LocalizationRecord>,
    pub grounding_records: Vec<LocalizationRecord>,
}

/// First instance of each class in a sample's reference caption.
pub fn reference_objects(sample: &Sample) -> Vec<RefObject> {
    sample
        .first_instances()
        .map(|t| RefObject {
            class_id: t.class_id,
            frame: t.frame,
            boxes: t.boxes.clone(),
        })
        .collect()
}

pub fn evaluate(model: &GvdModel, samples: &[Sample], split: &str, opts: &EvalOptions) -> Result<EvalOutput> {
    let mut report = MetricReport {
        split: split.to_string(),
        segments: samples.len(),
        ..Default::default()
    };
    let mut attn_records = Vec::new();
    let mut grd_records = Vec::new();
    let (mut cls, mut ub) = (ClassTally::new(), ClassTally::new());
    let mut tallies: Option<[BTreeMap<usize, f64>; 4]> = None;
    let mut f1s: Option<(BTreeMap<usize, (f64, f64)>, BTreeMap<usize, (f64, f64)>)> = None;
    if opts.gt_grounding {
        for s in samples {
            let tf = teacher_forced_pass(model, s)?;
            for t in s.first_instances() {
                let obj = RefObject {
                    class_id: t.class_id,
                    frame: t.frame,
                    boxes: t.boxes.clone(),
                };
                let step = &tf.steps[t.position];
                attn_records.push(LocalizationRecord::from_weights(&s.inputs.regions, &obj, &step.alpha)?);
                let beta = step.beta.as_ref().expect("groundable steps carry beta");
                grd_records.push(LocalizationRecord::from_weights(&s.inputs.regions, &obj, beta)?);
            }
            cls.merge(&classification_accuracy([(&tf.similarity, s.cls_positives.as_slice())]));
            let objs = reference_objects(s);
            ub.merge(&localization_upper_bound([(&s.inputs.regions, objs.as_slice())]));
        }
        let attn = gt_localization_accuracy(&attn_records);
        let grd = gt_localization_accuracy(&grd_records);
        report.attn = Some(attn.macro_percent());
        report.grd = Some(grd.macro_percent());
        report.cls = Some(cls.macro_percent());
        report.upper_bound = Some(ub.macro_percent());
        tallies = Some([attn, grd, cls, ub].map(|t| t.per_class()));
    }

    let mut captions = Vec::new();
    if opts.generation {
        let mut cands = Vec::with_capacity(samples.len());
        let mut refs = Vec::with_capacity(samples.len());
        let mut f1_segs = Vec::with_capacity(samples.len());
        for s in samples {
            let g = generate(model, &s.inputs, opts.decode, opts.max_len)?;
            let generated: Vec<GeneratedWord> = g
                .steps
                .iter()
                .filter_map(|st| {
                    model.word_class(st.token).map(|c| GeneratedWord {
                        class_id: c,
                        attention: st.alpha.clone(),
                    })
                })
                .collect();
            if let Some(dir) = &opts.overlay_dir {
                let words: Vec<OverlayWord> = g
                    .steps
                    .iter()
                    .filter(|st| model.word_class(st.token).is_some())
                    .map(|st| {
                        let region = crate::tensor::argmax(&st.alpha);
                        OverlayWord {
                            word: model.vocab().token(st.token).to_string(),
                            frame: s.inputs.regions.region(region).frame_index,
                            region,
                            weight: st.alpha[region],
                        }
                    })
                    .collect();
                let stem = format!("{}_{}", s.annotation.video_id, s.annotation.segment_index);
                render_overlay(&s.inputs.regions, &words, dir, &stem)?;
            }
            let reference = s.reference();
            captions.push(CaptionRecord {
                video_id: s.annotation.video_id.clone(),
                segment_index: s.annotation.segment_index,
                caption: g.words.join(" "),
                reference: reference.join(" "),
            });
            f1_segs.push(F1Segment {
                regions: &s.inputs.regions,
                generated,
                reference: reference_objects(s),
            });
            cands.push(g.words);
            refs.push(vec![reference]);
        }
        if !samples.is_empty() {
            let b = bleu_scores(&cands, &refs)?;
            report.bleu1 = Some(100.0 * b[0]);
            report.bleu4 = Some(100.0 * b[3]);
            report.cider = Some(100.0 * cider(&cands, &refs)?);
        }
        let counts = f1_counts(&f1_segs)?;
        let all = f1_from_counts(&counts, F1Mode::All);
        let loc = f1_from_counts(&counts, F1Mode::Loc);
        report.f1_all = Some(PrecisionRecall::from(&all));
        report.f1_loc = Some(PrecisionRecall::from(&loc));
        f1s = Some((all.per_class, loc.per_class));
    }
    if opts.per_class {
        report.per_class = class_rows(model, tallies.as_ref(), f1s.as_ref());
    }
    report.validate()?;
    Ok(EvalOutput {
        report,
        captions,
        attention_records: attn_records,
        grounding_records: grd_records,
    })
}

fn class_rows(
    model: &GvdModel,
    tallies: Option<&[BTreeMap<usize, f64>; 4]>,
    f1s: Option<&(BTreeMap<usize, (f64, f64)>, BTreeMap<usize, (f64, f64)>)>,
) -> Vec<ClassRow> {
    let mut rows = Vec::new();
    for (k, name) in model.classes().names().iter().enumerate() {
        let mut row = ClassRow {
            class: name.clone(),
            ..Default::default()
        };
        if let Some([attn, grd, cls, ub]) = tallies {
            row.attn = attn.get(&k).copied();
            row.grd = grd.get(&k).copied();
            row.cls = cls.get(&k).copied();
            row.upper_bound = ub.get(&k).copied();
        }
        if let Some((all, loc)) = f1s {
            row.f1_all = all.get(&k).copied();
            row.f1_loc = loc.get(&k).copied();
        }
        if row.attn.is_some() || row.cls.is_some() || row.f1_all.is_some() {
            rows.push(row);
        }
    }
    rows
}
