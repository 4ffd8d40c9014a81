//! Canonical JSON Lines reader/writer and the field-mapping importer.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, Write};

use log::warn;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::regions::BoundingBox;

use super::annotation::{EntityMention, SegmentAnnotation};
use super::tagger::LabelTagger;

/// Frames sampled per segment unless configured otherwise.
pub const DEFAULT_NUM_FRAMES: usize = 10;

#[derive(Clone, Debug)]
pub enum AnnotationFormat {
    /// One [`SegmentAnnotation`] per line.
    Canonical,
    /// A single JSON document mapped through an [`ImporterConfig`].
    Importer(ImporterConfig),
}

/// Why a mention was dropped during validation.
#[derive(Clone, Debug, PartialEq)]
pub enum DropReason {
    TokenSpan,
    OverlappingTokens,
    NoBoxes,
    DegenerateBox,
    FrameOutOfRange,
    NoLabels,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParseWarning {
    pub line: usize,
    pub video_id: String,
    pub segment_index: usize,
    pub mention: usize,
    pub reason: DropReason,
}

#[derive(Clone, Debug, Default)]
pub struct ParsedCorpus {
    pub segments: Vec<SegmentAnnotation>,
    pub warnings: Vec<ParseWarning>,
}

#[derive(Deserialize)]
struct RawMention {
    np: String,
    tokens: Vec<usize>,
    frame: usize,
    boxes: Vec<[f64; 4]>,
    #[serde(default)]
    group: bool,
    #[serde(default)]
    labels: Vec<String>,
}

#[derive(Deserialize)]
struct RawSegment {
    video_id: String,
    segment_index: usize,
    total_segments: usize,
    start_s: f64,
    end_s: f64,
    caption: Vec<String>,
    #[serde(default)]
    mentions: Vec<RawMention>,
}

/// Parses annotations and validates every record. Mentions that break an
/// invariant are dropped and reported; malformed records are errors.
pub fn parse_annotations<R: BufRead>(
    reader: R,
    format: &AnnotationFormat,
    num_frames: usize,
    tagger: &dyn LabelTagger,
) -> Result<ParsedCorpus> {
    let raw = match format {
        AnnotationFormat::Canonical => read_canonical(reader)?,
        AnnotationFormat::Importer(config) => config.import(reader)?,
    };
    let mut out = ParsedCorpus::default();
    let mut seen = HashSet::new();
    for (line, segment) in raw {
        if !seen.insert((segment.video_id.clone(), segment.segment_index)) {
            return Err(Error::DuplicateSegment {
                video_id: segment.video_id,
                segment_index: segment.segment_index,
                line,
            });
        }
        let seg = validate_segment(line, segment, num_frames, tagger, &mut out.warnings)?;
        out.segments.push(seg);
    }
    for w in &out.warnings {
        warn!(
            "line {}: dropped mention {} of ({}, {}): {:?}",
            w.line, w.mention, w.video_id, w.segment_index, w.reason
        );
    }
    Ok(out)
}

fn read_canonical<R: BufRead>(reader: R) -> Result<Vec<(usize, RawSegment)>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let seg: RawSegment = serde_json::from_str(&line).map_err(|e| Error::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        out.push((line_no, seg));
    }
    Ok(out)
}

fn validate_segment(
    line: usize,
    raw: RawSegment,
    num_frames: usize,
    tagger: &dyn LabelTagger,
    warnings: &mut Vec<ParseWarning>,
) -> Result<SegmentAnnotation> {
    let malformed = |message: String| Error::Malformed { line, message };
    if raw.total_segments == 0 || raw.segment_index >= raw.total_segments {
        return Err(malformed(format!(
            "segment_index {} outside [0, {})",
            raw.segment_index, raw.total_segments
        )));
    }
    if !(raw.start_s.is_finite() && raw.end_s.is_finite() && raw.start_s < raw.end_s) {
        return Err(malformed(format!(
            "segment bounds [{}, {}] are not increasing",
            raw.start_s, raw.end_s
        )));
    }
    let mut used_tokens = HashSet::new();
    let mut mentions = Vec::new();
    for (mi, m) in raw.mentions.into_iter().enumerate() {
        let mut drop = |reason| {
            warnings.push(ParseWarning {
                line,
                video_id: raw.video_id.clone(),
                segment_index: raw.segment_index,
                mention: mi,
                reason,
            })
        };
        let increasing = m.tokens.windows(2).all(|w| w[0] < w[1]);
        if m.tokens.is_empty() || !increasing || m.tokens.iter().any(|&t| t >= raw.caption.len()) {
            drop(DropReason::TokenSpan);
            continue;
        }
        if m.tokens.iter().any(|t| used_tokens.contains(t)) {
            drop(DropReason::OverlappingTokens);
            continue;
        }
        if m.boxes.is_empty() {
            drop(DropReason::NoBoxes);
            continue;
        }
        let Ok(boxes) = m
            .boxes
            .iter()
            .map(|b| BoundingBox::try_from(*b))
            .collect::<Result<Vec<_>>>()
        else {
            drop(DropReason::DegenerateBox);
            continue;
        };
        if m.frame >= num_frames {
            drop(DropReason::FrameOutOfRange);
            continue;
        }
        let labels = if m.labels.is_empty() {
            tagger.extract(&m.np)
        } else {
            m.labels
        };
        if labels.is_empty() {
            drop(DropReason::NoLabels);
            continue;
        }
        used_tokens.extend(m.tokens.iter().copied());
        mentions.push(EntityMention {
            np_text: m.np,
            token_span: m.tokens,
            frame_index: m.frame,
            boxes,
            is_group: m.group,
            labels,
        });
    }
    Ok(SegmentAnnotation {
        video_id: raw.video_id,
        segment_index: raw.segment_index,
        total_segments: raw.total_segments,
        start_s: raw.start_s,
        end_s: raw.end_s,
        caption: raw.caption,
        mentions,
    })
}

/// Writes the canonical JSON Lines form, one segment per line.
pub fn write_annotations<W: Write>(mut out: W, segments: &[SegmentAnnotation]) -> Result<()> {
    for s in segments {
        serde_json::to_writer(&mut out, s)?;
        out.write_all(b"\n").map_err(|e| Error::io("<output>", e))?;
    }
    Ok(())
}

pub fn to_canonical_string(segments: &[SegmentAnnotation]) -> String {
    let mut buf = Vec::new();
    write_annotations(&mut buf, segments).expect("writing to memory");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

/// Field names used to read a nested annotation release. Defaults follow the
/// public ActivityNet-Entities layout:
/// `{root: {video: {segments: {"0": {tokens, process_bnd_box, ...}}}}}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImporterConfig {
    pub root: String,
    pub segments: String,
    pub tokens: String,
    pub boxes: String,
    pub frames: String,
    pub labels: String,
    pub token_indices: String,
    pub crowds: String,
    pub timestamps: String,
}

impl Default for ImporterConfig {
    fn default() -> Self {
        ImporterConfig {
            root: "annotations".into(),
            segments: "segments".into(),
            tokens: "tokens".into(),
            boxes: "process_bnd_box".into(),
            frames: "frame_ind".into(),
            labels: "process_clss".into(),
            token_indices: "process_idx".into(),
            crowds: "crowds".into(),
            timestamps: "timestamps".into(),
        }
    }
}

impl ImporterConfig {
    fn import<R: BufRead>(&self, reader: R) -> Result<Vec<(usize, RawSegment)>> {
        let doc: Value = serde_json::from_reader(reader).map_err(|e| Error::Malformed {
            line: e.line(),
            message: e.to_string(),
        })?;
        let bad = |message: String| Error::Malformed { line: 0, message };
        let videos = doc
            .get(&self.root)
            .and_then(Value::as_object)
            .ok_or_else(|| bad(format!("missing object field '{}'", self.root)))?;
        // BTreeMap for a deterministic video order
        let videos: BTreeMap<&String, &Value> = videos.iter().collect();
        let mut out = Vec::new();
        for (ordinal, (video_id, video)) in videos.into_iter().enumerate() {
            let segments = video
                .get(&self.segments)
                .and_then(Value::as_object)
                .ok_or_else(|| bad(format!("{video_id}: missing '{}'", self.segments)))?;
            let mut keyed: Vec<(usize, &Value)> = segments
                .iter()
                .map(|(k, v)| {
                    k.parse::<usize>()
                        .map(|i| (i, v))
                        .map_err(|_| bad(format!("{video_id}: segment key '{k}' is not an index")))
                })
                .collect::<Result<_>>()?;
            keyed.sort_by_key(|(i, _)| *i);
            let total = keyed.last().map_or(0, |(i, _)| i + 1);
            for (segment_index, seg) in keyed {
                let raw = self
                    .import_segment(video_id, segment_index, total, seg)
                    .map_err(|m| bad(format!("{video_id}/{segment_index}: {m}")))?;
                out.push((ordinal + 1, raw));
            }
        }
        Ok(out)
    }

    fn import_segment(
        &self,
        video_id: &str,
        segment_index: usize,
        total_segments: usize,
        seg: &Value,
    ) -> std::result::Result<RawSegment, String> {
        let field = |name: &str| seg.get(name).cloned().unwrap_or(Value::Null);
        let parse = |name: &str, default: Value| -> std::result::Result<Value, String> {
            match field(name) {
                Value::Null => Ok(default),
                v => Ok(v),
            }
        };
        let caption: Vec<String> = serde_json::from_value(field(&self.tokens))
            .map_err(|e| format!("{}: {e}", self.tokens))?;
        let boxes: Vec<[f64; 4]> = serde_json::from_value(parse(&self.boxes, Value::Array(vec![]))?)
            .map_err(|e| format!("{}: {e}", self.boxes))?;
        let frames: Vec<usize> = serde_json::from_value(parse(&self.frames, Value::Array(vec![]))?)
            .map_err(|e| format!("{}: {e}", self.frames))?;
        let labels: Vec<LabelField> =
            serde_json::from_value(parse(&self.labels, Value::Array(vec![]))?)
                .map_err(|e| format!("{}: {e}", self.labels))?;
        let idx: Vec<Vec<usize>> =
            serde_json::from_value(parse(&self.token_indices, Value::Array(vec![]))?)
                .map_err(|e| format!("{}: {e}", self.token_indices))?;
        let crowds: Vec<i64> = serde_json::from_value(parse(&self.crowds, Value::Array(vec![]))?)
            .map_err(|e| format!("{}: {e}", self.crowds))?;
        if frames.len() != boxes.len() || idx.len() != boxes.len() {
            return Err(format!(
                "per-box lists disagree: {} boxes, {} frames, {} token lists",
                boxes.len(),
                frames.len(),
                idx.len()
            ));
        }
        let (start_s, end_s) = match field(&self.timestamps) {
            Value::Array(ts) if ts.len() == 2 => (
                ts[0].as_f64().ok_or("timestamp is not a number")?,
                ts[1].as_f64().ok_or("timestamp is not a number")?,
            ),
            _ => (segment_index as f64, segment_index as f64 + 1.0),
        };

        // Box entries sharing a token span and frame form one multi-instance mention.
        let mut mentions: Vec<RawMention> = Vec::new();
        for (k, b) in boxes.into_iter().enumerate() {
            let tokens = idx[k].clone();
            let group = crowds.get(k).is_some_and(|&c| c != 0);
            if let Some(m) = mentions
                .iter_mut()
                .find(|m| m.tokens == tokens && m.frame == frames[k])
            {
                m.boxes.push(b);
                m.group |= group;
                continue;
            }
            let np = tokens
                .iter()
                .filter_map(|&t| caption.get(t).cloned())
                .collect::<Vec<_>>()
                .join(" ");
            mentions.push(RawMention {
                np,
                tokens,
                frame: frames[k],
                boxes: vec![b],
                group,
                labels: labels.get(k).map(LabelField::to_vec).unwrap_or_default(),
            });
        }
        Ok(RawSegment {
            video_id: video_id.to_string(),
            segment_index,
            total_segments,
            start_s,
            end_s,
            caption,
            mentions,
        })
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum LabelField {
    One(String),
    Many(Vec<String>),
}

impl LabelField {
    fn to_vec(&self) -> Vec<String> {
        match self {
            LabelField::One(s) => vec![s.clone()],
            LabelField::Many(v) => v.clone(),
        }
    }
}
