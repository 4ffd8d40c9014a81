use std::collections::BTreeMap;

use serde::Serialize;

use super::annotation::SegmentAnnotation;

/// Summary counts of an annotation corpus. Standard deviations are
/// population (divide by n) values.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorpusStats {
    pub segments: usize,
    pub segments_with_mentions: usize,
    pub mentions: usize,
    pub boxes: usize,
    pub mean_boxes_per_segment: Option<f64>,
    pub std_boxes_per_segment: Option<f64>,
    pub mean_labels_per_box: Option<f64>,
    pub std_labels_per_box: Option<f64>,
    pub multi_instance_fraction: Option<f64>,
    pub class_histogram: BTreeMap<String, usize>,
}

fn mean_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (Some(mean), Some(var.sqrt()))
}

pub fn corpus_stats(corpus: &[SegmentAnnotation]) -> CorpusStats {
    let per_segment: Vec<f64> = corpus
        .iter()
        .filter(|s| !s.mentions.is_empty())
        .map(|s| s.num_boxes() as f64)
        .collect();
    let mentions: Vec<_> = corpus.iter().flat_map(|s| &s.mentions).collect();
    // every box of a mention carries that mention's labels
    let labels_per_box: Vec<f64> = mentions
        .iter()
        .flat_map(|m| std::iter::repeat_n(m.labels.len() as f64, m.boxes.len()))
        .collect();
    let mut class_histogram = BTreeMap::new();
    for m in &mentions {
        for l in &m.labels {
            *class_histogram.entry(l.to_lowercase()).or_default() += 1;
        }
    }
    let multi = mentions.iter().filter(|m| m.is_multi_instance()).count();
    let (mean_boxes, std_boxes) = mean_std(&per_segment);
    let (mean_labels, std_labels) = mean_std(&labels_per_box);
    CorpusStats {
        segments: corpus.len(),
        segments_with_mentions: per_segment.len(),
        mentions: mentions.len(),
        boxes: labels_per_box.len(),
        mean_boxes_per_segment: mean_boxes,
        std_boxes_per_segment: std_boxes,
        mean_labels_per_box: mean_labels,
        std_labels_per_box: std_labels,
        multi_instance_fraction: (!mentions.is_empty())
            .then(|| multi as f64 / mentions.len() as f64),
        class_histogram,
    }
}
