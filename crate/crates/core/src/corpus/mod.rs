//! Annotation corpora: parsing, vocabularies, object classes and statistics.

mod annotation;
mod classes;
mod encode;
mod parse;
mod stats;
mod tagger;
mod vocab;

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

pub use annotation::{EntityMention, SegmentAnnotation};
pub use classes::{class_threshold_preset, derive_object_classes, label_counts, ObjectClassSet};
pub use encode::{encode_caption, segment_gt_boxes, EncodedCaption, WordGrounding};
pub use parse::{
    parse_annotations, to_canonical_string, write_annotations, AnnotationFormat, DropReason,
    ImporterConfig, ParseWarning, ParsedCorpus, DEFAULT_NUM_FRAMES,
};
pub use stats::{corpus_stats, CorpusStats};
pub use tagger::{lemmatize, HeuristicTagger, LabelTagger};
pub use vocab::{build_vocabulary, vocabulary_preset, Vocabulary, BOS, EOS, PAD, UNK};

use crate::error::{Error, Result};

/// Reads a canonical annotation file with the default tagger.
pub fn load_canonical(path: &Path, num_frames: usize) -> Result<ParsedCorpus> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_annotations(
        BufReader::new(file),
        &AnnotationFormat::Canonical,
        num_frames,
        &HeuristicTagger,
    )
}
