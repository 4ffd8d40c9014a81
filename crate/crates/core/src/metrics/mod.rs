//! Localization, classification and language metrics.

mod language;
mod localization;
mod overlay;
mod report;
mod tally;

pub use language::{bleu, bleu_scores, cider, cider_per_segment};
pub use localization::{
    classification_accuracy, coverable, f1_counts, f1_from_counts, frame_argmax, generation_f1, gt_localization_accuracy,
    harmonic_f1, localization_upper_bound, merge_f1_counts, F1Counts, F1Mode, F1Score, F1Segment, GeneratedWord,
    LocalizationRecord, RefObject,
};
pub use overlay::{render_overlay, OverlayEntry, OverlayWord};
pub use report::{ClassRow, MetricReport, NotAvailable, PrecisionRecall};
pub use tally::{ratio, ClassTally, Count};
