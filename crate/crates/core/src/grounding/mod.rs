//! Region-class similarity, grounding-aware region encoding and the
//! classification and grounding losses.

mod bank;
mod encoder;
mod similarity;

pub use bank::{
    init_classifier_transfer, nearest_source, ClassifierBank, EmbeddingTable, SourceClassifiers,
    RANDOM_INIT_STD,
};
pub use encoder::{encode_region_context, grounding_aware_encoding, EncoderConfig, GroundingEncoderParams};
pub use similarity::{
    class_logits, classification_loss, conditioned_logits, conditioned_similarity, grounding_loss,
    region_class_similarity, ConditionedSimilarity, LossValue, SimilarityMatrix, CLASSIFIER_DROPOUT,
    LOG_EPS,
};
pub(crate) use similarity::weighted_neg_log;
