//! Dataset preparation, training, evaluation and checkpoints.

mod checkpoint;
mod config;
mod data;
mod evaluate;
mod gradcheck;
mod optim;
pub mod synthetic;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointManifest, TensorEntry, FORMAT_VERSION};
pub use config::{TrainConfig, SEED_ENV};
pub use data::{
    importer_format, load_inputs, prepare, sha256_hex, write_dataset, DatasetDir, DatasetManifest, PrepareOptions,
    PrepareSummary, Split, CLASSES_FILE, FEATURE_DIR, MANIFEST_FILE, VOCAB_FILE,
};
pub use evaluate::{evaluate, reference_objects, CaptionRecord, EvalOptions, EvalOutput};
pub use gradcheck::{
    finite_diff_check, tiny_instance, GradcheckReport, GroupCheck, ENTRIES_PER_TENSOR, GRADCHECK_FLOOR,
    GRADCHECK_STEP, GRADCHECK_TOLERANCE,
};
pub use optim::{learning_rate, Adam};
pub use synthetic::{make_synthetic, synthesize, SyntheticSegment, SyntheticSpec};

pub use train::{
    fit_batch, select_best, train, EpochLog, StepLog, TrainOutcome, TrainSummary, BEST_DIR, EPOCH_LOG, LAST_DIR,
    STEP_LOG, SUMMARY,
};
