//! Caption decoder: model, losses, teacher forcing and generation.

mod config;
mod generate;
mod loss;
mod model;
mod pass;

pub use config::{ModelConfig, SentenceAveraging};
pub use generate::{generate, DecodeMode, Generated};
pub use loss::{find_preset, joint_loss, sentence_loss, DecodeStep, LambdaWeights, LossBreakdown, Preset, PRESETS};
pub use model::GvdModel;
pub use pass::{batch_objective, teacher_forced_pass, BatchOutput, TeacherForced};

#[cfg(test)]
mod tests;
