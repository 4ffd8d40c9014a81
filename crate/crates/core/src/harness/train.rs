use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{ObjectClassSet, Vocabulary};
use crate::decoder::{batch_objective, GvdModel, LambdaWeights, LossBreakdown};
use crate::error::{Error, Result};
use crate::nn::Mode;
use crate::sample::Sample;

use super::checkpoint::save_checkpoint;
use super::config::TrainConfig;
use super::evaluate::{evaluate, EvalOptions};
use super::optim::{learning_rate, Adam};

pub const STEP_LOG: &str = "train_log.jsonl";
pub const EPOCH_LOG: &str = "epochs.jsonl";
pub const SUMMARY: &str = "summary.json";
pub const BEST_DIR: &str = "best";
pub const LAST_DIR: &str = "last";
pub const DUMP_FILE: &str = "nonfinite_batch.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub epoch: usize,
    pub step: usize,
    pub lr: f64,
    pub loss: LossBreakdown,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    /// Mean of the batch losses.
    pub train_loss: LossBreakdown,
    pub val_cider: Option<f64>,
    pub val_bleu4: Option<f64>,
    pub val_attn: Option<f64>,
    pub val_grd: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub preset: String,
    pub seed: u64,
    pub selected_epoch: usize,
    pub epochs: Vec<EpochLog>,
}

pub struct TrainOutcome {
    /// Parameters of the selected epoch.
    pub model: GvdModel,
    pub summary: TrainSummary,
    pub steps: Vec<StepLog>,
}

/// Index of the first maximum; `None` for an empty or all-NaN list.
pub fn select_best(scores: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &s) in scores.iter().enumerate() {
        if s.is_nan() {
            continue;
        }
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i)
}

fn mean_breakdown(items: &[LossBreakdown]) -> LossBreakdown {
    let n = items.len().max(1) as f64;
    let mut m = LossBreakdown::default();
    for b in items {
        m.sent += b.sent / n;
        m.attn += b.attn / n;
        m.cls += b.cls / n;
        m.grd += b.grd / n;
        m.total += b.total / n;
    }
    m
}

struct Jsonl(Option<BufWriter<File>>);

impl Jsonl {
    fn create(dir: Option<&Path>, name: &str) -> Result<Self> {
        Ok(Jsonl(match dir {
            Some(d) => {
                let p = d.join(name);
                Some(BufWriter::new(File::create(&p).map_err(|e| Error::io(&p, e))?))
            }
            None => None,
        }))
    }

    fn write<T: Serialize>(&mut self, v: &T) -> Result<()> {
        if let Some(w) = &mut self.0 {
            serde_json::to_writer(&mut *w, v)?;
            w.write_all(b"\n").map_err(|e| Error::io("log", e))?;
        }
        Ok(())
    }

    fn flush(&mut self) -> Result<()> {
        if let Some(w) = &mut self.0 {
            w.flush().map_err(|e| Error::io("log", e))?;
        }
        Ok(())
    }
}

fn dump_batch(dir: Option<&Path>, epoch: usize, step: usize, batch: &[&Sample], err: &Error) {
    let Some(dir) = dir else { return };
    let keys: Vec<String> = batch
        .iter()
        .map(|s| format!("{}#{}", s.annotation.video_id, s.annotation.segment_index))
        .collect();
    let dump = serde_json::json!({
        "epoch": epoch,
        "step": step,
        "error": err.to_string(),
        "segments": keys,
        "captions": batch.iter().map(|s| s.annotation.caption.join(" ")).collect::<Vec<_>>(),
    });
    let _ = fs::write(dir.join(DUMP_FILE), serde_json::to_vec_pretty(&dump).unwrap_or_default());
}

/// Trains from scratch, validating once per epoch, and returns the model of
/// the epoch with the best validation CIDEr (the last epoch when there is no
/// validation split). With `out_dir`, writes step and epoch logs, the `best`
/// and `last` checkpoints and a summary.
pub fn train(
    cfg: &TrainConfig,
    vocab: &Vocabulary,
    classes: &ObjectClassSet,
    train_set: &[Sample],
    val_set: &[Sample],
    out_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Data("the train split is empty".into()));
    }
    if let Some(d) = out_dir {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
        fs::write(d.join("config.json"), serde_json::to_vec_pretty(cfg)?).map_err(|e| Error::io(d, e))?;
    }
    let lambdas = cfg.lambdas()?;
    let mut model = GvdModel::new(cfg.model_config()?, vocab.clone(), classes.clone(), cfg.seed)?;
    let mut adam = Adam::new(model.params(), cfg.fine_tune_multiplier);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut step_log = Jsonl::create(out_dir, STEP_LOG)?;
    let mut epoch_log = Jsonl::create(out_dir, EPOCH_LOG)?;
    let eval_opts = EvalOptions {
        decode: cfg.decode,
        max_len: cfg.max_len,
        ..Default::default()
    };

    let mut steps = Vec::new();
    let mut epochs = Vec::new();
    let mut best: Option<(usize, f64, GvdModel)> = None;
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut step = 0;
    for epoch in 0..cfg.max_epochs {
        let lr = learning_rate(cfg.lr, cfg.lr_decay, cfg.decay_every, epoch);
        order.shuffle(&mut rng);
        let mut losses = Vec::new();
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &train_set[i]).collect();
            let out = batch_objective(&model, &batch, &lambdas, &mut Mode::train(&mut rng), true)
                .and_then(|o| {
                    if o.grads.iter().all(|g| g.is_finite()) {
                        Ok(o)
                    } else {
                        Err(Error::NonFinite(format!("gradient at epoch {epoch} step {step}")))
                    }
                })
                .inspect_err(|e| dump_batch(out_dir, epoch, step, &batch, e))?;
            adam.step(model.params_mut(), &out.grads, lr)?;
            let rec = StepLog {
                epoch,
                step,
                lr,
                loss: out.breakdown,
            };
            step_log.write(&rec)?;
            losses.push(out.breakdown);
            steps.push(rec);
            step += 1;
        }
        step_log.flush()?;

        let val = if val_set.is_empty() {
            None
        } else {
            Some(evaluate(&model, val_set, "val", &eval_opts)?.report)
        };
        let rec = EpochLog {
            epoch,
            lr,
            train_loss: mean_breakdown(&losses),
            val_cider: val.as_ref().and_then(|r| r.cider),
            val_bleu4: val.as_ref().and_then(|r| r.bleu4),
            val_attn: val.as_ref().and_then(|r| r.attn),
            val_grd: val.as_ref().and_then(|r| r.grd),
        };
        log::info!(
            "epoch {epoch}: loss {:.4} val CIDEr {:?}",
            rec.train_loss.total,
            rec.val_cider
        );
        epoch_log.write(&rec)?;
        epoch_log.flush()?;
        // without validation the latest epoch wins
        let score = rec.val_cider.unwrap_or(epoch as f64);
        if best.as_ref().is_none_or(|(_, b, _)| score > *b) {
            if let Some(d) = out_dir {
                save_checkpoint(&model, &cfg.preset, Some(epoch), &d.join(BEST_DIR))?;
            }
            best = Some((epoch, score, model.clone()));
        }
        epochs.push(rec);
    }
    if let Some(d) = out_dir {
        save_checkpoint(&model, &cfg.preset, Some(cfg.max_epochs - 1), &d.join(LAST_DIR))?;
    }
    let (selected_epoch, _, best_model) = best.expect("at least one epoch");
    let summary = TrainSummary {
        preset: cfg.preset.clone(),
        seed: cfg.seed,
        selected_epoch,
        epochs,
    };
    if let Some(d) = out_dir {
        let p = d.join(SUMMARY);
        fs::write(&p, serde_json::to_vec_pretty(&summary)?).map_err(|e| Error::io(&p, e))?;
    }
    Ok(TrainOutcome {
        model: best_model,
        summary,
        steps,
    })
}

/// Repeated Adam steps on one fixed batch with dropout off; returns the loss
/// before each step.
pub fn fit_batch(model: &mut GvdModel, batch: &[&Sample], lambdas: &LambdaWeights, lr: f64, steps: usize) -> Result<Vec<LossBreakdown>> {
    let mut adam = Adam::new(model.params(), 0.1);
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        let o = batch_objective(model, batch, lambdas, &mut Mode::eval(), true)?;
        adam.step(model.params_mut(), &o.grads, lr)?;
        out.push(o.breakdown);
    }
    Ok(out)
}
