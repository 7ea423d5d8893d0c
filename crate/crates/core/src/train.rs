//! Mini-batch Adam training with periodic evaluation and checkpointing.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checkpoint::{Checkpoint, CheckpointError};
use crate::data::ReportRecord;
use crate::metrics::MetricsReport;
use crate::model::{LossValues, Model};
use crate::optim::{adam_step, clip_global_norm, AdamState, NamedGrads, OptimError};
use crate::selection::CheckpointRecord;
use crate::tape::Tape;
use crate::tensor::{Tensor, TensorError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Evaluations per epoch, spread evenly over its batches.
    pub evals_per_epoch: usize,
    pub seed: u64,
    /// Global gradient-norm ceiling; 0 disables clipping.
    pub clip_norm: f64,
    /// Hard cap on optimizer steps across all epochs.
    #[serde(default)]
    pub max_iterations: Option<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 5e-4,
            batch_size: 16,
            max_epochs: 250,
            evals_per_epoch: 2,
            seed: 0,
            clip_norm: 5.0,
            max_iterations: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(TrainError::Config(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate must be positive and finite");
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1");
        }
        if !(self.clip_norm >= 0.0 && self.clip_norm.is_finite()) {
            return fail("clip_norm must be non-negative and finite");
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("empty training corpus")]
    EmptyCorpus,
    #[error(transparent)]
    Model(#[from] TensorError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("non-finite loss at epoch {epoch}, batch {batch}, iteration {iteration} (records: {})", records.join(", "))]
    Diverged {
        epoch: usize,
        batch: usize,
        iteration: u64,
        records: Vec<String>,
    },
    #[error("evaluation at iteration {iteration} failed: {message}")]
    Hook { iteration: u64, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, TrainError>;

/// Where an evaluation happens. `epoch` and `batch` are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub epoch: usize,
    pub batch: usize,
    pub iteration: u64,
}

/// Called with a read-only view of the parameters at each evaluation point.
pub type EvalHook<'a> = dyn FnMut(&Model, &EvalPoint) -> std::result::Result<MetricsReport, String> + 'a;

/// One optimizer step, as written to the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainStep {
    pub iteration: u64,
    pub epoch: usize,
    pub batch: usize,
    pub stop: f64,
    pub hierarchical: f64,
    pub abnormal: f64,
    pub mti: f64,
    pub total: f64,
    pub per_word: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Default, Clone)]
pub struct TrainOutputs {
    /// Checkpoints are written here at every evaluation point.
    pub checkpoint_dir: Option<PathBuf>,
    /// Line-delimited JSON, one [`TrainStep`] per line.
    pub log_path: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub history: Vec<CheckpointRecord>,
    pub trajectory: Vec<TrainStep>,
    pub iterations: u64,
    pub adam: AdamState,
}

/// 1-based batch indices after which an evaluation runs.
pub fn eval_batches(batches_per_epoch: usize, evals_per_epoch: usize) -> Vec<usize> {
    let mut out: Vec<usize> = (1..=evals_per_epoch)
        .map(|j| (j * batches_per_epoch).div_ceil(evals_per_epoch))
        .filter(|&b| b > 0)
        .collect();
    out.dedup();
    out
}

pub fn checkpoint_file_name(iteration: u64) -> String {
    format!("ckpt-{iteration:07}.hdlm")
}

/// Mean loss and gradient of a batch. Records are differentiated in
/// parallel and summed in batch order, so the result does not depend on
/// scheduling. Parameters the batch does not touch get zero gradients.
pub fn batch_gradients(model: &Model, batch: &[ReportRecord]) -> Result<(LossValues, NamedGrads)> {
    if batch.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    let per_record: Vec<(LossValues, Vec<Option<Tensor>>)> = batch
        .par_iter()
        .map(|rec| -> Result<_> {
            let mut tape = Tape::new();
            let bound = model.bind(&mut tape)?;
            let losses = bound.compute_losses(&mut tape, std::slice::from_ref(rec))?;
            let values = losses.values(&tape)?;
            let vars = bound.bindings.vars().to_vec();
            let mut grads = tape.backward(losses.total)?;
            Ok((values, vars.into_iter().map(|v| grads.take(v)).collect()))
        })
        .collect::<Result<_>>()?;

    let scale = 1.0 / batch.len() as f64;
    let mut sums: Vec<Tensor> = model.params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
    let mut mean = LossValues {
        stop: 0.0,
        hierarchical: 0.0,
        abnormal: 0.0,
        mti: 0.0,
        total: 0.0,
        words: 0,
        records: batch.len(),
    };
    for (values, grads) in &per_record {
        mean.stop += values.stop;
        mean.hierarchical += values.hierarchical;
        mean.abnormal += values.abnormal;
        mean.mti += values.mti;
        mean.total += values.total;
        mean.words += values.words;
        for (acc, g) in sums.iter_mut().zip(grads) {
            if let Some(g) = g {
                for (a, v) in acc.data_mut().iter_mut().zip(g.data()) {
                    *a += v;
                }
            }
        }
    }
    for v in [&mut mean.stop, &mut mean.hierarchical, &mut mean.abnormal, &mut mean.mti, &mut mean.total] {
        *v *= scale;
    }
    let grads = model
        .params
        .names()
        .iter()
        .cloned()
        .zip(sums.into_iter().map(|mut t| {
            t.data_mut().iter_mut().for_each(|v| *v *= scale);
            t
        }))
        .collect();
    Ok((mean, grads))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TrainError + '_ {
    move |source| TrainError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Trains `model` in place on `corpus`.
///
/// Records are reshuffled each epoch with a generator seeded from
/// `config.seed`; the last batch of an epoch may be short. After each
/// evaluation batch the hook (if any) scores the current parameters and the
/// result is appended to the history, with a checkpoint when a directory is
/// configured. Training stops after `max_epochs` or `max_iterations`,
/// whichever comes first; stopping mid-epoch triggers one last evaluation.
pub fn train(
    model: &mut Model,
    corpus: &[ReportRecord],
    config: &TrainConfig,
    outputs: &TrainOutputs,
    mut hook: Option<&mut EvalHook<'_>>,
) -> Result<TrainReport> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    if let Some(dir) = &outputs.checkpoint_dir {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut log = match &outputs.log_path {
        Some(p) => Some((BufWriter::new(File::create(p).map_err(io_err(p))?), p)),
        None => None,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = AdamState::new(&model.params);
    let batches_per_epoch = corpus.len().div_ceil(config.batch_size);
    let eval_after = eval_batches(batches_per_epoch, config.evals_per_epoch);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut history = Vec::new();
    let mut trajectory = Vec::new();
    let mut iteration = 0u64;
    let mut last_eval = None;

    let mut evaluate = |model: &Model, point: EvalPoint, adam: &AdamState, history: &mut Vec<CheckpointRecord>| -> Result<()> {
        let Some(hook) = hook.as_deref_mut() else {
            return Ok(());
        };
        let metrics = hook(model, &point).map_err(|message| TrainError::Hook {
            iteration: point.iteration,
            message,
        })?;
        let checkpoint = match &outputs.checkpoint_dir {
            Some(dir) => {
                let path = dir.join(checkpoint_file_name(point.iteration));
                Checkpoint::new(model, Some(adam), point.iteration).save(&path)?;
                Some(path)
            }
            None => None,
        };
        log::info!(
            "eval epoch {} batch {} iteration {}: BLEU-4 {:.4}, distinct {:?}",
            point.epoch,
            point.batch,
            point.iteration,
            metrics.bleu4,
            metrics.distinct
        );
        history.push(CheckpointRecord {
            iteration: point.iteration,
            metrics,
            checkpoint,
        });
        Ok(())
    };

    'epochs: for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            if config.max_iterations.is_some_and(|max| iteration >= max) {
                break 'epochs;
            }
            let batch_no = b + 1;
            let batch: Vec<ReportRecord> = chunk.iter().map(|&i| corpus[i].clone()).collect();
            let (losses, mut grads) = batch_gradients(model, &batch)?;
            let diverged = || TrainError::Diverged {
                epoch,
                batch: batch_no,
                iteration: iteration + 1,
                records: batch.iter().map(|r| r.id.clone()).collect(),
            };
            if !losses.is_finite() {
                return Err(diverged());
            }
            let grad_norm = clip_global_norm(&model.params, &mut grads, config.clip_norm);
            if !grad_norm.is_finite() {
                return Err(diverged());
            }
            adam_step(&mut model.params, &grads, &mut adam, config.learning_rate)?;
            iteration += 1;
            let step = TrainStep {
                iteration,
                epoch,
                batch: batch_no,
                stop: losses.stop,
                hierarchical: losses.hierarchical,
                abnormal: losses.abnormal,
                mti: losses.mti,
                total: losses.total,
                per_word: losses.per_word(),
                grad_norm,
            };
            if let Some((w, path)) = log.as_mut() {
                let line = serde_json::to_string(&step).expect("plain struct serializes");
                writeln!(w, "{line}").map_err(io_err(path))?;
            }
            log::debug!("iteration {iteration}: total {:.6}", losses.total);
            trajectory.push(step);
            if eval_after.contains(&batch_no) {
                let point = EvalPoint {
                    epoch,
                    batch: batch_no,
                    iteration,
                };
                evaluate(model, point, &adam, &mut history)?;
                last_eval = Some(iteration);
            }
        }
    }
    if iteration > 0 && last_eval != Some(iteration) {
        let last = trajectory.last().expect("at least one step");
        let point = EvalPoint {
            epoch: last.epoch,
            batch: last.batch,
            iteration,
        };
        evaluate(model, point, &adam, &mut history)?;
    }
    if let Some((mut w, path)) = log {
        w.flush().map_err(io_err(path))?;
    }
    Ok(TrainReport {
        history,
        trajectory,
        iterations: iteration,
        adam,
    })
}
