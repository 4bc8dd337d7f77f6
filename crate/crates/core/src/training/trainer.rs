use std::path::PathBuf;
use std::time::Instant;

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::batches::{derive_seed, labeled_pairs, make_training_batches, LabeledPair};
use super::early_stop::{EarlyStopping, Verdict};
use crate::corpus::Conversation;
use crate::error::{CedError, Result};
use crate::model::{save_checkpoint, CedModel};
use crate::nn::tape::{bce_with_logits, sigmoid_scalar};
use crate::nn::{Adam, AdamConfig, Gradients};

pub const BEST_CHECKPOINT: &str = "best.ckpt";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub val_fraction: f64,
    pub seed: u64,
    /// Where the best weights are written after every improving epoch.
    /// An output location, not configuration: never read from or written to files.
    #[serde(skip)]
    pub checkpoint_dir: Option<PathBuf>,
    /// Draw new fake sessions every epoch (otherwise one fixed set).
    pub fresh_shuffles: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-5,
            batch_size: 16,
            max_epochs: 100,
            patience: 10,
            val_fraction: 0.1,
            seed: 0,
            checkpoint_dir: None,
            fresh_shuffles: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(CedError::Config(m.to_string()));
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return fail("learning_rate must be > 0");
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return fail("batch_size and max_epochs must be >= 1");
        }
        if self.patience == 0 {
            return fail("patience must be >= 1");
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return fail("val_fraction must lie in (0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    /// Seconds since training started.
    pub wall_time: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Weights from the epoch with the lowest validation loss.
    pub model: CedModel,
    pub history: Vec<TrainRecord>,
    pub best_epoch: usize,
    pub train_sessions: Vec<String>,
    pub val_sessions: Vec<String>,
}

/// Session-level split: returns (train, validation) index lists.
pub fn split_sessions(n: usize, val_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return Err(CedError::InsufficientData(format!("{n} session(s); need at least 2 to hold out validation")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(&[seed, 0x5E55])));
    let n_val = ((n as f64 * val_fraction).round() as usize).clamp(1, n - 1);
    let mut val = idx[..n_val].to_vec();
    let mut train = idx[n_val..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    Ok((train, val))
}

/// Mean BCE and threshold-0.5 accuracy; a logit of exactly 0 predicts 0.
pub fn loss_and_accuracy(logits: &[f64], labels: &[f64]) -> Result<(f64, f64)> {
    if logits.is_empty() {
        return Err(CedError::EmptyInput("no pairs to evaluate".into()));
    }
    let n = logits.len() as f64;
    let loss = logits.iter().zip(labels).map(|(&l, &y)| bce_with_logits(l, y)).sum::<f64>() / n;
    let correct = logits
        .iter()
        .zip(labels)
        .filter(|(&l, &y)| {
            let predicted = if sigmoid_scalar(l) > 0.5 { 1.0 } else { 0.0 };
            predicted == y
        })
        .count();
    Ok((loss, correct as f64 / n))
}

/// Evaluation-mode loss and accuracy over labelled pairs.
pub fn evaluate_loss(model: &CedModel, pairs: &[LabeledPair]) -> Result<(f64, f64)> {
    let logits: Vec<f64> = pairs
        .par_iter()
        .map(|p| model.classify_pair(&p.pair))
        .collect::<Result<_>>()?;
    let labels: Vec<f64> = pairs.iter().map(|p| p.label).collect();
    loss_and_accuracy(&logits, &labels)
}

/// One optimisation step over a batch; returns the mean training loss.
fn train_batch(
    model: &mut CedModel,
    opt: &mut Adam,
    batch: &[LabeledPair],
    seeds: &[u64],
    use_dropout: bool,
) -> Result<f64> {
    let results: Vec<(f64, f64, Gradients)> = batch
        .par_iter()
        .zip(seeds)
        .map(|(p, &s)| model.pair_loss_and_gradients(&p.pair, p.label, use_dropout.then_some(s)))
        .collect::<Result<_>>()?;
    // fixed-order reduction keeps runs bit-identical regardless of threads
    let mut total = Gradients::zeros_like_count(model.params().len());
    let mut loss = 0.0;
    for (l, _, g) in results {
        loss += l;
        total.merge(g);
    }
    total.scale(1.0 / batch.len() as f64);
    if !total.all_finite() || !loss.is_finite() {
        return Err(CedError::Numeric("gradients".into()));
    }
    opt.step(model.params_mut(), &total);
    Ok(loss / batch.len() as f64)
}

pub fn train(model: CedModel, corpus: &[Conversation], cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with_observer(model, corpus, cfg, |_| {})
}

/// Trains with BCE-with-logits and Adam, early-stopping on validation loss.
/// `observe` sees every epoch record as it is produced.
pub fn train_with_observer(
    mut model: CedModel,
    corpus: &[Conversation],
    cfg: &TrainConfig,
    mut observe: impl FnMut(&TrainRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(CedError::EmptyCorpus("no sessions to train on".into()));
    }
    let dim = model.config().input_dim;
    for conv in corpus {
        for t in &conv.turns {
            match &t.features {
                Some(f) if f.dim() == dim => {}
                Some(f) => {
                    return Err(CedError::Dimension(format!(
                        "{}: features have dim {} but the model expects {dim}",
                        conv.session_id,
                        f.dim()
                    )))
                }
                None => return Err(CedError::FeatureStore(format!("{}: features not attached", conv.session_id))),
            }
        }
    }
    let (train_idx, val_idx) = split_sessions(corpus.len(), cfg.val_fraction, cfg.seed)?;
    let train_set: Vec<&Conversation> = train_idx.iter().map(|&i| &corpus[i]).collect();
    let val_set: Vec<&Conversation> = val_idx.iter().map(|&i| &corpus[i]).collect();
    let (mut val_pairs, val_fake) = labeled_pairs(&val_set, derive_seed(&[cfg.seed, 0x7A1]), 0)?;
    val_pairs.extend(val_fake);
    if val_pairs.is_empty() {
        return Err(CedError::EmptyInput("validation sessions yield no pairs".into()));
    }
    if let Some(dir) = &cfg.checkpoint_dir {
        std::fs::create_dir_all(dir).map_err(|e| CedError::io(format!("creating {}", dir.display()), e))?;
    }

    let use_dropout = model.config().dropout > 0.0;
    let mut opt = Adam::new(AdamConfig { learning_rate: cfg.learning_rate, ..AdamConfig::default() }, model.params());
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best_params = model.params().clone();
    let mut history = Vec::new();
    let started = Instant::now();
    for epoch in 1..=cfg.max_epochs {
        let stream = make_training_batches(&train_set, cfg.seed, epoch as u64, cfg.fresh_shuffles)?;
        if stream.is_empty() {
            return Err(CedError::EmptyInput("training sessions yield no pairs".into()));
        }
        let mut loss_sum = 0.0;
        for (b, batch) in stream.chunks(cfg.batch_size).enumerate() {
            let seeds: Vec<u64> =
                (0..batch.len()).map(|i| derive_seed(&[cfg.seed, epoch as u64, b as u64, i as u64])).collect();
            loss_sum += train_batch(&mut model, &mut opt, batch, &seeds, use_dropout)? * batch.len() as f64;
        }
        let (val_loss, val_accuracy) = evaluate_loss(&model, &val_pairs)?;
        if !val_loss.is_finite() {
            return Err(CedError::Numeric("validation loss".into()));
        }
        let record = TrainRecord {
            epoch,
            train_loss: loss_sum / stream.len() as f64,
            val_loss,
            val_accuracy,
            wall_time: started.elapsed().as_secs_f64(),
        };
        info!(
            "epoch {epoch}: train {:.4} val {:.4} acc {:.3}",
            record.train_loss, record.val_loss, record.val_accuracy
        );
        observe(&record);
        history.push(record);
        match stopper.observe(epoch, val_loss) {
            Verdict::Improved => {
                best_params = model.params().clone();
                if let Some(dir) = &cfg.checkpoint_dir {
                    save_checkpoint(&model, &dir.join(BEST_CHECKPOINT))?;
                }
            }
            Verdict::Continue => {}
            Verdict::Stop => break,
        }
    }
    *model.params_mut() = best_params;
    Ok(TrainOutcome {
        model,
        history,
        best_epoch: stopper.best().0,
        train_sessions: train_set.iter().map(|c| c.session_id.clone()).collect(),
        val_sessions: val_set.iter().map(|c| c.session_id.clone()).collect(),
    })
}
