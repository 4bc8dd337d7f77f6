use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{shuffle_session, Conversation};
use crate::entrainment::{session_mean, PairScorer};
use crate::error::{CedError, Result};
use crate::training::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealFakeReport {
    pub corpus_id: String,
    pub scorer: String,
    pub repeats: usize,
    pub sessions: usize,
    pub skipped: usize,
    pub per_repeat_accuracy: Vec<f64>,
    pub mean_accuracy: f64,
    /// Sample standard deviation (n − 1); 0 for a single repeat.
    pub stddev: f64,
}

pub fn mean_and_stddev(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Each repeat builds one shuffled counterpart per session; a session is
/// classified correctly when its real mean distance is strictly below the
/// fake one.
pub fn real_fake_experiment(
    scorer: &dyn PairScorer,
    corpus_id: &str,
    corpus: &[Conversation],
    repeats: usize,
    seed: u64,
) -> Result<RealFakeReport> {
    if repeats == 0 {
        return Err(CedError::Config("repeats must be >= 1".into()));
    }
    let usable: Vec<(usize, &Conversation)> = corpus
        .iter()
        .enumerate()
        .filter(|(_, c)| c.turns.len() >= 3 && shuffle_session(c, 0).is_ok())
        .collect();
    let skipped = corpus.len() - usable.len();
    if skipped > 0 {
        info!("skipped {skipped} session(s) that cannot be shuffled");
    }
    if usable.is_empty() {
        return Err(CedError::EmptyInput("no session can be shuffled".into()));
    }
    let real: Vec<f64> = usable.par_iter().map(|(_, c)| session_mean(scorer, c)).collect::<Result<_>>()?;
    let mut per_repeat_accuracy = Vec::with_capacity(repeats);
    for r in 0..repeats {
        let correct: Vec<bool> = usable
            .par_iter()
            .zip(&real)
            .map(|((i, c), &real)| {
                let fake = shuffle_session(c, derive_seed(&[seed, r as u64, *i as u64]))?;
                Ok(real < session_mean(scorer, &fake)?)
            })
            .collect::<Result<_>>()?;
        per_repeat_accuracy.push(correct.iter().filter(|&&c| c).count() as f64 / correct.len() as f64);
    }
    let (mean_accuracy, stddev) = mean_and_stddev(&per_repeat_accuracy);
    Ok(RealFakeReport {
        corpus_id: corpus_id.to_string(),
        scorer: scorer.name().to_string(),
        repeats,
        sessions: usable.len(),
        skipped,
        per_repeat_accuracy,
        mean_accuracy,
        stddev,
    })
}
