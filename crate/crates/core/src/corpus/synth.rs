//! Synthetic dyadic corpora with a controllable amount of entrainment.
//!
//! Speakers alternate A, B, A, ... Every frame of turn `t` is
//!
//! ```text
//! α · mean(frames of turn t−1) + (1 − α) · style(speaker) + σ · (η_t + ξ_{t,k})
//! ```
//!
//! where `η_t` is a per-turn Gaussian offset and `ξ_{t,k}` per-frame Gaussian
//! noise, both unit variance and scaled by `σ = noise_scale`. The first turn
//! of a session has no predecessor and uses its style alone. With `α = 0` the
//! speakers are independent; with `α = 1` and `σ → 0` every turn copies the
//! summary of the turn before it.

use std::sync::Arc;

use ndarray::{Array1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Conversation, FeatureSequence, SessionMetadata, Turn};
use crate::error::{CedError, Result};
use crate::nn::Mat;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_sessions: usize,
    pub turns_per_session: usize,
    pub dim: usize,
    /// Entrainment strength α in [0, 1].
    pub entrainment_strength: f64,
    pub noise_scale: f64,
    pub seed: u64,
    pub min_frames: usize,
    pub max_frames: usize,
    /// Seconds per feature frame; must be a whole number of milliseconds.
    pub frame_period: f64,
    /// Probability that a turn is split by a short intra-turn pause.
    pub pause_probability: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_sessions: 200,
            turns_per_session: 10,
            dim: 16,
            entrainment_strength: 0.8,
            noise_scale: 0.5,
            seed: 7,
            min_frames: 8,
            max_frames: 20,
            frame_period: 0.02,
            pause_probability: 0.2,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CedError::Config(m.to_string()));
        if !(0.0..=1.0).contains(&self.entrainment_strength) {
            return bad("entrainment strength (alpha) must lie in [0, 1]");
        }
        if self.n_sessions == 0 || self.turns_per_session == 0 || self.dim == 0 {
            return bad("n_sessions, turns_per_session and dim must be >= 1");
        }
        if !(self.noise_scale > 0.0) || !self.noise_scale.is_finite() {
            return bad("noise_scale must be > 0");
        }
        if self.min_frames < 2 || self.max_frames < self.min_frames {
            return bad("frame range must satisfy 2 <= min_frames <= max_frames");
        }
        let ms = self.frame_period * 1000.0;
        if !(ms >= 1.0) || (ms - ms.round()).abs() > 1e-9 {
            return bad("frame_period must be a positive whole number of milliseconds");
        }
        if !(0.0..=1.0).contains(&self.pause_probability) {
            return bad("pause_probability must lie in [0, 1]");
        }
        Ok(())
    }

    fn period_ms(&self) -> u64 {
        (self.frame_period * 1000.0).round() as u64
    }
}

/// Per-session seed, so a session's content does not depend on how many
/// sessions are generated.
fn session_seed(seed: u64, index: usize) -> u64 {
    // splitmix64 finaliser
    let mut z = seed ^ (index as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn gaussian_vec(rng: &mut ChaCha8Rng, dim: usize) -> Array1<f64> {
    Array1::from_iter((0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

pub fn synth_corpus(cfg: &SynthConfig) -> Result<Vec<Conversation>> {
    cfg.validate()?;
    Ok((0..cfg.n_sessions).map(|i| synth_session(cfg, i)).collect())
}

fn synth_session(cfg: &SynthConfig, index: usize) -> Conversation {
    let mut rng = ChaCha8Rng::seed_from_u64(session_seed(cfg.seed, index));
    let session_id = format!("syn{index:04}");
    let alpha = cfg.entrainment_strength;
    let styles = [gaussian_vec(&mut rng, cfg.dim), gaussian_vec(&mut rng, cfg.dim)];
    let speakers = ["A", "B"];
    let period = cfg.period_ms();

    let mut turns = Vec::with_capacity(cfg.turns_per_session);
    let mut previous: Option<Array1<f64>> = None;
    let mut cursor_ms: u64 = rng.random_range(0..500);
    for slot in 0..cfg.turns_per_session {
        let who = slot % 2;
        let n = rng.random_range(cfg.min_frames..=cfg.max_frames);
        let base = match &previous {
            Some(summary) => summary * alpha + &styles[who] * (1.0 - alpha),
            None => styles[who].clone(),
        };
        let offset = gaussian_vec(&mut rng, cfg.dim);
        let mut frames = Mat::zeros((n, cfg.dim));
        for mut row in frames.rows_mut() {
            let jitter = gaussian_vec(&mut rng, cfg.dim);
            row.assign(&(&base + &((&offset + &jitter) * cfg.noise_scale)));
        }
        // stored features are f32; keep in-memory and on-disk corpora identical
        frames.mapv_inplace(|v| v as f32 as f64);
        previous = Some(frames.mean_axis(Axis(0)).expect("n >= 2"));

        let start_ms = cursor_ms;
        let segments_ms = if n >= 4 && rng.random_bool(cfg.pause_probability) {
            let head = n / 2;
            let gap = rng.random_range(100..400);
            let first_end = start_ms + head as u64 * period;
            let second_start = first_end + gap;
            vec![(start_ms, first_end), (second_start, second_start + (n - head) as u64 * period)]
        } else {
            vec![(start_ms, start_ms + n as u64 * period)]
        };
        let end_ms = segments_ms.last().expect("segment").1;
        cursor_ms = end_ms + rng.random_range(600..1200);

        let secs = |ms: u64| ms as f64 / 1000.0;
        turns.push(Turn {
            slot,
            source_index: slot,
            speaker: speakers[who].to_string(),
            start: secs(start_ms),
            end: secs(end_ms),
            segments: segments_ms.iter().map(|&(s, e)| (secs(s), secs(e))).collect(),
            features: Some(Arc::new(FeatureSequence {
                session_id: session_id.clone(),
                turn_index: slot,
                frames,
                frame_period: cfg.frame_period,
            })),
        });
    }

    let metadata = SessionMetadata {
        gender: Some(if rng.random_bool(0.5) { "F" } else { "M" }.to_string()),
        age: Some((rng.random_range(25..=140) as f64) / 10.0),
        scores: Default::default(),
    };
    Conversation {
        session_id,
        turns,
        speaker_a: "A".into(),
        speaker_b: "B".into(),
        metadata,
    }
}
