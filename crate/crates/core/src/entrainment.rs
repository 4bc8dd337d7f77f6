//! Contextual entrainment distance: smooth-L1 between pooled cross-encoder
//! embeddings of a turn pair, aggregated per session and direction.

use std::io::Write;

use ndarray::{Array1, ArrayView1, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{make_turn_pairs, Conversation, Direction, TurnPair};
use crate::error::{CedError, Result};
use crate::model::{CedModel, EmbeddingPair};

pub const DEFAULT_BETA: f64 = 1.0;

/// Sum over coordinates of the smooth-L1 (Huber-style) loss with
/// transition point `beta`.
pub fn smooth_l1(u: ArrayView1<f64>, v: ArrayView1<f64>, beta: f64) -> Result<f64> {
    if u.len() != v.len() {
        return Err(CedError::Dimension(format!("smooth_l1 operands have lengths {} and {}", u.len(), v.len())));
    }
    if !(beta > 0.0) {
        return Err(CedError::Config(format!("beta must be > 0, got {beta}")));
    }
    Ok(u.iter()
        .zip(v.iter())
        .map(|(a, b)| {
            let d = (a - b).abs();
            if d < beta {
                0.5 * d * d / beta
            } else {
                d - 0.5 * beta
            }
        })
        .sum())
}

pub fn extract_embeddings(model: &CedModel, pair: &TurnPair) -> Result<EmbeddingPair> {
    Ok(model.embed_pair(pair, false)?.0)
}

pub fn ced_pair(model: &CedModel, pair: &TurnPair, beta: f64) -> Result<f64> {
    let e = extract_embeddings(model, pair)?;
    smooth_l1(e.pooled_lead.view(), e.pooled_resp.view(), beta)
}

fn mean_frames(frames: &crate::nn::Mat) -> Array1<f64> {
    frames.mean_axis(Axis(0)).expect("turns have at least one frame")
}

/// Baseline 1: smooth-L1 between the mean-pooled raw features of the turns.
pub fn baseline_smooth_l1(pair: &TurnPair, beta: f64) -> Result<f64> {
    let (a, b) = (&pair.leading.frames, &pair.responding.frames);
    if a.ncols() != b.ncols() {
        return Err(CedError::Dimension(format!("turn features have dims {} and {}", a.ncols(), b.ncols())));
    }
    smooth_l1(mean_frames(a).view(), mean_frames(b).view(), beta)
}

/// Anything that assigns a distance to a turn pair.
pub trait PairScorer: Sync {
    fn name(&self) -> &str;
    fn score(&self, pair: &TurnPair) -> Result<f64>;
}

pub struct CedScorer<'m> {
    pub model: &'m CedModel,
    pub beta: f64,
}

impl PairScorer for CedScorer<'_> {
    fn name(&self) -> &str {
        "ced"
    }

    fn score(&self, pair: &TurnPair) -> Result<f64> {
        ced_pair(self.model, pair, self.beta)
    }
}

pub struct BaselineScorer {
    pub beta: f64,
}

impl PairScorer for BaselineScorer {
    fn name(&self) -> &str {
        "baseline1"
    }

    fn score(&self, pair: &TurnPair) -> Result<f64> {
        baseline_smooth_l1(pair, self.beta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairDistance {
    pub pair_index: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CedResult {
    pub session_id: String,
    pub direction: Direction,
    pub pair_distances: Vec<PairDistance>,
    pub session_ced: f64,
}

/// Distances of every consecutive pair, in pair order.
pub fn score_pairs(scorer: &dyn PairScorer, pairs: &[TurnPair]) -> Result<Vec<f64>> {
    pairs.par_iter().map(|p| scorer.score(p)).collect()
}

/// Mean distance over all consecutive pairs of a session, both directions.
pub fn session_mean(scorer: &dyn PairScorer, conv: &Conversation) -> Result<f64> {
    let pairs = make_turn_pairs(conv)?;
    if pairs.is_empty() {
        return Err(CedError::NoPairs(format!("{} (any)", conv.session_id)));
    }
    let d = score_pairs(scorer, &pairs)?;
    Ok(d.iter().sum::<f64>() / d.len() as f64)
}

/// Session distance over pairs where `direction.from` leads.
pub fn score_session(scorer: &dyn PairScorer, conv: &Conversation, direction: &Direction) -> Result<CedResult> {
    let pairs: Vec<TurnPair> = make_turn_pairs(conv)?.into_iter().filter(|p| &p.direction == direction).collect();
    if pairs.is_empty() {
        return Err(CedError::NoPairs(format!("{direction} in session {}", conv.session_id)));
    }
    let distances = score_pairs(scorer, &pairs)?;
    let session_ced = distances.iter().sum::<f64>() / distances.len() as f64;
    Ok(CedResult {
        session_id: conv.session_id.clone(),
        direction: direction.clone(),
        pair_distances: pairs
            .iter()
            .zip(distances)
            .map(|(p, distance)| PairDistance { pair_index: p.pair_index, distance })
            .collect(),
        session_ced,
    })
}

pub fn ced_session(model: &CedModel, conv: &Conversation, direction: &Direction, beta: f64) -> Result<CedResult> {
    score_session(&CedScorer { model, beta }, conv, direction)
}

/// Both directions of a session, speaker A leading first.
pub fn both_directions(conv: &Conversation) -> [Direction; 2] {
    let ab = Direction::new(conv.speaker_a.clone(), conv.speaker_b.clone());
    let ba = ab.reversed();
    [ab, ba]
}

#[derive(Serialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Line<'a> {
    Pair { session_id: &'a str, direction: String, pair_index: usize, distance: f64 },
    Session { session_id: &'a str, direction: String, pairs: usize, session_ced: f64 },
}

/// Line-delimited JSON: one record per pair, then a session summary.
pub fn write_jsonl(results: &[CedResult], mut out: impl Write) -> Result<()> {
    let io = |e| CedError::io("writing CED records", e);
    for r in results {
        for p in &r.pair_distances {
            let line = Line::Pair {
                session_id: &r.session_id,
                direction: r.direction.to_string(),
                pair_index: p.pair_index,
                distance: p.distance,
            };
            writeln!(out, "{}", serde_json::to_string(&line).expect("serialisable")).map_err(io)?;
        }
        let line = Line::Session {
            session_id: &r.session_id,
            direction: r.direction.to_string(),
            pairs: r.pair_distances.len(),
            session_ced: r.session_ced,
        };
        writeln!(out, "{}", serde_json::to_string(&line).expect("serialisable")).map_err(io)?;
    }
    Ok(())
}
