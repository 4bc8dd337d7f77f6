//! Dyadic sessions: transcripts, per-turn features, turn pairs, shuffled
//! (fake) sessions and a synthetic entrained-corpus generator.

pub mod features;
pub mod metadata;
pub mod pairs;
pub mod shuffle;
pub mod store;
pub mod synth;
pub mod transcript;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::nn::Mat;

pub use features::{FeatureManifest, FeatureStore, FeatureStoreWriter};
pub use metadata::{MetadataSidecar, SessionMetadata};
pub use pairs::make_turn_pairs;
pub use shuffle::shuffle_session;
pub use store::{load_corpus, write_corpus, CorpusLayout};
pub use synth::{synth_corpus, SynthConfig};
pub use transcript::{parse_transcript, parse_transcript_str, TranscriptOptions};

/// Frame-level features of one turn, `[T × D]`, pauses already removed.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub session_id: String,
    pub turn_index: usize,
    pub frames: Mat,
    pub frame_period: f64,
}

impl FeatureSequence {
    pub fn frame_count(&self) -> usize {
        self.frames.nrows()
    }

    pub fn dim(&self) -> usize {
        self.frames.ncols()
    }
}

/// One speaker's turn. `slot` is the turn's position in its session;
/// `source_index` names the original turn whose content occupies the slot
/// (they differ only in shuffled sessions).
#[derive(Debug, Clone, PartialEq)]
pub struct Turn {
    pub slot: usize,
    pub source_index: usize,
    pub speaker: String,
    pub start: f64,
    pub end: f64,
    /// Voiced sub-spans, sorted and non-overlapping, inside `[start, end]`.
    pub segments: Vec<(f64, f64)>,
    pub features: Option<Arc<FeatureSequence>>,
}

impl Turn {
    pub fn voiced_duration(&self) -> f64 {
        self.segments.iter().map(|(s, e)| e - s).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conversation {
    pub session_id: String,
    pub turns: Vec<Turn>,
    pub speaker_a: String,
    pub speaker_b: String,
    pub metadata: SessionMetadata,
}

impl Conversation {
    pub fn speaker_pattern(&self) -> Vec<&str> {
        self.turns.iter().map(|t| t.speaker.as_str()).collect()
    }

    pub fn has_features(&self) -> bool {
        self.turns.iter().all(|t| t.features.is_some())
    }

    pub fn direction(&self, lead: &str) -> Direction {
        let other = if lead == self.speaker_a { &self.speaker_b } else { &self.speaker_a };
        Direction::new(lead, other.clone())
    }
}

/// Ordered speaker roles of a pair: `from` leads, `to` responds.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Direction {
    pub from: String,
    pub to: String,
}

impl Direction {
    pub fn new(from: impl Into<String>, to: impl Into<String>) -> Self {
        Self { from: from.into(), to: to.into() }
    }

    pub fn reversed(&self) -> Self {
        Self { from: self.to.clone(), to: self.from.clone() }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}", self.from, self.to)
    }
}

/// Consecutive cross-speaker turns fed to the model.
#[derive(Debug, Clone, PartialEq)]
pub struct TurnPair {
    pub session_id: String,
    pub pair_index: usize,
    pub leading_slot: usize,
    pub leading: Arc<FeatureSequence>,
    pub responding: Arc<FeatureSequence>,
    pub direction: Direction,
}
