//! Per-turn feature store.
//!
//! `manifest.json` maps each session to its per-turn entries; each entry
//! points at a little-endian `f32` matrix stored row-major `[T × D]`, either
//! one file per turn or at a byte offset inside a shared blob.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::warn;
use serde::{Deserialize, Serialize};

use super::{Conversation, FeatureSequence};
use crate::error::{CedError, Result};
use crate::nn::Mat;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const FEATURE_FORMAT_VERSION: u32 = 1;

/// Turns with fewer frames than this are dropped on attachment.
pub const MIN_TURN_FRAMES: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureEntry {
    pub turn_index: usize,
    pub speaker: String,
    pub frame_count: usize,
    pub file: String,
    #[serde(default)]
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureManifest {
    pub format_version: u32,
    pub dim: usize,
    /// Seconds per frame.
    pub frame_period: f64,
    pub sessions: BTreeMap<String, Vec<FeatureEntry>>,
}

/// Read-only view over a feature directory. Safe to share across threads.
#[derive(Debug, Clone)]
pub struct FeatureStore {
    root: PathBuf,
    manifest: FeatureManifest,
}

impl FeatureStore {
    pub fn open(root: &Path) -> Result<Self> {
        let path = root.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| CedError::io(format!("reading feature manifest {}", path.display()), e))?;
        let manifest: FeatureManifest =
            serde_json::from_str(&text).map_err(|e| CedError::json(format!("parsing {}", path.display()), e))?;
        if manifest.format_version != FEATURE_FORMAT_VERSION {
            return Err(CedError::FeatureStore(format!(
                "unsupported format version {} (expected {FEATURE_FORMAT_VERSION})",
                manifest.format_version
            )));
        }
        if manifest.dim == 0 || !(manifest.frame_period > 0.0) {
            return Err(CedError::FeatureStore("dim and frame_period must be positive".into()));
        }
        Ok(Self { root: root.to_path_buf(), manifest })
    }

    pub fn manifest(&self) -> &FeatureManifest {
        &self.manifest
    }

    pub fn dim(&self) -> usize {
        self.manifest.dim
    }

    pub fn entry(&self, session_id: &str, turn_index: usize) -> Result<&FeatureEntry> {
        self.manifest
            .sessions
            .get(session_id)
            .and_then(|entries| entries.iter().find(|e| e.turn_index == turn_index))
            .ok_or_else(|| CedError::FeatureStore(format!("no features for {session_id} turn {turn_index}")))
    }

    pub fn load(&self, session_id: &str, turn_index: usize) -> Result<FeatureSequence> {
        let entry = self.entry(session_id, turn_index)?;
        let dim = self.manifest.dim;
        if entry.frame_count == 0 {
            return Err(CedError::FeatureStore(format!("{session_id} turn {turn_index}: zero frames")));
        }
        let path = self.root.join(&entry.file);
        let mut file =
            File::open(&path).map_err(|e| CedError::io(format!("opening {}", path.display()), e))?;
        file.seek(SeekFrom::Start(entry.offset))
            .map_err(|e| CedError::io(format!("seeking {}", path.display()), e))?;
        let mut bytes = vec![0u8; entry.frame_count * dim * 4];
        file.read_exact(&mut bytes)
            .map_err(|e| CedError::io(format!("reading {} frames from {}", entry.frame_count, path.display()), e))?;
        let values: Vec<f64> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(CedError::Numeric(format!("features of {session_id} turn {turn_index}")));
        }
        let frames = Mat::from_shape_vec((entry.frame_count, dim), values).expect("length checked");
        Ok(FeatureSequence {
            session_id: session_id.to_string(),
            turn_index,
            frames,
            frame_period: self.manifest.frame_period,
        })
    }

    /// Loads features for every turn of `conv`, checking speaker labels and
    /// the frame-count/voiced-duration contract. Turns shorter than
    /// [`MIN_TURN_FRAMES`] are dropped; returns how many were dropped.
    pub fn attach(&self, conv: &mut Conversation) -> Result<usize> {
        let period = self.manifest.frame_period;
        let mut kept = Vec::with_capacity(conv.turns.len());
        let mut dropped = 0;
        for mut turn in std::mem::take(&mut conv.turns) {
            let entry = self.entry(&conv.session_id, turn.source_index)?;
            if entry.speaker != turn.speaker {
                return Err(CedError::FeatureStore(format!(
                    "{} turn {}: transcript speaker {} but feature speaker {}",
                    conv.session_id, turn.source_index, turn.speaker, entry.speaker
                )));
            }
            let expected = turn.voiced_duration() / period;
            if (entry.frame_count as f64 - expected).abs() > 1.0 + 1e-6 {
                return Err(CedError::FeatureStore(format!(
                    "{} turn {}: {} frames but voiced duration implies {expected:.2}",
                    conv.session_id, turn.source_index, entry.frame_count
                )));
            }
            if entry.frame_count < MIN_TURN_FRAMES {
                warn!(
                    "{} turn {}: dropping turn with {} frame(s)",
                    conv.session_id, turn.source_index, entry.frame_count
                );
                dropped += 1;
                continue;
            }
            turn.features = Some(Arc::new(self.load(&conv.session_id, turn.source_index)?));
            kept.push(turn);
        }
        for (i, t) in kept.iter_mut().enumerate() {
            t.slot = i;
            t.source_index = i;
        }
        conv.turns = kept;
        Ok(dropped)
    }
}

/// Writes one file per turn plus the manifest.
#[derive(Debug)]
pub struct FeatureStoreWriter {
    root: PathBuf,
    manifest: FeatureManifest,
    written: Vec<PathBuf>,
}

impl FeatureStoreWriter {
    pub fn create(root: &Path, dim: usize, frame_period: f64) -> Result<Self> {
        std::fs::create_dir_all(root).map_err(|e| CedError::io(format!("creating {}", root.display()), e))?;
        Ok(Self {
            root: root.to_path_buf(),
            manifest: FeatureManifest {
                format_version: FEATURE_FORMAT_VERSION,
                dim,
                frame_period,
                sessions: BTreeMap::new(),
            },
            written: Vec::new(),
        })
    }

    pub fn write_turn(&mut self, session_id: &str, turn_index: usize, speaker: &str, frames: &Mat) -> Result<()> {
        if frames.ncols() != self.manifest.dim {
            return Err(CedError::Dimension(format!(
                "{session_id} turn {turn_index}: {} columns, store dim {}",
                frames.ncols(),
                self.manifest.dim
            )));
        }
        let rel = format!("{session_id}/{turn_index:04}.f32");
        let path = self.root.join(&rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| CedError::io(format!("creating {}", parent.display()), e))?;
        }
        let mut bytes = Vec::with_capacity(frames.len() * 4);
        for v in frames.iter() {
            bytes.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        let mut f = File::create(&path).map_err(|e| CedError::io(format!("creating {}", path.display()), e))?;
        f.write_all(&bytes).map_err(|e| CedError::io(format!("writing {}", path.display()), e))?;
        self.manifest.sessions.entry(session_id.to_string()).or_default().push(FeatureEntry {
            turn_index,
            speaker: speaker.to_string(),
            frame_count: frames.nrows(),
            file: rel,
            offset: 0,
        });
        self.written.push(path);
        Ok(())
    }

    /// Writes the manifest and returns every file created.
    pub fn finish(mut self) -> Result<Vec<PathBuf>> {
        let path = self.root.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&self.manifest).expect("manifest serialises");
        std::fs::write(&path, text).map_err(|e| CedError::io(format!("writing {}", path.display()), e))?;
        self.written.push(path);
        Ok(self.written)
    }
}
