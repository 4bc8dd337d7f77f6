//! Corpus directory layout:
//!
//! ```text
//! <root>/transcripts/<session>.tsv
//! <root>/features/manifest.json + per-turn f32 matrices
//! <root>/metadata.json
//! ```

use std::path::{Path, PathBuf};

use log::info;

use super::features::{FeatureStore, FeatureStoreWriter};
use super::metadata::MetadataSidecar;
use super::transcript::{parse_transcript, render_transcript, TranscriptOptions};
use super::Conversation;
use crate::error::{CedError, Result};

#[derive(Debug, Clone)]
pub struct CorpusLayout {
    pub root: PathBuf,
}

impl CorpusLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn transcripts(&self) -> PathBuf {
        self.root.join("transcripts")
    }

    pub fn features(&self) -> PathBuf {
        self.root.join("features")
    }

    pub fn metadata(&self) -> PathBuf {
        self.root.join("metadata.json")
    }
}

/// Writes transcripts, features and metadata; returns every file written.
pub fn write_corpus(root: &Path, sessions: &[Conversation]) -> Result<Vec<PathBuf>> {
    let layout = CorpusLayout::new(root);
    let first_features = sessions
        .iter()
        .flat_map(|c| c.turns.iter())
        .find_map(|t| t.features.as_ref())
        .ok_or_else(|| CedError::EmptyCorpus("no features to write".into()))?;
    let (dim, period) = (first_features.dim(), first_features.frame_period);

    let tdir = layout.transcripts();
    std::fs::create_dir_all(&tdir).map_err(|e| CedError::io(format!("creating {}", tdir.display()), e))?;
    let mut written = Vec::new();
    let mut writer = FeatureStoreWriter::create(&layout.features(), dim, period)?;
    let mut sidecar = MetadataSidecar::default();
    for conv in sessions {
        let path = tdir.join(format!("{}.tsv", conv.session_id));
        std::fs::write(&path, render_transcript(conv))
            .map_err(|e| CedError::io(format!("writing {}", path.display()), e))?;
        written.push(path);
        for (i, turn) in conv.turns.iter().enumerate() {
            let f = turn.features.as_ref().ok_or_else(|| {
                CedError::FeatureStore(format!("{} turn {i} has no features", conv.session_id))
            })?;
            writer.write_turn(&conv.session_id, i, &turn.speaker, &f.frames)?;
        }
        sidecar.sessions.insert(conv.session_id.clone(), conv.metadata.clone());
    }
    written.extend(writer.finish()?);
    let meta = layout.metadata();
    std::fs::write(&meta, sidecar.to_json()).map_err(|e| CedError::io(format!("writing {}", meta.display()), e))?;
    written.push(meta);
    Ok(written)
}

/// Loads every transcript under `<root>/transcripts`, attaches features and
/// merges metadata (when the sidecar exists). Sessions are sorted by id.
pub fn load_corpus(root: &Path, opts: &TranscriptOptions) -> Result<Vec<Conversation>> {
    let layout = CorpusLayout::new(root);
    let tdir = layout.transcripts();
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&tdir)
        .map_err(|e| CedError::io(format!("listing {}", tdir.display()), e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "tsv"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CedError::EmptyCorpus(format!("no transcripts in {}", tdir.display())));
    }
    let store = FeatureStore::open(&layout.features())?;
    let sidecar = match layout.metadata() {
        p if p.exists() => Some(MetadataSidecar::load(&p)?),
        _ => None,
    };
    let mut sessions = Vec::with_capacity(paths.len());
    let mut dropped = 0;
    for path in paths {
        let mut conv = parse_transcript(&path, opts)?;
        dropped += store.attach(&mut conv)?;
        if let Some(meta) = sidecar.as_ref().and_then(|s| s.get(&conv.session_id)) {
            conv.metadata = meta.clone();
        }
        sessions.push(conv);
    }
    sessions.sort_by(|a, b| a.session_id.cmp(&b.session_id));
    if dropped > 0 {
        info!("dropped {dropped} turn(s) below the minimum frame count");
    }
    Ok(sessions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::synth::{synth_corpus, SynthConfig};

    #[test]
    fn synthetic_corpus_survives_disk_round_trip() {
        let cfg = SynthConfig { n_sessions: 4, turns_per_session: 5, pause_probability: 0.5, ..Default::default() };
        let sessions = synth_corpus(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = write_corpus(dir.path(), &sessions).unwrap();
        assert_eq!(files.len(), 4 + 4 * 5 + 2);
        let loaded = load_corpus(dir.path(), &TranscriptOptions::default()).unwrap();
        assert_eq!(loaded, sessions);
    }

    #[test]
    fn missing_corpus_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_corpus(&dir.path().join("nope"), &TranscriptOptions::default()).is_err());
    }
}
