//! Timestamped transcript ingestion.
//!
//! One record per line, tab separated:
//!
//! ```text
//! session_id  speaker  start_seconds  end_seconds  [text]
//! ```
//!
//! Blank lines and lines starting with `#` are ignored. A file holds exactly
//! one session.

use std::fmt::Write as _;
use std::path::Path;

use super::{Conversation, SessionMetadata, Turn};
use crate::error::{CedError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TranscriptOptions {
    /// Same-speaker segments separated by less than this gap (seconds) are
    /// merged into one turn; the gap becomes an excluded intra-turn pause.
    pub pause_threshold: f64,
}

impl Default for TranscriptOptions {
    fn default() -> Self {
        Self { pause_threshold: 0.5 }
    }
}

#[derive(Debug, Clone)]
struct Segment {
    speaker: String,
    start: f64,
    end: f64,
}

pub fn parse_transcript(path: &Path, opts: &TranscriptOptions) -> Result<Conversation> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CedError::io(format!("reading transcript {}", path.display()), e))?;
    parse_transcript_str(&text, path, opts)
}

pub fn parse_transcript_str(text: &str, origin: &Path, opts: &TranscriptOptions) -> Result<Conversation> {
    let parse_err = |line: usize, message: String| CedError::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    };
    let mut session_id: Option<String> = None;
    let mut segments = Vec::new();
    for (lineno, raw) in text.lines().enumerate().map(|(i, l)| (i + 1, l)) {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.splitn(5, '\t').collect();
        if fields.len() < 4 {
            return Err(parse_err(lineno, format!("expected at least 4 tab-separated fields, got {}", fields.len())));
        }
        let sid = fields[0].trim();
        let speaker = fields[1].trim();
        if sid.is_empty() || speaker.is_empty() {
            return Err(parse_err(lineno, "empty session id or speaker".into()));
        }
        let start: f64 = fields[2]
            .trim()
            .parse()
            .map_err(|_| parse_err(lineno, format!("bad start time {:?}", fields[2])))?;
        let end: f64 = fields[3]
            .trim()
            .parse()
            .map_err(|_| parse_err(lineno, format!("bad end time {:?}", fields[3])))?;
        if !start.is_finite() || !end.is_finite() || start < 0.0 || end <= start {
            return Err(parse_err(lineno, format!("invalid time span [{start}, {end}]")));
        }
        match &session_id {
            None => session_id = Some(sid.to_string()),
            Some(existing) if existing != sid => {
                return Err(parse_err(lineno, format!("session {sid:?} mixed into transcript of {existing:?}")));
            }
            Some(_) => {}
        }
        segments.push(Segment { speaker: speaker.to_string(), start, end });
    }
    let Some(session_id) = session_id else {
        return Err(CedError::EmptyCorpus(format!("no records in {}", origin.display())));
    };

    let mut speakers: Vec<String> = Vec::new();
    for seg in &segments {
        if !speakers.contains(&seg.speaker) {
            speakers.push(seg.speaker.clone());
        }
    }
    if speakers.len() != 2 {
        return Err(CedError::UnsupportedSession { session: session_id, found: speakers.len() });
    }

    segments.sort_by(|a, b| a.start.total_cmp(&b.start).then(a.end.total_cmp(&b.end)));
    let turns = merge_segments(&segments, opts.pause_threshold);
    let speaker_a = turns[0].speaker.clone();
    let speaker_b = speakers.into_iter().find(|s| *s != speaker_a).expect("two speakers");
    Ok(Conversation {
        session_id,
        turns,
        speaker_a,
        speaker_b,
        metadata: SessionMetadata::default(),
    })
}

fn merge_segments(segments: &[Segment], pause_threshold: f64) -> Vec<Turn> {
    let mut turns: Vec<Turn> = Vec::new();
    for seg in segments {
        if let Some(last) = turns.last_mut() {
            let gap = seg.start - last.end;
            if last.speaker == seg.speaker && gap < pause_threshold {
                if seg.start <= last.end {
                    // overlapping records of one speaker extend the last span
                    let span = last.segments.last_mut().expect("turn has a segment");
                    span.1 = span.1.max(seg.end);
                } else {
                    last.segments.push((seg.start, seg.end));
                }
                last.end = last.end.max(seg.end);
                continue;
            }
        }
        let slot = turns.len();
        turns.push(Turn {
            slot,
            source_index: slot,
            speaker: seg.speaker.clone(),
            start: seg.start,
            end: seg.end,
            segments: vec![(seg.start, seg.end)],
            features: None,
        });
    }
    turns
}

/// Renders a conversation back to the transcript format, one line per
/// voiced sub-span.
pub fn render_transcript(conv: &Conversation) -> String {
    let mut out = String::new();
    for turn in &conv.turns {
        for (s, e) in &turn.segments {
            let _ = writeln!(out, "{}\t{}\t{:.3}\t{:.3}", conv.session_id, turn.speaker, s, e);
        }
    }
    out
}
