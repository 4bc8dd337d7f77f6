//! Fake sessions: each speaker's turns are permuted among that speaker's
//! own slots, so the speaker alternation and slot timing survive while the
//! conversational context is destroyed.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Conversation;
use crate::error::{CedError, Result};

/// Every speaker with at least two turns gets a derangement of its turns,
/// so no slot keeps its original content for that speaker. Since every
/// cross-speaker pair involves both speakers, every turn pair of the fake
/// session differs from the real pair at the same slot.
pub fn shuffle_session(conv: &Conversation, rng_seed: u64) -> Result<Conversation> {
    let mut by_speaker: Vec<(String, Vec<usize>)> = Vec::new();
    for (slot, turn) in conv.turns.iter().enumerate() {
        match by_speaker.iter_mut().find(|(s, _)| *s == turn.speaker) {
            Some((_, slots)) => slots.push(slot),
            None => by_speaker.push((turn.speaker.clone(), vec![slot])),
        }
    }
    if conv.turns.len() < 3 || by_speaker.iter().all(|(_, slots)| slots.len() < 2) {
        return Err(CedError::DegenerateSession(conv.session_id.clone()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut fake = conv.clone();
    for (_, slots) in &by_speaker {
        if slots.len() < 2 {
            continue;
        }
        let perm = derangement(slots.len(), &mut rng);
        for (dst, &src) in slots.iter().zip(perm.iter().map(|&p| &slots[p])) {
            let original = &conv.turns[src];
            let turn = &mut fake.turns[*dst];
            turn.source_index = original.source_index;
            turn.features = original.features.clone();
            // voiced sub-spans move with the content, re-anchored to the slot start
            let offset = turn.start - original.start;
            turn.segments = original.segments.iter().map(|(s, e)| (s + offset, e + offset)).collect();
            turn.end = turn.start + (original.end - original.start);
        }
    }
    Ok(fake)
}

/// Uniformly random permutation of `0..n` without fixed points (n ≥ 2).
fn derangement(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    loop {
        perm.shuffle(rng);
        if perm.iter().enumerate().all(|(i, &p)| i != p) {
            return perm;
        }
    }
}
