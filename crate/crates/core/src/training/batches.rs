//! Labelled real/fake pair streams.

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{make_turn_pairs, shuffle_session, Conversation, TurnPair};
use crate::error::{CedError, Result};

pub const REAL: f64 = 1.0;
pub const FAKE: f64 = 0.0;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPair {
    pub pair: TurnPair,
    pub label: f64,
}

/// Mixes several integers into one well-spread seed.
pub fn derive_seed(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x243F_6A88_85A3_08D3;
    for &p in parts {
        let mut z = h ^ p.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}

/// Real pairs (label 1) and pairs from one shuffled counterpart per session
/// (label 0). `shuffle_round` selects the shuffle; sessions too short to
/// shuffle are skipped entirely so the classes stay balanced.
pub fn labeled_pairs(sessions: &[&Conversation], seed: u64, shuffle_round: u64) -> Result<(Vec<LabeledPair>, Vec<LabeledPair>)> {
    let mut real = Vec::new();
    let mut fake = Vec::new();
    let mut skipped = 0;
    for (i, conv) in sessions.iter().enumerate() {
        let shuffled = match shuffle_session(conv, derive_seed(&[seed, shuffle_round, i as u64])) {
            Ok(s) => s,
            Err(CedError::DegenerateSession(_)) => {
                skipped += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        real.extend(make_turn_pairs(conv)?.into_iter().map(|pair| LabeledPair { pair, label: REAL }));
        fake.extend(make_turn_pairs(&shuffled)?.into_iter().map(|pair| LabeledPair { pair, label: FAKE }));
    }
    if skipped > 0 {
        warn!("skipped {skipped} session(s) too short to shuffle");
    }
    Ok((real, fake))
}

/// One epoch of labelled pairs. Each class is shuffled by `(seed, epoch)`
/// and the two are interleaved real/fake, so any window of consecutive
/// items is balanced within ±1.
pub fn make_training_batches(
    corpus: &[&Conversation],
    seed: u64,
    epoch: u64,
    fresh_shuffles: bool,
) -> Result<Vec<LabeledPair>> {
    if corpus.is_empty() {
        return Err(CedError::EmptyCorpus("no sessions to train on".into()));
    }
    let round = if fresh_shuffles { epoch } else { 0 };
    let (mut real, mut fake) = labeled_pairs(corpus, seed, round)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, epoch, 0xBA7C]));
    real.shuffle(&mut rng);
    fake.shuffle(&mut rng);
    let mut out = Vec::with_capacity(real.len() + fake.len());
    let mut real = real.into_iter();
    let mut fake = fake.into_iter();
    loop {
        match (real.next(), fake.next()) {
            (None, None) => break,
            (r, f) => out.extend(r.into_iter().chain(f)),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::synth::{synth_corpus, SynthConfig};

    fn corpus(n: usize, turns: usize) -> Vec<Conversation> {
        synth_corpus(&SynthConfig { n_sessions: n, turns_per_session: turns, dim: 3, ..Default::default() }).unwrap()
    }

    #[test]
    fn ten_sessions_of_eight_pairs_give_160_balanced_items() {
        let c = corpus(10, 9);
        let refs: Vec<_> = c.iter().collect();
        let stream = make_training_batches(&refs, 1, 0, true).unwrap();
        assert_eq!(stream.len(), 160);
        assert_eq!(stream.iter().filter(|p| p.label == REAL).count(), 80);
        for batch in stream.chunks(16) {
            let real = batch.iter().filter(|p| p.label == REAL).count() as i64;
            assert!((2 * real - batch.len() as i64).abs() <= 1);
        }
    }

    #[test]
    fn same_seed_and_epoch_repeat_exactly() {
        let c = corpus(6, 5);
        let refs: Vec<_> = c.iter().collect();
        let a = make_training_batches(&refs, 3, 2, true).unwrap();
        assert_eq!(a, make_training_batches(&refs, 3, 2, true).unwrap());
        assert_ne!(a, make_training_batches(&refs, 3, 3, true).unwrap());
    }

    #[test]
    fn fake_pairs_differ_from_real_pairs_at_the_same_slot() {
        let c = corpus(20, 7);
        let refs: Vec<_> = c.iter().collect();
        let (real, fake) = labeled_pairs(&refs, 9, 0).unwrap();
        assert_eq!(real.len(), fake.len());
        for (r, f) in real.iter().zip(&fake) {
            assert_eq!((r.pair.session_id.as_str(), r.pair.pair_index), (f.pair.session_id.as_str(), f.pair.pair_index));
            let same = r.pair.leading.frames == f.pair.leading.frames && r.pair.responding.frames == f.pair.responding.frames;
            assert!(!same);
        }
    }

    #[test]
    fn fixed_shuffles_ignore_epoch_for_fakes() {
        let c = corpus(4, 5);
        let refs: Vec<_> = c.iter().collect();
        let fakes = |epoch| {
            let mut v: Vec<_> = make_training_batches(&refs, 1, epoch, false)
                .unwrap()
                .into_iter()
                .filter(|p| p.label == FAKE)
                .map(|p| (p.pair.session_id, p.pair.pair_index, p.pair.leading.turn_index))
                .collect();
            v.sort();
            v
        };
        assert_eq!(fakes(1), fakes(2));
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(matches!(make_training_batches(&[], 0, 0, true), Err(CedError::EmptyCorpus(_))));
    }
}
