use super::{Conversation, Direction, TurnPair};
use crate::error::{CedError, Result};

/// One pair per adjacent cross-speaker turn pair, in temporal order.
/// Same-speaker neighbours (turns split by a long pause) form no pair.
pub fn make_turn_pairs(conv: &Conversation) -> Result<Vec<TurnPair>> {
    let mut pairs = Vec::new();
    for (slot, w) in conv.turns.windows(2).enumerate() {
        let (lead, resp) = (&w[0], &w[1]);
        if lead.speaker == resp.speaker {
            continue;
        }
        let (Some(lf), Some(rf)) = (&lead.features, &resp.features) else {
            return Err(CedError::FeatureStore(format!(
                "{}: turns {slot} and {} have no features attached",
                conv.session_id,
                slot + 1
            )));
        };
        pairs.push(TurnPair {
            session_id: conv.session_id.clone(),
            pair_index: pairs.len(),
            leading_slot: slot,
            leading: lf.clone(),
            responding: rf.clone(),
            direction: Direction::new(lead.speaker.clone(), resp.speaker.clone()),
        });
    }
    Ok(pairs)
}
