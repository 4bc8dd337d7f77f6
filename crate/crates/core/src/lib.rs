//! Contextual entrainment distance (CED) for dyadic conversations.
//!
//! The crate ingests speaker-attributed turns with frame-level features,
//! trains a conformer + cross-subject attention network to tell real
//! sessions from turn-shuffled ones, and measures entrainment as the
//! smooth-L1 distance between the pooled cross-encoder embeddings of
//! consecutive turns.

// `!(x > 0.0)` deliberately rejects NaN along with non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod corpus;
pub mod entrainment;
pub mod error;
pub mod model;
pub mod nn;
pub mod training;

pub use error::{CedError, Result};
