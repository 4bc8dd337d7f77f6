//! Minimal dense autodiff and optimisation used by the entrainment model.

pub mod adam;
pub mod params;
pub mod tape;

pub use adam::{Adam, AdamConfig};
pub use params::{Gradients, ParamId, ParamStore};
pub use tape::{Mat, Tape, Var};
