//! Minimal batched tensor layers with hand-written backward passes.

pub mod conv;
pub mod layers;
pub mod lstm;
pub mod params;

pub use layers::{Linear, Mlp, Mode};
pub use lstm::{Lstm, LstmState};
pub use params::{Grads, Param, ParamId, ParamStore};
