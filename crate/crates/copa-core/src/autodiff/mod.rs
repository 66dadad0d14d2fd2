//! Dense-tensor reverse-mode automatic differentiation in double precision.
//!
//! A [`Tape`] records every forward operation as a node in a flat arena and
//! replays the chain rule in reverse on [`Tape::backward`]. Graphs are
//! rebuilt from scratch on every training step; there is no caching layer.
//! All tensors are 2-D row-major `f64` matrices (scalars are `[1, 1]`).

mod ops;
mod store;
mod tape;

pub mod checkpoint;
pub mod gradcheck;

pub use gradcheck::{check_grads, GradcheckReport};
pub use store::{GradStats, ParamEntry, ParamStore};
pub use tape::{Shape, Tape, TapeError, Var};

/// Store tag for the online (trainable) parameter store.
pub const ONLINE_TAG: usize = 0;
/// Store tag for the frozen target store; its leaves never receive grads.
pub const TARGET_TAG: usize = 1;

#[cfg(test)]
mod tests;
