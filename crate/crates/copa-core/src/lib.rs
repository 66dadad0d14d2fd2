//! Desk-scale workbench for coached multi-agent Q-learning: a tape-based
//! autodiff core, entity-based cooperative environments, attention
//! value-factorization networks with a periodic strategy coach, and a
//! deterministic trainer with gated-communication evaluation.

pub mod autodiff;
pub mod comms;
pub mod env;
pub mod eval;
pub mod manifest;
pub mod nets;
pub mod trainer;
pub mod verify;
