//! Co-simulation engine for heterogeneous embedded models: periodic
//! dataflow clusters statically scheduled and executed against an
//! event-driven multiprocessor platform model.
//!
//! The crate is organized bottom-up:
//! - [`time`], [`value`], [`rng`]: exact simulated time, sample values,
//!   reproducible random streams
//! - [`behavior`]: the block library executed by dataflow modules
//! - [`tdf`]: the dataflow graph model and its structural validation
//! - [`sched`]: attribute inference, static scheduling, causality
//!   analysis and repair

pub mod behavior;
pub mod casestudy;
pub mod cosim;
pub mod expr;
pub mod model;
pub mod platform;
pub mod rng;
pub mod sched;
pub mod tdf;
pub mod time;
pub mod value;

pub use time::SimTime;
pub use value::{Value, ValueType};
