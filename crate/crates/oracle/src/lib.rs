//! Reference implementations used to cross-check the simulator.
//!
//! Nothing here is clever on purpose. The checker re-derives schedule
//! guarantees by counting tokens, the enumerator searches the full
//! space of firing orders, and the standalone runner fires a cluster
//! with none of the engine's coupling machinery. Tests compare these
//! against the production code paths; agreement is the evidence.

pub mod check;
pub mod gen;
pub mod refsim;
