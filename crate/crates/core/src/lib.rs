//! Multi-agent exploration over a replicated dynamic topological graph.

// Validation uses `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod comms;
pub mod dtg;
pub mod partition;
pub mod planner;
pub mod sim;
pub mod world;
