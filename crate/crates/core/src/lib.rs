//! Deterministic C-V2X Mode-4 sidelink simulator: sensing-based
//! semi-persistent scheduling with distributed congestion control.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod config;
pub mod dcc;
pub mod engine;
pub mod metrics;
pub mod mobility;
pub mod presets;
pub mod rng;
pub mod sps;
pub mod units;
