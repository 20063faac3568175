// NaN must fail validation, so `!(x > 0.0)` is deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod adversary;
pub mod config;
pub mod curiosity;
pub mod evalkit;
pub mod him;
pub mod metrics;
pub mod motion;
pub mod net;
pub mod rng;
pub mod runs;
pub mod sim;
pub mod trainer;
