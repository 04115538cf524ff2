//! Conditional optimal transport for amortized likelihood-free inference.

pub mod benchmarks2d;
pub mod cli;
pub mod conditional;
pub mod darcy;
pub mod experiments;
pub mod grf;
pub mod kdtree;
pub mod measures;
pub mod metrics;
pub mod monge;
pub mod numeric;
pub mod ot;
pub mod pcn;
pub mod plugin;
pub mod rng;
