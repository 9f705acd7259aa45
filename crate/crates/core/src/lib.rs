pub mod anticoncentration;
pub mod bootstrap;
pub mod error;
pub mod experiments;
pub mod harness;
pub mod order_stats;
pub mod randgen;
pub mod rng;
pub mod smooth;

pub use error::{Error, Result};
