pub mod counter_machine;
pub mod error;
pub mod fixed_points;
pub mod grammar;
pub mod harness;
pub mod nn;
pub mod precision;
pub mod sampling;
pub mod selfcheck;
pub mod trace;

pub use error::{Error, Result};
