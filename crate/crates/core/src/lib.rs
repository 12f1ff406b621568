//! Switching diffusions whose discrete mode jumps with rates that depend on
//! the recent path of the continuous state, over a countable mode space.

pub mod certify;
pub mod chain;
pub mod cli;
pub mod error;
pub mod mode;
pub mod model;
pub mod segment;
pub mod sim;
pub mod spectra;
pub mod verify;

pub use error::{Error, Result};
pub use mode::{Mode, PerMode, RateRow};
pub use segment::Segment;
