pub mod error;
pub mod field;
pub mod flowkit;
pub mod gradcheck;
pub mod objectives;
pub mod occlusion;
pub mod selfsup;
pub mod selftest;
pub mod solver;
pub mod synth;

pub use error::{Error, Result};
