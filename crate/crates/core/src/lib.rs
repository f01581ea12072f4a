//! Physics-based model augmentation in a linear-fractional representation.

pub mod autodiff;
pub mod data;
pub mod error;
pub mod lfr;
pub mod msd;
pub mod neural;
pub mod structures;
pub mod training;

pub use error::{Error, Result};
