pub mod beta;
pub mod data;
pub mod dist;
pub mod error;
pub mod eval;
mod par;
pub mod scoring;
pub mod search;

pub use error::{Error, Result};
