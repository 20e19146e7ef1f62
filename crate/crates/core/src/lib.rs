pub mod analysis;
pub mod bicop;
pub mod dependence;
pub mod error;
pub mod ingest;
pub mod json;
pub mod margins;
pub mod sample;
pub mod special;
pub mod structure;
pub mod vinefit;

#[cfg(test)]
mod testkit;

pub use error::{Error, Result};
