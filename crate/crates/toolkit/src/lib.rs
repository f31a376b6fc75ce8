//! Word embedding toolkit: corpus preparation, CBOW training with Gumbel-box
//! or vector representations, and word-similarity evaluation.

pub mod cli;
pub mod corpus;
pub mod eval;
pub mod model;
pub mod trainer;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
