pub mod dedup;
pub mod error;
pub mod examplegen;
pub mod filter;
pub mod ingest;
pub mod manifest;
pub mod pipeline;
pub mod report;
pub mod rng;
pub mod stats;
pub mod synth;
pub mod tokenizer;
pub mod vocab;

pub use error::{Error, Result};
