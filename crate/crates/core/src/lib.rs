//! Keyword search over an inverted index, enriched by a production-rule
//! expert system that derives conclusions from the retrieved facts.

pub mod compose;
pub mod compression;
pub mod corpus;
pub mod inference;
pub mod query;
pub mod rules;

pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");
