//! HTTP service and command-line front end for the kwexpert engine.

pub mod cli;
pub mod config;
pub mod engine;
pub mod http;

pub use config::{Config, ConfigError, ConfigLayer};
pub use engine::{Engine, EngineError, SearchRequest, SearchResponse};
