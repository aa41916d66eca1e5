//! File formats, training driver and command-line support for the
//! `pathqa-core` question-answering engine.

pub mod checkpoint;
pub mod config;
pub mod corpus;
pub mod dataset;
pub mod embeddings;
pub mod error;
pub mod evaluate;
pub mod explain;
pub mod gradcheck;
pub mod pipeline;
pub mod synthetic;
pub mod trainer;

pub use error::{Error, Result};
