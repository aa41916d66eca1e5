//! Multi-hop question answering over explicit entity paths.
//!
//! The crate is `no_std` with `alloc`: everything here is a pure function of
//! its inputs. File formats, threads and the command line live in the `pathqa`
//! companion crate.
//!
//! Pipeline, in order:
//!
//! 1. [`text`] tokenizes passages, finds entity mentions and chunks candidate
//!    entities.
//! 2. [`paths`] enumerates head → intermediate → candidate paths across
//!    passages (plus single-passage paths with a null intermediate).
//! 3. [`retrieval`] builds sentence passages for open-domain questions from
//!    idf-scored two-sentence chains.
//! 4. [`encoders`] and [`scorer`] turn each path into a context-based and a
//!    passage-based score on top of the [`autograd`] tape.
//! 5. [`train`] holds the loss, minibatch step and evaluation helpers.

#![no_std]
#![deny(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod autograd;
pub mod embedding;
pub mod encoders;
pub mod error;
pub mod instance;
pub mod paths;
pub mod retrieval;
pub mod rng;
pub mod scorer;
pub mod stopwords;
pub mod text;
pub mod train;

pub use error::{Error, Result};
