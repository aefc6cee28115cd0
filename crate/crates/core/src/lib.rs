//! Weakly supervised response-class mining and reply suggestion.
//!
//! The pipeline turns two-party conversation logs into a bank of curated
//! response classes ([`corpus`], [`encode`], [`simcluster`],
//! [`responsebank`]) and trains a label-smoothed softmax classifier that maps
//! a conversation context to a class whose editable exemplar is served
//! ([`classifier`]).

pub mod classifier;
pub mod corpus;
pub mod encode;
pub mod error;
pub mod responsebank;
pub mod simcluster;

pub use error::{Error, Result};
