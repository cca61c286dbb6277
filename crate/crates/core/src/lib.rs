//! Evidence-grounded rumor detection.
//!
//! A claim is checked against an encyclopedia snapshot (TF-IDF retrieval of
//! documents and sentences, then a pairwise verifier), and classified as
//! rumor or non-rumor from two graphs: the reply tree of its conversation and
//! a star of retrieved evidence sentences. Sentences are encoded with a
//! BiLSTM; both graphs pass through GraphSAGE layers with max-pooling
//! aggregation, are read out by elementwise max, and are fused by a softmax
//! classifier.

pub mod config;
pub mod corpus;
pub mod diagnostics;
pub mod encoder;
pub mod erm;
mod error;
pub mod exec;
pub mod experiment;
pub mod graph;
pub mod model;
pub mod numerics;
pub mod sage;
pub mod synthetic;
pub mod text;

pub use error::{Error, Result};
