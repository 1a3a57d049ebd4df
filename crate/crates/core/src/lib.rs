//! Acoustic neighbor embeddings.
//!
//! Variable-length phonetic sequences (posteriorgrams on the acoustic side,
//! subword transcriptions on the text side) are mapped to fixed-dimension
//! vectors whose Euclidean distances track phonetic confusability. Words are
//! then recognized by exact nearest-neighbor search over a vocabulary of
//! text embeddings.
//!
//! Modules:
//! - [`corpus`]: synthetic phonetic world and the corpus file formats
//! - [`encoder`]: bidirectional LSTM encoder with exact backpropagation
//! - [`loss`]: neighbor-embedding, triplet and distillation objectives
//! - [`sampler`]: pivot microbatches and triplet examples
//! - [`trainer`]: Adam, early stopping and the three training procedures
//! - [`search`]: exact nearest-neighbor classification
//! - [`eval`]: recognition accuracy, average precision and distance tables
//! - [`config`]: `key = value` settings files

mod binio;
pub mod config;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod loss;
pub mod par;
pub mod rng;
pub mod search;
pub mod sampler;
pub mod trainer;

pub use error::{Error, Result};
