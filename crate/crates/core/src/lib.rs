//! Composite re-ranking over pre-computed embeddings.
//!
//! Query terms are represented by composing stored token-group embeddings,
//! compared against LSH-compressed document term embeddings through RBF
//! kernel pooling, and combined additively with lexical and document-level
//! features.

pub mod bench;
pub mod codec;
pub mod compose;
pub mod error;
pub mod eval;
pub mod flops;
pub mod kernel;
pub mod lexical;
pub mod lsh;
pub mod parallel;
pub mod scorer;
pub mod store;
pub mod synth;
pub mod text;
pub mod train;
pub mod vector;
pub mod weights;

pub use error::{Error, Result};
