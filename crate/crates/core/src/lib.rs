//! Relation classification by ranking with a convolutional network.
//!
//! The pipeline is: parse and tokenize marked sentences ([`dataset`]), look up
//! word and word-position embeddings ([`embedding`]), build a fixed-size
//! sentence vector by windowed convolution and max-over-time pooling
//! ([`encoder`]), and score it against one embedding per relation label
//! ([`scoring`]). [`train`] holds the pairwise ranking loss, manual
//! backpropagation and SGD; [`eval`] the macro-F1 scorer and n-gram
//! attribution; [`model_file`] the portable on-disk format.

pub mod config;
pub mod dataset;
pub mod embedding;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod model_file;
pub mod scoring;
pub mod synthetic;
pub mod train;

pub use error::{Error, Result};
