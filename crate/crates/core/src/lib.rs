//! Graph-convolutional generation of dependent expression classifiers and
//! valence-arousal regressors, trained in a multi-task setting.
//!
//! The pipeline: a correlation graph over 7 expression nodes and the two
//! affect dimensions ([`adjacency`]), node embeddings ([`embeddings`]), a
//! stack of graph convolutions producing the head matrices ([`gcn`]), a
//! feature extractor ([`backbone`]), heads and losses ([`heads`]), synthetic
//! data ([`datagen`]), training and evaluation ([`trainer`]) and post-hoc
//! similarity analysis ([`analysis`]).

pub mod adjacency;
pub mod analysis;
pub mod backbone;
pub mod cli;
pub mod datagen;
pub mod embeddings;
pub mod error;
pub mod gcn;
pub mod heads;
pub mod labels;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use tensor::{Tape, Tensor, Var};
