pub mod attention;
pub mod autodiff;
pub mod baselines;
pub mod cli;
pub mod corpus;
pub mod decoder;
pub mod embeddings;
pub mod encoder;
pub mod error;
pub mod inference;
pub mod model;
pub mod rouge;
pub mod training;

pub use error::{Error, Result};
