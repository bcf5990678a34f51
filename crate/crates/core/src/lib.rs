//! One-class adversarial nets (OCAN) for fraud detection.

pub mod autoencoder;
pub mod checkpoint;
pub mod data;
pub mod detector;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod gan;
pub mod gradcheck;
pub mod lstm;
pub mod optim;
pub mod params;
pub mod plain_ae;
pub mod rng;
pub mod sequence;
pub mod tape;
pub mod tensor;

pub use error::{OcanError, Result};
