//! Imagination embeddings for visual guessing games on a synthetic scene world.

pub mod analytics;
pub mod cli;
pub mod error;
pub mod gameplay;
pub mod guesser;
pub mod imagination;
pub mod numerics;
pub mod oracle;
pub mod rng;
pub mod world;

pub use error::{Error, Result};
