//! Cluster-ranking anaphora resolution: joint mention detection,
//! attention-based cluster ranking with cluster history, non-referring
//! expression identification, and extended coreference evaluation.

pub mod config;
pub mod corpus;
pub mod decoder;
pub mod encoder;
pub mod error;
pub mod metrics;
pub mod model;
pub mod numcore;
pub mod par;
pub mod predict;
pub mod scorer;
pub mod synthetic;
pub mod trainer;

pub use error::{Error, Result};
