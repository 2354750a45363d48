//! Divide-and-contrast source-free domain adaptation on feature-vector
//! datasets.
//!
//! A source model (MLP extractor plus frozen linear classifier) is trained on
//! labeled source data, then adapted to an unlabeled target set. Target
//! samples are split by prediction confidence into source-like and
//! target-specific groups; a momentum memory bank supplies class centroids,
//! instance features and neighbors for an adaptive contrastive loss, and a
//! memory-bank MMD term aligns the two groups.

pub mod analysis;
pub mod augment;
pub mod bank;
pub mod data;
pub mod desk;
pub mod error;
pub mod linalg;
pub mod losses;
pub mod model;
pub mod optim;
pub mod pseudo;
pub mod report;
pub mod rng;
pub mod trainer;

pub use error::{DacError, Result};
