//! Non-parametrized estimators: categorical decision trees, their binary
//! prediction signatures, the similarity kernel between signatures, and
//! bootstrapped particle sets.

mod dataset;
mod kernel;
mod particles;
mod tree;

pub use dataset::{CategoricalDataset, DatasetError, MAX_ARITY};
pub use kernel::{edge_similarity, kernel, KernelParams, PredictionVector};
pub use particles::{bootstrap_indices, bootstrap_particles, local_rho, majority_vote, ParticleSet};
pub use tree::{predict, train_tree, DecisionTree, Node, TreeParams};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ClassifierError {
    #[error("prediction vectors differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty prediction vectors")]
    Empty,
    #[error("tree expects {expected} features, dataset has {got}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("cannot train on an empty dataset")]
    EmptyDataset,
    #[error("at least one particle is required")]
    NoParticles,
    #[error("tree text: {0}")]
    Parse(String),
}
