//! Sum-product message passing on the sensor graph.
//!
//! [`gaussian`] covers the scalar parametrized case, where every potential
//! and every message stays Gaussian and an update reduces to a
//! (mean, variance) recursion. [`discrete`] is the two-hypothesis case with
//! an agreement-enforcing edge potential.

pub mod discrete;
pub mod gaussian;

pub use discrete::{
    centralized_likelihood_decision, discrete_bp_map, DiscretePotential, EdgeAgreement, Hypothesis,
};
pub use gaussian::{
    gaussian_message_update, map_estimate, precision_weighted_average, run_gaussian_bp, BpConfig,
    BpError, BpReport, EdgeSmoothness, GaussianBp, GaussianMarginal, GaussianMessage,
    GaussianPotential, Schedule,
};
