//! Collaborative training in sensor networks, cast as inference on an
//! undirected graphical model.
//!
//! Every sensor trains locally (bootstrapped estimators) and the network then
//! runs a global inference pass over the communication graph:
//!
//! * [`message_passing`]: scalar Gaussian sum-product for parametrized
//!   estimators, plus a two-state discrete sum-product used for hypothesis
//!   testing.
//! * [`sampler`]: Gibbs and greedy single-site updates over bootstrapped
//!   decision-tree particles for non-parametrized estimators.
//!
//! [`regression`] and [`experiment`] wire these into the two end-to-end
//! simulations; [`oracle`] holds brute-force reference implementations used
//! to cross-check both inference routes on small instances.

pub mod classifier;
pub mod data;
pub mod experiment;
pub mod graph;
pub mod message_passing;
pub mod oracle;
pub mod regression;
pub mod sampler;
pub mod seeds;

pub use graph::{SensorId, Topology};
