//! Two-hypothesis sum-product with an agreement edge potential.
//!
//! Each sensor holds unnormalized local likelihoods of `H0` and `H1`. Edges
//! carry `[[1, delta], [delta, 1]]`; with `delta = 0` adjacent sensors are
//! forced to agree, so on a tree every sensor's marginal is proportional to
//! the product of all local likelihoods and the distributed decision matches
//! a centralized likelihood-ratio test.

use serde::{Deserialize, Serialize};

use super::gaussian::BpError;
use crate::graph::Topology;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Hypothesis {
    H0,
    H1,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscretePotential {
    pub weight0: f64,
    pub weight1: f64,
}

impl DiscretePotential {
    pub fn new(weight0: f64, weight1: f64) -> Self {
        Self { weight0, weight1 }
    }

    fn is_valid(&self) -> bool {
        self.weight0 >= 0.0
            && self.weight1 >= 0.0
            && self.weight0.is_finite()
            && self.weight1.is_finite()
            && self.weight0 + self.weight1 > 0.0
    }

    fn as_array(&self) -> [f64; 2] {
        [self.weight0, self.weight1]
    }
}

/// Off-diagonal weight of the edge potential; `0` is the exact Dirac form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeAgreement {
    pub delta: f64,
}

impl EdgeAgreement {
    pub const DIRAC: Self = Self { delta: 0.0 };

    fn weight(&self, a: usize, b: usize) -> f64 {
        if a == b {
            1.0
        } else {
            self.delta
        }
    }
}

impl Default for EdgeAgreement {
    fn default() -> Self {
        Self::DIRAC
    }
}

fn decide(belief: [f64; 2]) -> Hypothesis {
    if belief[1] > belief[0] {
        Hypothesis::H1
    } else {
        Hypothesis::H0
    }
}

fn normalized(v: [f64; 2]) -> [f64; 2] {
    let sum = v[0] + v[1];
    if sum > 0.0 {
        [v[0] / sum, v[1] / sum]
    } else {
        v
    }
}

/// Per-sensor MAP decision from two-state sum-product. Ties go to `H0`.
///
/// With `require_exact` the topology must be a forest; messages are then
/// exact after `diameter` synchronous rounds. Otherwise loopy graphs are
/// iterated until messages stop changing (or `50 * m` rounds).
pub fn discrete_bp_map(
    topo: &Topology,
    potentials: &[DiscretePotential],
    agreement: EdgeAgreement,
    require_exact: bool,
) -> Result<Vec<Hypothesis>, BpError> {
    let m = topo.num_sensors();
    if potentials.len() != m {
        return Err(BpError::SizeMismatch {
            what: "potentials",
            expected: m,
            got: potentials.len(),
        });
    }
    if let Some((index, p)) = potentials.iter().enumerate().find(|(_, p)| !p.is_valid()) {
        return Err(BpError::InvalidInput {
            what: "discrete weights",
            index,
            value: p.weight0 + p.weight1,
        });
    }
    if !(agreement.delta >= 0.0 && agreement.delta.is_finite()) {
        return Err(BpError::InvalidInput {
            what: "agreement delta",
            index: 0,
            value: agreement.delta,
        });
    }
    let exact = topo.is_tree();
    if require_exact && !exact {
        return Err(BpError::NotATree);
    }

    // directed slot 2i = a -> b, 2i + 1 = b -> a for edge i = (a, b)
    let edges = topo.edges();
    let endpoints = |d: usize| {
        let (a, b) = edges[d / 2];
        if d % 2 == 0 {
            (a, b)
        } else {
            (b, a)
        }
    };
    let slot = |from: usize, to: usize| {
        let i = topo.edge_index(from, to).expect("adjacent sensors share an edge");
        if from < to {
            2 * i
        } else {
            2 * i + 1
        }
    };

    let mut messages = vec![[0.5, 0.5]; 2 * edges.len()];
    let max_rounds = if exact { topo.diameter() } else { 50 * m };
    for _ in 0..max_rounds {
        let next: Vec<[f64; 2]> = (0..messages.len())
            .map(|d| {
                let (from, to) = endpoints(d);
                let mut local = potentials[from].as_array();
                for &u in topo.adj(from) {
                    if u != to {
                        let incoming = messages[slot(u, from)];
                        local[0] *= incoming[0];
                        local[1] *= incoming[1];
                    }
                }
                normalized([0, 1].map(|xs| {
                    (0..2).map(|xt| agreement.weight(xs, xt) * local[xt]).sum()
                }))
            })
            .collect();
        let delta = messages
            .iter()
            .zip(&next)
            .map(|(a, b)| (a[0] - b[0]).abs().max((a[1] - b[1]).abs()))
            .fold(0.0, f64::max);
        messages = next;
        if !exact && delta < 1e-14 {
            break;
        }
    }

    Ok((0..m)
        .map(|s| {
            let mut belief = potentials[s].as_array();
            for &u in topo.adj(s) {
                let incoming = messages[slot(u, s)];
                belief[0] *= incoming[0];
                belief[1] *= incoming[1];
                belief = normalized(belief);
            }
            decide(belief)
        })
        .collect())
}

/// Likelihood-ratio decision on the pooled data: compares the products of
/// all local weights (in log space). Ties go to `H0`.
pub fn centralized_likelihood_decision(potentials: &[DiscretePotential]) -> Hypothesis {
    let (log0, log1) = potentials.iter().fold((0.0, 0.0), |(l0, l1), p| {
        (l0 + p.weight0.ln(), l1 + p.weight1.ln())
    });
    if log1 > log0 {
        Hypothesis::H1
    } else {
        Hypothesis::H0
    }
}
