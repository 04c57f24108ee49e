//! Scalar Gaussian belief propagation.
//!
//! Node potentials are `exp(-(x - mu)^2 / (2 var))` and edge potentials are
//! `exp(-(x_s - x_t)^2 / (2 lambda^2))`. Messages stay Gaussian, so the
//! sum-product recursion on message `t -> s` becomes
//!
//! ```text
//! precision = 1/var_t + sum_{u in N(t)\s} 1/var_ut
//! mean_ts   = (mu_t/var_t + sum_{u in N(t)\s} mu_ut/var_ut) / precision
//! var_ts    = lambda_ts^2 + 1/precision
//! ```
//!
//! and the marginal at `t` uses the same sums over all of `N(t)` without the
//! `lambda^2` term. The normalizer of the joint density is never formed.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{SensorId, Topology};

#[derive(Debug, Error, PartialEq)]
pub enum BpError {
    #[error("expected {expected} {what}, got {got}")]
    SizeMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid {what} at index {index}: {value}")]
    InvalidInput {
        what: &'static str,
        index: usize,
        value: f64,
    },
    #[error("non-finite message on edge {from} -> {to}")]
    NonFinite { from: SensorId, to: SensorId },
    #[error("loopy topology: exact inference requires a tree")]
    NotATree,
}

/// Local potential `(mean, variance)` of one sensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianPotential {
    pub mean: f64,
    pub variance: f64,
}

impl GaussianPotential {
    pub fn new(mean: f64, variance: f64) -> Self {
        Self { mean, variance }
    }

    pub fn is_valid(&self) -> bool {
        self.mean.is_finite() && self.variance.is_finite() && self.variance > 0.0
    }

    pub fn precision(&self) -> f64 {
        self.variance.recip()
    }
}

/// Squared smoothness `lambda^2` of one edge's agreement potential.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeSmoothness {
    pub lambda_sq: f64,
}

impl EdgeSmoothness {
    pub fn new(lambda_sq: f64) -> Self {
        Self { lambda_sq }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianMessage {
    pub mean: f64,
    pub variance: f64,
}


#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianMarginal {
    pub mean: f64,
    pub variance: f64,
}

impl GaussianMarginal {
    /// Mode of the marginal; for a Gaussian this is the mean.
    pub fn map_estimate(&self) -> f64 {
        self.mean
    }
}

pub fn map_estimate(marginal: &GaussianMarginal) -> f64 {
    marginal.map_estimate()
}

/// `sum(mu/var) / sum(1/var)`, or `None` for an empty slice.
pub fn precision_weighted_average(potentials: &[GaussianPotential]) -> Option<f64> {
    if potentials.is_empty() {
        return None;
    }
    let (num, den) = potentials.iter().fold((0.0, 0.0), |(num, den), p| {
        (num + p.mean / p.variance, den + 1.0 / p.variance)
    });
    Some(num / den)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Schedule {
    /// Every directed message is recomputed from the previous round's table.
    Synchronous,
    /// Directed messages are updated in place in ascending edge order.
    Sequential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BpConfig {
    pub max_rounds: usize,
    /// Stop once the largest per-message `|dmean| + |dvar|` drops below this.
    pub convergence_tol: f64,
    pub schedule: Schedule,
    /// Every message starts as `(0, initial_variance)`. A proper but nearly
    /// flat start; a tight start keeps pulling loopy graphs toward 0 long
    /// after the tree-like part of the messages has settled.
    pub initial_variance: f64,
}

impl Default for BpConfig {
    fn default() -> Self {
        Self {
            max_rounds: 1000,
            convergence_tol: 1e-10,
            schedule: Schedule::Synchronous,
            initial_variance: 1e12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BpReport {
    pub rounds: usize,
    pub converged: bool,
    /// Largest message change of each round, starting at round 1.
    pub trace: Vec<f64>,
}

impl BpReport {
    /// `round,max_message_delta` CSV.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("round,max_message_delta\n");
        for (i, delta) in self.trace.iter().enumerate() {
            let _ = writeln!(out, "{},{delta:e}", i + 1);
        }
        out
    }
}

fn fuse<'a>(
    local: &GaussianPotential,
    incoming: impl IntoIterator<Item = &'a GaussianMessage>,
) -> (f64, f64) {
    incoming.into_iter().fold(
        (local.mean / local.variance, 1.0 / local.variance),
        |(info, precision), m| (info + m.mean / m.variance, precision + 1.0 / m.variance),
    )
}

/// Message sent by a sensor with potential `local`, given the messages it
/// received from every neighbor except the recipient.
///
/// Returns `None` if any intermediate value is not finite.
pub fn gaussian_message_update<'a>(
    local: &GaussianPotential,
    incoming: impl IntoIterator<Item = &'a GaussianMessage>,
    edge: EdgeSmoothness,
) -> Option<GaussianMessage> {
    let (info, precision) = fuse(local, incoming);
    let msg = GaussianMessage {
        mean: info / precision,
        variance: edge.lambda_sq + precision.recip(),
    };
    (msg.mean.is_finite() && msg.variance.is_finite() && msg.variance > 0.0).then_some(msg)
}

/// Message table and update loop for one graph.
///
/// Undirected edge `i = (a, b)` with `a < b` owns directed slots `2i`
/// (`a -> b`) and `2i + 1` (`b -> a`).
#[derive(Debug, Clone)]
pub struct GaussianBp<'a> {
    topo: &'a Topology,
    potentials: &'a [GaussianPotential],
    smoothness: &'a [EdgeSmoothness],
    /// For each directed slot `t -> s`, the slots `u -> t` with `u != s`.
    sources: Vec<Vec<usize>>,
    /// For each sensor, the slots of all messages it receives.
    inbox: Vec<Vec<usize>>,
    messages: Vec<GaussianMessage>,
}

impl<'a> GaussianBp<'a> {
    pub fn new(
        topo: &'a Topology,
        potentials: &'a [GaussianPotential],
        smoothness: &'a [EdgeSmoothness],
        initial_variance: f64,
    ) -> Result<Self, BpError> {
        if !(initial_variance > 0.0 && initial_variance.is_finite()) {
            return Err(BpError::InvalidInput {
                what: "initial message variance",
                index: 0,
                value: initial_variance,
            });
        }
        if potentials.len() != topo.num_sensors() {
            return Err(BpError::SizeMismatch {
                what: "potentials",
                expected: topo.num_sensors(),
                got: potentials.len(),
            });
        }
        if smoothness.len() != topo.num_edges() {
            return Err(BpError::SizeMismatch {
                what: "edge smoothness values",
                expected: topo.num_edges(),
                got: smoothness.len(),
            });
        }
        if let Some((index, p)) = potentials.iter().enumerate().find(|(_, p)| !p.is_valid()) {
            return Err(BpError::InvalidInput {
                what: "potential variance",
                index,
                value: p.variance,
            });
        }
        if let Some((index, e)) = smoothness
            .iter()
            .enumerate()
            .find(|(_, e)| !(e.lambda_sq >= 0.0 && e.lambda_sq.is_finite()))
        {
            return Err(BpError::InvalidInput {
                what: "lambda^2",
                index,
                value: e.lambda_sq,
            });
        }

        let slots = 2 * topo.num_edges();
        let mut inbox = vec![Vec::new(); topo.num_sensors()];
        for d in 0..slots {
            let (_, to) = Self::endpoints_of(topo, d);
            inbox[to].push(d);
        }
        let sources = (0..slots)
            .map(|d| {
                let (from, to) = Self::endpoints_of(topo, d);
                inbox[from]
                    .iter()
                    .copied()
                    .filter(|&e| Self::endpoints_of(topo, e).0 != to)
                    .collect()
            })
            .collect();

        Ok(Self {
            topo,
            potentials,
            smoothness,
            sources,
            inbox,
            messages: vec![
                GaussianMessage {
                    mean: 0.0,
                    variance: initial_variance,
                };
                slots
            ],
        })
    }

    fn endpoints_of(topo: &Topology, slot: usize) -> (SensorId, SensorId) {
        let (a, b) = topo.edges()[slot / 2];
        if slot % 2 == 0 {
            (a, b)
        } else {
            (b, a)
        }
    }

    /// `(from, to)` of a directed message slot.
    pub fn endpoints(&self, slot: usize) -> (SensorId, SensorId) {
        Self::endpoints_of(self.topo, slot)
    }

    pub fn messages(&self) -> &[GaussianMessage] {
        &self.messages
    }

    fn recompute(&self, slot: usize, table: &[GaussianMessage]) -> Result<GaussianMessage, BpError> {
        let (from, to) = self.endpoints(slot);
        gaussian_message_update(
            &self.potentials[from],
            self.sources[slot].iter().map(|&u| &table[u]),
            self.smoothness[slot / 2],
        )
        .ok_or(BpError::NonFinite { from, to })
    }

    /// One round over all directed messages; returns the largest change.
    pub fn step(&mut self, schedule: Schedule) -> Result<f64, BpError> {
        let mut delta: f64 = 0.0;
        match schedule {
            Schedule::Synchronous => {
                let next = (0..self.messages.len())
                    .map(|d| self.recompute(d, &self.messages))
                    .collect::<Result<Vec<_>, _>>()?;
                for (old, new) in self.messages.iter().zip(&next) {
                    delta = delta.max(change(old, new));
                }
                self.messages = next;
            }
            Schedule::Sequential => {
                for d in 0..self.messages.len() {
                    let new = self.recompute(d, &self.messages)?;
                    delta = delta.max(change(&self.messages[d], &new));
                    self.messages[d] = new;
                }
            }
        }
        Ok(delta)
    }

    /// Marginal of every sensor under the current message table.
    pub fn marginals(&self) -> Vec<GaussianMarginal> {
        (0..self.topo.num_sensors())
            .map(|t| {
                let (info, precision) = fuse(
                    &self.potentials[t],
                    self.inbox[t].iter().map(|&d| &self.messages[d]),
                );
                GaussianMarginal {
                    mean: info / precision,
                    variance: precision.recip(),
                }
            })
            .collect()
    }
}

fn change(old: &GaussianMessage, new: &GaussianMessage) -> f64 {
    (new.mean - old.mean).abs() + (new.variance - old.variance).abs()
}

/// Runs message passing until the largest message change falls below
/// `cfg.convergence_tol` or `cfg.max_rounds` is reached. Non-convergence is
/// reported in [`BpReport`], not treated as an error.
pub fn run_gaussian_bp(
    topo: &Topology,
    potentials: &[GaussianPotential],
    smoothness: &[EdgeSmoothness],
    cfg: &BpConfig,
) -> Result<(Vec<GaussianMarginal>, BpReport), BpError> {
    let mut bp = GaussianBp::new(topo, potentials, smoothness, cfg.initial_variance)?;
    let mut report = BpReport {
        rounds: 0,
        converged: topo.num_edges() == 0,
        trace: Vec::new(),
    };
    while !report.converged && report.rounds < cfg.max_rounds {
        let delta = bp.step(cfg.schedule)?;
        report.rounds += 1;
        report.trace.push(delta);
        report.converged = delta < cfg.convergence_tol;
    }
    Ok((bp.marginals(), report))
}
