//! Distributed slope estimation for the line `z = k x`.
//!
//! Sensors sit uniformly in the unit square. The sensor at `(x, y)` observes
//! `k x` plus Gaussian noise of variance `sigma^2 sin^2(2 pi x)` and can read
//! the observations of neighbors within the communication radius. Each sensor
//! bootstraps a through-the-origin least-squares slope over its accessible
//! data, summarizes the bootstrap slopes as a Gaussian potential, and the
//! network then runs Gaussian belief propagation toward consensus.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::bootstrap_indices;
use crate::graph::{sample_unit_square, GraphError, SensorId, Topology};
use crate::message_passing::{
    BpConfig, BpError, EdgeSmoothness, GaussianBp, GaussianMarginal, GaussianPotential,
};
use crate::seeds;

/// Bootstrap variances are floored here so a potential stays proper.
pub const VARIANCE_FLOOR: f64 = 1e-12;
/// Variance given to sensors whose slope cannot be identified.
pub const UNINFORMATIVE_VARIANCE: f64 = 1e12;

#[derive(Debug, Error)]
pub enum RegressionError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Bp(#[from] BpError),
    #[error("slope unidentifiable: every observation has x = 0")]
    Unidentifiable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldObservation {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionConfig {
    pub num_sensors: usize,
    pub radius: f64,
    pub true_slope: f64,
    /// `sigma`; the noise standard deviation at `x` is `sigma |sin(2 pi x)|`.
    pub noise_scale: f64,
    pub bootstrap_reps: usize,
    /// `lambda^2` on every edge.
    pub lambda_sq: f64,
    pub seed: u64,
    pub test_grid_size: usize,
    pub bp: BpConfig,
}

impl Default for RegressionConfig {
    fn default() -> Self {
        Self {
            num_sensors: 50,
            radius: 0.2,
            true_slope: 1.0,
            noise_scale: 0.5,
            bootstrap_reps: 100,
            lambda_sq: 1e-8,
            seed: 7,
            test_grid_size: 100,
            bp: BpConfig::default(),
        }
    }
}

impl RegressionConfig {
    pub fn validate(&self) -> Result<(), RegressionError> {
        let bad = |m: String| Err(RegressionError::Config(m));
        if self.num_sensors == 0 {
            return bad("at least one sensor is required".into());
        }
        if !(self.radius >= 0.0 && self.radius.is_finite()) {
            return bad(format!("radius must be non-negative, got {}", self.radius));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return bad(format!("noise scale must be non-negative, got {}", self.noise_scale));
        }
        if !self.true_slope.is_finite() {
            return bad("true slope must be finite".into());
        }
        if self.bootstrap_reps < 2 {
            return bad(format!("need at least 2 bootstrap resamples, got {}", self.bootstrap_reps));
        }
        if !(self.lambda_sq >= 0.0 && self.lambda_sq.is_finite()) {
            return bad(format!("lambda^2 must be non-negative, got {}", self.lambda_sq));
        }
        if self.test_grid_size == 0 {
            return bad("test grid needs at least one point".into());
        }
        if self.bp.max_rounds == 0 || !(self.bp.convergence_tol > 0.0) {
            return bad("BP needs max_rounds >= 1 and a positive tolerance".into());
        }
        if !(self.bp.initial_variance > 0.0 && self.bp.initial_variance.is_finite()) {
            return bad(format!(
                "initial message variance must be positive, got {}",
                self.bp.initial_variance
            ));
        }
        Ok(())
    }
}

/// Noise standard deviation at abscissa `x`.
pub fn noise_std(noise_scale: f64, x: f64) -> f64 {
    noise_scale * (2.0 * PI * x).sin().abs()
}

/// One observation per sensor. Positions come from stream `POSITIONS`,
/// noise from stream `NOISE`.
pub fn generate_field(cfg: &RegressionConfig) -> Vec<FieldObservation> {
    let positions = sample_unit_square(cfg.num_sensors, &mut seeds::rng(cfg.seed, seeds::POSITIONS, 0));
    let mut noise = seeds::rng(cfg.seed, seeds::NOISE, 0);
    positions
        .into_iter()
        .map(|[x, y]| observe(cfg, x, y, &mut noise))
        .collect()
}

/// Noisy observation at a given position.
pub fn observe(cfg: &RegressionConfig, x: f64, y: f64, rng: &mut impl Rng) -> FieldObservation {
    let eps: f64 = StandardNormal.sample(rng);
    FieldObservation {
        x,
        y,
        z: cfg.true_slope * x + noise_std(cfg.noise_scale, x) * eps,
    }
}

/// The sensor's own observation followed by its neighbors', ascending.
pub fn accessible_data(
    obs: &[FieldObservation],
    topo: &Topology,
    s: SensorId,
) -> Result<Vec<FieldObservation>, GraphError> {
    let neighbors = topo.neighbors(s)?;
    Ok(std::iter::once(obs[s])
        .chain(neighbors.iter().map(|&t| obs[t]))
        .collect())
}

/// Least-squares slope through the origin, `sum(x z) / sum(x^2)`.
pub fn fit_through_origin<'a>(data: impl IntoIterator<Item = &'a FieldObservation>) -> Option<f64> {
    let (sxz, sxx) = data
        .into_iter()
        .fold((0.0, 0.0), |(sxz, sxx), o| (sxz + o.x * o.z, sxx + o.x * o.x));
    (sxx > 0.0).then(|| sxz / sxx)
}

/// Pooled least-squares slope over every observation.
pub fn centralized_baseline(obs: &[FieldObservation]) -> Result<f64, RegressionError> {
    fit_through_origin(obs).ok_or(RegressionError::Unidentifiable)
}

/// Gaussian summary of `reps` bootstrap slopes: sample mean and unbiased
/// sample variance (floored at [`VARIANCE_FLOOR`]). Resamples that contain
/// only `x = 0` points carry no slope information and are skipped.
pub fn bootstrap_slope_potential(
    data: &[FieldObservation],
    reps: usize,
    rng: &mut impl Rng,
) -> Result<GaussianPotential, RegressionError> {
    if fit_through_origin(data).is_none() {
        return Err(RegressionError::Unidentifiable);
    }
    let slopes: Vec<f64> = (0..reps)
        .filter_map(|_| {
            let idx = bootstrap_indices(data.len(), rng);
            fit_through_origin(idx.iter().map(|&i| &data[i]))
        })
        .collect();
    if slopes.is_empty() {
        return Err(RegressionError::Unidentifiable);
    }
    let n = slopes.len() as f64;
    let mean = slopes.iter().sum::<f64>() / n;
    let variance = if slopes.len() > 1 {
        slopes.iter().map(|k| (k - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok(GaussianPotential::new(mean, variance.max(VARIANCE_FLOOR)))
}

/// Mean over the grid `x = i/G, i = 1..=G` of `(k_hat x - k x)^2`.
pub fn test_error(estimate: f64, true_slope: f64, grid_size: usize) -> f64 {
    let g = grid_size as f64;
    let mean_sq_x = (1..=grid_size).map(|i| (i as f64 / g).powi(2)).sum::<f64>() / g;
    (estimate - true_slope).powi(2) * mean_sq_x
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: usize,
    /// Grid test error averaged over sensors.
    pub test_error: f64,
    /// Population variance of the sensors' current slope estimates.
    pub estimate_variance: f64,
}

impl RoundMetrics {
    pub fn from_estimates(round: usize, estimates: &[f64], cfg: &RegressionConfig) -> Self {
        let n = estimates.len() as f64;
        let mean = estimates.iter().sum::<f64>() / n;
        Self {
            round,
            test_error: estimates
                .iter()
                .map(|&k| test_error(k, cfg.true_slope, cfg.test_grid_size))
                .sum::<f64>()
                / n,
            estimate_variance: estimates.iter().map(|k| (k - mean).powi(2)).sum::<f64>() / n,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RegressionRun {
    pub observations: Vec<FieldObservation>,
    pub topology: Topology,
    pub potentials: Vec<GaussianPotential>,
    /// Sensors whose accessible data could not identify a slope.
    pub unidentifiable: Vec<SensorId>,
    /// Round 0 uses the local potentials alone; round `r` the marginals
    /// after `r` synchronous message rounds.
    pub rounds: Vec<RoundMetrics>,
    pub marginals: Vec<GaussianMarginal>,
    pub converged: bool,
}

impl RegressionRun {
    pub fn final_metrics(&self) -> RoundMetrics {
        *self.rounds.last().expect("round 0 is always recorded")
    }

    /// `round,test_error,estimate_variance`
    pub fn rounds_csv(&self) -> String {
        let mut out = String::from("round,test_error,estimate_variance\n");
        for r in &self.rounds {
            let _ = writeln!(out, "{},{:e},{:e}", r.round, r.test_error, r.estimate_variance);
        }
        out
    }

    /// `sensor,mean,variance`
    pub fn marginals_csv(&self) -> String {
        let mut out = String::from("sensor,mean,variance\n");
        for (s, m) in self.marginals.iter().enumerate() {
            let _ = writeln!(out, "{s},{:e},{:e}", m.mean, m.variance);
        }
        out
    }
}

/// Per-sensor bootstrap potentials; sensor `s` resamples with stream
/// `(BOOTSTRAP, s)`.
pub fn local_potentials(
    cfg: &RegressionConfig,
    obs: &[FieldObservation],
    topo: &Topology,
) -> Result<(Vec<GaussianPotential>, Vec<SensorId>), RegressionError> {
    let mut potentials = Vec::with_capacity(obs.len());
    let mut unidentifiable = Vec::new();
    for s in 0..obs.len() {
        let data = accessible_data(obs, topo, s)?;
        let mut rng = seeds::rng(cfg.seed, seeds::BOOTSTRAP, s as u64);
        match bootstrap_slope_potential(&data, cfg.bootstrap_reps, &mut rng) {
            Ok(p) => potentials.push(p),
            Err(RegressionError::Unidentifiable) => {
                unidentifiable.push(s);
                potentials.push(GaussianPotential::new(0.0, UNINFORMATIVE_VARIANCE));
            }
            Err(e) => return Err(e),
        }
    }
    Ok((potentials, unidentifiable))
}

/// Full experiment: field, geometric topology, bootstrap potentials, then
/// synchronous BP with metrics recorded after every round.
pub fn run_regression_experiment(cfg: &RegressionConfig) -> Result<RegressionRun, RegressionError> {
    cfg.validate()?;
    let observations = generate_field(cfg);
    let positions = observations.iter().map(|o| [o.x, o.y]).collect();
    let topology = Topology::from_positions(positions, cfg.radius)?;
    let (potentials, unidentifiable) = local_potentials(cfg, &observations, &topology)?;
    let smoothness = vec![EdgeSmoothness::new(cfg.lambda_sq); topology.num_edges()];

    let mut bp = GaussianBp::new(&topology, &potentials, &smoothness, cfg.bp.initial_variance)?;
    let local: Vec<f64> = potentials.iter().map(|p| p.mean).collect();
    let mut rounds = vec![RoundMetrics::from_estimates(0, &local, cfg)];
    let mut converged = topology.num_edges() == 0;
    while !converged && rounds.len() <= cfg.bp.max_rounds {
        let delta = bp.step(cfg.bp.schedule)?;
        let estimates: Vec<f64> = bp.marginals().iter().map(GaussianMarginal::map_estimate).collect();
        rounds.push(RoundMetrics::from_estimates(rounds.len(), &estimates, cfg));
        converged = delta < cfg.bp.convergence_tol;
    }
    let marginals = bp.marginals();
    drop(bp);

    Ok(RegressionRun {
        observations,
        topology,
        potentials,
        unidentifiable,
        rounds,
        marginals,
        converged,
    })
}
