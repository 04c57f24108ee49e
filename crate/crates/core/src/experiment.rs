//! The distributed decision-tree experiment.
//!
//! Training rows are shuffled and dealt evenly to the sensors of a random
//! expected-degree graph. Every sensor bootstraps a few trees from its shard,
//! picks one locally, and the sampler then lets classifiers travel along
//! edges. The summary compares the sampler against a centralized tree,
//! exhaustive MAP, purely local training and a majority vote of all trees.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{
    bootstrap_particles, majority_vote, train_tree, CategoricalDataset, ClassifierError, KernelParams,
    TreeParams,
};
use crate::data::{split_and_shard, DataError, SplitSpec};
use crate::graph::{GraphError, Topology};
use crate::sampler::{
    brute_force_map, median, noncollaborative_baseline, run_sampler, EvalPolicy, ParticleNetwork,
    SamplerConfig, SamplerError, SamplerMode, SamplerRun, SweepOrder,
};
use crate::seeds;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifyConfig {
    pub sensors: usize,
    pub expected_degree: f64,
    pub particles: usize,
    pub rounds: usize,
    pub mode: SamplerMode,
    pub sweep: SweepOrder,
    pub train_count: usize,
    pub test_count: usize,
    pub tree: TreeParams,
    pub kernel: KernelParams,
    pub record_every: usize,
    pub seed: u64,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        Self {
            sensors: 20,
            expected_degree: 4.0,
            particles: 4,
            rounds: 4000,
            mode: SamplerMode::Greedy,
            sweep: SweepOrder::RandomSensor,
            train_count: 2000,
            test_count: 1196,
            tree: TreeParams::default(),
            kernel: KernelParams::default(),
            record_every: 100,
            seed: 0,
        }
    }
}

impl ClassifyConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |msg: String| Err(ExperimentError::Config(msg));
        if self.sensors == 0 {
            return bad("at least one sensor is required".into());
        }
        if self.particles == 0 {
            return bad("at least one particle per sensor is required".into());
        }
        if self.train_count == 0 || self.train_count % self.sensors != 0 {
            return bad(format!(
                "{} training rows cannot be dealt evenly to {} sensors",
                self.train_count, self.sensors
            ));
        }
        if self.test_count == 0 {
            return bad("the test set must be nonempty".into());
        }
        let max_degree = self.sensors.saturating_sub(1) as f64;
        if !(self.expected_degree >= 0.0 && self.expected_degree <= max_degree) {
            return bad(format!(
                "expected degree {} outside [0, {}]",
                self.expected_degree, max_degree
            ));
        }
        if self.tree.max_depth == 0 || self.tree.min_leaf == 0 {
            return bad("tree depth and leaf size must be positive".into());
        }
        if self.kernel.kernel_exponent < 1 || self.kernel.similarity_power < 1 {
            return bad("kernel exponents must be positive".into());
        }
        Ok(())
    }
}

/// Test errors of the compared approaches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifySummary {
    /// One tree trained on all training rows.
    pub centralized_tree: f64,
    /// Exhaustive MAP, each factor on its sensor's rows.
    pub brute_force_map: f64,
    /// Exhaustive MAP with every factor on the pooled rows.
    pub brute_force_map_pooled: f64,
    pub noncollaborative_median: f64,
    pub sampler_median: f64,
    /// Majority vote of every particle in the network.
    pub majority_vote: f64,
}

impl fmt::Display for ClassifySummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows = [
            ("centralized tree", self.centralized_tree),
            ("brute-force MAP", self.brute_force_map),
            ("brute-force MAP (pooled rows)", self.brute_force_map_pooled),
            ("non-collaborative (median)", self.noncollaborative_median),
            ("sampler (median)", self.sampler_median),
            ("majority vote", self.majority_vote),
        ];
        for (name, value) in rows {
            writeln!(f, "{name:<30} {value:.4}")?;
        }
        Ok(())
    }
}

#[derive(Debug)]
pub struct ClassifyRun {
    pub topology: Topology,
    pub network: ParticleNetwork,
    pub sampler: SamplerRun,
    pub summary: ClassifySummary,
}

/// Runs the protocol on `data`. Streams under the root seed: the split
/// `(SPLIT, 0)`, the graph `(TOPOLOGY, 0)`, sensor `s`'s bootstrap
/// `(PARTICLES, s)` and the sampler `(SAMPLER, 0)`.
pub fn run_classification(
    data: &CategoricalDataset,
    cfg: &ClassifyConfig,
) -> Result<ClassifyRun, ExperimentError> {
    cfg.validate()?;
    let split = SplitSpec {
        train_count: cfg.train_count,
        test_count: cfg.test_count,
        num_shards: cfg.sensors,
        seed: cfg.seed,
    };
    let (shards, test) = split_and_shard(data, &split)?;
    let topology = Topology::random_expected_degree(
        cfg.sensors,
        cfg.expected_degree,
        seeds::derive(cfg.seed, seeds::TOPOLOGY, 0),
    )?;

    let centralized = train_tree(&CategoricalDataset::concat(&shards), cfg.tree)?;
    let sets = shards
        .into_iter()
        .enumerate()
        .map(|(s, shard)| {
            bootstrap_particles(
                s,
                &shard,
                cfg.particles,
                cfg.tree,
                seeds::derive(cfg.seed, seeds::PARTICLES, s as u64),
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    let network = ParticleNetwork::new(topology.clone(), sets, cfg.kernel)?;

    let sampler_cfg = SamplerConfig {
        rounds: cfg.rounds,
        mode: cfg.mode,
        seed: cfg.seed,
        sweep: cfg.sweep,
        record_every: cfg.record_every,
    };
    let sampler = run_sampler(&sampler_cfg, &network, &test)?;

    let (local_map, _) = brute_force_map(&network, EvalPolicy::Local);
    let (pooled_map, _) = brute_force_map(&network, EvalPolicy::Pooled);
    let all_trees: Vec<_> = network.particle_sets().iter().flat_map(|ps| ps.particles()).cloned().collect();
    let summary = ClassifySummary {
        centralized_tree: centralized.error_rate(&test)?,
        brute_force_map: network.tree(local_map).error_rate(&test)?,
        brute_force_map_pooled: network.tree(pooled_map).error_rate(&test)?,
        noncollaborative_median: median(&noncollaborative_baseline(&network, &test)?),
        sampler_median: median(&sampler.final_errors),
        majority_vote: majority_vote(&all_trees, &test)?.error_rate(test.labels()),
    };
    Ok(ClassifyRun {
        topology,
        network,
        sampler,
        summary,
    })
}
