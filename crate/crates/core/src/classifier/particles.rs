use rand::Rng;

use super::{
    train_tree, CategoricalDataset, ClassifierError, DecisionTree, KernelParams, PredictionVector,
    TreeParams,
};
use crate::graph::SensorId;
use crate::seeds;

/// Bootstrapped classifiers of one sensor, with their predictions on the
/// sensor's own rows cached.
#[derive(Debug, Clone)]
pub struct ParticleSet {
    owner: SensorId,
    particles: Vec<DecisionTree>,
    local_data: CategoricalDataset,
    cache: Vec<PredictionVector>,
}

impl ParticleSet {
    pub fn new(
        owner: SensorId,
        particles: Vec<DecisionTree>,
        local_data: CategoricalDataset,
    ) -> Result<Self, ClassifierError> {
        if particles.is_empty() {
            return Err(ClassifierError::NoParticles);
        }
        let cache = particles
            .iter()
            .map(|t| t.predict(&local_data))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            owner,
            particles,
            local_data,
            cache,
        })
    }

    pub fn owner(&self) -> SensorId {
        self.owner
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn particles(&self) -> &[DecisionTree] {
        &self.particles
    }

    pub fn local_data(&self) -> &CategoricalDataset {
        &self.local_data
    }

    /// Predictions of particle `j` on the local rows.
    pub fn local_predictions(&self, j: usize) -> &PredictionVector {
        &self.cache[j]
    }

    pub fn cached(&self) -> &[PredictionVector] {
        &self.cache
    }
}

/// `n` indices drawn uniformly with replacement from `0..n`.
pub fn bootstrap_indices(n: usize, rng: &mut impl Rng) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// `n_particles` trees, each trained on its own bootstrap resample of
/// `shard`. Particle `j` draws from stream `(PARTICLES, j)` under `seed`.
pub fn bootstrap_particles(
    owner: SensorId,
    shard: &CategoricalDataset,
    n_particles: usize,
    params: TreeParams,
    seed: u64,
) -> Result<ParticleSet, ClassifierError> {
    if shard.is_empty() {
        return Err(ClassifierError::EmptyDataset);
    }
    let trees = (0..n_particles)
        .map(|j| {
            let mut rng = seeds::rng(seed, seeds::PARTICLES, j as u64);
            let resample = shard.select(&bootstrap_indices(shard.len(), &mut rng));
            train_tree(&resample, params)
        })
        .collect::<Result<Vec<_>, _>>()?;
    ParticleSet::new(owner, trees, shard.clone())
}

/// Unnormalized local density `sum_j K(h_j, f)` of a classifier whose
/// predictions on the owner's rows are `f`.
pub fn local_rho(
    ps: &ParticleSet,
    f: &PredictionVector,
    params: &KernelParams,
) -> Result<f64, ClassifierError> {
    ps.cached().iter().map(|h| params.kernel(h, f)).sum()
}

/// Row-wise majority over all trees; ties go to 0.
pub fn majority_vote(
    trees: &[DecisionTree],
    data: &CategoricalDataset,
) -> Result<PredictionVector, ClassifierError> {
    if trees.is_empty() {
        return Err(ClassifierError::NoParticles);
    }
    let votes = trees
        .iter()
        .map(|t| t.predict(data))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((0..data.len())
        .map(|i| {
            let ones = votes.iter().filter(|v| v.get(i)).count();
            2 * ones > trees.len()
        })
        .collect())
}
