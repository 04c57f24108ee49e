//! Global inference over bootstrapped classifier particles.
//!
//! Every sensor holds one current classifier `f_s`. A single-site update
//! picks a sensor, fixes its neighbors' classifiers and redraws `f_s` from
//! its own particles plus the neighbors' current classifiers, weighted by
//!
//! ```text
//! prod_{t in N(s)} sim(f_t, f) * sum_j K(h_sj, f)
//! ```
//!
//! Kernels and similarities are always evaluated on the acting sensor's own
//! rows. Classifiers travel between sensors as trees, never as rows: each
//! sensor scores a foreign tree by running it on its local shard.

use std::cell::RefCell;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{
    CategoricalDataset, ClassifierError, DecisionTree, KernelParams, ParticleSet, PredictionVector,
};
use crate::graph::{SensorId, Topology};
use crate::seeds;

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("{sets} particle sets for a topology of {sensors} sensors")]
    SizeMismatch { sets: usize, sensors: usize },
    #[error("particle set {index} is owned by sensor {owner}")]
    WrongOwner { index: usize, owner: SensorId },
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
}

/// A particle identified by the sensor that trained it and its index there.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParticleRef {
    pub sensor: SensorId,
    pub index: usize,
}

impl ParticleRef {
    pub fn new(sensor: SensorId, index: usize) -> Self {
        Self { sensor, index }
    }
}

/// Which rows a kernel is evaluated on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalPolicy {
    /// Factor `s` uses sensor `s`'s rows only.
    Local,
    /// Every factor uses the union of all shards (centralized reference).
    Pooled,
}

/// Predictions of every particle in the network on one fixed set of rows.
#[derive(Debug, Clone)]
struct View {
    predictions: Vec<PredictionVector>,
}

/// Records which sensor's rows each kernel evaluation touched.
#[derive(Debug, Default)]
pub struct AccessLog {
    acting: RefCell<Option<SensorId>>,
    /// `(acting sensor, owner of the rows used)`
    pub evaluations: RefCell<Vec<(SensorId, SensorId)>>,
}

/// Topology plus particle sets, with every particle's predictions cached on
/// every sensor's rows.
#[derive(Debug)]
pub struct ParticleNetwork {
    topo: Topology,
    sets: Vec<ParticleSet>,
    params: KernelParams,
    offsets: Vec<usize>,
    refs: Vec<ParticleRef>,
    /// `views[s]`: all particles on sensor `s`'s rows.
    views: Vec<View>,
    pooled: View,
    log: Option<AccessLog>,
}

impl ParticleNetwork {
    pub fn new(
        topo: Topology,
        sets: Vec<ParticleSet>,
        params: KernelParams,
    ) -> Result<Self, SamplerError> {
        if sets.len() != topo.num_sensors() {
            return Err(SamplerError::SizeMismatch {
                sets: sets.len(),
                sensors: topo.num_sensors(),
            });
        }
        if let Some((index, ps)) = sets.iter().enumerate().find(|(i, ps)| ps.owner() != *i) {
            return Err(SamplerError::WrongOwner {
                index,
                owner: ps.owner(),
            });
        }
        let mut offsets = Vec::with_capacity(sets.len());
        let mut refs = Vec::new();
        for (s, ps) in sets.iter().enumerate() {
            offsets.push(refs.len());
            refs.extend((0..ps.len()).map(|j| ParticleRef::new(s, j)));
        }
        let trees: Vec<&DecisionTree> = sets.iter().flat_map(|ps| ps.particles()).collect();
        let view_on = |data: &CategoricalDataset| -> Result<View, ClassifierError> {
            Ok(View {
                predictions: trees.iter().map(|t| t.predict(data)).collect::<Result<_, _>>()?,
            })
        };
        let views = sets
            .iter()
            .map(|ps| view_on(ps.local_data()))
            .collect::<Result<Vec<_>, _>>()?;
        let pooled = view_on(&CategoricalDataset::concat(sets.iter().map(ParticleSet::local_data)))?;
        Ok(Self {
            topo,
            sets,
            params,
            offsets,
            refs,
            views,
            pooled,
            log: None,
        })
    }

    /// Enables recording of kernel row accesses.
    pub fn with_access_log(mut self) -> Self {
        self.log = Some(AccessLog::default());
        self
    }

    pub fn access_log(&self) -> Option<&AccessLog> {
        self.log.as_ref()
    }

    pub fn topology(&self) -> &Topology {
        &self.topo
    }

    pub fn particle_sets(&self) -> &[ParticleSet] {
        &self.sets
    }

    pub fn kernel_params(&self) -> &KernelParams {
        &self.params
    }

    pub fn num_sensors(&self) -> usize {
        self.sets.len()
    }

    /// All particles in `(sensor, index)` order.
    pub fn all_particles(&self) -> &[ParticleRef] {
        &self.refs
    }

    pub fn tree(&self, p: ParticleRef) -> &DecisionTree {
        &self.sets[p.sensor].particles()[p.index]
    }

    fn global(&self, p: ParticleRef) -> usize {
        self.offsets[p.sensor] + p.index
    }

    /// Predictions of `p` on sensor `s`'s rows.
    pub fn local_predictions(&self, s: SensorId, p: ParticleRef) -> &PredictionVector {
        &self.views[s].predictions[self.global(p)]
    }

    fn begin(&self, acting: SensorId) {
        if let Some(log) = &self.log {
            *log.acting.borrow_mut() = Some(acting);
        }
    }

    fn local_pair(&self, s: SensorId, a: ParticleRef, b: ParticleRef) -> (&PredictionVector, &PredictionVector) {
        if let Some(log) = &self.log {
            let acting = log.acting.borrow().unwrap_or(s);
            log.evaluations.borrow_mut().push((acting, s));
        }
        let view = &self.views[s];
        (&view.predictions[self.global(a)], &view.predictions[self.global(b)])
    }

    /// `K(a, b)` on sensor `s`'s rows.
    pub fn local_kernel(&self, s: SensorId, a: ParticleRef, b: ParticleRef) -> f64 {
        let (x, y) = self.local_pair(s, a, b);
        self.params.kernel(x, y).expect("views share the sensor's row count")
    }

    /// `sim(a, b)` on sensor `s`'s rows.
    pub fn local_similarity(&self, s: SensorId, a: ParticleRef, b: ParticleRef) -> f64 {
        let (x, y) = self.local_pair(s, a, b);
        self.params.similarity(x, y).expect("views share the sensor's row count")
    }

    fn pooled_kernel(&self, a: ParticleRef, b: ParticleRef) -> f64 {
        let view = &self.pooled;
        self.params
            .kernel(&view.predictions[self.global(a)], &view.predictions[self.global(b)])
            .expect("pooled views share a row count")
    }

    /// `sum_j K(h_sj, f)` under the given policy.
    pub fn rho(&self, s: SensorId, f: ParticleRef, policy: EvalPolicy) -> f64 {
        (0..self.sets[s].len())
            .map(|j| {
                let h = ParticleRef::new(s, j);
                match policy {
                    EvalPolicy::Local => self.local_kernel(s, h, f),
                    EvalPolicy::Pooled => self.pooled_kernel(h, f),
                }
            })
            .sum()
    }

    /// Test-set error of every particle, indexed like [`Self::all_particles`].
    pub fn test_errors(&self, test: &CategoricalDataset) -> Result<Vec<f64>, ClassifierError> {
        self.refs.iter().map(|&p| self.tree(p).error_rate(test)).collect()
    }

    pub(crate) fn error_of(&self, errors: &[f64], p: ParticleRef) -> f64 {
        errors[self.global(p)]
    }
}

/// Own particle maximizing `sum_j K(h_sj, h_sk)` on the sensor's rows; ties
/// go to the lowest index. Returns the index and its objective.
pub fn local_init(ps: &ParticleSet, params: &KernelParams) -> (usize, f64) {
    let cache = ps.cached();
    let mut best = (0, f64::NEG_INFINITY);
    for (k, f) in cache.iter().enumerate() {
        let score: f64 = cache
            .iter()
            .map(|h| params.kernel(h, f).expect("cached on the same rows"))
            .sum();
        if score > best.1 {
            best = (k, score);
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerMode {
    Gibbs,
    Greedy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepOrder {
    /// Each round picks a sensor uniformly at random.
    RandomSensor,
    /// Round `r` updates `perm[r mod M]` for one seeded permutation.
    FixedPermutation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Single-site updates to perform.
    pub rounds: usize,
    pub mode: SamplerMode,
    pub seed: u64,
    pub sweep: SweepOrder,
    /// Trace every sensor's test error every this many rounds (0: only the
    /// first and last round).
    pub record_every: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            rounds: 4000,
            mode: SamplerMode::Greedy,
            seed: 0,
            sweep: SweepOrder::RandomSensor,
            record_every: 100,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SamplerState {
    pub current: Vec<ParticleRef>,
    pub round: usize,
    rng: ChaCha8Rng,
    order: Vec<SensorId>,
}

impl SamplerState {
    /// Every sensor starts at its [`local_init`] particle. The generator is
    /// stream `(SAMPLER, 0)` under `seed`; a fixed sweep permutation, when
    /// used, is its first draw.
    pub fn initialize(net: &ParticleNetwork, seed: u64, sweep: SweepOrder) -> Self {
        let current = net
            .sets
            .iter()
            .enumerate()
            .map(|(s, ps)| ParticleRef::new(s, local_init(ps, &net.params).0))
            .collect();
        Self::with_current(current, seed, sweep)
    }

    /// State with an explicit assignment.
    pub fn with_current(current: Vec<ParticleRef>, seed: u64, sweep: SweepOrder) -> Self {
        let mut rng = seeds::rng(seed, seeds::SAMPLER, 0);
        let mut order: Vec<SensorId> = (0..current.len()).collect();
        match sweep {
            SweepOrder::FixedPermutation => order.shuffle(&mut rng),
            SweepOrder::RandomSensor => order.clear(),
        }
        Self {
            current,
            round: 0,
            rng,
            order,
        }
    }

    fn next_sensor(&mut self) -> SensorId {
        if self.order.is_empty() {
            self.rng.random_range(0..self.current.len())
        } else {
            self.order[self.round % self.order.len()]
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub particle: ParticleRef,
    pub weight: f64,
}

/// Candidate classifiers for sensor `s` with their unnormalized conditional
/// weights: own particles first, then neighbors' current classifiers in
/// ascending neighbor order. A candidate whose predictions on `s`'s rows
/// equal an earlier candidate's is dropped.
pub fn conditional_weights(net: &ParticleNetwork, s: SensorId, state: &SamplerState) -> Vec<Candidate> {
    let own = (0..net.sets[s].len()).map(|j| ParticleRef::new(s, j));
    let foreign = net.topo.adj(s).iter().map(|&t| state.current[t]);
    weigh(net, s, state, own.chain(foreign))
}

fn weigh(
    net: &ParticleNetwork,
    s: SensorId,
    state: &SamplerState,
    pool: impl Iterator<Item = ParticleRef>,
) -> Vec<Candidate> {
    net.begin(s);
    let mut out: Vec<Candidate> = Vec::new();
    for f in pool {
        let v = net.local_predictions(s, f);
        if out.iter().any(|c| net.local_predictions(s, c.particle) == v) {
            continue;
        }
        let agreement: f64 = net
            .topo
            .adj(s)
            .iter()
            .map(|&t| net.local_similarity(s, state.current[t], f))
            .product();
        out.push(Candidate {
            particle: f,
            weight: agreement * net.rho(s, f, EvalPolicy::Local),
        });
    }
    out
}

/// One Gibbs update: a sensor redraws its classifier from the normalized
/// conditional weights. All-zero weights keep the current classifier.
pub fn gibbs_step(net: &ParticleNetwork, state: &mut SamplerState) -> SensorId {
    let s = state.next_sensor();
    let candidates = conditional_weights(net, s, state);
    let total: f64 = candidates.iter().map(|c| c.weight).sum();
    if total > 0.0 && total.is_finite() {
        let mut u = state.rng.random::<f64>() * total;
        let mut chosen = candidates.last().expect("own particles are never empty").particle;
        for c in &candidates {
            if u < c.weight {
                chosen = c.particle;
                break;
            }
            u -= c.weight;
        }
        state.current[s] = chosen;
    }
    state.round += 1;
    s
}

/// Greedy candidates: the Gibbs candidates followed by the sensor's current
/// classifier, so an update can always keep what it has.
pub fn greedy_candidates(net: &ParticleNetwork, s: SensorId, state: &SamplerState) -> Vec<Candidate> {
    let own = (0..net.sets[s].len()).map(|j| ParticleRef::new(s, j));
    let foreign = net.topo.adj(s).iter().map(|&t| state.current[t]);
    weigh(net, s, state, own.chain(foreign).chain(std::iter::once(state.current[s])))
}

/// One greedy update: the sensor takes the first candidate of maximal weight.
pub fn greedy_step(net: &ParticleNetwork, state: &mut SamplerState) -> SensorId {
    let s = state.next_sensor();
    let candidates = greedy_candidates(net, s, state);
    let mut best = candidates[0];
    for c in &candidates[1..] {
        if c.weight > best.weight {
            best = *c;
        }
    }
    state.current[s] = best.particle;
    state.round += 1;
    s
}

pub fn step(net: &ParticleNetwork, state: &mut SamplerState, mode: SamplerMode) -> SensorId {
    match mode {
        SamplerMode::Gibbs => gibbs_step(net, state),
        SamplerMode::Greedy => greedy_step(net, state),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub round: usize,
    pub sensor: SensorId,
    pub test_error: f64,
}

#[derive(Debug, Clone)]
pub struct SamplerRun {
    pub state: SamplerState,
    pub trace: Vec<TraceRow>,
    pub initial_errors: Vec<f64>,
    pub final_errors: Vec<f64>,
}

impl SamplerRun {
    /// `round,sensor,test_error`
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("round,sensor,test_error\n");
        for r in &self.trace {
            let _ = writeln!(out, "{},{},{}", r.round, r.sensor, r.test_error);
        }
        out
    }

    /// `sensor,test_error_before,test_error_after`
    pub fn histogram_csv(&self) -> String {
        let mut out = String::from("sensor,test_error_before,test_error_after\n");
        for (s, (a, b)) in self.initial_errors.iter().zip(&self.final_errors).enumerate() {
            let _ = writeln!(out, "{s},{a},{b}");
        }
        out
    }
}

/// Initializes every sensor locally and performs `cfg.rounds` single-site
/// updates, tracing test error on `test`.
pub fn run_sampler(
    cfg: &SamplerConfig,
    net: &ParticleNetwork,
    test: &CategoricalDataset,
) -> Result<SamplerRun, SamplerError> {
    let errors = net.test_errors(test)?;
    let mut state = SamplerState::initialize(net, cfg.seed, cfg.sweep);
    let snapshot = |state: &SamplerState| -> Vec<f64> {
        state.current.iter().map(|&p| net.error_of(&errors, p)).collect()
    };
    let mut trace = Vec::new();
    let mut record = |state: &SamplerState| {
        for (sensor, e) in snapshot(state).into_iter().enumerate() {
            trace.push(TraceRow {
                round: state.round,
                sensor,
                test_error: e,
            });
        }
    };
    let initial_errors = snapshot(&state);
    record(&state);
    while state.round < cfg.rounds {
        step(net, &mut state, cfg.mode);
        if (cfg.record_every > 0 && state.round % cfg.record_every == 0) || state.round == cfg.rounds {
            record(&state);
        }
    }
    let final_errors = snapshot(&state);
    Ok(SamplerRun {
        state,
        trace,
        initial_errors,
        final_errors,
    })
}

/// `prod_s sum_j K(h_sj, f)`.
pub fn map_objective(net: &ParticleNetwork, f: ParticleRef, policy: EvalPolicy) -> f64 {
    (0..net.num_sensors()).map(|s| {
        net.begin(s);
        net.rho(s, f, policy)
    }).product()
}

/// Exhaustive maximizer of [`map_objective`] over every particle in the
/// network; ties go to the lowest `(sensor, index)`.
pub fn brute_force_map(net: &ParticleNetwork, policy: EvalPolicy) -> (ParticleRef, f64) {
    let mut best = (net.refs[0], f64::NEG_INFINITY);
    for &p in &net.refs {
        let value = map_objective(net, p, policy);
        if value > best.1 {
            best = (p, value);
        }
    }
    best
}

/// Test error of every sensor's locally initialized classifier.
pub fn noncollaborative_baseline(
    net: &ParticleNetwork,
    test: &CategoricalDataset,
) -> Result<Vec<f64>, ClassifierError> {
    net.sets
        .iter()
        .map(|ps| ps.particles()[local_init(ps, &net.params).0].error_rate(test))
        .collect()
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => v[n / 2],
        _ => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}
