//! Brute-force references for small instances.
//!
//! Nothing here shares code with the sampler's scoring path: predictions are
//! recomputed row by row from the trees, distances are counted in plain
//! loops, and the Markov chain is enumerated state by state. The only
//! inputs taken from [`ParticleNetwork`] are the trees, shards and topology.

use std::collections::{BTreeMap, VecDeque};

use rand::Rng;
use serde::Serialize;

use crate::classifier::{bootstrap_particles, CategoricalDataset, KernelParams, ParticleSet, TreeParams};
use crate::data::{synthetic_categorical, SyntheticSpec};
use crate::graph::{SensorId, Topology};
use crate::message_passing::{
    centralized_likelihood_decision, discrete_bp_map, DiscretePotential, EdgeAgreement,
};
use crate::sampler::{
    brute_force_map, greedy_step, EvalPolicy, ParticleNetwork, ParticleRef, SamplerState, SweepOrder,
};
use crate::seeds;

/// Largest instance the enumeration oracles accept.
pub const MAX_SENSORS: usize = 4;
pub const MAX_PARTICLES: usize = 3;

fn naive_bits(net: &ParticleNetwork, p: ParticleRef, rows: &CategoricalDataset) -> Vec<u8> {
    let tree = net.tree(p);
    (0..rows.len()).map(|i| tree.predict_row(rows.row(i))).collect()
}

fn naive_kernel(a: &[u8], b: &[u8], params: &KernelParams) -> f64 {
    let mut differ = 0usize;
    for i in 0..a.len() {
        if a[i] != b[i] {
            differ += 1;
        }
    }
    let base = 1.0 - differ as f64 / a.len() as f64;
    let mut k = 1.0;
    for _ in 0..params.kernel_exponent {
        k *= base;
    }
    k
}

fn naive_similarity(a: &[u8], b: &[u8], params: &KernelParams) -> f64 {
    let k = naive_kernel(a, b, params);
    let mut out = 1.0;
    for _ in 0..params.similarity_power {
        out *= k;
    }
    out
}

/// Candidates and weights for sensor `s` given everyone else's current
/// classifier. `with_current` appends the sensor's own current classifier
/// (the greedy candidate set).
pub fn site_weights(
    net: &ParticleNetwork,
    s: SensorId,
    current: &[ParticleRef],
    with_current: bool,
) -> Vec<(ParticleRef, f64)> {
    let params = net.kernel_params();
    let rows = net.particle_sets()[s].local_data();
    let n_s = net.particle_sets()[s].len();
    let neighbors = net.topology().neighbors(s).expect("sensor in range");

    let mut pool: Vec<ParticleRef> = (0..n_s).map(|j| ParticleRef::new(s, j)).collect();
    for &t in neighbors {
        pool.push(current[t]);
    }
    if with_current {
        pool.push(current[s]);
    }

    let own: Vec<Vec<u8>> = (0..n_s).map(|j| naive_bits(net, ParticleRef::new(s, j), rows)).collect();
    let nbr: Vec<Vec<u8>> = neighbors.iter().map(|&t| naive_bits(net, current[t], rows)).collect();
    let mut seen: Vec<Vec<u8>> = Vec::new();
    let mut out = Vec::new();
    for f in pool {
        let bits = naive_bits(net, f, rows);
        if seen.contains(&bits) {
            continue;
        }
        let mut weight = 1.0;
        for v in &nbr {
            weight *= naive_similarity(v, &bits, params);
        }
        let mut rho = 0.0;
        for h in &own {
            rho += naive_kernel(h, &bits, params);
        }
        weight *= rho;
        seen.push(bits);
        out.push((f, weight));
    }
    out
}

/// Greedy choice for sensor `s`: the first candidate of maximal weight.
pub fn site_argmax(net: &ParticleNetwork, s: SensorId, current: &[ParticleRef]) -> ParticleRef {
    let weights = site_weights(net, s, current, true);
    let mut best = 0;
    for i in 1..weights.len() {
        if weights[i].1 > weights[best].1 {
            best = i;
        }
    }
    weights[best].0
}

/// `prod_s sum_j K(h_sj, f)` maximized over every particle by two nested
/// loops; ties keep the lowest `(sensor, index)`.
pub fn double_loop_map(net: &ParticleNetwork, policy: EvalPolicy) -> (ParticleRef, f64) {
    let sets = net.particle_sets();
    let pooled = CategoricalDataset::concat(sets.iter().map(ParticleSet::local_data));
    let params = net.kernel_params();
    let mut best: Option<(ParticleRef, f64)> = None;
    for a in 0..sets.len() {
        for k in 0..sets[a].len() {
            let f = ParticleRef::new(a, k);
            let mut objective = 1.0;
            for (s, ps) in sets.iter().enumerate() {
                let rows = match policy {
                    EvalPolicy::Local => ps.local_data(),
                    EvalPolicy::Pooled => &pooled,
                };
                let fb = naive_bits(net, f, rows);
                let mut factor = 0.0;
                for j in 0..ps.len() {
                    factor += naive_kernel(&naive_bits(net, ParticleRef::new(s, j), rows), &fb, params);
                }
                objective *= factor;
            }
            if best.is_none_or(|(_, v)| objective > v) {
                best = Some((f, objective));
            }
        }
    }
    best.expect("at least one particle")
}

pub type JointState = Vec<ParticleRef>;

/// Limit distribution of the uniform-random-site Gibbs chain started at
/// `init`, over every joint state reachable from it.
///
/// The transition matrix is built by enumeration; the limit is taken by
/// power iteration of the lazy chain `(I + P) / 2`, which converges from any
/// start to the Cesàro limit of `P`.
pub fn gibbs_stationary(net: &ParticleNetwork, init: &[ParticleRef]) -> BTreeMap<JointState, f64> {
    let m = net.num_sensors();
    let mut index: BTreeMap<JointState, usize> = BTreeMap::new();
    let mut states: Vec<JointState> = Vec::new();
    let mut transitions: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut queue = VecDeque::new();
    index.insert(init.to_vec(), 0);
    states.push(init.to_vec());
    queue.push_back(0);
    while let Some(i) = queue.pop_front() {
        let state = states[i].clone();
        let mut row: Vec<(usize, f64)> = Vec::new();
        for s in 0..m {
            let weights = site_weights(net, s, &state, false);
            let total: f64 = weights.iter().map(|w| w.1).sum();
            let moves: Vec<(ParticleRef, f64)> = if total > 0.0 {
                weights.into_iter().map(|(f, w)| (f, w / total)).collect()
            } else {
                vec![(state[s], 1.0)]
            };
            for (f, p) in moves {
                let mut next = state.clone();
                next[s] = f;
                let j = *index.entry(next.clone()).or_insert_with(|| {
                    states.push(next);
                    queue.push_back(states.len() - 1);
                    states.len() - 1
                });
                row.push((j, p / m as f64));
            }
        }
        transitions.push(row);
    }

    let n = states.len();
    let mut pi = vec![0.0; n];
    pi[0] = 1.0;
    for _ in 0..1_000_000 {
        let mut next: Vec<f64> = pi.iter().map(|p| 0.5 * p).collect();
        for (i, row) in transitions.iter().enumerate() {
            for &(j, p) in row {
                next[j] += 0.5 * pi[i] * p;
            }
        }
        let change: f64 = pi.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        pi = next;
        if change < 1e-15 {
            break;
        }
    }
    states.into_iter().zip(pi).collect()
}

/// Half the L1 distance between two distributions on joint states.
pub fn total_variation(p: &BTreeMap<JointState, f64>, q: &BTreeMap<JointState, f64>) -> f64 {
    let mut sum = 0.0;
    for (k, a) in p {
        sum += (a - q.get(k).copied().unwrap_or(0.0)).abs();
    }
    for (k, b) in q {
        if !p.contains_key(k) {
            sum += b.abs();
        }
    }
    0.5 * sum
}

/// Visit frequencies of the sampler's own Gibbs chain over `steps` updates
/// (the state after each update is counted once).
pub fn gibbs_empirical(net: &ParticleNetwork, state: &mut SamplerState, steps: usize) -> BTreeMap<JointState, f64> {
    let mut counts: BTreeMap<JointState, f64> = BTreeMap::new();
    for _ in 0..steps {
        crate::sampler::gibbs_step(net, state);
        *counts.entry(state.current.clone()).or_default() += 1.0;
    }
    for v in counts.values_mut() {
        *v /= steps as f64;
    }
    counts
}

/// Uniform random labelled tree on `m` vertices: vertex `i` attaches to a
/// uniformly chosen earlier vertex of a random relabelling.
pub fn random_tree(m: usize, rng: &mut impl Rng) -> Topology {
    let mut order: Vec<usize> = (0..m).collect();
    for i in (1..m).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let edges = (1..m).map(|i| (order[i], order[rng.random_range(0..i)]));
    Topology::from_edges(m, edges).expect("tree edges are valid")
}

/// Small particle network on a random graph: `m` sensors, `n_s` particles
/// each, shards of `rows` rows from a noisy synthetic rule.
pub fn random_particle_network(
    m: usize,
    n_s: usize,
    rows: usize,
    seed: u64,
) -> Result<ParticleNetwork, crate::sampler::SamplerError> {
    let mut rng = seeds::rng(seed, seeds::TOPOLOGY, 0);
    let topo = if m < 2 {
        Topology::from_edges(m, []).expect("edgeless graph")
    } else {
        let p = rng.random::<f64>();
        let mut edges = Vec::new();
        for a in 0..m {
            for b in (a + 1)..m {
                if rng.random::<f64>() < p {
                    edges.push((a, b));
                }
            }
        }
        Topology::from_edges(m, edges).expect("valid edges")
    };
    let spec = SyntheticSpec {
        rows: rows * m,
        features: 5,
        arity: 3,
        rule_depth: 3,
        noise_rate: 0.2,
        seed,
    };
    let data = synthetic_categorical(&spec).expect("valid synthetic spec").dataset;
    let params = TreeParams { max_depth: 2, min_leaf: 1 };
    let sets = (0..m)
        .map(|s| {
            let idx: Vec<usize> = (s * rows..(s + 1) * rows).collect();
            bootstrap_particles(s, &data.select(&idx), n_s, params, seeds::derive(seed, seeds::PARTICLES, s as u64))
        })
        .collect::<Result<Vec<_>, _>>()?;
    ParticleNetwork::new(topo, sets, KernelParams::default())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CheckOutcome {
    pub agree: usize,
    pub total: usize,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.agree == self.total
    }
}

/// Greedy updates against [`site_argmax`]: every sensor of every instance is
/// updated once from a random assignment, and the sampler's choice must be
/// the oracle's.
pub fn greedy_check(
    instances: usize,
    max_sensors: usize,
    max_particles: usize,
    seed: u64,
) -> Result<CheckOutcome, crate::sampler::SamplerError> {
    let mut out = CheckOutcome { agree: 0, total: 0 };
    for k in 0..instances {
        let inst = seeds::derive(seed, "greedy-check", k as u64);
        let mut rng = seeds::rng(inst, seeds::SAMPLER, 1);
        let m = rng.random_range(1..=max_sensors);
        let n_s = rng.random_range(1..=max_particles);
        let net = random_particle_network(m, n_s, 12, inst)?;
        let start: Vec<ParticleRef> = (0..m)
            .map(|_| net.all_particles()[rng.random_range(0..net.all_particles().len())])
            .collect();
        let mut state = SamplerState::with_current(start, inst, SweepOrder::FixedPermutation);
        for _ in 0..m {
            let before = state.current.clone();
            let s = greedy_step(&net, &mut state);
            let expected = site_argmax(&net, s, &before);
            out.total += 1;
            if state.current[s] == expected {
                out.agree += 1;
            }
        }
    }
    Ok(out)
}

/// Exhaustive MAP against [`double_loop_map`] under both policies. The
/// winner must be identical; objectives may differ in the last bits since
/// the two sides raise to integer powers differently.
pub fn brute_force_check(
    instances: usize,
    max_sensors: usize,
    max_particles: usize,
    seed: u64,
) -> Result<CheckOutcome, crate::sampler::SamplerError> {
    let mut out = CheckOutcome { agree: 0, total: 0 };
    for k in 0..instances {
        let inst = seeds::derive(seed, "map-check", k as u64);
        let mut rng = seeds::rng(inst, seeds::SAMPLER, 1);
        let m = rng.random_range(1..=max_sensors);
        let n_s = rng.random_range(1..=max_particles);
        let net = random_particle_network(m, n_s, 12, inst)?;
        for policy in [EvalPolicy::Local, EvalPolicy::Pooled] {
            out.total += 1;
            let (ours, value) = brute_force_map(&net, policy);
            let (theirs, reference) = double_loop_map(&net, policy);
            if ours == theirs && (value - reference).abs() <= 1e-12 * reference.abs().max(1e-300) {
                out.agree += 1;
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GibbsCheck {
    pub instances: usize,
    pub steps: usize,
    pub max_tv: f64,
    pub tolerance: f64,
}

impl GibbsCheck {
    pub fn passed(&self) -> bool {
        self.max_tv <= self.tolerance
    }
}

/// Two sensors joined by an edge, two particles each, trained on 40-row
/// shards of a low-noise rule so that bootstrap trees mostly agree.
pub fn gibbs_instance(seed: u64) -> Result<ParticleNetwork, crate::sampler::SamplerError> {
    let rows = 40;
    let spec = SyntheticSpec {
        rows: 2 * rows,
        features: 8,
        arity: 2,
        rule_depth: 3,
        noise_rate: 0.05,
        seed,
    };
    let data = synthetic_categorical(&spec).expect("valid synthetic spec").dataset;
    let params = TreeParams { max_depth: 3, min_leaf: 1 };
    let sets = (0..2)
        .map(|s| {
            let idx: Vec<usize> = (s * rows..(s + 1) * rows).collect();
            bootstrap_particles(s, &data.select(&idx), 2, params, seeds::derive(seed, seeds::PARTICLES, s as u64))
        })
        .collect::<Result<Vec<_>, _>>()?;
    ParticleNetwork::new(
        Topology::from_edges(2, [(0, 1)]).expect("single edge"),
        sets,
        KernelParams::default(),
    )
}

/// Empirical Gibbs visits against [`gibbs_stationary`] on `instances`
/// [`gibbs_instance`]s. Instances whose chain has a single reachable state
/// are skipped and replaced by the next seed.
pub fn gibbs_check(
    instances: usize,
    steps: usize,
    seed: u64,
) -> Result<GibbsCheck, crate::sampler::SamplerError> {
    let mut max_tv: f64 = 0.0;
    let mut done = 0;
    let mut k = 0;
    while done < instances {
        let inst = seeds::derive(seed, "gibbs-check", k);
        k += 1;
        let net = gibbs_instance(inst)?;
        let mut state = SamplerState::initialize(&net, inst, SweepOrder::RandomSensor);
        let exact = gibbs_stationary(&net, &state.current);
        if exact.len() < 2 {
            continue;
        }
        let empirical = gibbs_empirical(&net, &mut state, steps);
        max_tv = max_tv.max(total_variation(&exact, &empirical));
        done += 1;
    }
    Ok(GibbsCheck {
        instances,
        steps,
        max_tv,
        tolerance: 0.05,
    })
}

/// Random two-state instance on a connected tree with Dirac agreement.
pub fn random_discrete_instance(rng: &mut impl Rng, max_sensors: usize) -> (Topology, Vec<DiscretePotential>) {
    let m = rng.random_range(1..=max_sensors);
    let topo = random_tree(m, rng);
    let pots = (0..m)
        .map(|_| DiscretePotential::new(rng.random_range(0.01..1.0), rng.random_range(0.01..1.0)))
        .collect();
    (topo, pots)
}

/// Discrete BP decisions against the pooled likelihood-ratio decision: an
/// instance agrees when every sensor's decision equals the centralized one.
pub fn discrete_check(instances: usize, seed: u64) -> CheckOutcome {
    let mut out = CheckOutcome { agree: 0, total: instances };
    for k in 0..instances {
        let mut rng = seeds::rng(seed, "discrete-check", k as u64);
        let (topo, pots) = random_discrete_instance(&mut rng, 30);
        let central = centralized_likelihood_decision(&pots);
        let ok = discrete_bp_map(&topo, &pots, EdgeAgreement::DIRAC, true)
            .map(|d| d.iter().all(|&h| h == central))
            .unwrap_or(false);
        if ok {
            out.agree += 1;
        }
    }
    out
}
