//! Property checks shared by the per-module test files and the acceptance
//! run. Each returns a one-line summary on success and a diagnostic on
//! failure.

#![allow(dead_code)]

use std::collections::BTreeMap;

use collabnet::classifier::{
    bootstrap_particles, local_rho, majority_vote, train_tree, CategoricalDataset, DecisionTree, KernelParams, Node,
    ParticleSet, PredictionVector, TreeParams,
};
use collabnet::data::{parse_categorical, split_and_shard, synthetic_categorical, SplitSpec, SyntheticSpec};
use collabnet::graph::Topology;
use collabnet::message_passing::{
    centralized_likelihood_decision, discrete_bp_map, precision_weighted_average, run_gaussian_bp, BpConfig,
    DiscretePotential, EdgeAgreement, EdgeSmoothness, GaussianBp, GaussianPotential, Hypothesis, Schedule,
};
use collabnet::oracle::{self, random_particle_network, random_tree};
use collabnet::regression::{run_regression_experiment, test_error, RegressionConfig};
use collabnet::sampler::{
    brute_force_map, conditional_weights, gibbs_step, greedy_step, map_objective, run_sampler, EvalPolicy,
    ParticleNetwork, ParticleRef, SamplerConfig, SamplerMode, SamplerState, SweepOrder,
};
use collabnet::seeds;
use rand::Rng;

pub type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rng(label: &str, index: u64) -> rand_chacha::ChaCha8Rng {
    seeds::rng(20_240_601, label, index)
}

// ---------------------------------------------------------------- graph

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        Self((0..n).collect())
    }

    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut y = x;
        while self.0[y] != r {
            let next = self.0[y];
            self.0[y] = r;
            y = next;
        }
        r
    }

    /// False when `a` and `b` were already joined.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        self.0[ra] = rb;
        ra != rb
    }
}

fn random_graphs(count: u64) -> impl Iterator<Item = Topology> {
    (0..count).map(|k| {
        let mut r = rng("graphs", k);
        let m = r.random_range(1..=40);
        if k % 2 == 0 {
            Topology::random_geometric(m, r.random_range(0.0..0.4), k).unwrap()
        } else {
            let deg = r.random_range(0.0..=(m - 1) as f64);
            Topology::random_expected_degree(m, deg, k).unwrap()
        }
    })
}

pub fn adjacency_symmetry() -> Check {
    for (k, topo) in random_graphs(300).enumerate() {
        for s in 0..topo.num_sensors() {
            let n = topo.neighbors(s).unwrap();
            ensure(n.windows(2).all(|w| w[0] < w[1]) && !n.contains(&s), || {
                format!("graph {k}: neighbors of {s} not sorted/loop-free: {n:?}")
            })?;
            for &t in n {
                ensure(topo.neighbors(t).unwrap().contains(&s), || format!("graph {k}: {t} in N({s}) only"))?;
            }
        }
    }
    Ok("300 random graphs symmetric, sorted, loop-free".into())
}

pub fn is_tree_matches_union_find() -> Check {
    let mut trees = 0;
    for (k, topo) in random_graphs(500).enumerate() {
        let mut uf = UnionFind::new(topo.num_sensors());
        let acyclic = topo.edges().iter().all(|&(a, b)| uf.union(a, b));
        ensure(acyclic == topo.is_tree(), || format!("graph {k}: is_tree {} vs union-find {acyclic}", topo.is_tree()))?;
        trees += usize::from(acyclic);
    }
    Ok(format!("500 graphs agree with union-find ({trees} acyclic)"))
}

pub fn geometric_edges_match_scan() -> Check {
    for (m, r, seed) in [(50, 0.2, 7), (1, 0.2, 0), (80, 0.1, 3), (30, 0.5, 11), (40, 0.0, 5)] {
        let topo = Topology::random_geometric(m, r, seed).unwrap();
        let p = topo.positions().unwrap();
        let mut count = 0;
        for a in 0..m {
            for b in (a + 1)..m {
                if (p[a][0] - p[b][0]).hypot(p[a][1] - p[b][1]) <= r {
                    count += 1;
                }
            }
        }
        ensure(count == topo.num_edges(), || format!("m={m} r={r}: scan {count} vs {}", topo.num_edges()))?;
        let again = Topology::from_positions(p.to_vec(), r).unwrap();
        ensure(again.edges() == topo.edges(), || "regenerating from positions changed edges".into())?;
    }
    Ok("edge counts equal O(m^2) distance scans; positions determine edges".into())
}

pub fn expected_degree_mean() -> Check {
    let n = 10_000;
    let means: Vec<f64> = (0..n)
        .map(|seed| {
            let t = Topology::random_expected_degree(20, 4.0, seed).unwrap();
            2.0 * t.num_edges() as f64 / 20.0
        })
        .collect();
    let mean = means.iter().sum::<f64>() / n as f64;
    let var = means.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let se = (var / n as f64).sqrt();
    ensure((mean - 4.0).abs() <= 3.0 * se, || format!("mean degree {mean:.4}, SE {se:.4}"))?;
    ensure(
        Topology::random_expected_degree(5, 4.0, 1).unwrap().num_edges() == 10
            && Topology::random_expected_degree(20, 0.0, 1).unwrap().num_edges() == 0,
        || "p=1 / p=0 extremes".into(),
    )?;
    Ok(format!("mean degree {mean:.4} within 3 SE ({se:.4}) of 4 over 10000 seeds"))
}

// ------------------------------------------------------- message passing

fn random_potentials(m: usize, r: &mut impl Rng) -> Vec<GaussianPotential> {
    (0..m)
        .map(|_| GaussianPotential::new(r.random_range(-5.0..5.0), r.random_range(0.1..10.0)))
        .collect()
}

/// Connected random trees, 2..=50 sensors, with random potentials.
pub fn random_tree_instances(count: u64) -> Vec<(Topology, Vec<GaussianPotential>)> {
    (0..count)
        .map(|k| {
            let mut r = rng("bp-trees", k);
            let m = r.random_range(2..=50);
            let topo = random_tree(m, &mut r);
            let pots = random_potentials(m, &mut r);
            (topo, pots)
        })
        .collect()
}

pub fn consensus_limit(count: u64) -> Check {
    let mut worst: f64 = 0.0;
    for (k, (topo, pots)) in random_tree_instances(count).into_iter().enumerate() {
        let edges = vec![EdgeSmoothness::new(1e-8); topo.num_edges()];
        let (marginals, report) = run_gaussian_bp(&topo, &pots, &edges, &BpConfig::default()).map_err(|e| e.to_string())?;
        ensure(report.converged, || format!("tree {k} did not converge"))?;
        let target = precision_weighted_average(&pots).unwrap();
        for m in &marginals {
            worst = worst.max((m.mean - target).abs());
        }
        ensure(worst <= 1e-6, || format!("tree {k}: deviation {worst:e} from precision-weighted average"))?;
    }
    Ok(format!("{count} trees, max |mean - weighted average| = {worst:.2e}"))
}

pub fn tree_exactness(count: u64) -> Check {
    let mut worst: f64 = 0.0;
    for (k, (topo, pots)) in random_tree_instances(count).into_iter().enumerate() {
        let edges = vec![EdgeSmoothness::new(1e-8); topo.num_edges()];
        let mut bp = GaussianBp::new(&topo, &pots, &edges, 1e12).map_err(|e| e.to_string())?;
        for _ in 0..topo.diameter() {
            bp.step(Schedule::Synchronous).map_err(|e| e.to_string())?;
        }
        let fixed = bp.messages().to_vec();
        for _ in 0..5 {
            bp.step(Schedule::Synchronous).map_err(|e| e.to_string())?;
            for (a, b) in fixed.iter().zip(bp.messages()) {
                worst = worst.max((a.mean - b.mean).abs()).max((a.variance - b.variance).abs());
            }
        }
        ensure(worst <= 1e-12, || format!("tree {k}: messages moved by {worst:e} after diameter rounds"))?;
    }
    Ok(format!("{count} trees fixed after diameter rounds (max drift {worst:.1e})"))
}

pub fn precision_dominance() -> Check {
    let mut checked = 0;
    for k in 0..100u64 {
        let mut r = rng("dominance", k);
        let m = r.random_range(1..=30);
        let topo = if k % 2 == 0 {
            random_tree(m, &mut r)
        } else {
            Topology::random_geometric(m, 0.35, k).unwrap()
        };
        let pots = random_potentials(m, &mut r);
        for lambda_sq in [0.0, 1e-8, 0.5] {
            let edges = vec![EdgeSmoothness::new(lambda_sq); topo.num_edges()];
            let cfg = BpConfig { max_rounds: 200, ..BpConfig::default() };
            let (marginals, _) = run_gaussian_bp(&topo, &pots, &edges, &cfg).map_err(|e| e.to_string())?;
            for (s, (mg, p)) in marginals.iter().zip(&pots).enumerate() {
                // an isolated sensor's 1/(1/v) may round up by an ulp
                ensure(mg.variance <= p.variance * (1.0 + 1e-12), || {
                    format!("instance {k}, sensor {s}: marginal variance {} > local {}", mg.variance, p.variance)
                })?;
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} marginals at least as precise as their local potential"))
}

pub fn loopy_means_match_linear_solve() -> Check {
    let mut worst: f64 = 0.0;
    let mut loopy = 0;
    for k in 0..30u64 {
        let mut r = rng("loopy", k);
        let m = r.random_range(5..=30);
        let topo = Topology::random_geometric(m, 0.35, 100 + k).unwrap();
        loopy += usize::from(!topo.is_tree());
        let pots = random_potentials(m, &mut r);
        let lambda_sq = 0.5;
        let edges = vec![EdgeSmoothness::new(lambda_sq); topo.num_edges()];
        let cfg = BpConfig { max_rounds: 10_000, convergence_tol: 1e-13, ..BpConfig::default() };
        let (marginals, report) = run_gaussian_bp(&topo, &pots, &edges, &cfg).map_err(|e| e.to_string())?;
        ensure(report.converged, || format!("instance {k} did not converge"))?;

        let mut j = nalgebra::DMatrix::<f64>::zeros(m, m);
        let mut h = nalgebra::DVector::<f64>::zeros(m);
        for (s, p) in pots.iter().enumerate() {
            j[(s, s)] += 1.0 / p.variance;
            h[s] = p.mean / p.variance;
        }
        for &(a, b) in topo.edges() {
            j[(a, a)] += 1.0 / lambda_sq;
            j[(b, b)] += 1.0 / lambda_sq;
            j[(a, b)] -= 1.0 / lambda_sq;
            j[(b, a)] -= 1.0 / lambda_sq;
        }
        let x = j.lu().solve(&h).ok_or("singular information matrix")?;
        for s in 0..m {
            worst = worst.max((marginals[s].mean - x[s]).abs());
        }
        ensure(worst <= 1e-6, || format!("instance {k}: mean off the exact solution by {worst:e}"))?;
    }
    Ok(format!("30 geometric graphs ({loopy} loopy): converged means within {worst:.1e} of J^-1 h"))
}

pub fn gaussian_bp_deterministic() -> Check {
    for (topo, pots) in random_tree_instances(10) {
        let edges = vec![EdgeSmoothness::new(1e-3); topo.num_edges()];
        for schedule in [Schedule::Synchronous, Schedule::Sequential] {
            let cfg = BpConfig { schedule, ..BpConfig::default() };
            let a = run_gaussian_bp(&topo, &pots, &edges, &cfg).map_err(|e| e.to_string())?;
            let b = run_gaussian_bp(&topo, &pots, &edges, &cfg).map_err(|e| e.to_string())?;
            ensure(a.0 == b.0 && a.1 == b.1, || "repeated run differs".into())?;
        }
    }
    Ok("repeated runs bit-identical under both schedules".into())
}

/// Per-sensor marginal argmax by summing the joint over all `2^m` states.
fn enumerate_decisions(topo: &Topology, pots: &[DiscretePotential], delta: f64) -> Vec<Hypothesis> {
    let m = topo.num_sensors();
    let mut mass = vec![[0.0f64; 2]; m];
    for state in 0..(1u32 << m) {
        let bit = |s: usize| ((state >> s) & 1) as usize;
        let mut w = 1.0;
        for (s, p) in pots.iter().enumerate() {
            w *= if bit(s) == 1 { p.weight1 } else { p.weight0 };
        }
        for &(a, b) in topo.edges() {
            if bit(a) != bit(b) {
                w *= delta;
            }
        }
        for s in 0..m {
            mass[s][bit(s)] += w;
        }
    }
    mass.iter()
        .map(|[m0, m1]| if m1 > m0 { Hypothesis::H1 } else { Hypothesis::H0 })
        .collect()
}

pub fn discrete_equivalence(count: u64) -> Check {
    let mut agree = 0;
    for k in 0..count {
        let mut r = rng("discrete", k);
        let (topo, pots) = oracle::random_discrete_instance(&mut r, 12);
        let central = centralized_likelihood_decision(&pots);
        let bp = discrete_bp_map(&topo, &pots, EdgeAgreement::DIRAC, true).map_err(|e| e.to_string())?;
        let exhaustive = enumerate_decisions(&topo, &pots, 0.0);
        ensure(bp.iter().all(|&d| d == central) && bp == exhaustive, || {
            format!("instance {k}: BP {bp:?}, likelihood ratio {central:?}, enumeration {exhaustive:?}")
        })?;
        let relaxed = discrete_bp_map(&topo, &pots, EdgeAgreement { delta: 0.2 }, true).map_err(|e| e.to_string())?;
        ensure(relaxed == enumerate_decisions(&topo, &pots, 0.2), || format!("instance {k}: relaxed BP differs"))?;
        agree += 1;
    }
    Ok(format!("{agree}/{count} tree instances agree with the likelihood ratio and enumeration"))
}

// ----------------------------------------------------------- regression

pub fn regression_test_error_monotone() -> Check {
    let mut r = rng("test-error", 0);
    for _ in 0..1000 {
        let k = r.random_range(-3.0..3.0);
        let a = r.random_range(0.0..2.0);
        let b = a + r.random_range(0.0..2.0);
        for sign in [-1.0, 1.0] {
            let ea = test_error(k + sign * a, k, 100);
            let eb = test_error(k + sign * b, k, 100);
            ensure(ea <= eb && ea >= 0.0, || format!("k={k}: error({a}) = {ea} > error({b}) = {eb}"))?;
        }
    }
    Ok("grid error non-negative and monotone in |k_hat - k|".into())
}

pub fn regression_tree_components_agree() -> Check {
    let mut components = 0;
    for seed in 0..100 {
        let cfg = RegressionConfig { seed, ..RegressionConfig::default() };
        let run = run_regression_experiment(&cfg).map_err(|e| e.to_string())?;
        let labels = run.topology.components();
        let count = labels.iter().max().map_or(0, |c| c + 1);
        for c in 0..count {
            let nodes: Vec<usize> = (0..labels.len()).filter(|&s| labels[s] == c).collect();
            let edges = run.topology.edges().iter().filter(|&&(a, _)| labels[a] == c).count();
            if nodes.len() < 2 || edges + 1 != nodes.len() {
                continue;
            }
            components += 1;
            let means: Vec<f64> = nodes.iter().map(|&s| run.marginals[s].mean).collect();
            let spread = means.iter().cloned().fold(f64::MIN, f64::max) - means.iter().cloned().fold(f64::MAX, f64::min);
            ensure(spread <= 1e-6, || format!("seed {seed}: tree component {c} spread {spread:e}"))?;
        }
    }
    ensure(components > 0, || "no tree components generated".into())?;
    Ok(format!("{components} tree components agree within 1e-6"))
}

pub fn regression_noise_scaling() -> Check {
    let err = |sigma: f64| -> Result<f64, String> {
        let cfg = RegressionConfig { noise_scale: sigma, ..RegressionConfig::default() };
        Ok(run_regression_experiment(&cfg).map_err(|e| e.to_string())?.final_metrics().test_error)
    };
    let (e0, e1, e5) = (err(0.0)?, err(0.01)?, err(0.5)?);
    ensure(e0 <= 1e-20, || format!("noiseless error {e0:e}"))?;
    ensure(e1 < e5 && e1 <= 1e-4, || {
        format!("errors at sigma 0.01 / 0.5: {e1:e} / {e5:e}")
    })?;
    Ok(format!("final error {e0:.1e} / {e1:.1e} / {e5:.1e} at sigma 0 / 0.01 / 0.5"))
}

pub fn regression_default_variance_drop() -> Check {
    let run = run_regression_experiment(&RegressionConfig::default()).map_err(|e| e.to_string())?;
    let (v0, v10) = (run.rounds[0].estimate_variance, run.rounds[10.min(run.rounds.len() - 1)].estimate_variance);
    ensure(v10 <= 1e-2 * v0, || format!("seed 7: variance {v0:.3e} at round 0, {v10:.3e} at round 10"))?;
    Ok(format!("seed 7: variance {v0:.2e} -> {v10:.2e} within 10 rounds"))
}

// ----------------------------------------------------------- classifier

fn random_vectors(r: &mut impl Rng) -> (PredictionVector, PredictionVector) {
    let n = r.random_range(1..200);
    let a: Vec<u8> = (0..n).map(|_| r.random_range(0..2)).collect();
    let flip = r.random_range(0.0..1.0);
    let b: Vec<u8> = a.iter().map(|&x| if r.random::<f64>() < flip { 1 - x } else { x }).collect();
    (PredictionVector::from_bits(&a), PredictionVector::from_bits(&b))
}

pub fn kernel_properties() -> Check {
    let params = KernelParams::default();
    let mut r = rng("kernel", 0);
    for _ in 0..2000 {
        let (a, b) = random_vectors(&mut r);
        let k = params.kernel(&a, &b).unwrap();
        ensure(k == params.kernel(&b, &a).unwrap(), || "asymmetric".into())?;
        ensure((0.0..=1.0).contains(&k), || format!("kernel {k} out of range"))?;
        ensure((k == 1.0) == (a == b), || "kernel 1 iff identical".into())?;
        ensure(params.similarity(&a, &b).unwrap() <= k, || "similarity exceeds kernel".into())?;
        // one more disagreement can only lower the kernel
        let mut bits = b.to_bits();
        if let Some(i) = (0..bits.len()).find(|&i| bits[i] == a.get(i) as u8) {
            bits[i] ^= 1;
            let further = params.kernel(&a, &PredictionVector::from_bits(&bits)).unwrap();
            ensure(further <= k, || "kernel increased with distance".into())?;
        }
    }
    Ok("2000 pairs: symmetric, bounded, 1 iff equal, monotone, similarity <= kernel".into())
}

fn datasets(count: u64) -> Vec<CategoricalDataset> {
    (0..count)
        .map(|k| {
            let mut r = rng("datasets", k);
            let spec = SyntheticSpec {
                rows: r.random_range(20..300),
                features: r.random_range(1..8),
                arity: r.random_range(2..6),
                rule_depth: r.random_range(1..5),
                noise_rate: r.random_range(0.0..0.3),
                seed: k,
            };
            synthetic_categorical(&spec).unwrap().dataset
        })
        .collect()
}

fn paths_test_features_once(tree: &DecisionTree) -> bool {
    fn walk(nodes: &[Node], i: usize, used: &mut Vec<usize>) -> bool {
        match nodes[i] {
            Node::Leaf { .. } => true,
            Node::Split { feature, left, right, .. } => {
                if used.contains(&feature) {
                    return false;
                }
                used.push(feature);
                let ok = walk(nodes, left, used) && walk(nodes, right, used);
                used.pop();
                ok
            }
        }
    }
    walk(tree.nodes(), 0, &mut Vec::new())
}

pub fn tree_properties() -> Check {
    for (k, data) in datasets(30).iter().enumerate() {
        let mut previous = f64::INFINITY;
        for depth in 1..=10 {
            let params = TreeParams { max_depth: depth, min_leaf: 1 };
            let tree = train_tree(data, params).unwrap();
            let again = train_tree(data, params).unwrap();
            ensure(tree == again && tree.to_text() == again.to_text(), || format!("dataset {k}: training not deterministic"))?;
            ensure(paths_test_features_once(&tree), || format!("dataset {k}: a path repeats a feature"))?;
            ensure(DecisionTree::from_text(&tree.to_text()).unwrap() == tree, || format!("dataset {k}: text round-trip"))?;
            let err = tree.error_rate(data).unwrap();
            ensure(err <= previous, || format!("dataset {k}: error rose to {err} at depth {depth}"))?;
            previous = err;
            // every code below the arity gets a prediction, seen or not
            let probe: Vec<u16> = data.arity().iter().map(|&a| (a - 1) as u16).collect();
            ensure(tree.predict_row(&probe) <= 1, || "prediction not binary".into())?;
        }
    }
    Ok("30 datasets: deterministic, features once per path, text round-trip, error non-increasing in depth".into())
}

pub fn particle_properties() -> Check {
    let params = KernelParams::default();
    for (k, data) in datasets(15).iter().enumerate() {
        let ps = bootstrap_particles(0, data, 4, TreeParams::default(), k as u64).unwrap();
        // local_rho against predictions rebuilt row by row
        for f in ps.particles() {
            let bits: Vec<u8> = data.rows().map(|row| f.predict_row(row)).collect();
            let fv = PredictionVector::from_bits(&bits);
            let mut naive = 0.0;
            for h in ps.particles() {
                let hb: Vec<u8> = data.rows().map(|row| h.predict_row(row)).collect();
                let d = hb.iter().zip(&bits).filter(|(x, y)| x != y).count();
                naive += (1.0 - d as f64 / bits.len() as f64).powi(4);
            }
            let cached = local_rho(&ps, &fv, &params).unwrap();
            ensure((cached - naive).abs() <= 1e-12, || format!("dataset {k}: rho {cached} vs naive {naive}"))?;
        }
        let trees = ps.particles().to_vec();
        let doubled: Vec<DecisionTree> = trees.iter().chain(&trees).cloned().collect();
        ensure(
            majority_vote(&trees, data).unwrap() == majority_vote(&doubled, data).unwrap(),
            || format!("dataset {k}: duplicating trees changed the vote"),
        )?;
    }
    Ok("local_rho equals naive re-evaluation; majority vote invariant to duplication".into())
}

// ----------------------------------------------------------------- data

pub fn sharding_partition() -> Check {
    let rows = 500;
    let features: Vec<Vec<u16>> = (0..rows).map(|i| vec![(i % 50) as u16, (i / 50) as u16]).collect();
    let labels: Vec<u8> = (0..rows).map(|i| (i % 2) as u8).collect();
    let data = CategoricalDataset::with_inferred_arity(features, labels).unwrap();
    for (train, test, shards, seed) in [(400, 100, 20, 1), (300, 150, 3, 2), (100, 0, 1, 3)] {
        let spec = SplitSpec { train_count: train, test_count: test, num_shards: shards, seed };
        let (parts, held) = split_and_shard(&data, &spec).unwrap();
        let mut seen: Vec<Vec<u16>> = parts.iter().chain([&held]).flat_map(|p| p.rows().map(<[u16]>::to_vec)).collect();
        ensure(parts.iter().all(|p| p.len() == train / shards) && held.len() == test, || "shard sizes".into())?;
        let n = seen.len();
        seen.sort();
        seen.dedup();
        ensure(seen.len() == n && n == train + test, || format!("seed {seed}: rows duplicated or lost"))?;
    }
    Ok("shards and test set partition the selected rows".into())
}

pub fn codebook_stable() -> Check {
    let text = "a,x,won\nb,y,nowin\na,z,won\nc,x,nowin\n";
    let first = parse_categorical(text).map_err(|e| e.to_string())?;
    let second = parse_categorical(text).map_err(|e| e.to_string())?;
    ensure(first.0 == second.0 && first.1 == second.1, || "re-parsing changed codes".into())?;
    ensure(first.0.labels()[0] == 0, || "first-seen class must be 0".into())?;
    Ok("code mappings stable under re-ingestion".into())
}

// -------------------------------------------------------------- sampler

/// `prod_t sim(f_t, f) * sum_j K(h_sj, f)` on `s`'s rows.
fn local_objective(net: &ParticleNetwork, s: usize, current: &[ParticleRef], f: ParticleRef) -> f64 {
    let agreement: f64 = net
        .topology()
        .neighbors(s)
        .unwrap()
        .iter()
        .map(|&t| net.local_similarity(s, current[t], f))
        .product();
    agreement * net.rho(s, f, EvalPolicy::Local)
}

fn random_state(net: &ParticleNetwork, r: &mut impl Rng, seed: u64, sweep: SweepOrder) -> SamplerState {
    let all = net.all_particles();
    let current = (0..net.num_sensors()).map(|_| all[r.random_range(0..all.len())]).collect();
    SamplerState::with_current(current, seed, sweep)
}

pub fn greedy_monotonicity() -> Check {
    let mut steps = 0;
    for k in 0..40u64 {
        let mut r = rng("monotone", k);
        let net = random_particle_network(r.random_range(1..=6), r.random_range(1..=3), 15, k).map_err(|e| e.to_string())?;
        let mut state = random_state(&net, &mut r, k, SweepOrder::RandomSensor);
        for _ in 0..30 {
            let before = state.current.clone();
            let s = greedy_step(&net, &mut state);
            let old = local_objective(&net, s, &before, before[s]);
            let new = local_objective(&net, s, &before, state.current[s]);
            ensure(new >= old, || format!("instance {k}: sensor {s} objective fell {old} -> {new}"))?;
            steps += 1;
        }
    }
    Ok(format!("{steps} greedy updates never lowered the local conditional objective"))
}

pub fn candidate_locality() -> Check {
    let mut evaluations = 0;
    for k in 0..10u64 {
        let mut r = rng("locality", k);
        let net = random_particle_network(4, 3, 12, k).map_err(|e| e.to_string())?.with_access_log();
        let mut state = random_state(&net, &mut r, k, SweepOrder::RandomSensor);
        for i in 0..40 {
            if i % 2 == 0 {
                gibbs_step(&net, &mut state);
            } else {
                greedy_step(&net, &mut state);
            }
        }
        for s in 0..4 {
            conditional_weights(&net, s, &state);
        }
        brute_force_map(&net, EvalPolicy::Local);
        let log = net.access_log().unwrap().evaluations.borrow();
        ensure(!log.is_empty(), || "nothing logged".into())?;
        if let Some(&(acting, owner)) = log.iter().find(|(a, o)| a != o) {
            return Err(format!("instance {k}: sensor {acting} evaluated a kernel on sensor {owner}'s rows"));
        }
        evaluations += log.len();
    }
    Ok(format!("{evaluations} kernel evaluations all on the acting sensor's rows"))
}

pub fn brute_force_dominates_sampler() -> Check {
    for k in 0..10u64 {
        let net = random_particle_network(4, 3, 15, 50 + k).map_err(|e| e.to_string())?;
        let test = synthetic_categorical(&SyntheticSpec { rows: 40, features: 5, arity: 3, seed: k, ..SyntheticSpec::default() })
            .unwrap()
            .dataset;
        for mode in [SamplerMode::Gibbs, SamplerMode::Greedy] {
            let cfg = SamplerConfig { rounds: 200, mode, seed: k, ..SamplerConfig::default() };
            let run = run_sampler(&cfg, &net, &test).map_err(|e| e.to_string())?;
            for policy in [EvalPolicy::Local, EvalPolicy::Pooled] {
                let (_, best) = brute_force_map(&net, policy);
                for &f in &run.state.current {
                    let v = map_objective(&net, f, policy);
                    ensure(v <= best, || format!("instance {k}: sampler classifier {v} beats brute force {best}"))?;
                }
            }
        }
    }
    Ok("brute-force MAP dominates every final sampler classifier under both policies".into())
}

pub fn sampler_determinism() -> Check {
    let net = random_particle_network(4, 3, 15, 9).map_err(|e| e.to_string())?;
    let test = synthetic_categorical(&SyntheticSpec { rows: 40, features: 5, arity: 3, seed: 1, ..SyntheticSpec::default() })
        .unwrap()
        .dataset;
    for mode in [SamplerMode::Gibbs, SamplerMode::Greedy] {
        for sweep in [SweepOrder::RandomSensor, SweepOrder::FixedPermutation] {
            let cfg = SamplerConfig { rounds: 300, mode, sweep, seed: 4, record_every: 10 };
            let a = run_sampler(&cfg, &net, &test).map_err(|e| e.to_string())?;
            let b = run_sampler(&cfg, &net, &test).map_err(|e| e.to_string())?;
            ensure(a.trace == b.trace && a.state.current == b.state.current, || format!("{mode:?}/{sweep:?} not reproducible"))?;
        }
    }
    Ok("identical seeds and configs give identical traces".into())
}

pub fn greedy_path_sweep_matches_oracle() -> Check {
    for k in 0..20u64 {
        let base = random_particle_network(3, 3, 12, 200 + k).map_err(|e| e.to_string())?;
        let net = ParticleNetwork::new(
            Topology::from_edges(3, [(0, 1), (1, 2)]).unwrap(),
            base.particle_sets().to_vec(),
            KernelParams::default(),
        )
        .map_err(|e| e.to_string())?;
        let mut state = SamplerState::initialize(&net, k, SweepOrder::FixedPermutation);
        for _ in 0..6 {
            let before = state.current.clone();
            let s = greedy_step(&net, &mut state);
            let expected = oracle::site_argmax(&net, s, &before);
            ensure(state.current[s] == expected, || format!("instance {k}: sensor {s} chose {:?}, oracle {expected:?}", state.current[s]))?;
        }
    }
    Ok("greedy sweeps on 3-sensor paths match the per-site argmax oracle".into())
}

pub fn gibbs_small_instances(instances: usize) -> Check {
    let check = oracle::gibbs_check(instances, 100_000, 77).map_err(|e| e.to_string())?;
    ensure(check.passed(), || format!("max TV {:.4} > {}", check.max_tv, check.tolerance))?;
    Ok(format!("{instances} two-sensor chains: max TV {:.4} after 1e5 steps", check.max_tv))
}

pub fn two_by_two_weights_by_hand() -> Check {
    // two sensors, two constant-prediction particles each, on 4-row shards
    let shard = |owner: usize, labels: [u8; 2]| {
        let data = CategoricalDataset::new(vec![vec![0]; 4], vec![0; 4], vec![1]).unwrap();
        let trees = labels.iter().map(|&l| DecisionTree::constant(1, l)).collect();
        ParticleSet::new(owner, trees, data).unwrap()
    };
    let net = ParticleNetwork::new(
        Topology::from_edges(2, [(0, 1)]).unwrap(),
        vec![shard(0, [0, 1]), shard(1, [1, 1])],
        KernelParams::default(),
    )
    .map_err(|e| e.to_string())?;
    let state = SamplerState::with_current(vec![ParticleRef::new(0, 0), ParticleRef::new(1, 0)], 0, SweepOrder::RandomSensor);
    let w = conditional_weights(&net, 0, &state);
    // constant 0: sim(1, 0) = 0, so weight 0; constant 1: sim 1 * (0 + 1) = 1;
    // the neighbor's constant 1 duplicates (0, 1)
    let got: BTreeMap<ParticleRef, f64> = w.iter().map(|c| (c.particle, c.weight)).collect();
    let want: BTreeMap<ParticleRef, f64> = [(ParticleRef::new(0, 0), 0.0), (ParticleRef::new(0, 1), 1.0)].into();
    ensure(got == want, || format!("weights {got:?}"))?;
    let w1 = conditional_weights(&net, 1, &state);
    // sensor 1: its two particles are identical (weight sim(0,1)*2 = 0); the neighbor's constant 0 is new: 0 * 0 = 0
    ensure(w1.len() == 2 && w1.iter().all(|c| c.weight == 0.0), || format!("weights {w1:?}"))?;
    Ok("2x2 conditional weights match hand evaluation".into())
}
