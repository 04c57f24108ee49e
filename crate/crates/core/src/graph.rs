//! Sensor communication topology.
//!
//! The communication graph doubles as the undirected graphical model: sensors
//! are nodes, and an edge means the two sensors can exchange messages. Random
//! graphs are not forced connected, so callers work per connected component.

use std::collections::VecDeque;
use std::fmt::Write as _;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use thiserror::Error;

/// Dense sensor index in `[0, num_sensors)`.
pub type SensorId = usize;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("sensor {id} out of range for a topology of {num_sensors} sensors")]
    OutOfRange { id: SensorId, num_sensors: usize },
    #[error("self-loop on sensor {0}")]
    SelfLoop(SensorId),
    #[error("expected degree {degree} exceeds m - 1 = {max}")]
    DegreeTooLarge { degree: f64, max: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("edge list line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Undirected simple graph over `num_sensors` sensors.
///
/// Edges are stored once as `(s, t)` with `s < t`, sorted ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    num_sensors: usize,
    edges: Vec<(SensorId, SensorId)>,
    adjacency: Vec<Vec<SensorId>>,
    positions: Option<Vec<[f64; 2]>>,
}

impl Topology {
    /// Builds a topology from an arbitrary edge list. Orientation and
    /// duplicates are normalized away; self-loops and out-of-range ids are
    /// rejected.
    pub fn from_edges(
        num_sensors: usize,
        edges: impl IntoIterator<Item = (SensorId, SensorId)>,
    ) -> Result<Self, GraphError> {
        let mut normalized = Vec::new();
        for (a, b) in edges {
            for id in [a, b] {
                if id >= num_sensors {
                    return Err(GraphError::OutOfRange { id, num_sensors });
                }
            }
            if a == b {
                return Err(GraphError::SelfLoop(a));
            }
            normalized.push((a.min(b), a.max(b)));
        }
        normalized.sort_unstable();
        normalized.dedup();

        let mut adjacency = vec![Vec::new(); num_sensors];
        for &(s, t) in &normalized {
            adjacency[s].push(t);
            adjacency[t].push(s);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Ok(Self {
            num_sensors,
            edges: normalized,
            adjacency,
            positions: None,
        })
    }

    /// Geometric graph over fixed positions: `(s, t)` is an edge iff the
    /// Euclidean distance is at most `radius` (closed ball).
    pub fn from_positions(positions: Vec<[f64; 2]>, radius: f64) -> Result<Self, GraphError> {
        if !(radius >= 0.0) {
            return Err(GraphError::InvalidParameter(format!(
                "radius must be non-negative, got {radius}"
            )));
        }
        let m = positions.len();
        let r2 = radius * radius;
        let mut edges = Vec::new();
        for s in 0..m {
            for t in (s + 1)..m {
                let dx = positions[s][0] - positions[t][0];
                let dy = positions[s][1] - positions[t][1];
                if dx * dx + dy * dy <= r2 {
                    edges.push((s, t));
                }
            }
        }
        let mut topo = Self::from_edges(m, edges)?;
        topo.positions = Some(positions);
        Ok(topo)
    }

    /// `m` positions drawn i.i.d. uniform on the unit square, connected
    /// within `radius`.
    pub fn random_geometric(m: usize, radius: f64, seed: u64) -> Result<Self, GraphError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let positions = sample_unit_square(m, &mut rng);
        Self::from_positions(positions, radius)
    }

    /// Erdős–Rényi graph with edge probability `expected_degree / (m - 1)`.
    /// Pairs are visited in lexicographic order, one uniform draw each.
    pub fn random_expected_degree(
        m: usize,
        expected_degree: f64,
        seed: u64,
    ) -> Result<Self, GraphError> {
        if !(expected_degree >= 0.0) {
            return Err(GraphError::InvalidParameter(format!(
                "expected degree must be non-negative, got {expected_degree}"
            )));
        }
        let max = m.saturating_sub(1);
        if expected_degree > max as f64 {
            return Err(GraphError::DegreeTooLarge {
                degree: expected_degree,
                max,
            });
        }
        if max == 0 {
            return Self::from_edges(m, []);
        }
        let p = expected_degree / max as f64;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut edges = Vec::new();
        for s in 0..m {
            for t in (s + 1)..m {
                if rng.random::<f64>() < p {
                    edges.push((s, t));
                }
            }
        }
        Self::from_edges(m, edges)
    }

    pub fn num_sensors(&self) -> usize {
        self.num_sensors
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Undirected edges, `(s, t)` with `s < t`, ascending.
    pub fn edges(&self) -> &[(SensorId, SensorId)] {
        &self.edges
    }

    pub fn positions(&self) -> Option<&[[f64; 2]]> {
        self.positions.as_deref()
    }

    /// Sorted neighbor list of `s`.
    pub fn neighbors(&self, s: SensorId) -> Result<&[SensorId], GraphError> {
        self.adjacency
            .get(s)
            .map(Vec::as_slice)
            .ok_or(GraphError::OutOfRange {
                id: s,
                num_sensors: self.num_sensors,
            })
    }

    /// Unchecked variant of [`Topology::neighbors`] for internal loops.
    pub(crate) fn adj(&self, s: SensorId) -> &[SensorId] {
        &self.adjacency[s]
    }

    pub fn degree(&self, s: SensorId) -> usize {
        self.adjacency[s].len()
    }

    /// Position of edge `(s, t)` in [`Topology::edges`], either orientation.
    pub fn edge_index(&self, s: SensorId, t: SensorId) -> Option<usize> {
        let key = (s.min(t), s.max(t));
        self.edges.binary_search(&key).ok()
    }

    /// Connected component label per sensor, labels dense in discovery order.
    pub fn components(&self) -> Vec<usize> {
        let mut label = vec![usize::MAX; self.num_sensors];
        let mut next = 0;
        let mut queue = VecDeque::new();
        for start in 0..self.num_sensors {
            if label[start] != usize::MAX {
                continue;
            }
            label[start] = next;
            queue.push_back(start);
            while let Some(u) = queue.pop_front() {
                for &v in &self.adjacency[u] {
                    if label[v] == usize::MAX {
                        label[v] = next;
                        queue.push_back(v);
                    }
                }
            }
            next += 1;
        }
        label
    }

    pub fn num_components(&self) -> usize {
        self.components().into_iter().max().map_or(0, |c| c + 1)
    }

    pub fn is_connected(&self) -> bool {
        self.num_components() <= 1
    }

    /// True iff the graph has no cycle (a forest). A graph with `c`
    /// components is acyclic exactly when it has `m - c` edges.
    pub fn is_tree(&self) -> bool {
        self.edges.len() + self.num_components() == self.num_sensors
    }

    fn bfs_distances(&self, source: SensorId) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.num_sensors];
        dist[source] = Some(0);
        let mut queue = VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            let d = dist[u].unwrap_or(0);
            for &v in &self.adjacency[u] {
                if dist[v].is_none() {
                    dist[v] = Some(d + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// Longest shortest-path length (in edges) over all connected pairs.
    pub fn diameter(&self) -> usize {
        (0..self.num_sensors)
            .flat_map(|s| self.bfs_distances(s).into_iter().flatten())
            .max()
            .unwrap_or(0)
    }

    /// Edge-list text: `m <count>` then one `s t` line per edge, ascending.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("m {}\n", self.num_sensors);
        for (s, t) in &self.edges {
            let _ = writeln!(out, "{s} {t}");
        }
        out
    }

    pub fn from_edge_list(text: &str) -> Result<Self, GraphError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());
        let (line, header) = lines.next().ok_or(GraphError::Parse {
            line: 1,
            msg: "missing `m <count>` header".into(),
        })?;
        let m = header
            .strip_prefix("m ")
            .and_then(|v| v.trim().parse::<usize>().ok())
            .ok_or_else(|| GraphError::Parse {
                line,
                msg: format!("expected `m <count>`, got `{header}`"),
            })?;
        let mut edges = Vec::new();
        for (line, l) in lines {
            let parsed: Vec<usize> = l
                .split_whitespace()
                .map(str::parse)
                .collect::<Result<_, _>>()
                .map_err(|e| GraphError::Parse {
                    line,
                    msg: format!("{e}"),
                })?;
            match parsed.as_slice() {
                &[s, t] => edges.push((s, t)),
                _ => {
                    return Err(GraphError::Parse {
                        line,
                        msg: format!("expected `s t`, got `{l}`"),
                    })
                }
            }
        }
        Self::from_edges(m, edges)
    }
}

pub(crate) fn sample_unit_square(m: usize, rng: &mut impl Rng) -> Vec<[f64; 2]> {
    (0..m)
        .map(|_| [rng.random::<f64>(), rng.random::<f64>()])
        .collect()
}
