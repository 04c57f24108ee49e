//! Dataset ingestion, synthetic generation, train/test splitting and
//! sharding across sensors.
//!
//! The text format is the UCI one: comma-separated symbols, one instance per
//! line, class symbol last (e.g. kr-vs-kp: 36 attributes plus `won`/`nowin`).
//! Symbols are coded per column in first-appearance order, so the first class
//! symbol seen becomes label 0.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{CategoricalDataset, DatasetError, DecisionTree, Node};
use crate::seeds;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("empty input: no instances found")]
    Empty,
    #[error("line {line}: expected {expected} fields, found {found}")]
    Ragged { line: usize, expected: usize, found: usize },
    #[error("line {line}: a row needs at least one feature and a class")]
    TooFewFields { line: usize },
    #[error("line {line}: third class symbol `{symbol}`; labels must be binary")]
    TooManyLabels { line: usize, symbol: String },
    #[error("line {line}: column {column} has more than {max} distinct symbols")]
    TooManySymbols { line: usize, column: usize, max: usize },
    #[error("split: {0}")]
    Split(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

/// Symbol tables of a loaded file: `features[f][code]` and `labels[label]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Codebook {
    pub features: Vec<Vec<String>>,
    pub labels: Vec<String>,
}

fn code_of(table: &mut Vec<String>, symbol: &str) -> usize {
    match table.iter().position(|s| s == symbol) {
        Some(c) => c,
        None => {
            table.push(symbol.to_string());
            table.len() - 1
        }
    }
}

/// Parses comma-separated categorical text. Blank lines are skipped.
pub fn parse_categorical(text: &str) -> Result<(CategoricalDataset, Codebook), DataError> {
    let mut book = Codebook {
        features: Vec::new(),
        labels: Vec::new(),
    };
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').map(str::trim).collect();
        let expected = *width.get_or_insert(fields.len());
        if fields.len() != expected {
            return Err(DataError::Ragged {
                line,
                expected,
                found: fields.len(),
            });
        }
        if expected < 2 {
            return Err(DataError::TooFewFields { line });
        }
        let (class, attrs) = fields.split_last().expect("at least two fields");
        if book.features.is_empty() {
            book.features = vec![Vec::new(); attrs.len()];
        }
        let mut row = Vec::with_capacity(attrs.len());
        for (column, symbol) in attrs.iter().enumerate() {
            let code = code_of(&mut book.features[column], symbol);
            if code >= crate::classifier::MAX_ARITY {
                return Err(DataError::TooManySymbols {
                    line,
                    column,
                    max: crate::classifier::MAX_ARITY,
                });
            }
            row.push(code as u16);
        }
        let label = code_of(&mut book.labels, class);
        if label > 1 {
            return Err(DataError::TooManyLabels {
                line,
                symbol: class.to_string(),
            });
        }
        features.push(row);
        labels.push(label as u8);
    }
    if labels.is_empty() {
        return Err(DataError::Empty);
    }
    let arity = book.features.iter().map(Vec::len).collect();
    Ok((CategoricalDataset::new(features, labels, arity)?, book))
}

pub fn load_categorical_csv(path: impl AsRef<Path>) -> Result<(CategoricalDataset, Codebook), DataError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_categorical(&text)
}

/// Writes rows back in the input format using `book`'s symbols.
pub fn write_categorical(
    data: &CategoricalDataset,
    book: &Codebook,
    mut out: impl Write,
) -> io::Result<()> {
    for (row, &label) in data.rows().zip(data.labels()) {
        let mut fields: Vec<&str> = row
            .iter()
            .enumerate()
            .map(|(f, &c)| book.features[f][usize::from(c)].as_str())
            .collect();
        fields.push(&book.labels[usize::from(label)]);
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_count: usize,
    pub test_count: usize,
    pub num_shards: usize,
    pub seed: u64,
}

/// Seeded uniform permutation of the rows; the first `train_count` are cut
/// into `num_shards` equal consecutive shards and the next `test_count` form
/// the test set.
pub fn split_and_shard(
    data: &CategoricalDataset,
    spec: &SplitSpec,
) -> Result<(Vec<CategoricalDataset>, CategoricalDataset), DataError> {
    if spec.num_shards == 0 || spec.train_count % spec.num_shards != 0 {
        return Err(DataError::Split(format!(
            "{} training rows cannot be split evenly over {} shards",
            spec.train_count, spec.num_shards
        )));
    }
    if spec.train_count + spec.test_count > data.len() {
        return Err(DataError::Split(format!(
            "{} + {} rows requested from a dataset of {}",
            spec.train_count,
            spec.test_count,
            data.len()
        )));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut seeds::rng(spec.seed, seeds::SPLIT, 0));
    let per_shard = spec.train_count / spec.num_shards;
    let shards = order[..spec.train_count]
        .chunks(per_shard)
        .map(|chunk| data.select(chunk))
        .collect();
    let test = data.select(&order[spec.train_count..spec.train_count + spec.test_count]);
    Ok((shards, test))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub rows: usize,
    pub features: usize,
    pub arity: usize,
    /// Depth of the random labelling rule.
    pub rule_depth: usize,
    pub noise_rate: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    /// Same shape as kr-vs-kp: 3196 rows of 36 binary attributes.
    fn default() -> Self {
        Self {
            rows: 3196,
            features: 36,
            arity: 2,
            rule_depth: 6,
            noise_rate: 0.02,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub dataset: CategoricalDataset,
    /// Noise-free labelling rule.
    pub rule: DecisionTree,
    /// Rows whose label was flipped away from the rule.
    pub flipped: Vec<bool>,
}

impl SyntheticData {
    pub fn flip_fraction(&self) -> f64 {
        self.flipped.iter().filter(|&&f| f).count() as f64 / self.flipped.len().max(1) as f64
    }
}

/// Random decision list: each of `rule_depth` tests sends one side of a
/// random category partition to a leaf with a random label and the other
/// side on to the next test; the last test ends in two opposite leaves.
fn random_rule(spec: &SyntheticSpec, rng: &mut impl Rng) -> DecisionTree {
    let depth = spec.rule_depth.min(spec.features);
    let mut free: Vec<usize> = (0..spec.features).collect();
    let mut nodes = Vec::new();
    if depth == 0 {
        nodes.push(Node::Leaf {
            label: rng.random_range(0..2),
            purity: 1.0,
            count: 0,
        });
        return DecisionTree::from_nodes(spec.features, nodes);
    }
    let rest = spec.arity - 1;
    for level in 0..depth {
        let feature = free.swap_remove(rng.random_range(0..free.len()));
        // non-trivial partition containing category 0 on the left
        let k = rng.random_range(0..(1u64 << rest) - 1);
        let left_mask = (0..rest).fold(1u64, |m, i| if k >> i & 1 == 1 { m | 1 << (i + 1) } else { m });
        let id = nodes.len();
        let label = rng.random_range(0..2);
        let leaf_left = rng.random_range(0..2) == 0;
        let last = level + 1 == depth;
        // leaf at id + 1, continuation (or the opposite leaf) at id + 2
        let (left, right) = if leaf_left { (id + 1, id + 2) } else { (id + 2, id + 1) };
        nodes.push(Node::Split {
            feature,
            left_mask,
            default_left: true,
            left,
            right,
        });
        nodes.push(Node::Leaf {
            label,
            purity: 1.0,
            count: 0,
        });
        if last {
            nodes.push(Node::Leaf {
                label: 1 - label,
                purity: 1.0,
                count: 0,
            });
        }
    }
    DecisionTree::from_nodes(spec.features, nodes)
}

/// Rows with uniform random codes, labelled by a random depth-bounded rule
/// and then flipped independently with probability `noise_rate`.
pub fn synthetic_categorical(spec: &SyntheticSpec) -> Result<SyntheticData, DataError> {
    if spec.rows == 0 || spec.features == 0 || spec.arity < 2 || spec.arity > crate::classifier::MAX_ARITY {
        return Err(DataError::Split(format!("invalid synthetic shape {spec:?}")));
    }
    if !(0.0..0.5).contains(&spec.noise_rate) {
        return Err(DataError::Split(format!(
            "noise rate must lie in [0, 0.5), got {}",
            spec.noise_rate
        )));
    }
    let mut rng = seeds::rng(spec.seed, seeds::SYNTHETIC, 0);
    let rule = random_rule(spec, &mut rng);
    let mut features = Vec::with_capacity(spec.rows);
    let mut labels = Vec::with_capacity(spec.rows);
    let mut flipped = Vec::with_capacity(spec.rows);
    for _ in 0..spec.rows {
        let row: Vec<u16> = (0..spec.features)
            .map(|_| rng.random_range(0..spec.arity as u16))
            .collect();
        let flip = rng.random::<f64>() < spec.noise_rate;
        labels.push(rule.predict_row(&row) ^ u8::from(flip));
        flipped.push(flip);
        features.push(row);
    }
    let dataset = CategoricalDataset::new(features, labels, vec![spec.arity; spec.features])?;
    Ok(SyntheticData {
        dataset,
        rule,
        flipped,
    })
}
