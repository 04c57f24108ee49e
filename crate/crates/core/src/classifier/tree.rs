//! Binary classification tree over categorical features.
//!
//! Induction is greedy and top-down. Each internal node tests one feature
//! against a two-way partition of its categories, chosen to minimize the
//! weighted Gini impurity of the children; a feature is tested at most once
//! on any root-to-leaf path. Impure nodes are split whenever a valid split
//! exists, even without impurity gain, until `max_depth` or `min_leaf`
//! stops them.
//!
//! Text form, one S-expression:
//!
//! ```text
//! tree   := "(tree" <num_features> node ")"
//! node   := "(leaf" <label> <purity> <count> ")"
//!         | "(split" <feature> <left-mask-hex> <"L"|"R"> node node ")"
//! ```
//!
//! `left-mask` has bit `c` set when category `c` goes left. Categories not
//! seen at a node during training (including codes beyond the training
//! arity) follow the branch that held more training rows; `L`/`R` records
//! that branch for codes of 64 and above.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{CategoricalDataset, ClassifierError, PredictionVector};

/// Exhaustive partition search up to this many present categories; larger
/// sets use the ordering by label-1 fraction, which reaches the same optimum
/// for binary labels.
const EXHAUSTIVE_LIMIT: usize = 12;
const TIE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: 10,
            min_leaf: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Leaf {
        label: u8,
        /// Fraction of training rows at this leaf carrying `label`.
        purity: f64,
        count: usize,
    },
    Split {
        feature: usize,
        left_mask: u64,
        /// Branch holding the majority of training rows; codes unseen at
        /// this node are routed there.
        default_left: bool,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    num_features: usize,
    /// Arena; the root is node 0.
    nodes: Vec<Node>,
}

fn leaf(counts: [usize; 2]) -> Node {
    let n = counts[0] + counts[1];
    let label = u8::from(counts[1] > counts[0]);
    Node::Leaf {
        label,
        purity: counts[usize::from(label)] as f64 / n as f64,
        count: n,
    }
}

fn child_score(counts: [usize; 2]) -> f64 {
    let n = (counts[0] + counts[1]) as f64;
    n - (counts[0] * counts[0] + counts[1] * counts[1]) as f64 / n
}

struct SplitChoice {
    score: f64,
    feature: usize,
    mask: u64,
}

impl SplitChoice {
    fn beats(&self, other: &Option<SplitChoice>) -> bool {
        match other {
            None => true,
            Some(o) if self.score < o.score - TIE_EPS => true,
            Some(o) if self.score > o.score + TIE_EPS => false,
            Some(o) => (self.feature, self.mask) < (o.feature, o.mask),
        }
    }
}

struct Builder<'a> {
    data: &'a CategoricalDataset,
    params: TreeParams,
    nodes: Vec<Node>,
    used: Vec<bool>,
}

impl Builder<'_> {
    fn grow(&mut self, rows: &[usize], depth: usize) -> usize {
        let labels = self.data.labels();
        let mut counts = [0usize; 2];
        for &r in rows {
            counts[usize::from(labels[r])] += 1;
        }
        let id = self.nodes.len();
        self.nodes.push(leaf(counts));

        let pure = counts[0] == 0 || counts[1] == 0;
        if pure || depth >= self.params.max_depth || rows.len() < 2 * self.params.min_leaf.max(1) {
            return id;
        }
        let Some(best) = self.best_split(rows) else {
            return id;
        };

        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
            .iter()
            .partition(|&&r| best.mask >> self.data.row(r)[best.feature] & 1 == 1);
        let default_left = left_rows.len() >= right_rows.len();
        // categories absent here follow the heavier branch
        let arity = self.data.arity()[best.feature];
        let present = rows
            .iter()
            .fold(0u64, |acc, &r| acc | 1 << self.data.row(r)[best.feature]);
        let all = if arity >= 64 { u64::MAX } else { (1u64 << arity) - 1 };
        let absent = all & !present;
        let left_mask = if default_left {
            best.mask | absent | !all
        } else {
            best.mask
        };

        self.used[best.feature] = true;
        let left = self.grow(&left_rows, depth + 1);
        let right = self.grow(&right_rows, depth + 1);
        self.used[best.feature] = false;

        self.nodes[id] = Node::Split {
            feature: best.feature,
            left_mask,
            default_left,
            left,
            right,
        };
        id
    }

    fn best_split(&self, rows: &[usize]) -> Option<SplitChoice> {
        let labels = self.data.labels();
        let min_leaf = self.params.min_leaf.max(1);
        let mut best: Option<SplitChoice> = None;
        for feature in 0..self.data.num_features() {
            if self.used[feature] {
                continue;
            }
            let mut per_code = vec![[0usize; 2]; self.data.arity()[feature]];
            for &r in rows {
                per_code[usize::from(self.data.row(r)[feature])][usize::from(labels[r])] += 1;
            }
            let present: Vec<usize> = (0..per_code.len())
                .filter(|&c| per_code[c][0] + per_code[c][1] > 0)
                .collect();
            if present.len() < 2 {
                continue;
            }
            for mask in candidate_masks(&present, &per_code) {
                let mut left = [0usize; 2];
                let mut right = [0usize; 2];
                for &c in &present {
                    let side = if mask >> c & 1 == 1 { &mut left } else { &mut right };
                    side[0] += per_code[c][0];
                    side[1] += per_code[c][1];
                }
                if left[0] + left[1] < min_leaf || right[0] + right[1] < min_leaf {
                    continue;
                }
                let choice = SplitChoice {
                    score: child_score(left) + child_score(right),
                    feature,
                    mask,
                };
                if choice.beats(&best) {
                    best = Some(choice);
                }
            }
        }
        best
    }
}

/// Left-category masks worth scoring. Every mask contains the lowest present
/// category, so each two-way partition appears once.
fn candidate_masks(present: &[usize], per_code: &[[usize; 2]]) -> Vec<u64> {
    if present.len() <= EXHAUSTIVE_LIMIT {
        let rest = present.len() - 1;
        (0..(1u64 << rest) - 1)
            .map(|k| {
                (0..rest).fold(1u64 << present[0], |mask, i| {
                    if k >> i & 1 == 1 {
                        mask | 1 << present[i + 1]
                    } else {
                        mask
                    }
                })
            })
            .collect()
    } else {
        let mut order = present.to_vec();
        let frac = |c: usize| per_code[c][1] as f64 / (per_code[c][0] + per_code[c][1]) as f64;
        order.sort_by(|&a, &b| frac(a).total_cmp(&frac(b)).then(a.cmp(&b)));
        let mut masks = Vec::with_capacity(order.len() - 1);
        let mut prefix = 0u64;
        for &c in &order[..order.len() - 1] {
            prefix |= 1 << c;
            let lowest = 1u64 << present[0];
            // express each partition from the side holding the lowest code
            let all: u64 = present.iter().fold(0, |acc, &c| acc | 1 << c);
            masks.push(if prefix & lowest != 0 { prefix } else { all & !prefix });
        }
        masks
    }
}

/// Trains a tree on all rows of `data`.
pub fn train_tree(data: &CategoricalDataset, params: TreeParams) -> Result<DecisionTree, ClassifierError> {
    if data.is_empty() {
        return Err(ClassifierError::EmptyDataset);
    }
    let mut builder = Builder {
        data,
        params,
        nodes: Vec::new(),
        used: vec![false; data.num_features()],
    };
    let rows: Vec<usize> = (0..data.len()).collect();
    builder.grow(&rows, 0);
    Ok(DecisionTree {
        num_features: data.num_features(),
        nodes: builder.nodes,
    })
}

pub fn predict(tree: &DecisionTree, data: &CategoricalDataset) -> Result<PredictionVector, ClassifierError> {
    tree.predict(data)
}

impl DecisionTree {
    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], id: usize) -> usize {
            match nodes[id] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn num_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    /// Label for one feature vector. The caller guarantees the width.
    pub fn predict_row(&self, row: &[u16]) -> u8 {
        let mut id = 0;
        loop {
            match self.nodes[id] {
                Node::Leaf { label, .. } => return label,
                Node::Split {
                    feature,
                    left_mask,
                    default_left,
                    left,
                    right,
                } => {
                    let code = u32::from(row[feature]);
                    let go_left = if code < 64 {
                        left_mask >> code & 1 == 1
                    } else {
                        default_left
                    };
                    id = if go_left { left } else { right };
                }
            }
        }
    }

    pub fn predict(&self, data: &CategoricalDataset) -> Result<PredictionVector, ClassifierError> {
        if data.num_features() != self.num_features {
            return Err(ClassifierError::ArityMismatch {
                expected: self.num_features,
                got: data.num_features(),
            });
        }
        Ok(data.rows().map(|row| self.predict_row(row) == 1).collect())
    }

    /// Fraction of rows of `data` misclassified.
    pub fn error_rate(&self, data: &CategoricalDataset) -> Result<f64, ClassifierError> {
        let pred = self.predict(data)?;
        Ok(pred.error_rate(data.labels()))
    }

    pub fn to_text(&self) -> String {
        fn write(nodes: &[Node], id: usize, out: &mut String) {
            match &nodes[id] {
                Node::Leaf { label, purity, count } => {
                    let _ = write!(out, "(leaf {label} {purity:?} {count})");
                }
                Node::Split {
                    feature,
                    left_mask,
                    default_left,
                    left,
                    right,
                } => {
                    let side = if *default_left { 'L' } else { 'R' };
                    let _ = write!(out, "(split {feature} {left_mask:x} {side} ");
                    write(nodes, *left, out);
                    out.push(' ');
                    write(nodes, *right, out);
                    out.push(')');
                }
            }
        }
        let mut out = format!("(tree {} ", self.num_features);
        write(&self.nodes, 0, &mut out);
        out.push(')');
        out
    }

    pub fn from_text(text: &str) -> Result<Self, ClassifierError> {
        let spaced = text.replace('(', " ( ").replace(')', " ) ");
        let mut tokens = spaced.split_whitespace().peekable();
        let err = |m: &str| ClassifierError::Parse(m.to_string());

        fn expect<'a>(tokens: &mut impl Iterator<Item = &'a str>, want: &str) -> Result<(), ClassifierError> {
            match tokens.next() {
                Some(t) if t == want => Ok(()),
                other => Err(ClassifierError::Parse(format!("expected `{want}`, got {other:?}"))),
            }
        }
        fn num<'a, T: std::str::FromStr>(tokens: &mut impl Iterator<Item = &'a str>) -> Result<T, ClassifierError> {
            let t = tokens.next().ok_or_else(|| ClassifierError::Parse("unexpected end".into()))?;
            t.parse().map_err(|_| ClassifierError::Parse(format!("bad number `{t}`")))
        }
        fn node<'a>(
            tokens: &mut impl Iterator<Item = &'a str>,
            nodes: &mut Vec<Node>,
        ) -> Result<usize, ClassifierError> {
            expect(tokens, "(")?;
            let id = nodes.len();
            match tokens.next() {
                Some("leaf") => {
                    let label: u8 = num(tokens)?;
                    let purity: f64 = num(tokens)?;
                    let count: usize = num(tokens)?;
                    if label > 1 {
                        return Err(ClassifierError::Parse(format!("label {label} is not binary")));
                    }
                    nodes.push(Node::Leaf { label, purity, count });
                }
                Some("split") => {
                    let feature: usize = num(tokens)?;
                    let hex = tokens.next().ok_or_else(|| ClassifierError::Parse("missing mask".into()))?;
                    let left_mask = u64::from_str_radix(hex, 16)
                        .map_err(|_| ClassifierError::Parse(format!("bad mask `{hex}`")))?;
                    let default_left = match tokens.next() {
                        Some("L") => true,
                        Some("R") => false,
                        other => return Err(ClassifierError::Parse(format!("bad default branch {other:?}"))),
                    };
                    nodes.push(Node::Leaf { label: 0, purity: 0.0, count: 0 });
                    let left = node(tokens, nodes)?;
                    let right = node(tokens, nodes)?;
                    nodes[id] = Node::Split {
                        feature,
                        left_mask,
                        default_left,
                        left,
                        right,
                    };
                }
                other => return Err(ClassifierError::Parse(format!("unknown node kind {other:?}"))),
            }
            expect(tokens, ")")?;
            Ok(id)
        }

        expect(&mut tokens, "(")?;
        expect(&mut tokens, "tree")?;
        let num_features: usize = num(&mut tokens)?;
        let mut nodes = Vec::new();
        node(&mut tokens, &mut nodes)?;
        expect(&mut tokens, ")")?;
        if tokens.peek().is_some() {
            return Err(err("trailing tokens"));
        }
        if nodes.iter().any(|n| matches!(n, Node::Split { feature, .. } if *feature >= num_features)) {
            return Err(err("split feature out of range"));
        }
        Ok(Self { num_features, nodes })
    }

    /// Tree that predicts `label` everywhere.
    pub fn constant(num_features: usize, label: u8) -> Self {
        Self {
            num_features,
            nodes: vec![Node::Leaf {
                label,
                purity: 1.0,
                count: 0,
            }],
        }
    }

    /// Assembles a tree from an arena whose root is node 0.
    pub fn from_nodes(num_features: usize, nodes: Vec<Node>) -> Self {
        Self { num_features, nodes }
    }
}
