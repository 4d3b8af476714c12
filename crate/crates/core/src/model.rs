//! The black-box classifier.
//!
//! Two implementations sit behind [`Classifier`]: a binary log-loss gradient
//! boosted tree ensemble, and a lookup table whose decision boundary is known
//! exactly (used to build oracle-checkable toy problems).

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::tabular::{Class, Dataset, Instance};
use crate::{Error, Result};

/// Binary probabilistic classifier. Implementations must be pure so that
/// concurrent callers see identical results.
pub trait Classifier {
    /// `[p(class 0), p(class 1)]`, non-negative and summing to 1.
    fn predict_proba(&self, x: &Instance) -> Result<[f64; 2]>;

    /// Argmax of [`Classifier::predict_proba`], ties going to class 0.
    fn predict(&self, x: &Instance) -> Result<Class> {
        Ok(argmax(self.predict_proba(x)?))
    }
}

impl<C: Classifier + ?Sized> Classifier for &C {
    fn predict_proba(&self, x: &Instance) -> Result<[f64; 2]> {
        (**self).predict_proba(x)
    }
}

pub fn argmax(proba: [f64; 2]) -> Class {
    if proba[1] > proba[0] {
        Class::SECOND
    } else {
        Class::FIRST
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-z))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub n_trees: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            n_trees: 100,
            learning_rate: 0.1,
            max_depth: 3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::InvalidConfig("n_trees must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.max_depth == 0 {
            return Err(Error::InvalidConfig("max_depth must be at least 1".into()));
        }
        Ok(())
    }
}

/// Regression tree node. Samples with `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

impl Node {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => node = if x[*feature] <= *threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Node::Leaf { .. } => 0,
            Node::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }
}

/// Gradient boosted trees for binary log loss. The raw score is the log-odds
/// of class 1; leaf values already include the learning rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedTrees {
    pub feature_names: Vec<String>,
    pub config: TrainConfig,
    pub initial_score: f64,
    pub trees: Vec<Node>,
}

struct BuildNode {
    sum_grad: f64,
    sum_hess: f64,
    count: usize,
    split: Option<(usize, f64, usize, usize)>,
}

#[derive(Clone, Copy)]
struct SplitScan {
    left_count: usize,
    left_sum: f64,
    last: f64,
    best_gain: f64,
    best: Option<(usize, f64)>,
}

impl BoostedTrees {
    pub fn train(train: &Dataset, config: &TrainConfig) -> Result<Self> {
        Self::train_with_losses(train, config).map(|(model, _)| model)
    }

    /// Trains and also returns the training log loss after each round
    /// (index 0 is the loss of the initial score alone).
    pub fn train_with_losses(train: &Dataset, config: &TrainConfig) -> Result<(Self, Vec<f64>)> {
        config.validate()?;
        let counts = train.class_counts();
        if counts[0] == 0 || counts[1] == 0 {
            return Err(Error::SingleClassTraining);
        }
        let n = train.len();
        let n_features = train.schema().len();
        let columns: Vec<Vec<f64>> = (0..n_features)
            .map(|f| train.rows().iter().map(|r| r.instance.get(f)).collect())
            .collect();
        let y: Vec<f64> = train.rows().iter().map(|r| r.label.index() as f64).collect();
        let presorted: Vec<Vec<u32>> = columns
            .iter()
            .map(|col| {
                let mut idx: Vec<u32> = (0..n as u32).collect();
                idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
                idx
            })
            .collect();

        let positive = counts[1] as f64 / n as f64;
        let initial_score = libm::log(positive / (1.0 - positive));
        let mut scores = vec![initial_score; n];
        let mut losses = Vec::with_capacity(config.n_trees + 1);
        losses.push(log_loss(&y, &scores));
        let mut trees = Vec::with_capacity(config.n_trees);
        let mut grad = vec![0.0; n];
        let mut hess = vec![0.0; n];
        let mut node_of = vec![0usize; n];

        for _ in 0..config.n_trees {
            for i in 0..n {
                let p = sigmoid(scores[i]);
                grad[i] = y[i] - p;
                hess[i] = p * (1.0 - p);
            }
            node_of.iter_mut().for_each(|v| *v = 0);
            let mut nodes = vec![BuildNode {
                sum_grad: grad.iter().sum(),
                sum_hess: hess.iter().sum(),
                count: n,
                split: None,
            }];
            let mut frontier = vec![0usize];
            for _depth in 0..config.max_depth {
                let splits = best_splits(&nodes, &frontier, &columns, &presorted, &grad, &node_of);
                let mut next = Vec::new();
                for (&node, split) in frontier.iter().zip(splits) {
                    let Some((feature, threshold)) = split else {
                        continue;
                    };
                    let left = nodes.len();
                    let right = left + 1;
                    for _ in 0..2 {
                        nodes.push(BuildNode {
                            sum_grad: 0.0,
                            sum_hess: 0.0,
                            count: 0,
                            split: None,
                        });
                    }
                    nodes[node].split = Some((feature, threshold, left, right));
                    next.push(left);
                    next.push(right);
                }
                if next.is_empty() {
                    break;
                }
                for i in 0..n {
                    if let Some((feature, threshold, left, right)) = nodes[node_of[i]].split {
                        let child = if columns[feature][i] <= threshold { left } else { right };
                        node_of[i] = child;
                        let c = &mut nodes[child];
                        c.sum_grad += grad[i];
                        c.sum_hess += hess[i];
                        c.count += 1;
                    }
                }
                frontier = next;
            }
            let leaf_value = |node: &BuildNode| {
                if libm::fabs(node.sum_hess) < 1e-150 {
                    0.0
                } else {
                    config.learning_rate * node.sum_grad / node.sum_hess
                }
            };
            for i in 0..n {
                scores[i] += leaf_value(&nodes[node_of[i]]);
            }
            losses.push(log_loss(&y, &scores));
            trees.push(assemble(&nodes, 0, &leaf_value));
        }

        let model = BoostedTrees {
            feature_names: train.schema().features().iter().map(|f| f.name.clone()).collect(),
            config: *config,
            initial_score,
            trees,
        };
        Ok((model, losses))
    }

    pub fn raw_score(&self, x: &Instance) -> Result<f64> {
        if x.len() != self.feature_names.len() {
            return Err(Error::SchemaMismatch {
                expected: self.feature_names.len(),
                found: x.len(),
            });
        }
        Ok(self.initial_score + self.trees.iter().map(|t| t.eval(x.values())).sum::<f64>())
    }
}

impl Classifier for BoostedTrees {
    fn predict_proba(&self, x: &Instance) -> Result<[f64; 2]> {
        let p1 = sigmoid(self.raw_score(x)?);
        Ok([1.0 - p1, p1])
    }
}

fn log_loss(y: &[f64], scores: &[f64]) -> f64 {
    // log(1 + e^s) - y*s, computed stably
    let total: f64 = y
        .iter()
        .zip(scores)
        .map(|(&yi, &s)| {
            let softplus = if s > 0.0 {
                s + libm::log1p(libm::exp(-s))
            } else {
                libm::log1p(libm::exp(s))
            };
            softplus - yi * s
        })
        .sum();
    total / y.len() as f64
}

/// Exact greedy search for every frontier node in one pass per feature over
/// the presorted order. Variance-reduction gain on the gradients; ties keep
/// the lowest feature, then the lowest threshold.
fn best_splits(
    nodes: &[BuildNode],
    frontier: &[usize],
    columns: &[Vec<f64>],
    presorted: &[Vec<u32>],
    grad: &[f64],
    node_of: &[usize],
) -> Vec<Option<(usize, f64)>> {
    const INACTIVE: usize = usize::MAX;
    let mut slot = vec![INACTIVE; nodes.len()];
    for (s, &node) in frontier.iter().enumerate() {
        slot[node] = s;
    }
    let fresh = SplitScan {
        left_count: 0,
        left_sum: 0.0,
        last: 0.0,
        best_gain: 0.0,
        best: None,
    };
    let mut scans = vec![fresh; frontier.len()];
    for (feature, order) in presorted.iter().enumerate() {
        for scan in scans.iter_mut() {
            scan.left_count = 0;
            scan.left_sum = 0.0;
        }
        let col = &columns[feature];
        for &i in order {
            let i = i as usize;
            let s = slot[node_of[i]];
            if s == INACTIVE {
                continue;
            }
            let value = col[i];
            let node = &nodes[frontier[s]];
            let scan = &mut scans[s];
            if scan.left_count > 0 && value > scan.last {
                let nl = scan.left_count as f64;
                let nr = (node.count - scan.left_count) as f64;
                let sl = scan.left_sum;
                let sr = node.sum_grad - sl;
                let gain = sl * sl / nl + sr * sr / nr - node.sum_grad * node.sum_grad / node.count as f64;
                if gain > scan.best_gain {
                    let mid = scan.last + (value - scan.last) / 2.0;
                    let threshold = if mid < value { mid } else { scan.last };
                    scan.best_gain = gain;
                    scan.best = Some((feature, threshold));
                }
            }
            scan.left_count += 1;
            scan.left_sum += grad[i];
            scan.last = value;
        }
    }
    scans.into_iter().map(|s| s.best).collect()
}

fn assemble(nodes: &[BuildNode], at: usize, leaf_value: &dyn Fn(&BuildNode) -> f64) -> Node {
    match nodes[at].split {
        Some((feature, threshold, left, right)) => Node::Split {
            feature,
            threshold,
            left: Box::new(assemble(nodes, left, leaf_value)),
            right: Box::new(assemble(nodes, right, leaf_value)),
        },
        None => Node::Leaf {
            value: leaf_value(&nodes[at]),
        },
    }
}

fn table_key(x: &Instance) -> Vec<u64> {
    // +0.0 and -0.0 are the same point
    x.values().iter().map(|&v| (v + 0.0).to_bits()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    pub instance: Instance,
    pub proba: [f64; 2],
}

/// Exact map from instance to class distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<TableEntry>", into = "Vec<TableEntry>")]
pub struct LookupTable {
    table: BTreeMap<Vec<u64>, TableEntry>,
}

impl LookupTable {
    pub fn new(entries: impl IntoIterator<Item = TableEntry>) -> Result<Self> {
        let mut table = BTreeMap::new();
        for entry in entries {
            let [a, b] = entry.proba;
            if !(a >= 0.0 && b >= 0.0 && libm::fabs(a + b - 1.0) <= 1e-9) {
                return Err(Error::InvalidConfig(format!(
                    "table probabilities {:?} are not a distribution",
                    entry.proba
                )));
            }
            table.insert(table_key(&entry.instance), entry);
        }
        Ok(LookupTable { table })
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &TableEntry> {
        self.table.values()
    }
}

impl TryFrom<Vec<TableEntry>> for LookupTable {
    type Error = Error;

    fn try_from(entries: Vec<TableEntry>) -> Result<Self> {
        LookupTable::new(entries)
    }
}

impl From<LookupTable> for Vec<TableEntry> {
    fn from(table: LookupTable) -> Self {
        table.table.into_values().collect()
    }
}

impl Classifier for LookupTable {
    fn predict_proba(&self, x: &Instance) -> Result<[f64; 2]> {
        self.table
            .get(&table_key(x))
            .map(|e| e.proba)
            .ok_or(Error::UnknownInstance)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "parameters", rename_all = "kebab-case")]
pub enum Model {
    BoostedTrees(BoostedTrees),
    LookupTable(LookupTable),
}

impl Classifier for Model {
    fn predict_proba(&self, x: &Instance) -> Result<[f64; 2]> {
        match self {
            Model::BoostedTrees(m) => m.predict_proba(x),
            Model::LookupTable(m) => m.predict_proba(x),
        }
    }
}

impl From<BoostedTrees> for Model {
    fn from(m: BoostedTrees) -> Self {
        Model::BoostedTrees(m)
    }
}

impl From<LookupTable> for Model {
    fn from(m: LookupTable) -> Self {
        Model::LookupTable(m)
    }
}

/// Fraction of rows whose prediction equals the label.
pub fn accuracy<C: Classifier + ?Sized>(model: &C, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut correct = 0usize;
    for row in data.rows() {
        if model.predict(&row.instance)? == row.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}
