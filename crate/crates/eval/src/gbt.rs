//! Gradient-boosted regression trees on the logistic loss.
//!
//! Each round fits one depth-limited tree to the Newton step of the binary
//! log loss (gradient `p − y`, hessian `p(1 − p)`) with L2-regularised leaf
//! weights. Multiclass problems train one binary ensemble per class and
//! normalise the per-class probabilities.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{EvalError, Result};

/// Dense feature matrix stored column by column.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = vec![0.0; n * cols];
        for (r, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), cols, "ragged feature rows");
            for (c, v) in row.iter().enumerate() {
                data[c * n + r] = *v;
            }
        }
        Self { rows: n, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[col * self.rows + row]
    }

    pub fn column(&self, col: usize) -> &[f64] {
        &self.data[col * self.rows..(col + 1) * self.rows]
    }

    /// Stacks `other` below `self`.
    pub fn vstack(&self, other: &FeatureMatrix) -> FeatureMatrix {
        assert_eq!(self.cols, other.cols, "column count differs");
        let rows = self.rows + other.rows;
        let mut data = Vec::with_capacity(rows * self.cols);
        for c in 0..self.cols {
            data.extend_from_slice(self.column(c));
            data.extend_from_slice(other.column(c));
        }
        FeatureMatrix {
            rows,
            cols: self.cols,
            data,
        }
    }

    pub fn select(&self, idx: &[usize]) -> FeatureMatrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for c in 0..self.cols {
            let col = self.column(c);
            data.extend(idx.iter().map(|&i| col[i]));
        }
        FeatureMatrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }
}

/// A trained model producing one probability per class for each row.
pub trait FittedClassifier {
    fn predict_proba(&self, x: &FeatureMatrix) -> Vec<Vec<f64>>;
}

/// Anything that can be trained on labelled features; lets the protocols
/// run with a classifier other than the built-in one.
pub trait Classifier {
    fn fit(&self, x: &FeatureMatrix, y: &[usize], n_classes: usize) -> Result<Box<dyn FittedClassifier>>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbtConfig {
    pub max_depth: usize,
    pub rounds: usize,
    pub learning_rate: f64,
    /// L2 penalty on leaf weights.
    pub lambda: f64,
    /// Minimum hessian sum in a child.
    pub min_child_weight: f64,
    /// Row fraction drawn without replacement per round.
    pub subsample: f64,
    pub seed: u64,
}

impl Default for GbtConfig {
    fn default() -> Self {
        Self {
            max_depth: 4,
            rounds: 100,
            learning_rate: 0.1,
            lambda: 1.0,
            min_child_weight: 1.0,
            subsample: 1.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn predict_row(&self, x: &FeatureMatrix, row: usize) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x.get(row, feature) <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

struct TreeBuilder<'a> {
    x: &'a FeatureMatrix,
    grad: &'a [f64],
    hess: &'a [f64],
    cfg: &'a GbtConfig,
    nodes: Vec<Node>,
}

impl TreeBuilder<'_> {
    fn score(&self, g: f64, h: f64) -> f64 {
        g * g / (h + self.cfg.lambda)
    }

    fn leaf(&mut self, g: f64, h: f64) -> usize {
        self.nodes.push(Node::Leaf(-self.cfg.learning_rate * g / (h + self.cfg.lambda)));
        self.nodes.len() - 1
    }

    fn build(&mut self, idx: &mut [usize], depth: usize) -> usize {
        let g: f64 = idx.iter().map(|&i| self.grad[i]).sum();
        let h: f64 = idx.iter().map(|&i| self.hess[i]).sum();
        if depth == self.cfg.max_depth || idx.len() < 2 {
            return self.leaf(g, h);
        }
        let parent = self.score(g, h);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order = idx.to_vec();
        for f in 0..self.x.cols() {
            let col = self.x.column(f);
            order.sort_by(|&a, &b| col[a].total_cmp(&col[b]));
            let (mut gl, mut hl) = (0.0, 0.0);
            for k in 0..order.len() - 1 {
                let i = order[k];
                gl += self.grad[i];
                hl += self.hess[i];
                let (v, next) = (col[i], col[order[k + 1]]);
                if v == next {
                    continue;
                }
                let hr = h - hl;
                if hl < self.cfg.min_child_weight || hr < self.cfg.min_child_weight {
                    continue;
                }
                let gain = self.score(gl, hl) + self.score(g - gl, hr) - parent;
                if gain > 1e-12 && best.is_none_or(|(b, _, _)| gain > b) {
                    best = Some((gain, f, 0.5 * (v + next)));
                }
            }
        }
        let Some((_, feature, threshold)) = best else {
            return self.leaf(g, h);
        };
        let col = self.x.column(feature);
        let split = partition_in_place(idx, |&i| col[i] <= threshold);
        let me = self.nodes.len();
        self.nodes.push(Node::Leaf(0.0));
        let (l, r) = idx.split_at_mut(split);
        let left = self.build(l, depth + 1);
        let right = self.build(r, depth + 1);
        self.nodes[me] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        me
    }
}

/// In-place stable partition; returns the number of elements satisfying `pred`.
fn partition_in_place(xs: &mut [usize], pred: impl Fn(&usize) -> bool) -> usize {
    let (yes, no): (Vec<usize>, Vec<usize>) = xs.iter().partition(|i| pred(i));
    let n = yes.len();
    xs[..n].copy_from_slice(&yes);
    xs[n..].copy_from_slice(&no);
    n
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Binary boosted ensemble producing log-odds.
#[derive(Clone, Debug, PartialEq)]
pub struct BinaryGbt {
    pub base: f64,
    pub trees: Vec<Tree>,
}

impl BinaryGbt {
    pub fn fit(x: &FeatureMatrix, y: &[bool], cfg: &GbtConfig) -> Self {
        let n = x.rows();
        let pos = y.iter().filter(|v| **v).count() as f64;
        let rate = ((pos + 0.5) / (n as f64 + 1.0)).clamp(1e-6, 1.0 - 1e-6);
        let base = (rate / (1.0 - rate)).ln();
        let mut margin = vec![base; n];
        let mut trees = Vec::with_capacity(cfg.rounds);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut grad = vec![0.0; n];
        let mut hess = vec![0.0; n];
        for _ in 0..cfg.rounds {
            for i in 0..n {
                let p = sigmoid(margin[i]);
                grad[i] = p - if y[i] { 1.0 } else { 0.0 };
                hess[i] = (p * (1.0 - p)).max(1e-16);
            }
            let mut idx: Vec<usize> = if cfg.subsample < 1.0 {
                let k = ((n as f64 * cfg.subsample).round() as usize).clamp(1, n);
                let mut v = sample(&mut rng, n, k).into_vec();
                v.sort_unstable();
                v
            } else {
                (0..n).collect()
            };
            let mut b = TreeBuilder {
                x,
                grad: &grad,
                hess: &hess,
                cfg,
                nodes: Vec::new(),
            };
            b.build(&mut idx, 0);
            let tree = Tree { nodes: b.nodes };
            for (i, m) in margin.iter_mut().enumerate() {
                *m += tree.predict_row(x, i);
            }
            trees.push(tree);
        }
        Self { base, trees }
    }

    pub fn margin(&self, x: &FeatureMatrix, row: usize) -> f64 {
        self.base + self.trees.iter().map(|t| t.predict_row(x, row)).sum::<f64>()
    }

    pub fn predict_proba(&self, x: &FeatureMatrix) -> Vec<f64> {
        (0..x.rows()).map(|r| sigmoid(self.margin(x, r))).collect()
    }
}

/// Binary or one-vs-rest boosted classifier.
#[derive(Clone, Debug, PartialEq)]
pub struct GbtClassifier {
    pub n_classes: usize,
    /// One ensemble for two classes (positive = class 1), else one per class.
    pub models: Vec<BinaryGbt>,
}

impl GbtClassifier {
    pub fn fit(x: &FeatureMatrix, y: &[usize], n_classes: usize, cfg: &GbtConfig) -> Result<Self> {
        if y.len() != x.rows() {
            return Err(EvalError::SizeMismatch {
                expected: x.rows(),
                found: y.len(),
            });
        }
        let first = y.first().copied().ok_or(EvalError::SingleClass)?;
        if y.iter().all(|&c| c == first) || n_classes < 2 {
            return Err(EvalError::SingleClass);
        }
        let models = if n_classes == 2 {
            let labels: Vec<bool> = y.iter().map(|&c| c == 1).collect();
            vec![BinaryGbt::fit(x, &labels, cfg)]
        } else {
            (0..n_classes)
                .map(|k| {
                    let labels: Vec<bool> = y.iter().map(|&c| c == k).collect();
                    BinaryGbt::fit(x, &labels, cfg)
                })
                .collect()
        };
        Ok(Self { n_classes, models })
    }

    pub fn predict_proba(&self, x: &FeatureMatrix) -> Vec<Vec<f64>> {
        if self.n_classes == 2 {
            return self.models[0]
                .predict_proba(x)
                .into_iter()
                .map(|p| vec![1.0 - p, p])
                .collect();
        }
        let per_class: Vec<Vec<f64>> = self.models.iter().map(|m| m.predict_proba(x)).collect();
        (0..x.rows())
            .map(|r| {
                let raw: Vec<f64> = per_class.iter().map(|p| p[r]).collect();
                let total: f64 = raw.iter().sum();
                raw.into_iter().map(|p| p / total).collect()
            })
            .collect()
    }

    pub fn predict(&self, x: &FeatureMatrix) -> Vec<usize> {
        self.predict_proba(x).iter().map(|p| argmax(p)).collect()
    }
}

pub(crate) fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in p.iter().enumerate() {
        if *v > p[best] {
            best = i;
        }
    }
    best
}

impl FittedClassifier for GbtClassifier {
    fn predict_proba(&self, x: &FeatureMatrix) -> Vec<Vec<f64>> {
        GbtClassifier::predict_proba(self, x)
    }
}

impl Classifier for GbtConfig {
    fn fit(&self, x: &FeatureMatrix, y: &[usize], n_classes: usize) -> Result<Box<dyn FittedClassifier>> {
        Ok(Box::new(GbtClassifier::fit(x, y, n_classes, self)?))
    }
}

/// Mean binary log loss of `p` against `y`.
pub fn log_loss(p: &[f64], y: &[bool]) -> f64 {
    let eps = 1e-15;
    p.iter()
        .zip(y)
        .map(|(&p, &y)| {
            let p = p.clamp(eps, 1.0 - eps);
            if y {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum::<f64>()
        / p.len() as f64
}
