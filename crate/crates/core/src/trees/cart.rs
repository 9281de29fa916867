use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{gini, ClassDistribution};
use crate::error::{Error, Result};
use crate::model::{check_query, check_training, Prediction};

/// A candidate split: samples with `x[feature] <= threshold` go left.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    /// Parent Gini minus the size-weighted Gini of the children.
    pub impurity_decrease: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        n_samples: usize,
        impurity_decrease: f64,
    },
    Leaf {
        counts: [usize; 2],
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeConfig {
    /// `None` grows until leaves are pure or unsplittable.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    /// Random candidate features per split; `None` uses all of them.
    pub max_features: Option<usize>,
    /// Seeds the candidate-feature draws.
    pub seed: u64,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self {
            max_depth: None,
            min_samples_split: 2,
            max_features: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    pub config: TreeConfig,
    pub n_features: usize,
    /// Node 0 is the root.
    pub nodes: Vec<Node>,
}

/// Sum of squared class counts over node size, as an exact fraction.
/// Maximising it over children is equivalent to minimising weighted Gini.
#[derive(Clone, Copy)]
struct Purity {
    num: u128,
    den: u128,
}

impl Purity {
    fn of(c0: usize, c1: usize) -> Self {
        let (c0, c1) = (c0 as u128, c1 as u128);
        Self {
            num: c0 * c0 + c1 * c1,
            den: c0 + c1,
        }
    }

    fn children(left: [usize; 2], right: [usize; 2]) -> Self {
        let l = Self::of(left[0], left[1]);
        let r = Self::of(right[0], right[1]);
        Self {
            num: l.num * r.den + r.num * l.den,
            den: l.den * r.den,
        }
    }

    fn gt(self, other: Self) -> bool {
        self.num * other.den > other.num * self.den
    }
}

fn weighted_decrease(parent: [usize; 2], left: [usize; 2], right: [usize; 2]) -> f64 {
    let g = |c: [usize; 2]| gini(&ClassDistribution { counts: c }).unwrap_or(0.0);
    let n = (parent[0] + parent[1]) as f64;
    let nl = (left[0] + left[1]) as f64;
    let nr = (right[0] + right[1]) as f64;
    g(parent) - nl / n * g(left) - nr / n * g(right)
}

/// Midpoint of two consecutive distinct values, never equal to the upper one.
pub(crate) fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) / 2.0;
    if m < hi {
        m
    } else {
        lo
    }
}

/// Best Gini split of the samples listed in `idx` (repeats allowed) over the
/// candidate features, scanning midpoints of consecutive distinct values.
/// Ties go to the lowest feature index, then the lowest threshold.
pub(crate) fn best_split_on(
    x: &[Vec<f64>],
    y: &[u8],
    idx: &[usize],
    candidates: &[usize],
) -> Option<Split> {
    if idx.len() < 2 {
        return None;
    }
    let parent = ClassDistribution::from_labels(idx.iter().map(|&i| &y[i])).counts;
    if parent[0] == 0 || parent[1] == 0 {
        return None;
    }
    let parent_purity = Purity::of(parent[0], parent[1]);
    let mut best: Option<(Purity, usize, f64, [usize; 2])> = None;
    let mut order: Vec<usize> = idx.to_vec();
    for &f in candidates {
        order.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]));
        let mut left = [0usize; 2];
        for k in 0..order.len() - 1 {
            left[y[order[k]] as usize] += 1;
            let (v, next) = (x[order[k]][f], x[order[k + 1]][f]);
            if v == next {
                continue;
            }
            let right = [parent[0] - left[0], parent[1] - left[1]];
            let score = Purity::children(left, right);
            if !score.gt(parent_purity) {
                continue;
            }
            if best.as_ref().is_none_or(|(b, ..)| score.gt(*b)) {
                best = Some((score, f, midpoint(v, next), left));
            }
        }
    }
    best.map(|(_, feature, threshold, left)| {
        let right = [parent[0] - left[0], parent[1] - left[1]];
        Split {
            feature,
            threshold,
            impurity_decrease: weighted_decrease(parent, left, right),
        }
    })
}

/// Best split over all rows. Returns `None` when no split strictly lowers the
/// weighted Gini impurity.
pub fn best_split(x: &[Vec<f64>], y: &[u8], candidate_features: &[usize]) -> Option<Split> {
    let idx: Vec<usize> = (0..x.len().min(y.len())).collect();
    let mut candidates = candidate_features.to_vec();
    candidates.sort_unstable();
    candidates.dedup();
    best_split_on(x, y, &idx, &candidates)
}

/// Grows a tree over `idx` (a bootstrap sample may repeat rows).
pub(crate) fn grow(
    x: &[Vec<f64>],
    y: &[u8],
    idx: Vec<usize>,
    config: &TreeConfig,
    n_features: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Node> {
    let all: Vec<usize> = (0..n_features).collect();
    let draw = config.max_features.filter(|&m| m < n_features);
    let mut nodes = vec![Node::Leaf { counts: [0, 0] }];
    let mut stack = vec![(0usize, idx, 0usize)];
    while let Some((id, idx, depth)) = stack.pop() {
        let counts = ClassDistribution::from_labels(idx.iter().map(|&i| &y[i])).counts;
        let may_split = idx.len() >= config.min_samples_split.max(2)
            && config.max_depth.is_none_or(|d| depth < d)
            && counts[0] > 0
            && counts[1] > 0;
        let split = if may_split {
            let candidates = match draw {
                Some(m) => {
                    let mut c = index::sample(rng, n_features, m.max(1)).into_vec();
                    c.sort_unstable();
                    c
                }
                None => all.clone(),
            };
            best_split_on(x, y, &idx, &candidates)
        } else {
            None
        };
        match split {
            None => nodes[id] = Node::Leaf { counts },
            Some(s) => {
                let (l, r): (Vec<usize>, Vec<usize>) =
                    idx.iter().partition(|&&i| x[i][s.feature] <= s.threshold);
                let left = nodes.len();
                let right = left + 1;
                nodes.push(Node::Leaf { counts: [0, 0] });
                nodes.push(Node::Leaf { counts: [0, 0] });
                nodes[id] = Node::Split {
                    feature: s.feature,
                    threshold: s.threshold,
                    left,
                    right,
                    n_samples: idx.len(),
                    impurity_decrease: s.impurity_decrease,
                };
                // Right pushed first so the left subtree is expanded first.
                stack.push((right, r, depth + 1));
                stack.push((left, l, depth + 1));
            }
        }
    }
    nodes
}

/// Fits a Gini decision tree on every row.
pub fn fit_tree(x: &[Vec<f64>], y: &[u8], config: &TreeConfig) -> Result<TreeModel> {
    let d = check_training(x, y)?;
    if config.max_features == Some(0) {
        return Err(Error::InvalidParameter("max_features must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let nodes = grow(x, y, (0..x.len()).collect(), config, d, &mut rng);
    Ok(TreeModel {
        config: *config,
        n_features: d,
        nodes,
    })
}

impl TreeModel {
    pub(crate) fn leaf_counts(&self, row: &[f64]) -> [usize; 2] {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                Node::Leaf { counts } => return *counts,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => id = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    /// Positive fraction of the reached leaf; label 1 only above 0.5.
    pub fn predict(&self, row: &[f64]) -> Result<Prediction> {
        check_query(self.n_features, row)?;
        let c = self.leaf_counts(row);
        Ok(Prediction::from_probability(
            ClassDistribution { counts: c }.positive_fraction(),
        ))
    }

    /// Per-feature sum of node-size-weighted impurity decrease, relative to
    /// the root size. Not normalized.
    pub fn raw_importances(&self) -> Vec<f64> {
        let mut imp = vec![0.0; self.n_features];
        let root = match self.nodes.first() {
            Some(Node::Split { n_samples, .. }) => *n_samples as f64,
            _ => return imp,
        };
        for node in &self.nodes {
            if let Node::Split {
                feature,
                n_samples,
                impurity_decrease,
                ..
            } = node
            {
                imp[*feature] += *n_samples as f64 / root * impurity_decrease;
            }
        }
        imp
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], id: usize) -> usize {
            match &nodes[id] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }
}
