use serde::{Deserialize, Serialize};

use super::cart::midpoint;
use super::sigmoid;
use crate::error::{Error, Result};
use crate::model::{check_query, check_training, Prediction};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoostConfig {
    pub n_estimators: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_samples_split: usize,
}

impl Default for BoostConfig {
    fn default() -> Self {
        Self {
            n_estimators: 100,
            learning_rate: 0.1,
            max_depth: 3,
            min_samples_split: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum RegNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<RegNode>,
}

impl RegressionTree {
    pub fn evaluate(&self, row: &[f64]) -> f64 {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                RegNode::Leaf { value } => return *value,
                RegNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => id = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostModel {
    pub config: BoostConfig,
    pub n_features: usize,
    /// Log-odds of the training positive rate.
    pub initial_score: f64,
    pub stages: Vec<RegressionTree>,
}

/// Binary logistic gradient boosting. Each stage fits a depth-limited
/// least-squares tree to the residuals `y - p` and sets every leaf to the
/// Newton step `sum(residual) / sum(p (1 - p))`.
pub fn fit_gboost(x: &[Vec<f64>], y: &[u8], config: &BoostConfig) -> Result<BoostModel> {
    let d = check_training(x, y)?;
    if !(config.learning_rate > 0.0 && config.learning_rate.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "learning_rate must be positive, got {}",
            config.learning_rate
        )));
    }
    let n = x.len();
    let positives = y.iter().filter(|&&l| l == 1).count();
    if positives == 0 || positives == n {
        return Err(Error::SingleClass);
    }
    let p = positives as f64 / n as f64;
    let initial_score = (p / (1.0 - p)).ln();
    let mut raw = vec![initial_score; n];
    let mut stages = Vec::with_capacity(config.n_estimators);
    for _ in 0..config.n_estimators {
        let prob: Vec<f64> = raw.iter().map(|&f| sigmoid(f)).collect();
        let residual: Vec<f64> = y.iter().zip(&prob).map(|(&t, &q)| t as f64 - q).collect();
        let hessian: Vec<f64> = prob.iter().map(|q| q * (1.0 - q)).collect();
        let tree = fit_regression_tree(x, &residual, &hessian, config);
        for (f, row) in raw.iter_mut().zip(x) {
            *f += config.learning_rate * tree.evaluate(row);
        }
        stages.push(tree);
    }
    Ok(BoostModel {
        config: *config,
        n_features: d,
        initial_score,
        stages,
    })
}

impl BoostModel {
    /// `initial + learning_rate * sum(stage outputs)`
    pub fn raw_score(&self, row: &[f64]) -> Result<f64> {
        check_query(self.n_features, row)?;
        let sum: f64 = self.stages.iter().map(|t| t.evaluate(row)).sum();
        Ok(self.initial_score + self.config.learning_rate * sum)
    }

    pub fn predict(&self, row: &[f64]) -> Result<Prediction> {
        Ok(Prediction::from_probability(sigmoid(self.raw_score(row)?)))
    }
}

fn fit_regression_tree(
    x: &[Vec<f64>],
    residual: &[f64],
    hessian: &[f64],
    config: &BoostConfig,
) -> RegressionTree {
    let d = x[0].len();
    let mut nodes = vec![RegNode::Leaf { value: 0.0 }];
    let mut stack = vec![(0usize, (0..x.len()).collect::<Vec<_>>(), 0usize)];
    while let Some((id, idx, depth)) = stack.pop() {
        let split = if depth < config.max_depth && idx.len() >= config.min_samples_split.max(2) {
            best_variance_split(x, residual, &idx, d)
        } else {
            None
        };
        match split {
            None => {
                let num: f64 = idx.iter().map(|&i| residual[i]).sum();
                let den: f64 = idx.iter().map(|&i| hessian[i]).sum();
                let value = if den.abs() < 1e-12 { 0.0 } else { num / den };
                nodes[id] = RegNode::Leaf { value };
            }
            Some((feature, threshold)) => {
                let (l, r): (Vec<usize>, Vec<usize>) =
                    idx.iter().partition(|&&i| x[i][feature] <= threshold);
                let left = nodes.len();
                nodes.push(RegNode::Leaf { value: 0.0 });
                nodes.push(RegNode::Leaf { value: 0.0 });
                nodes[id] = RegNode::Split {
                    feature,
                    threshold,
                    left,
                    right: left + 1,
                };
                stack.push((left + 1, r, depth + 1));
                stack.push((left, l, depth + 1));
            }
        }
    }
    RegressionTree { nodes }
}

/// Split maximising the drop in squared error; lowest feature, then lowest
/// threshold on ties.
#[allow(clippy::needless_range_loop)]
fn best_variance_split(
    x: &[Vec<f64>],
    target: &[f64],
    idx: &[usize],
    d: usize,
) -> Option<(usize, f64)> {
    let n = idx.len() as f64;
    let total: f64 = idx.iter().map(|&i| target[i]).sum();
    let base = total * total / n;
    let mut best: Option<(f64, usize, f64)> = None;
    let mut order = idx.to_vec();
    for f in 0..d {
        order.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]));
        let mut left_sum = 0.0;
        for k in 0..order.len() - 1 {
            left_sum += target[order[k]];
            let (v, next) = (x[order[k]][f], x[order[k + 1]][f]);
            if v == next {
                continue;
            }
            let nl = (k + 1) as f64;
            let right_sum = total - left_sum;
            let gain = left_sum * left_sum / nl + right_sum * right_sum / (n - nl) - base;
            if gain > 1e-12 && best.is_none_or(|(g, ..)| gain > g) {
                best = Some((gain, f, midpoint(v, next)));
            }
        }
    }
    best.map(|(_, f, t)| (f, t))
}
