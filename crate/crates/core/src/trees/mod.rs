//! Tree learners grown from scratch: a Gini CART classifier, a random forest
//! with impurity importances and out-of-bag error, and logistic gradient
//! boosting over regression trees.

mod cart;
mod forest;
mod gboost;

pub use cart::{best_split, fit_tree, Node, Split, TreeConfig, TreeModel};
pub use forest::{
    fit_forest, forest_importances, oob_error, ForestConfig, ForestModel, MaxFeatures,
};
pub use gboost::{fit_gboost, BoostConfig, BoostModel, RegNode, RegressionTree};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sample counts of the two classes at a node.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassDistribution {
    pub counts: [usize; 2],
}

impl ClassDistribution {
    pub fn new(negatives: usize, positives: usize) -> Self {
        Self {
            counts: [negatives, positives],
        }
    }

    pub fn from_labels<'a>(labels: impl IntoIterator<Item = &'a u8>) -> Self {
        let mut counts = [0; 2];
        for &l in labels {
            counts[l as usize] += 1;
        }
        Self { counts }
    }

    pub fn total(&self) -> usize {
        self.counts[0] + self.counts[1]
    }

    /// Fraction of positive samples; 0 for an empty distribution.
    pub fn positive_fraction(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            t => self.counts[1] as f64 / t as f64,
        }
    }

    pub fn is_pure(&self) -> bool {
        self.counts[0] == 0 || self.counts[1] == 0
    }
}

/// `1 - sum(p_i^2)`
pub fn gini(dist: &ClassDistribution) -> Result<f64> {
    let total = dist.total();
    if total == 0 {
        return Err(Error::EmptyInput("gini of an empty distribution"));
    }
    let t = total as f64;
    Ok(1.0 - dist.counts.iter().map(|&c| (c as f64 / t).powi(2)).sum::<f64>())
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}
