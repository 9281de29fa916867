use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{check_query, check_training, require_both_classes, Prediction};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SgdConfig {
    pub alpha: f64,
    /// Maximum number of epochs.
    pub max_iter: usize,
    /// Stop after an epoch in which no parameter moved by more than this.
    pub tolerance: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            alpha: 1e-4,
            max_iter: 1000,
            tolerance: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdModel {
    pub config: SgdConfig,
    pub seed: u64,
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub epochs: usize,
}

/// Linear hinge-loss classifier trained by plain stochastic gradient descent
/// on `hinge + alpha/2 |w|^2`. Step `t` (counted from 0 over all epochs) uses
/// `eta = 1 / (alpha (t0 + t))` with `t0 = 1 / alpha`. Rows are visited in a
/// fresh seeded permutation every epoch.
pub fn fit_sgd(x: &[Vec<f64>], y: &[u8], config: &SgdConfig, seed: u64) -> Result<SgdModel> {
    if !(config.alpha > 0.0 && config.alpha.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "alpha must be positive, got {}",
            config.alpha
        )));
    }
    if config.max_iter == 0 {
        return Err(Error::InvalidParameter("max_iter must be at least 1".into()));
    }
    let d = check_training(x, y)?;
    require_both_classes(y)?;
    let alpha = config.alpha;
    let t0 = 1.0 / alpha;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..x.len()).collect();
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut t = 0u64;
    let mut epochs = 0;
    while epochs < config.max_iter {
        epochs += 1;
        let (w_start, b_start) = (w.clone(), b);
        order.shuffle(&mut rng);
        for &i in &order {
            let eta = 1.0 / (alpha * (t0 + t as f64));
            let yi = if y[i] == 1 { 1.0 } else { -1.0 };
            let m = yi * (w.iter().zip(&x[i]).map(|(a, v)| a * v).sum::<f64>() + b);
            let shrink = 1.0 - eta * alpha;
            w.iter_mut().for_each(|a| *a *= shrink);
            if m < 1.0 {
                for (a, v) in w.iter_mut().zip(&x[i]) {
                    *a += eta * yi * v;
                }
                b += eta * yi;
            }
            t += 1;
        }
        let moved = w
            .iter()
            .zip(&w_start)
            .map(|(a, s)| (a - s).abs())
            .fold((b - b_start).abs(), f64::max);
        if moved <= config.tolerance {
            break;
        }
    }
    Ok(SgdModel {
        config: *config,
        seed,
        weights: w,
        intercept: b,
        epochs,
    })
}

impl SgdModel {
    /// `w . x + b`
    pub fn margin(&self, row: &[f64]) -> Result<f64> {
        check_query(self.weights.len(), row)?;
        Ok(self.weights.iter().zip(row).map(|(w, v)| w * v).sum::<f64>() + self.intercept)
    }

    pub fn predict(&self, row: &[f64]) -> Result<Prediction> {
        Ok(Prediction::from_margin(self.margin(row)?))
    }
}
