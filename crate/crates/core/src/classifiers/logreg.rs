use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{check_query, check_training, require_both_classes, Prediction};
use crate::trees::sigmoid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogRegConfig {
    /// Inverse L2 strength: the penalty is `|w|^2 / (2C)`.
    pub c: f64,
    pub max_iter: usize,
    /// Converged once the gradient's infinity norm drops below this.
    pub tolerance: f64,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            max_iter: 10_000,
            tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegModel {
    pub config: LogRegConfig,
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub iterations: usize,
    /// Gradient infinity norm at the returned parameters.
    pub gradient_norm: f64,
}

/// `log(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn margin(theta: &[f64], row: &[f64]) -> f64 {
    let d = row.len();
    theta[..d].iter().zip(row).map(|(w, v)| w * v).sum::<f64>() + theta[d]
}

/// Penalised negative log-likelihood at `theta = [w..., b]`; the intercept
/// is not penalised.
pub fn objective(theta: &[f64], x: &[Vec<f64>], y: &[u8], c: f64) -> f64 {
    let d = theta.len() - 1;
    let nll: f64 = x
        .iter()
        .zip(y)
        .map(|(row, &t)| {
            let z = margin(theta, row);
            softplus(z) - t as f64 * z
        })
        .sum();
    nll + theta[..d].iter().map(|w| w * w).sum::<f64>() / (2.0 * c)
}

/// Analytic gradient of [`objective`].
pub fn gradient(theta: &[f64], x: &[Vec<f64>], y: &[u8], c: f64) -> Vec<f64> {
    let d = theta.len() - 1;
    let mut g: Vec<f64> = theta[..d].iter().map(|w| w / c).collect();
    g.push(0.0);
    for (row, &t) in x.iter().zip(y) {
        let r = sigmoid(margin(theta, row)) - t as f64;
        for (gk, v) in g.iter_mut().zip(row) {
            *gk += r * v;
        }
        g[d] += r;
    }
    g
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// L2-regularised logistic regression by full-batch gradient descent. Each
/// step starts from the Barzilai-Borwein length and backtracks until the
/// Armijo condition holds.
pub fn fit_logreg(x: &[Vec<f64>], y: &[u8], config: &LogRegConfig) -> Result<LogRegModel> {
    if !(config.c > 0.0 && config.c.is_finite()) {
        return Err(Error::InvalidParameter(format!("C must be positive, got {}", config.c)));
    }
    if config.max_iter == 0 {
        return Err(Error::InvalidParameter("max_iter must be at least 1".into()));
    }
    let d = check_training(x, y)?;
    require_both_classes(y)?;
    let c = config.c;
    let mut theta = vec![0.0; d + 1];
    let mut f = objective(&theta, x, y, c);
    let mut g = gradient(&theta, x, y, c);
    let mut step = 1.0 / (x.len() as f64).max(1.0);
    let mut iterations = 0;
    while iterations < config.max_iter && inf_norm(&g) >= config.tolerance {
        iterations += 1;
        let gg: f64 = g.iter().map(|v| v * v).sum();
        let mut t = step;
        let (next, f_next) = loop {
            let cand: Vec<f64> = theta.iter().zip(&g).map(|(p, q)| p - t * q).collect();
            let fc = objective(&cand, x, y, c);
            if fc <= f - 1e-4 * t * gg || t < 1e-20 {
                break (cand, fc);
            }
            t *= 0.5;
        };
        let g_next = gradient(&next, x, y, c);
        let s: Vec<f64> = next.iter().zip(&theta).map(|(a, b)| a - b).collect();
        let r: Vec<f64> = g_next.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sr: f64 = s.iter().zip(&r).map(|(a, b)| a * b).sum();
        let ss: f64 = s.iter().map(|v| v * v).sum();
        step = if sr > 0.0 { ss / sr } else { t * 2.0 };
        if f_next >= f && s.iter().all(|v| *v == 0.0) {
            // No representable progress remains.
            theta = next;
            g = g_next;
            break;
        }
        theta = next;
        f = f_next;
        g = g_next;
    }
    Ok(LogRegModel {
        config: *config,
        intercept: theta[d],
        weights: theta[..d].to_vec(),
        iterations,
        gradient_norm: inf_norm(&g),
    })
}

impl LogRegModel {
    /// `w . x + b`
    pub fn margin(&self, row: &[f64]) -> Result<f64> {
        check_query(self.weights.len(), row)?;
        Ok(self.weights.iter().zip(row).map(|(w, v)| w * v).sum::<f64>() + self.intercept)
    }

    pub fn probability(&self, row: &[f64]) -> Result<f64> {
        Ok(sigmoid(self.margin(row)?))
    }

    pub fn predict(&self, row: &[f64]) -> Result<Prediction> {
        Ok(Prediction::from_margin(self.margin(row)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn symmetric_data_has_zero_intercept() {
        let base = [(0.5, 1), (1.3, 1), (2.0, 0), (0.2, 0), (1.7, 1)];
        let mut x = Vec::new();
        let mut y = Vec::new();
        for &(v, l) in &base {
            x.push(vec![v]);
            y.push(l);
            x.push(vec![-v]);
            y.push(1 - l);
        }
        let m = fit_logreg(&x, &y, &LogRegConfig::default()).unwrap();
        assert!(m.intercept.abs() < 1e-6, "{}", m.intercept);
        assert!(m.gradient_norm < 1e-6);
    }

    #[test]
    fn boundary_scores_half() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y: Vec<u8> = (0..10).map(|i| u8::from(i >= 5)).collect();
        let m = fit_logreg(&x, &y, &LogRegConfig::default()).unwrap();
        assert!(m.weights[0] > 0.0);
        let boundary = -m.intercept / m.weights[0];
        assert!((m.probability(&[boundary]).unwrap() - 0.5).abs() < 1e-12);
        assert!(m.margin(&[boundary]).unwrap().abs() < 1e-12);
        for (row, &l) in x.iter().zip(&y) {
            assert_eq!(m.predict(row).unwrap().label, l);
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let d = rng.random_range(1..=5);
            let n = rng.random_range(2..=50);
            let x: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..d).map(|_| rng.random_range(-3.0..3.0)).collect())
                .collect();
            let y: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
            let theta: Vec<f64> = (0..=d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let g = gradient(&theta, &x, &y, 0.7);
            for k in 0..=d {
                let h = 1e-5;
                let mut p = theta.clone();
                p[k] += h;
                let mut m = theta.clone();
                m[k] -= h;
                let fd = (objective(&p, &x, &y, 0.7) - objective(&m, &x, &y, 0.7)) / (2.0 * h);
                assert!((fd - g[k]).abs() <= 1e-5 * g[k].abs().max(1.0));
            }
        }
    }

    #[test]
    fn softplus_is_stable() {
        assert_eq!(softplus(1000.0), 1000.0);
        assert_eq!(softplus(-1000.0), 0.0);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn validation() {
        let x = vec![vec![0.0], vec![1.0]];
        assert!(matches!(
            fit_logreg(&x, &[0, 0], &LogRegConfig::default()),
            Err(Error::SingleClass)
        ));
        let bad = LogRegConfig {
            c: -1.0,
            ..LogRegConfig::default()
        };
        assert!(fit_logreg(&x, &[0, 1], &bad).is_err());
    }
}
