use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{check_query, check_training, require_both_classes, Prediction};

/// Relative variance floor.
pub const VAR_SMOOTHING: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnbModel {
    /// Per class, then per feature.
    pub means: [Vec<f64>; 2],
    pub variances: [Vec<f64>; 2],
    pub priors: [f64; 2],
    /// Lower bound applied to every variance.
    pub variance_floor: f64,
}

fn mean_var(col: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = col.clone().count() as f64;
    let mean = col.clone().sum::<f64>() / n;
    let var = col.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

/// Gaussian naive Bayes with population variances floored at
/// `1e-9 * max feature variance` (`1e-9` when every feature is constant).
pub fn fit_gnb(x: &[Vec<f64>], y: &[u8]) -> Result<GnbModel> {
    let d = check_training(x, y)?;
    require_both_classes(y)?;
    let max_var = (0..d)
        .map(|f| mean_var(x.iter().map(move |r| r[f])).1)
        .fold(0.0, f64::max);
    let variance_floor = if max_var > 0.0 {
        VAR_SMOOTHING * max_var
    } else {
        VAR_SMOOTHING
    };
    let mut means = [Vec::with_capacity(d), Vec::with_capacity(d)];
    let mut variances = [Vec::with_capacity(d), Vec::with_capacity(d)];
    let mut priors = [0.0; 2];
    for c in 0..2u8 {
        let rows: Vec<&Vec<f64>> = x.iter().zip(y).filter(|(_, &l)| l == c).map(|(r, _)| r).collect();
        priors[c as usize] = rows.len() as f64 / x.len() as f64;
        for f in 0..d {
            let (m, v) = mean_var(rows.iter().map(|r| r[f]));
            means[c as usize].push(m);
            variances[c as usize].push(v.max(variance_floor));
        }
    }
    Ok(GnbModel {
        means,
        variances,
        priors,
        variance_floor,
    })
}

impl GnbModel {
    pub fn n_features(&self) -> usize {
        self.means[0].len()
    }

    /// Log prior plus log likelihood per class.
    pub fn joint_log_likelihood(&self, row: &[f64]) -> Result<[f64; 2]> {
        check_query(self.n_features(), row)?;
        let mut out = [0.0; 2];
        for (c, o) in out.iter_mut().enumerate() {
            *o = self.priors[c].ln()
                + row
                    .iter()
                    .zip(&self.means[c])
                    .zip(&self.variances[c])
                    .map(|((v, m), s)| {
                        -0.5 * (2.0 * std::f64::consts::PI * s).ln() - (v - m).powi(2) / (2.0 * s)
                    })
                    .sum::<f64>();
        }
        Ok(out)
    }

    /// Normalised posteriors `[p0, p1]`.
    pub fn posteriors(&self, row: &[f64]) -> Result<[f64; 2]> {
        let [l0, l1] = self.joint_log_likelihood(row)?;
        let m = l0.max(l1);
        let (e0, e1) = ((l0 - m).exp(), (l1 - m).exp());
        let s = e0 + e1;
        Ok([e0 / s, e1 / s])
    }

    pub fn predict(&self, row: &[f64]) -> Result<Prediction> {
        Ok(Prediction::from_probability(self.posteriors(row)?[1]))
    }
}
