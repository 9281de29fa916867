use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{check_query, check_training, Prediction};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KnnWeights {
    #[default]
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KnnConfig {
    pub k: usize,
    pub weights: KnnWeights,
}

impl Default for KnnConfig {
    fn default() -> Self {
        Self {
            k: 5,
            weights: KnnWeights::Uniform,
        }
    }
}

impl KnnConfig {
    /// Odd `k` rules out vote ties.
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k % 2 == 0 {
            return Err(Error::InvalidParameter(format!(
                "k must be odd and at least 1, got {}",
                self.k
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub config: KnnConfig,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<u8>,
}

pub fn fit_knn(x: &[Vec<f64>], y: &[u8], config: &KnnConfig) -> Result<KnnModel> {
    config.validate()?;
    check_training(x, y)?;
    if config.k > x.len() {
        return Err(Error::KTooLarge {
            k: config.k,
            n: x.len(),
        });
    }
    Ok(KnnModel {
        config: *config,
        x: x.to_vec(),
        y: y.to_vec(),
    })
}

impl KnnModel {
    pub fn n_features(&self) -> usize {
        self.x[0].len()
    }

    /// Indices of the `k` nearest training rows by Euclidean distance,
    /// closest first; equal distances go to the lower index.
    pub fn neighbours(&self, row: &[f64]) -> Result<Vec<usize>> {
        check_query(self.n_features(), row)?;
        let mut d: Vec<(f64, usize)> = self
            .x
            .iter()
            .enumerate()
            .map(|(i, t)| (t.iter().zip(row).map(|(a, b)| (a - b) * (a - b)).sum(), i))
            .collect();
        let k = self.config.k;
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < d.len() {
            d.select_nth_unstable_by(k - 1, cmp);
            d.truncate(k);
        }
        d.sort_by(cmp);
        Ok(d.into_iter().map(|(_, i)| i).collect())
    }

    /// Score is the positive fraction among the neighbours.
    pub fn predict(&self, row: &[f64]) -> Result<Prediction> {
        let nb = self.neighbours(row)?;
        let pos = nb.iter().filter(|&&i| self.y[i] == 1).count();
        Ok(Prediction::from_probability(pos as f64 / nb.len() as f64))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k1_on_training_point_returns_its_label() {
        let x = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![5.0, 5.0]];
        let m = fit_knn(&x, &[0, 1, 0], &KnnConfig { k: 1, ..KnnConfig::default() }).unwrap();
        assert_eq!(m.predict(&[1.0, 1.0]).unwrap().label, 1);
        assert_eq!(m.predict(&[5.0, 5.0]).unwrap().label, 0);
    }

    #[test]
    fn distance_tie_goes_to_lower_index() {
        // Rows 2 and 7 are both at distance 5 from the origin and compete
        // for the fifth slot; four rows are strictly closer.
        let x: Vec<Vec<f64>> = vec![
            vec![1.0],
            vec![-1.0],
            vec![5.0],
            vec![2.0],
            vec![-2.0],
            vec![9.0],
            vec![-9.0],
            vec![-5.0],
        ];
        let y = [0, 0, 1, 0, 0, 1, 1, 0];
        let m = fit_knn(&x, &y, &KnnConfig::default()).unwrap();
        let nb = m.neighbours(&[0.0]).unwrap();
        assert_eq!(nb, vec![0, 1, 3, 4, 2]);
        assert_eq!(m.predict(&[0.0]).unwrap().score, 0.2);
    }

    #[test]
    fn parameter_errors() {
        let x = vec![vec![0.0], vec![1.0]];
        assert!(matches!(
            fit_knn(&x, &[0, 1], &KnnConfig::default()),
            Err(Error::KTooLarge { k: 5, n: 2 })
        ));
        assert!(fit_knn(&x, &[0, 1], &KnnConfig { k: 2, ..KnnConfig::default() }).is_err());
        assert!(fit_knn(&x, &[0, 1], &KnnConfig { k: 0, ..KnnConfig::default() }).is_err());
    }
}
