//! One fit/predict/score contract over all eight classifiers, plus the
//! self-describing JSON envelope every fitted model is stored in.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::classifiers::{
    fit_gnb, fit_knn, fit_logreg, fit_sgd, fit_svm, GnbModel, KnnConfig, KnnModel, LogRegConfig,
    LogRegModel, SgdConfig, SgdModel, SvmConfig, SvmModel,
};
use crate::error::{Error, Result};
use crate::trees::{
    fit_forest, fit_gboost, fit_tree, BoostConfig, BoostModel, ForestConfig, ForestModel,
    MaxFeatures, TreeConfig, TreeModel,
};

/// A class label together with the score it was derived from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub label: u8,
    pub score: f64,
}

impl Prediction {
    /// Label 1 iff `p > 0.5`.
    pub fn from_probability(p: f64) -> Self {
        Self {
            label: u8::from(p > 0.5),
            score: p,
        }
    }

    /// Label 1 iff `margin > 0`.
    pub fn from_margin(margin: f64) -> Self {
        Self {
            label: u8::from(margin > 0.0),
            score: margin,
        }
    }
}

/// Validates a training matrix and returns its width.
pub(crate) fn check_training(x: &[Vec<f64>], y: &[u8]) -> Result<usize> {
    if x.is_empty() {
        return Err(Error::EmptyInput("training set"));
    }
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    let d = x[0].len();
    if d == 0 {
        return Err(Error::EmptyInput("feature vector"));
    }
    for row in x {
        if row.len() != d {
            return Err(Error::WidthMismatch {
                expected: d,
                found: row.len(),
            });
        }
        if let Some(v) = row.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("training cell {v}")));
        }
    }
    if let Some(l) = y.iter().find(|&&l| l > 1) {
        return Err(Error::InvalidLabel(l.to_string()));
    }
    Ok(d)
}

pub(crate) fn check_query(n_features: usize, row: &[f64]) -> Result<()> {
    if row.len() != n_features {
        return Err(Error::WidthMismatch {
            expected: n_features,
            found: row.len(),
        });
    }
    if let Some(v) = row.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("query cell {v}")));
    }
    Ok(())
}

/// Rejects training labels that contain only one class.
pub(crate) fn require_both_classes(y: &[u8]) -> Result<()> {
    let positives = y.iter().filter(|&&l| l == 1).count();
    if positives == 0 || positives == y.len() {
        return Err(Error::SingleClass);
    }
    Ok(())
}

/// The eight model kinds, in report order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ModelKind {
    Svm,
    Rf,
    Sgd,
    Nb,
    Dt,
    Knn,
    Lr,
    Gboost,
}

impl ModelKind {
    pub const ALL: [ModelKind; 8] = [
        ModelKind::Svm,
        ModelKind::Rf,
        ModelKind::Sgd,
        ModelKind::Nb,
        ModelKind::Dt,
        ModelKind::Knn,
        ModelKind::Lr,
        ModelKind::Gboost,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Svm => "SVM",
            ModelKind::Rf => "RF",
            ModelKind::Sgd => "SGD",
            ModelKind::Nb => "NB",
            ModelKind::Dt => "DT",
            ModelKind::Knn => "KNN",
            ModelKind::Lr => "LR",
            ModelKind::Gboost => "GBOOST",
        }
    }

    /// Decision threshold on [`TrainedModel::decision_score`].
    pub fn threshold(self) -> f64 {
        match self {
            ModelKind::Svm | ModelKind::Sgd | ModelKind::Lr => 0.0,
            _ => 0.5,
        }
    }

    pub fn default_config(self) -> ModelConfig {
        match self {
            ModelKind::Svm => ModelConfig::Svm(SvmConfig::default()),
            ModelKind::Rf => ModelConfig::Rf(ForestConfig::default()),
            ModelKind::Sgd => ModelConfig::Sgd(SgdConfig::default()),
            ModelKind::Nb => ModelConfig::Nb,
            ModelKind::Dt => ModelConfig::Dt(TreeConfig::default()),
            ModelKind::Knn => ModelConfig::Knn(KnnConfig::default()),
            ModelKind::Lr => ModelConfig::Lr(LogRegConfig::default()),
            ModelKind::Gboost => ModelConfig::Gboost(BoostConfig::default()),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let up = s.trim().to_ascii_uppercase();
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == up)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown model `{s}`")))
    }
}

/// Hyperparameters of one model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "UPPERCASE")]
pub enum ModelConfig {
    Svm(SvmConfig),
    Rf(ForestConfig),
    Sgd(SgdConfig),
    Nb,
    Dt(TreeConfig),
    Knn(KnnConfig),
    Lr(LogRegConfig),
    Gboost(BoostConfig),
}

impl ModelConfig {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelConfig::Svm(_) => ModelKind::Svm,
            ModelConfig::Rf(_) => ModelKind::Rf,
            ModelConfig::Sgd(_) => ModelKind::Sgd,
            ModelConfig::Nb => ModelKind::Nb,
            ModelConfig::Dt(_) => ModelKind::Dt,
            ModelConfig::Knn(_) => ModelKind::Knn,
            ModelConfig::Lr(_) => ModelKind::Lr,
            ModelConfig::Gboost(_) => ModelKind::Gboost,
        }
    }

    /// Checks hyperparameters without touching data.
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
            }
        };
        let at_least_one = |name: &str, v: usize| {
            if v >= 1 {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must be at least 1")))
            }
        };
        match self {
            ModelConfig::Svm(c) => c.validate(),
            ModelConfig::Rf(c) => {
                at_least_one("n_estimators", c.n_estimators)?;
                if let MaxFeatures::Count(k) = c.max_features {
                    at_least_one("max_features", k)?;
                }
                Ok(())
            }
            ModelConfig::Sgd(c) => {
                positive("alpha", c.alpha)?;
                at_least_one("max_iter", c.max_iter)
            }
            ModelConfig::Nb => Ok(()),
            ModelConfig::Dt(c) => match c.max_features {
                Some(k) => at_least_one("max_features", k),
                None => Ok(()),
            },
            ModelConfig::Knn(c) => c.validate(),
            ModelConfig::Lr(c) => {
                positive("C", c.c)?;
                at_least_one("max_iter", c.max_iter)
            }
            ModelConfig::Gboost(c) => positive("learning_rate", c.learning_rate),
        }
    }
}

/// A fitted model of any kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "UPPERCASE")]
pub enum TrainedModel {
    Svm(SvmModel),
    Rf(ForestModel),
    Sgd(SgdModel),
    Nb(GnbModel),
    Dt(TreeModel),
    Knn(KnnModel),
    Lr(LogRegModel),
    Gboost(BoostModel),
}

/// Fits the configured model. `seed` drives every random choice: forest
/// bootstraps, tree feature draws and the SGD shuffle.
pub fn fit_model(x: &[Vec<f64>], y: &[u8], config: &ModelConfig, seed: u64) -> Result<TrainedModel> {
    Ok(match config {
        ModelConfig::Svm(c) => TrainedModel::Svm(fit_svm(x, y, c)?),
        ModelConfig::Rf(c) => {
            check_training(x, y)?;
            require_both_classes(y)?;
            TrainedModel::Rf(fit_forest(x, y, c, seed)?)
        }
        ModelConfig::Sgd(c) => TrainedModel::Sgd(fit_sgd(x, y, c, seed)?),
        ModelConfig::Nb => TrainedModel::Nb(fit_gnb(x, y)?),
        ModelConfig::Dt(c) => {
            check_training(x, y)?;
            require_both_classes(y)?;
            TrainedModel::Dt(fit_tree(x, y, &TreeConfig { seed, ..*c })?)
        }
        ModelConfig::Knn(c) => TrainedModel::Knn(fit_knn(x, y, c)?),
        ModelConfig::Lr(c) => TrainedModel::Lr(fit_logreg(x, y, c)?),
        ModelConfig::Gboost(c) => TrainedModel::Gboost(fit_gboost(x, y, c)?),
    })
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            TrainedModel::Svm(_) => ModelKind::Svm,
            TrainedModel::Rf(_) => ModelKind::Rf,
            TrainedModel::Sgd(_) => ModelKind::Sgd,
            TrainedModel::Nb(_) => ModelKind::Nb,
            TrainedModel::Dt(_) => ModelKind::Dt,
            TrainedModel::Knn(_) => ModelKind::Knn,
            TrainedModel::Lr(_) => ModelKind::Lr,
            TrainedModel::Gboost(_) => ModelKind::Gboost,
        }
    }

    pub fn threshold(&self) -> f64 {
        self.kind().threshold()
    }

    pub fn n_features(&self) -> usize {
        match self {
            TrainedModel::Svm(m) => m.n_features,
            TrainedModel::Rf(m) => m.n_features,
            TrainedModel::Sgd(m) => m.weights.len(),
            TrainedModel::Nb(m) => m.n_features(),
            TrainedModel::Dt(m) => m.n_features,
            TrainedModel::Knn(m) => m.n_features(),
            TrainedModel::Lr(m) => m.weights.len(),
            TrainedModel::Gboost(m) => m.n_features,
        }
    }

    pub fn predict(&self, row: &[f64]) -> Result<Prediction> {
        match self {
            TrainedModel::Svm(m) => m.predict(row),
            TrainedModel::Rf(m) => m.predict(row),
            TrainedModel::Sgd(m) => m.predict(row),
            TrainedModel::Nb(m) => m.predict(row),
            TrainedModel::Dt(m) => m.predict(row),
            TrainedModel::Knn(m) => m.predict(row),
            TrainedModel::Lr(m) => m.predict(row),
            TrainedModel::Gboost(m) => m.predict(row),
        }
    }

    /// Monotone confidence for class 1: a margin for SVM, SGD and LR, a
    /// positive-class probability otherwise.
    pub fn decision_score(&self, row: &[f64]) -> Result<f64> {
        self.predict(row).map(|p| p.score)
    }

    pub fn predict_all(&self, x: &[Vec<f64>]) -> Result<Vec<Prediction>> {
        x.iter().map(|r| self.predict(r)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.to_json()?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs() -> (Vec<Vec<f64>>, Vec<u8>) {
        let x: Vec<Vec<f64>> = (0..40)
            .map(|i| {
                let c = if i % 2 == 0 { -1.5 } else { 1.5 };
                vec![c + ((i * 37) % 11) as f64 * 0.05, c - ((i * 13) % 7) as f64 * 0.05]
            })
            .collect();
        let y = (0..40).map(|i| (i % 2) as u8).collect();
        (x, y)
    }

    #[test]
    fn prediction_tie_rules() {
        assert_eq!(Prediction::from_probability(0.5).label, 0);
        assert_eq!(Prediction::from_probability(0.5000001).label, 1);
        assert_eq!(Prediction::from_margin(0.0).label, 0);
        assert_eq!(Prediction::from_margin(1e-300).label, 1);
    }

    #[test]
    fn kind_names_round_trip() {
        for k in ModelKind::ALL {
            assert_eq!(k.name().parse::<ModelKind>().unwrap(), k);
            assert_eq!(k.name().to_lowercase().parse::<ModelKind>().unwrap(), k);
        }
        assert!("XGB".parse::<ModelKind>().is_err());
    }

    #[test]
    fn every_kind_fits_scores_and_round_trips() {
        let (x, y) = blobs();
        for kind in ModelKind::ALL {
            let m = fit_model(&x, &y, &kind.default_config(), 3).unwrap();
            assert_eq!(m.kind(), kind);
            assert_eq!(m.n_features(), 2);
            let back = TrainedModel::from_json(&m.to_json().unwrap()).unwrap();
            for row in &x {
                let p = m.predict(row).unwrap();
                assert_eq!(p.label, u8::from(p.score > m.threshold()), "{kind}");
                assert_eq!(back.predict(row).unwrap(), p, "{kind}");
            }
            let acc = x
                .iter()
                .zip(&y)
                .filter(|(r, &l)| m.predict(r).unwrap().label == l)
                .count();
            assert_eq!(acc, x.len(), "{kind}");
        }
    }

    #[test]
    fn single_class_rejected_by_every_kind() {
        let (x, _) = blobs();
        let y = vec![1; x.len()];
        for kind in ModelKind::ALL {
            if kind == ModelKind::Knn {
                continue;
            }
            let err = fit_model(&x, &y, &kind.default_config(), 0).unwrap_err();
            assert!(matches!(err, Error::SingleClass), "{kind}: {err}");
        }
    }

    #[test]
    fn query_width_checked() {
        let (x, y) = blobs();
        for kind in ModelKind::ALL {
            let m = fit_model(&x, &y, &kind.default_config(), 0).unwrap();
            assert!(matches!(
                m.decision_score(&[0.0]),
                Err(Error::WidthMismatch { expected: 2, found: 1 })
            ));
        }
    }

    #[test]
    fn config_validation() {
        for kind in ModelKind::ALL {
            kind.default_config().validate().unwrap();
        }
        let bad = [
            ModelConfig::Knn(KnnConfig { k: 4, ..KnnConfig::default() }),
            ModelConfig::Sgd(SgdConfig { alpha: 0.0, ..SgdConfig::default() }),
            ModelConfig::Lr(LogRegConfig { c: -1.0, ..LogRegConfig::default() }),
            ModelConfig::Rf(ForestConfig { n_estimators: 0, ..ForestConfig::default() }),
            ModelConfig::Gboost(BoostConfig { learning_rate: 0.0, ..BoostConfig::default() }),
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn config_json_is_tagged() {
        let s = serde_json::to_string(&ModelKind::Knn.default_config()).unwrap();
        assert!(s.contains("\"kind\":\"KNN\""), "{s}");
        let back: ModelConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(back.kind(), ModelKind::Knn);
    }
}
