//! Confusion counts, metric sets, ROC curves and the train/evaluate harness
//! over any set of model configurations.

use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::{format_value, CanonicalDataset};
use crate::error::{Error, Result};
use crate::model::{fit_model, ModelConfig, ModelKind, TrainedModel};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// `tp,fp,tn,fn`
    pub fn to_writer<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["tp", "fp", "tn", "fn"])?;
        w.write_record([self.tp, self.fp, self.tn, self.fn_].map(|v| v.to_string()))?;
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.to_writer(File::create(path).map_err(|e| Error::io(path, e))?)
    }
}

fn check_labels(v: &[u8]) -> Result<()> {
    match v.iter().find(|&&l| l > 1) {
        Some(l) => Err(Error::InvalidLabel(l.to_string())),
        None => Ok(()),
    }
}

/// Counts with class 1 (impact) as positive.
pub fn confusion(y_true: &[u8], y_pred: &[u8]) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(Error::LengthMismatch {
            expected: y_true.len(),
            found: y_pred.len(),
        });
    }
    if y_true.is_empty() {
        return Err(Error::EmptyInput("confusion of no rows"));
    }
    check_labels(y_true)?;
    check_labels(y_pred)?;
    let mut cm = ConfusionMatrix::default();
    for (&t, &p) in y_true.iter().zip(y_pred) {
        match (t, p) {
            (1, 1) => cm.tp += 1,
            (0, 1) => cm.fp += 1,
            (0, 0) => cm.tn += 1,
            _ => cm.fn_ += 1,
        }
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub accuracy: f64,
    /// Class 1 only.
    pub positive: ClassMetrics,
    /// Support-weighted mean over both classes; `f1` is the harmonic mean of
    /// the weighted precision and recall.
    pub weighted: ClassMetrics,
    pub training_seconds: Option<f64>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

pub fn metrics(cm: &ConfusionMatrix) -> Result<MetricSet> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::EmptyInput("confusion matrix"));
    }
    let n = total as f64;
    let (s1, s0) = ((cm.tp + cm.fn_) as f64, (cm.tn + cm.fp) as f64);
    let p1 = ratio(cm.tp, cm.tp + cm.fp);
    let r1 = ratio(cm.tp, cm.tp + cm.fn_);
    let p0 = ratio(cm.tn, cm.tn + cm.fn_);
    let precision = (s1 * p1 + s0 * p0) / n;
    // support * recall is the per-class hit count, so this is exact.
    let recall = ratio(cm.tp + cm.tn, total);
    Ok(MetricSet {
        accuracy: ratio(cm.tp + cm.tn, total),
        positive: ClassMetrics {
            precision: p1,
            recall: r1,
            f1: harmonic(p1, r1),
        },
        weighted: ClassMetrics {
            precision,
            recall,
            f1: harmonic(precision, recall),
        },
        training_seconds: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// From (0, 0) to (1, 1), both coordinates non-decreasing.
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

impl RocCurve {
    /// `fpr,tpr`
    pub fn to_writer<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["fpr", "tpr"])?;
        for p in &self.points {
            w.write_record([format_value(p.fpr), format_value(p.tpr)])?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.to_writer(File::create(path).map_err(|e| Error::io(path, e))?)
    }
}

/// Sweeps the threshold down through the distinct scores; equal scores move
/// the curve in a single diagonal step. AUC is the trapezoid area.
pub fn roc_curve(y_true: &[u8], scores: &[f64]) -> Result<RocCurve> {
    if y_true.len() != scores.len() {
        return Err(Error::LengthMismatch {
            expected: y_true.len(),
            found: scores.len(),
        });
    }
    check_labels(y_true)?;
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::NonFinite(format!("score {s}")));
    }
    let pos = y_true.iter().filter(|&&l| l == 1).count();
    let neg = y_true.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![RocPoint { fpr: 0.0, tpr: 0.0 }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if y_true[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let prev = *points.last().expect("non-empty");
        let p = RocPoint {
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
        };
        auc += (p.fpr - prev.fpr) * (p.tpr + prev.tpr) / 2.0;
        points.push(p);
    }
    Ok(RocCurve { points, auc })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchmarkOptions {
    /// Measure fit wall-clock time. Fits then run one at a time.
    pub record_timing: bool,
    /// Pick each model's threshold by validation accuracy instead of the
    /// kind's default.
    pub tune_threshold: bool,
}

impl Default for BenchmarkOptions {
    fn default() -> Self {
        Self {
            record_timing: true,
            tune_threshold: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub model: ModelKind,
    pub threshold: f64,
    pub confusion: ConfusionMatrix,
    pub metrics: MetricSet,
    pub auc: f64,
    pub training_seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelEvaluation {
    pub report: ModelReport,
    pub roc: RocCurve,
    pub model: TrainedModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub seed: u64,
    pub features: Vec<String>,
    pub n_train: usize,
    pub n_validation: usize,
    pub n_test: usize,
    pub models: Vec<ModelReport>,
}

impl EvaluationReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Model kinds ordered by test accuracy, best first; ties keep report
    /// order.
    pub fn accuracy_ranking(&self) -> Vec<ModelKind> {
        let mut m: Vec<&ModelReport> = self.models.iter().collect();
        m.sort_by(|a, b| b.metrics.accuracy.total_cmp(&a.metrics.accuracy));
        m.into_iter().map(|r| r.model).collect()
    }
}

pub fn fit_timed(
    x: &[Vec<f64>],
    y: &[u8],
    config: &ModelConfig,
    seed: u64,
) -> Result<(TrainedModel, Duration)> {
    let start = Instant::now();
    let model = fit_model(x, y, config, seed)?;
    Ok((model, start.elapsed()))
}

/// Threshold maximising accuracy on `(x, y)`: the kind's default or a
/// midpoint between consecutive distinct scores. Ties keep the default, then
/// the lowest candidate.
pub fn tune_threshold(model: &TrainedModel, x: &[Vec<f64>], y: &[u8]) -> Result<f64> {
    let scores = x
        .iter()
        .map(|r| model.decision_score(r))
        .collect::<Result<Vec<_>>>()?;
    let mut distinct = scores.clone();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let accuracy = |t: f64| {
        scores
            .iter()
            .zip(y)
            .filter(|(&s, &l)| u8::from(s > t) == l)
            .count()
    };
    let mut best = (model.threshold(), accuracy(model.threshold()));
    for w in distinct.windows(2) {
        let t = w[0] + (w[1] - w[0]) / 2.0;
        let a = accuracy(t);
        if a > best.1 {
            best = (t, a);
        }
    }
    Ok(best.0)
}

/// Scores a fitted model on a labeled set with the given threshold.
pub fn evaluate_model(
    model: &TrainedModel,
    x: &[Vec<f64>],
    y: &[u8],
    threshold: f64,
) -> Result<(ConfusionMatrix, MetricSet, RocCurve)> {
    let scores = x
        .iter()
        .map(|r| model.decision_score(r))
        .collect::<Result<Vec<_>>>()?;
    let pred: Vec<u8> = scores.iter().map(|&s| u8::from(s > threshold)).collect();
    let cm = confusion(y, &pred)?;
    Ok((cm, metrics(&cm)?, roc_curve(y, &scores)?))
}

/// Fits every configuration on the same training set. With timing on the
/// fits run one at a time and each reports its wall-clock seconds; otherwise
/// they run on the rayon pool and report `None`.
pub fn fit_all(
    x: &[Vec<f64>],
    y: &[u8],
    configs: &[ModelConfig],
    seed: u64,
    record_timing: bool,
) -> Result<Vec<(TrainedModel, Option<f64>)>> {
    let fit = |c: &ModelConfig| {
        fit_timed(x, y, c, seed).map(|(m, d)| (m, record_timing.then_some(d.as_secs_f64())))
    };
    if record_timing {
        configs.iter().map(fit).collect()
    } else {
        configs.par_iter().map(fit).collect()
    }
}

/// Scores one fitted model on `test`, tuning its threshold on `val` when
/// asked.
pub fn assess(
    model: TrainedModel,
    training_seconds: Option<f64>,
    val: &(Vec<Vec<f64>>, Vec<u8>),
    test: &(Vec<Vec<f64>>, Vec<u8>),
    tune: bool,
) -> Result<ModelEvaluation> {
    let threshold = if tune {
        tune_threshold(&model, &val.0, &val.1)?
    } else {
        model.threshold()
    };
    let (confusion, mut metrics, roc) = evaluate_model(&model, &test.0, &test.1, threshold)?;
    metrics.training_seconds = training_seconds;
    Ok(ModelEvaluation {
        report: ModelReport {
            model: model.kind(),
            threshold,
            confusion,
            metrics,
            auc: roc.auc,
            training_seconds,
        },
        roc,
        model,
    })
}

/// Fits every configuration on `train` and reports on `test`. `val` is used
/// only when threshold tuning is on. Results follow the order of `configs`.
pub fn run_benchmark(
    train: &CanonicalDataset,
    val: &CanonicalDataset,
    test: &CanonicalDataset,
    configs: &[ModelConfig],
    seed: u64,
    options: &BenchmarkOptions,
) -> Result<(EvaluationReport, Vec<ModelEvaluation>)> {
    if train.feature_names() != test.feature_names() || train.feature_names() != val.feature_names()
    {
        return Err(Error::FeatureMismatch {
            expected: train.feature_names().to_vec(),
            found: test.feature_names().to_vec(),
        });
    }
    let tr = train.to_xy()?;
    let va = val.to_xy()?;
    let te = test.to_xy()?;
    let evals: Vec<ModelEvaluation> = fit_all(&tr.0, &tr.1, configs, seed, options.record_timing)?
        .into_iter()
        .map(|(m, t)| assess(m, t, &va, &te, options.tune_threshold))
        .collect::<Result<_>>()?;
    let report = EvaluationReport {
        seed,
        features: train.feature_names().to_vec(),
        n_train: train.len(),
        n_validation: val.len(),
        n_test: test.len(),
        models: evals.iter().map(|e| e.report.clone()).collect(),
    };
    Ok((report, evals))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pairwise_auc(y: &[u8], s: &[f64]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..y.len() {
            for j in 0..y.len() {
                if y[i] == 1 && y[j] == 0 {
                    den += 1.0;
                    if s[i] > s[j] {
                        num += 1.0;
                    } else if s[i] == s[j] {
                        num += 0.5;
                    }
                }
            }
        }
        num / den
    }

    #[test]
    fn confusion_counts_and_errors() {
        let cm = confusion(&[1, 0, 1, 0], &[1, 0, 1, 0]).unwrap();
        assert_eq!((cm.fp, cm.fn_), (0, 0));
        let swapped = confusion(&[1, 1, 0, 0, 0], &[0, 1, 1, 1, 0]).unwrap();
        assert_eq!(
            swapped,
            ConfusionMatrix {
                tp: 1,
                fp: 2,
                tn: 1,
                fn_: 1
            }
        );
        assert!(confusion(&[], &[]).is_err());
        assert!(confusion(&[1], &[1, 0]).is_err());
        assert!(confusion(&[2], &[1]).is_err());
    }

    #[test]
    fn metric_examples() {
        let perfect = metrics(&ConfusionMatrix {
            tp: 3,
            fp: 0,
            tn: 5,
            fn_: 0,
        })
        .unwrap();
        assert_eq!(perfect.accuracy, 1.0);
        assert_eq!(perfect.positive.f1, 1.0);
        assert_eq!(perfect.weighted.precision, 1.0);
        let m = metrics(&ConfusionMatrix {
            tp: 9,
            fp: 1,
            tn: 90,
            fn_: 0,
        })
        .unwrap();
        assert_eq!(m.positive.precision, 0.9);
        assert_eq!(m.positive.recall, 1.0);
        assert_eq!(m.accuracy, 0.99);
        // Weighted precision: (9 * 0.9 + 91 * 90/90) / 100.
        assert!((m.weighted.precision - 0.9910).abs() < 1e-12);
        assert!(metrics(&ConfusionMatrix::default()).is_err());
        let none_predicted = metrics(&ConfusionMatrix {
            tp: 0,
            fp: 0,
            tn: 4,
            fn_: 2,
        })
        .unwrap();
        assert_eq!(none_predicted.positive.precision, 0.0);
        assert_eq!(none_predicted.positive.f1, 0.0);
    }

    #[test]
    fn roc_examples() {
        let r = roc_curve(&[0, 0, 1, 1], &[0.1, 0.4, 0.35, 0.8]).unwrap();
        assert!((r.auc - 0.75).abs() < 1e-15);
        assert_eq!(roc_curve(&[0, 1, 0, 1], &[0.3; 4]).unwrap().auc, 0.5);
        let sep = roc_curve(&[0, 0, 1], &[-2.0, -1.0, 5.0]).unwrap();
        assert_eq!(sep.auc, 1.0);
        assert_eq!(sep.points.first(), Some(&RocPoint { fpr: 0.0, tpr: 0.0 }));
        assert_eq!(sep.points.last(), Some(&RocPoint { fpr: 1.0, tpr: 1.0 }));
        assert!(matches!(roc_curve(&[1, 1], &[0.1, 0.2]), Err(Error::SingleClass)));
        assert!(roc_curve(&[0, 1], &[f64::NAN, 0.2]).is_err());
    }

    #[test]
    fn tuned_threshold_never_worse_than_default() {
        let x: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64]).collect();
        let y: Vec<u8> = (0..30).map(|i| u8::from(i >= 12)).collect();
        let model = fit_model(&x, &y, &ModelKind::Lr.default_config(), 0).unwrap();
        let t = tune_threshold(&model, &x, &y).unwrap();
        let acc = |t: f64| {
            evaluate_model(&model, &x, &y, t).unwrap().1.accuracy
        };
        assert!(acc(t) >= acc(model.threshold()));
    }

    proptest! {
        #[test]
        fn auc_matches_pairwise(
            data in prop::collection::vec((0u8..2, 0i32..20), 2..60)
        ) {
            let y: Vec<u8> = data.iter().map(|d| d.0).collect();
            prop_assume!(y.contains(&0) && y.contains(&1));
            let s: Vec<f64> = data.iter().map(|d| d.1 as f64 / 4.0).collect();
            let r = roc_curve(&y, &s).unwrap();
            prop_assert!((r.auc - pairwise_auc(&y, &s)).abs() <= 1e-9);
            let neg: Vec<f64> = s.iter().map(|v| -v).collect();
            prop_assert!((roc_curve(&y, &neg).unwrap().auc - (1.0 - r.auc)).abs() <= 1e-9);
            prop_assert!(r.points.windows(2).all(|w| w[0].fpr <= w[1].fpr && w[0].tpr <= w[1].tpr));
        }

        #[test]
        fn weighted_recall_is_accuracy(tp in 0usize..50, fp in 0usize..50, tn in 0usize..50, fn_ in 0usize..50) {
            let cm = ConfusionMatrix { tp, fp, tn, fn_ };
            prop_assume!(cm.total() > 0);
            let m = metrics(&cm).unwrap();
            prop_assert_eq!(m.weighted.recall, m.accuracy);
            for c in [m.positive, m.weighted] {
                prop_assert!((c.f1 - harmonic(c.precision, c.recall)).abs() == 0.0);
                prop_assert!((0.0..=1.0).contains(&c.f1));
            }
        }

        #[test]
        fn metrics_permutation_invariant(
            pairs in prop::collection::vec((0u8..2, 0u8..2), 1..40),
            rot in 0usize..40,
        ) {
            let t: Vec<u8> = pairs.iter().map(|p| p.0).collect();
            let p: Vec<u8> = pairs.iter().map(|p| p.1).collect();
            let k = rot % t.len();
            let mut t2 = t.clone();
            let mut p2 = p.clone();
            t2.rotate_left(k);
            p2.rotate_left(k);
            t2.reverse();
            p2.reverse();
            prop_assert_eq!(confusion(&t, &p).unwrap(), confusion(&t2, &p2).unwrap());
        }
    }
}
