use fallimpact_core::dataio::{ingest_csv, split};
use fallimpact_core::eval::run_benchmark;
use fallimpact_core::featsel::{rank_features, select_top_k};
use fallimpact_core::signal::{zscore_apply, zscore_fit};
use fallimpact_core::synth::gen_dataset;
use fallimpact_core::trees::ForestConfig;
use fallimpact_core::{
    BenchmarkOptions, CanonicalDataset, CsvSchema, DatasetSpec, EvaluationReport, ModelConfig,
    ModelKind, SplitSpec, TrainedModel,
};

fn prepared() -> (CanonicalDataset, CanonicalDataset, CanonicalDataset) {
    let ds = gen_dataset(&DatasetSpec::default()).unwrap().dataset;
    let sp = split(&ds, &SplitSpec::default()).unwrap();
    let norm = zscore_fit(&sp.train).unwrap();
    let train = zscore_apply(&sp.train, &norm).unwrap();
    let rank = rank_features(&train, &ForestConfig::default(), 0).unwrap();
    let top = select_top_k(&rank, 5).unwrap();
    let pick = |d: &CanonicalDataset| zscore_apply(d, &norm).unwrap().select_columns(&top).unwrap();
    (pick(&sp.train), pick(&sp.validation), pick(&sp.test))
}

fn configs() -> Vec<ModelConfig> {
    ModelKind::ALL.iter().map(|k| k.default_config()).collect()
}

fn untimed() -> BenchmarkOptions {
    BenchmarkOptions {
        record_timing: false,
        tune_threshold: false,
    }
}

#[test]
fn every_model_separates_synthetic_impacts() {
    let (train, val, test) = prepared();
    let (report, evals) = run_benchmark(&train, &val, &test, &configs(), 0, &untimed()).unwrap();
    assert_eq!(report.models.len(), 8);
    assert_eq!(report.features.len(), 5);
    for m in &report.models {
        assert!(m.metrics.accuracy >= 0.95, "{}: {}", m.model, m.metrics.accuracy);
        assert!(m.auc >= 0.98, "{}: {}", m.model, m.auc);
        assert_eq!(m.metrics.weighted.recall, m.metrics.accuracy);
        assert_eq!(m.confusion.total(), test.len());
        assert!(m.training_seconds.is_none());
    }
    for e in &evals {
        let back = TrainedModel::from_json(&e.model.to_json().unwrap()).unwrap();
        for row in test.matrix() {
            assert_eq!(
                back.decision_score(&row).unwrap().to_bits(),
                e.model.decision_score(&row).unwrap().to_bits()
            );
        }
    }
}

#[test]
fn untimed_reports_are_reproducible() {
    let (train, val, test) = prepared();
    let a = run_benchmark(&train, &val, &test, &configs(), 3, &untimed()).unwrap().0;
    let b = run_benchmark(&train, &val, &test, &configs(), 3, &untimed()).unwrap().0;
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    a.write_json(&path).unwrap();
    assert_eq!(EvaluationReport::read_json(&path).unwrap(), a);
}

#[test]
fn csv_round_trips() {
    let synth = gen_dataset(&DatasetSpec {
        n_subjects: 1,
        trials_per_activity: 1,
        n_noise_channels: 2,
        ..DatasetSpec::default()
    })
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    for s in &synth.streams {
        let p = dir.path().join(format!("{}.csv", s.device_id()));
        s.write_csv(&p).unwrap();
        assert_eq!(&ingest_csv(&p, &CsvSchema::all_channels(s.device_id())).unwrap(), s);
    }
    let p = dir.path().join("dataset.csv");
    synth.dataset.write_csv(&p).unwrap();
    let back = CanonicalDataset::read_csv(&p).unwrap();
    assert_eq!(back, synth.dataset);
}
