//! Pipeline stages. Each reads only files written by earlier stages (or the
//! configured inputs) and writes only its own files under the output
//! directory.

use std::fs;
use std::path::{Path, PathBuf};

use fallimpact_core::dataio::{
    annotate_segments, impute_missing, ingest_csv, read_segments, split, synchronize,
    write_segments,
};
use fallimpact_core::eval::{assess, fit_all, ModelReport};
use fallimpact_core::featsel::{
    default_grid, rank_features, read_feature_list, select_top_k, topk_study,
    write_feature_list, StudyOptions,
};
use fallimpact_core::signal::{
    apply_review, derive_smv_features, label_impacts, read_review_csv, segment_events,
    smv_series, write_events_csv, zscore_apply, zscore_fit,
};
use fallimpact_core::synth::{gen_dataset, write_ground_truth, SMV_AXES, WAIST_DEVICE};
use fallimpact_core::{
    CanonicalDataset, CsvSchema, DatasetSpec, Error, EvaluationReport, FeatureRanking, ModelKind,
    RawSensorStream, SmvSeries, TrainedModel,
};
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::{CliError, Result, StageContext};

/// File locations under the output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    root: PathBuf,
}

fn file_stem(kind: ModelKind) -> String {
    kind.name().to_ascii_lowercase()
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn ingested(&self, device: &str) -> PathBuf {
        self.root.join("ingested").join(format!("{device}.csv"))
    }

    pub fn synced(&self) -> PathBuf {
        self.root.join("synced.csv")
    }

    pub fn smv(&self) -> PathBuf {
        self.root.join("smv.csv")
    }

    pub fn features(&self) -> PathBuf {
        self.root.join("features.csv")
    }

    pub fn labeled(&self) -> PathBuf {
        self.root.join("labeled.csv")
    }

    pub fn events(&self) -> PathBuf {
        self.root.join("events.csv")
    }

    pub fn reviewed(&self) -> PathBuf {
        self.root.join("reviewed.csv")
    }

    pub fn split(&self, part: &str) -> PathBuf {
        self.root.join("splits").join(format!("{part}.csv"))
    }

    pub fn norm_params(&self) -> PathBuf {
        self.root.join("norm_params.json")
    }

    pub fn importances(&self) -> PathBuf {
        self.root.join("importances.csv")
    }

    pub fn topk_study(&self) -> PathBuf {
        self.root.join("topk_study.csv")
    }

    pub fn selected(&self) -> PathBuf {
        self.root.join("selected_features.txt")
    }

    pub fn model(&self, kind: ModelKind) -> PathBuf {
        self.root.join("models").join(format!("{}.json", file_stem(kind)))
    }

    pub fn training_times(&self) -> PathBuf {
        self.root.join("training_times.json")
    }

    pub fn eval(&self, kind: ModelKind) -> PathBuf {
        self.root.join("eval").join(format!("{}.json", file_stem(kind)))
    }

    pub fn roc(&self, kind: ModelKind) -> PathBuf {
        self.root.join("eval").join(format!("roc_{}.csv", file_stem(kind)))
    }

    pub fn confusion(&self, kind: ModelKind) -> PathBuf {
        self.root.join("eval").join(format!("confusion_{}.csv", file_stem(kind)))
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("report.json")
    }
}

const SPLIT_PARTS: [&str; 3] = ["train", "validation", "test"];

fn require(stage: &'static str, path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::MissingInput {
            stage,
            path: path.to_path_buf(),
        })
    }
}

fn parent_dir(stage: &'static str, path: &Path) -> Result<()> {
    let Some(dir) = path.parent() else {
        return Ok(());
    };
    fs::create_dir_all(dir).map_err(|source| CliError::Io {
        stage,
        path: dir.to_path_buf(),
        source,
    })
}

fn read_dataset(stage: &'static str, path: &Path) -> Result<CanonicalDataset> {
    require(stage, path)?;
    CanonicalDataset::read_csv(path).stage(stage)
}

fn write_dataset(stage: &'static str, path: &Path, ds: &CanonicalDataset) -> Result<()> {
    parent_dir(stage, path)?;
    ds.write_csv(path).stage(stage)
}

fn write_json<T: Serialize>(stage: &'static str, path: &Path, value: &T) -> Result<()> {
    parent_dir(stage, path)?;
    let mut text = serde_json::to_string_pretty(value)
        .map_err(Error::from)
        .stage(stage)?;
    text.push('\n');
    fs::write(path, text).map_err(|source| CliError::Io {
        stage,
        path: path.to_path_buf(),
        source,
    })
}

fn read_json<T: for<'de> Deserialize<'de>>(stage: &'static str, path: &Path) -> Result<T> {
    require(stage, path)?;
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        stage,
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(Error::from).stage(stage)
}

fn read_selected(stage: &'static str, layout: &Layout) -> Result<Vec<String>> {
    let path = layout.selected();
    require(stage, &path)?;
    read_feature_list(&path).stage(stage)
}

/// Reads each configured device CSV and rewrites it in canonical form.
pub fn ingest(cfg: &PipelineConfig) -> Result<()> {
    const STAGE: &str = "ingest";
    let layout = Layout::new(&cfg.out);
    for dev in &cfg.data.devices {
        require(STAGE, &dev.path)?;
        let schema = CsvSchema {
            device_id: dev.id.clone(),
            channels: dev.channels.clone(),
        };
        let stream = ingest_csv(&dev.path, &schema).stage(STAGE)?;
        let out = layout.ingested(&dev.id);
        parent_dir(STAGE, &out)?;
        stream.write_csv(&out).stage(STAGE)?;
    }
    Ok(())
}

/// Joins the ingested streams onto the reference clock, attaches segment
/// metadata and drops rows missing any SMV axis.
pub fn sync(cfg: &PipelineConfig) -> Result<()> {
    const STAGE: &str = "sync";
    let layout = Layout::new(&cfg.out);
    let streams = cfg
        .data
        .devices
        .iter()
        .map(|dev| {
            let path = layout.ingested(&dev.id);
            require(STAGE, &path)?;
            ingest_csv(&path, &CsvSchema::all_channels(&dev.id)).stage(STAGE)
        })
        .collect::<Result<Vec<RawSensorStream>>>()?;
    let mut ds = synchronize(&streams, &cfg.data.reference, cfg.data.tolerance_ms).stage(STAGE)?;
    if let Some(path) = &cfg.data.segments {
        require(STAGE, path)?;
        let segments = read_segments(path).stage(STAGE)?;
        ds = annotate_segments(&ds, &segments);
    }
    let axes = cfg
        .data
        .smv_axes
        .iter()
        .map(|a| {
            ds.column_index(a)
                .ok_or_else(|| Error::MissingColumn(a.clone()))
                .stage(STAGE)
        })
        .collect::<Result<Vec<usize>>>()?;
    let keep: Vec<usize> = (0..ds.len())
        .filter(|&i| axes.iter().all(|&j| !ds.rows()[i].features[j].is_nan()))
        .collect();
    if keep.is_empty() {
        return Err(Error::EmptySynchronization).stage(STAGE);
    }
    let ds = ds.take_rows(&keep).stage(STAGE)?;
    write_dataset(STAGE, &layout.synced(), &ds)
}

fn axes(cfg: &PipelineConfig) -> [&str; 3] {
    let a = &cfg.data.smv_axes;
    [&a[0], &a[1], &a[2]]
}

/// Writes the SMV series and the dataset extended with SMV features.
pub fn smv(cfg: &PipelineConfig) -> Result<()> {
    const STAGE: &str = "smv";
    let layout = Layout::new(&cfg.out);
    let ds = read_dataset(STAGE, &layout.synced())?;
    let series = smv_series(&ds, axes(cfg)).stage(STAGE)?;
    series.write_csv(layout.smv()).stage(STAGE)?;
    let featured = derive_smv_features(&ds, &series).stage(STAGE)?;
    write_dataset(STAGE, &layout.features(), &featured)
}

/// Threshold labels and impact events at the configured beta.
pub fn label(cfg: &PipelineConfig) -> Result<()> {
    const STAGE: &str = "label";
    let layout = Layout::new(&cfg.out);
    let ds = read_dataset(STAGE, &layout.features())?;
    require(STAGE, &layout.smv())?;
    let series = SmvSeries::read_csv(layout.smv()).stage(STAGE)?;
    let labeled = label_impacts(&ds, &series, &cfg.detector).stage(STAGE)?;
    write_dataset(STAGE, &layout.labeled(), &labeled)?;
    write_events_csv(layout.events(), &segment_events(&series, &cfg.detector)).stage(STAGE)
}

/// Applies the review file, if any. Without one the output equals the input.
pub fn review_apply(cfg: &PipelineConfig) -> Result<()> {
    const STAGE: &str = "review-apply";
    let layout = Layout::new(&cfg.out);
    let mut ds = read_dataset(STAGE, &layout.labeled())?;
    if let Some(path) = &cfg.review.path {
        require(STAGE, path)?;
        let review = read_review_csv(path).stage(STAGE)?;
        ds = apply_review(&ds, &review).stage(STAGE)?;
    }
    write_dataset(STAGE, &layout.reviewed(), &ds)
}

/// Splits, imputes and z-scores with training statistics, then ranks the
/// features and runs the top-k study on the training part.
pub fn rank(cfg: &PipelineConfig) -> Result<()> {
    const STAGE: &str = "rank";
    let layout = Layout::new(&cfg.out);
    let ds = read_dataset(STAGE, &layout.reviewed())?;
    let parts = split(&ds, &cfg.split.split_spec(cfg.seed)).stage(STAGE)?;
    let imputed = [&parts.train, &parts.validation, &parts.test]
        .map(|p| impute_missing(p, &parts.train).stage(STAGE));
    let [train, validation, test] = imputed;
    let (train, validation, test) = (train?, validation?, test?);
    let params = zscore_fit(&train).stage(STAGE)?;
    let mut scaled = Vec::with_capacity(3);
    for (name, part) in SPLIT_PARTS.into_iter().zip([&train, &validation, &test]) {
        let z = zscore_apply(part, &params).stage(STAGE)?;
        write_dataset(STAGE, &layout.split(name), &z)?;
        scaled.push(z);
    }
    write_json(STAGE, &layout.norm_params(), &params)?;
    let f = &cfg.features;
    let ranking = rank_features(&scaled[0], &f.forest, cfg.seed).stage(STAGE)?;
    ranking.write_csv(layout.importances()).stage(STAGE)?;
    let grid = f
        .study_grid
        .clone()
        .unwrap_or_else(|| default_grid(ranking.len()));
    let options = StudyOptions {
        repeats: f.study_repeats,
        record_timing: cfg.record_timing,
    };
    let study = topk_study(&scaled[0], &ranking, &grid, &f.forest, cfg.seed, &options)
        .stage(STAGE)?;
    study.write_csv(layout.topk_study()).stage(STAGE)
}

/// Writes the `top_k` best-ranked feature names, one per line.
pub fn select(cfg: &PipelineConfig) -> Result<()> {
    const STAGE: &str = "select";
    let layout = Layout::new(&cfg.out);
    require(STAGE, &layout.importances())?;
    let ranking =
        FeatureRanking::read_csv(layout.importances(), cfg.seed, cfg.features.forest).stage(STAGE)?;
    let names = select_top_k(&ranking, cfg.features.top_k).stage(STAGE)?;
    write_feature_list(layout.selected(), &names).stage(STAGE)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingTime {
    pub model: ModelKind,
    pub seconds: Option<f64>,
}

fn labeled_part(
    stage: &'static str,
    layout: &Layout,
    part: &str,
    features: &[String],
) -> Result<(Vec<Vec<f64>>, Vec<u8>)> {
    read_dataset(stage, &layout.split(part))?
        .select_columns(features)
        .and_then(|d| d.to_xy())
        .stage(stage)
}

/// Fits every enabled model on the selected training columns.
pub fn train(cfg: &PipelineConfig) -> Result<()> {
    const STAGE: &str = "train";
    let layout = Layout::new(&cfg.out);
    let features = read_selected(STAGE, &layout)?;
    let (x, y) = labeled_part(STAGE, &layout, "train", &features)?;
    let fitted =
        fit_all(&x, &y, &cfg.models.configs(), cfg.seed, cfg.record_timing).stage(STAGE)?;
    let mut times = Vec::with_capacity(fitted.len());
    for (model, seconds) in &fitted {
        let path = layout.model(model.kind());
        parent_dir(STAGE, &path)?;
        model.save(&path).stage(STAGE)?;
        times.push(TrainingTime {
            model: model.kind(),
            seconds: *seconds,
        });
    }
    write_json(STAGE, &layout.training_times(), &times)
}

/// Scores every enabled model on the test part.
pub fn eval(cfg: &PipelineConfig) -> Result<()> {
    const STAGE: &str = "eval";
    let layout = Layout::new(&cfg.out);
    let features = read_selected(STAGE, &layout)?;
    let val = labeled_part(STAGE, &layout, "validation", &features)?;
    let test = labeled_part(STAGE, &layout, "test", &features)?;
    let times: Vec<TrainingTime> = read_json(STAGE, &layout.training_times())?;
    for kind in cfg.models.kinds() {
        let path = layout.model(kind);
        require(STAGE, &path)?;
        let model = TrainedModel::load(&path).stage(STAGE)?;
        if model.kind() != kind {
            return Err(CliError::Stage {
                stage: STAGE,
                source: Error::Schema(format!(
                    "{} holds a {} model",
                    path.display(),
                    model.kind()
                )),
            });
        }
        let seconds = times.iter().find(|t| t.model == kind).and_then(|t| t.seconds);
        let ev = assess(model, seconds, &val, &test, cfg.models.tune_threshold).stage(STAGE)?;
        write_json(STAGE, &layout.eval(kind), &ev.report)?;
        ev.roc.write_csv(layout.roc(kind)).stage(STAGE)?;
        ev.report.confusion.write_csv(layout.confusion(kind)).stage(STAGE)?;
    }
    Ok(())
}

/// Collects the per-model evaluations into `report.json`.
pub fn report(cfg: &PipelineConfig) -> Result<EvaluationReport> {
    const STAGE: &str = "report";
    let layout = Layout::new(&cfg.out);
    let features = read_selected(STAGE, &layout)?;
    let [n_train, n_validation, n_test] =
        SPLIT_PARTS.map(|p| read_dataset(STAGE, &layout.split(p)).map(|d| d.len()));
    let models = cfg
        .models
        .kinds()
        .into_iter()
        .map(|k| read_json::<ModelReport>(STAGE, &layout.eval(k)))
        .collect::<Result<Vec<_>>>()?;
    let report = EvaluationReport {
        seed: cfg.seed,
        features,
        n_train: n_train?,
        n_validation: n_validation?,
        n_test: n_test?,
        models,
    };
    parent_dir(STAGE, &layout.report())?;
    report.write_json(layout.report()).stage(STAGE)?;
    Ok(report)
}

/// Every stage in pipeline order.
pub fn run_all(cfg: &PipelineConfig) -> Result<EvaluationReport> {
    ingest(cfg)?;
    sync(cfg)?;
    smv(cfg)?;
    label(cfg)?;
    review_apply(cfg)?;
    rank(cfg)?;
    select(cfg)?;
    train(cfg)?;
    eval(cfg)?;
    report(cfg)
}

/// Writes a synthetic recording under `out`: raw device CSVs, segments,
/// ground truth, the assembled dataset and a ready-to-run `config.toml`.
pub fn synth_gen(spec: &DatasetSpec, out: &Path) -> Result<()> {
    const STAGE: &str = "synth-gen";
    let data = gen_dataset(spec).stage(STAGE)?;
    let raw = out.join("raw");
    fs::create_dir_all(&raw).map_err(|source| CliError::Io {
        stage: STAGE,
        path: raw.clone(),
        source,
    })?;
    for s in &data.streams {
        s.write_csv(raw.join(format!("{}.csv", s.device_id())))
            .stage(STAGE)?;
    }
    write_segments(raw.join("segments.csv"), &data.segments).stage(STAGE)?;
    write_ground_truth(out.join("ground_truth.csv"), &data.ground_truth).stage(STAGE)?;
    data.dataset.write_csv(out.join("dataset.csv")).stage(STAGE)?;
    let path = out.join("config.toml");
    fs::write(&path, synthetic_config(spec.seed, &data.streams)).map_err(|source| CliError::Io {
        stage: STAGE,
        path,
        source,
    })
}

fn synthetic_config(seed: u64, streams: &[RawSensorStream]) -> String {
    let mut s = format!(
        "schema_version = 1\nseed = {seed}\nout = \"run\"\n\n[data]\nreference = \"{WAIST_DEVICE}\"\n\
         segments = \"raw/segments.csv\"\nsmv_axes = [\"{}\", \"{}\", \"{}\"]\n",
        SMV_AXES[0], SMV_AXES[1], SMV_AXES[2]
    );
    for st in streams {
        s.push_str(&format!(
            "\n[[data.devices]]\nid = \"{0}\"\npath = \"raw/{0}.csv\"\n",
            st.device_id()
        ));
    }
    s
}
