//! Z-score normalization, signal magnitude vector (SMV), threshold-based
//! onset/impact detection and semi-automatic labeling with a review override.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataio::{format_value, CanonicalDataset, FeatureScale, TIMESTAMP_COLUMN};
use crate::error::{Error, Result};

/// Impact threshold used for labeling, in g.
pub const DEFAULT_BETA_G: f64 = 2.0;
/// Thresholds common in earlier threshold-based fall detectors, kept for
/// comparison runs.
pub const PRIOR_WORK_BETAS_G: [f64; 4] = [1.0, 1.2, 1.4, 1.6];
/// Trailing window of the rolling SMV features.
pub const ROLLING_WINDOW: usize = 5;

/// Per-feature population mean and standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormParams {
    pub feature_names: Vec<String>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormParams {
    fn check(&self, data: &CanonicalDataset) -> Result<()> {
        if data.feature_names() != self.feature_names.as_slice() {
            return Err(Error::FeatureMismatch {
                expected: self.feature_names.clone(),
                found: data.feature_names().to_vec(),
            });
        }
        Ok(())
    }

    /// Maps z-scores back to raw values (`x * std + mean`).
    pub fn invert(&self, data: &CanonicalDataset) -> Result<CanonicalDataset> {
        self.check(data)?;
        let mut out = data.clone();
        for row in &mut out.rows {
            for ((v, m), s) in row.features.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = *v * s + m;
            }
        }
        out.scale = FeatureScale::Raw;
        Ok(out)
    }
}

pub fn zscore_fit(train: &CanonicalDataset) -> Result<NormParams> {
    if train.is_empty() {
        return Err(Error::EmptyInput("z-score fit needs at least one row"));
    }
    let n = train.len() as f64;
    let mut mean = Vec::with_capacity(train.width());
    let mut std = Vec::with_capacity(train.width());
    for (j, name) in train.feature_names().iter().enumerate() {
        let col = train.column(j);
        if col.iter().any(|v| !v.is_finite()) {
            return Err(Error::MissingValues(name.clone()));
        }
        let m = col.iter().sum::<f64>() / n;
        let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
        mean.push(m);
        std.push(var.sqrt());
    }
    Ok(NormParams {
        feature_names: train.feature_names().to_vec(),
        mean,
        std,
    })
}

/// `(x - mean) / std`, or 0 for zero-variance columns.
pub fn zscore_apply(data: &CanonicalDataset, params: &NormParams) -> Result<CanonicalDataset> {
    params.check(data)?;
    let mut out = data.clone();
    for row in &mut out.rows {
        for ((v, m), s) in row.features.iter_mut().zip(&params.mean).zip(&params.std) {
            *v = if *s == 0.0 { 0.0 } else { (*v - m) / s };
        }
    }
    out.scale = FeatureScale::ZScore;
    Ok(out)
}

/// Three-axis acceleration in g.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccelSample {
    pub a_x: f64,
    pub a_y: f64,
    pub a_z: f64,
}

impl AccelSample {
    pub fn new(a_x: f64, a_y: f64, a_z: f64) -> Self {
        Self { a_x, a_y, a_z }
    }
}

/// Euclidean norm of the acceleration vector.
///
/// Squares are summed in ascending order so the result is bit-identical under
/// any signed permutation of the axes.
pub fn smv(sample: &AccelSample) -> Result<f64> {
    let mut sq = [sample.a_x, sample.a_y, sample.a_z];
    if sq.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("{sample:?}")));
    }
    for v in &mut sq {
        *v *= *v;
    }
    sq.sort_by(f64::total_cmp);
    Ok((sq[0] + sq[1] + sq[2]).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmvSeries {
    pub timestamps: Vec<i64>,
    pub values: Vec<f64>,
}

impl SmvSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `timestamp_ms,smv_g`
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.to_writer(file)
    }

    pub fn to_writer<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([TIMESTAMP_COLUMN, "smv_g"])?;
        for (t, v) in self.timestamps.iter().zip(&self.values) {
            w.write_record([t.to_string(), format_value(*v)])?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file)
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if header != [TIMESTAMP_COLUMN, "smv_g"] {
            return Err(Error::Schema(format!(
                "expected `timestamp_ms,smv_g`, found {header:?}"
            )));
        }
        let mut out = SmvSeries {
            timestamps: Vec::new(),
            values: Vec::new(),
        };
        for rec in rdr.deserialize::<(i64, f64)>() {
            let (t, v) = rec?;
            out.timestamps.push(t);
            out.values.push(v);
        }
        Ok(out)
    }
}

/// SMV of every row from three raw-g axis columns.
pub fn smv_series(dataset: &CanonicalDataset, axes: [&str; 3]) -> Result<SmvSeries> {
    if dataset.scale() != FeatureScale::Raw {
        return Err(Error::NotRawUnits);
    }
    let idx = axes
        .iter()
        .map(|a| {
            dataset
                .column_index(a)
                .ok_or_else(|| Error::MissingColumn(a.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    let values = dataset
        .rows()
        .iter()
        .map(|r| {
            smv(&AccelSample::new(
                r.features[idx[0]],
                r.features[idx[1]],
                r.features[idx[2]],
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SmvSeries {
        timestamps: dataset.timestamps(),
        values,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    /// Threshold in g; a sample is an impact when its SMV is strictly above it.
    pub beta: f64,
    /// Above-threshold runs separated by less than this merge into one event.
    pub refractory_ms: i64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            beta: DEFAULT_BETA_G,
            refractory_ms: 500,
        }
    }
}

impl DetectorConfig {
    pub fn with_beta(beta: f64) -> Self {
        Self {
            beta,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "beta must be positive, got {}",
                self.beta
            )));
        }
        if self.refractory_ms < 0 {
            return Err(Error::InvalidParameter(format!(
                "refractory must be non-negative, got {} ms",
                self.refractory_ms
            )));
        }
        Ok(())
    }
}

/// Timestamp of the first sample whose SMV exceeds beta.
pub fn detect_onset(series: &SmvSeries, config: &DetectorConfig) -> Option<i64> {
    series
        .values
        .iter()
        .position(|&v| v > config.beta)
        .map(|i| series.timestamps[i])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpactEvent {
    pub start_ms: i64,
    pub peak_ms: i64,
    pub end_ms: i64,
    pub peak_smv: f64,
}

/// Maximal above-threshold runs, as `(first, last)` sample positions.
fn above_runs(series: &SmvSeries, beta: f64) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start = None;
    for (i, &v) in series.values.iter().enumerate() {
        match (v > beta, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                runs.push((s, i - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push((s, series.len() - 1));
    }
    runs
}

/// Groups above-threshold samples into impact events. Runs whose gap
/// (next start minus previous end) is below the refractory period merge.
pub fn segment_events(series: &SmvSeries, config: &DetectorConfig) -> Vec<ImpactEvent> {
    let mut merged: Vec<(usize, usize)> = Vec::new();
    for (s, e) in above_runs(series, config.beta) {
        match merged.last_mut() {
            Some(last)
                if series.timestamps[s] - series.timestamps[last.1] < config.refractory_ms =>
            {
                last.1 = e;
            }
            _ => merged.push((s, e)),
        }
    }
    merged
        .into_iter()
        .map(|(s, e)| {
            let mut peak = s;
            for i in s..=e {
                if series.values[i] > series.values[peak] {
                    peak = i;
                }
            }
            ImpactEvent {
                start_ms: series.timestamps[s],
                peak_ms: series.timestamps[peak],
                end_ms: series.timestamps[e],
                peak_smv: series.values[peak],
            }
        })
        .collect()
}

pub fn write_events_csv(path: impl AsRef<Path>, events: &[ImpactEvent]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["start_ms", "peak_ms", "end_ms", "peak_smv_g"])?;
    for e in events {
        w.write_record([
            e.start_ms.to_string(),
            e.peak_ms.to_string(),
            e.end_ms.to_string(),
            format_value(e.peak_smv),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn check_aligned(dataset: &CanonicalDataset, series: &SmvSeries) -> Result<()> {
    if series.len() != dataset.len() || series.timestamps.len() != series.values.len() {
        return Err(Error::LengthMismatch {
            expected: dataset.len(),
            found: series.len(),
        });
    }
    if let Some(row) = dataset
        .rows()
        .iter()
        .zip(&series.timestamps)
        .position(|(r, &t)| r.timestamp_ms != t)
    {
        return Err(Error::Misaligned { row });
    }
    Ok(())
}

/// Label 1 where SMV > beta, 0 otherwise (SMV equal to beta is no impact).
pub fn label_impacts(
    dataset: &CanonicalDataset,
    series: &SmvSeries,
    config: &DetectorConfig,
) -> Result<CanonicalDataset> {
    check_aligned(dataset, series)?;
    let labels: Vec<u8> = series
        .values
        .iter()
        .map(|&v| u8::from(v > config.beta))
        .collect();
    dataset.with_labels(&labels)
}

/// Appends `smv_g` and its trailing rolling mean/std (population) over
/// [`ROLLING_WINDOW`] samples. Windows restart whenever the row metadata
/// (subject, activity, trial) changes.
pub fn derive_smv_features(
    dataset: &CanonicalDataset,
    series: &SmvSeries,
) -> Result<CanonicalDataset> {
    check_aligned(dataset, series)?;
    let rows = dataset.rows();
    let mut mean = Vec::with_capacity(rows.len());
    let mut std = Vec::with_capacity(rows.len());
    let mut group_start = 0;
    for i in 0..rows.len() {
        if i > 0 && rows[i].meta != rows[i - 1].meta {
            group_start = i;
        }
        let lo = group_start.max((i + 1).saturating_sub(ROLLING_WINDOW));
        let w = &series.values[lo..=i];
        let m = w.iter().sum::<f64>() / w.len() as f64;
        let var = w.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / w.len() as f64;
        mean.push(m);
        std.push(var.sqrt());
    }
    dataset.append_columns(
        &[
            "smv_g".to_string(),
            "smv_roll_mean".to_string(),
            "smv_roll_std".to_string(),
        ],
        &[series.values.clone(), mean, std],
    )
}

/// One human correction: rows with timestamps in `[start_ms, end_ms]` take `label`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReviewEntry {
    pub start_ms: i64,
    pub end_ms: i64,
    pub label: u8,
}

/// Parses a review CSV with header `start_ms,end_ms,label`.
pub fn read_review<R: Read>(reader: R) -> Result<Vec<ReviewEntry>> {
    #[derive(Deserialize)]
    struct RawEntry {
        start_ms: i64,
        end_ms: i64,
        label: String,
    }
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != ["start_ms", "end_ms", "label"] {
        return Err(Error::Schema(format!(
            "expected `start_ms,end_ms,label`, found {header:?}"
        )));
    }
    rdr.deserialize::<RawEntry>()
        .map(|rec| {
            let rec = rec?;
            let label = match rec.label.as_str() {
                "0" => 0,
                "1" => 1,
                other => return Err(Error::InvalidLabel(other.to_string())),
            };
            Ok(ReviewEntry {
                start_ms: rec.start_ms,
                end_ms: rec.end_ms,
                label,
            })
        })
        .collect()
}

pub fn read_review_csv(path: impl AsRef<Path>) -> Result<Vec<ReviewEntry>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_review(file)
}

/// Applies review overrides in file order; later entries win on overlap.
pub fn apply_review(
    dataset: &CanonicalDataset,
    review: &[ReviewEntry],
) -> Result<CanonicalDataset> {
    let mut out = dataset.clone();
    for entry in review {
        if entry.label > 1 {
            return Err(Error::InvalidLabel(entry.label.to_string()));
        }
        let mut hit = false;
        for row in &mut out.rows {
            if entry.start_ms <= row.timestamp_ms && row.timestamp_ms <= entry.end_ms {
                row.label = Some(entry.label);
                hit = true;
            }
        }
        if !hit {
            return Err(Error::UnknownTimestampRange {
                start: entry.start_ms,
                end: entry.end_ms,
            });
        }
    }
    Ok(out)
}
