//! Sensor CSV ingestion, multi-device synchronization, imputation and
//! train/validation/test splitting.
//!
//! Timestamps are integer milliseconds. Missing cells are `None` in a
//! [`RawSensorStream`] and `NaN` in a [`CanonicalDataset`].

use std::collections::HashSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Name of the timestamp column in every CSV this crate reads or writes.
pub const TIMESTAMP_COLUMN: &str = "timestamp_ms";

/// Default nearest-neighbour join tolerance, about half the sampling period of
/// an 18-20 Hz wearable.
pub const DEFAULT_SYNC_TOLERANCE_MS: i64 = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct RawSample {
    pub timestamp_ms: i64,
    pub values: Vec<Option<f64>>,
}

/// One device's samples as ingested.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSensorStream {
    device_id: String,
    channel_names: Vec<String>,
    samples: Vec<RawSample>,
}

impl RawSensorStream {
    /// Builds a stream, checking that timestamps strictly increase and that
    /// every sample has one value per channel.
    pub fn new(
        device_id: impl Into<String>,
        channel_names: Vec<String>,
        samples: Vec<RawSample>,
    ) -> Result<Self> {
        for (i, s) in samples.iter().enumerate() {
            if s.values.len() != channel_names.len() {
                return Err(Error::LengthMismatch {
                    expected: channel_names.len(),
                    found: s.values.len(),
                });
            }
            if i > 0 && s.timestamp_ms <= samples[i - 1].timestamp_ms {
                return Err(Error::NonMonotonicTimestamps {
                    row: i + 1,
                    previous: samples[i - 1].timestamp_ms,
                    current: s.timestamp_ms,
                });
            }
        }
        Ok(Self {
            device_id: device_id.into(),
            channel_names,
            samples,
        })
    }

    pub fn device_id(&self) -> &str {
        &self.device_id
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }

    pub fn samples(&self) -> &[RawSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Writes the stream in the ingestion CSV format.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.to_writer(file)
    }

    pub fn to_writer<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec![TIMESTAMP_COLUMN.to_string()];
        header.extend(self.channel_names.iter().cloned());
        w.write_record(&header)?;
        for s in &self.samples {
            let mut record = Vec::with_capacity(s.values.len() + 1);
            record.push(s.timestamp_ms.to_string());
            record.extend(s.values.iter().map(|v| match v {
                Some(x) => format_value(*x),
                None => "NAN".to_string(),
            }));
            w.write_record(&record)?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

/// Column mapping for one device's CSV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub device_id: String,
    /// Channels to keep, in output order. `None` keeps every non-timestamp
    /// column in file order.
    pub channels: Option<Vec<String>>,
}

impl CsvSchema {
    pub fn all_channels(device_id: impl Into<String>) -> Self {
        Self {
            device_id: device_id.into(),
            channels: None,
        }
    }
}

/// Reads one device CSV. The first column must be `timestamp_ms`; empty,
/// `NAN` (any case) and unparseable cells become missing values.
pub fn ingest_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<RawSensorStream> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    ingest_reader(file, schema)
}

pub fn ingest_reader<R: Read>(reader: R, schema: &CsvSchema) -> Result<RawSensorStream> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.first().map(String::as_str) != Some(TIMESTAMP_COLUMN) {
        return Err(Error::Schema(format!(
            "first column must be `{TIMESTAMP_COLUMN}`, found {:?}",
            header.first()
        )));
    }
    let (channel_names, positions): (Vec<String>, Vec<usize>) = match &schema.channels {
        None => header
            .iter()
            .enumerate()
            .skip(1)
            .map(|(i, name)| (name.clone(), i))
            .unzip(),
        Some(wanted) => {
            let mut names = Vec::with_capacity(wanted.len());
            let mut pos = Vec::with_capacity(wanted.len());
            for name in wanted {
                let i = header
                    .iter()
                    .skip(1)
                    .position(|h| h == name)
                    .ok_or_else(|| Error::Schema(format!("column `{name}` not in header")))?;
                names.push(name.clone());
                pos.push(i + 1);
            }
            (names, pos)
        }
    };
    let mut seen = HashSet::new();
    for name in &channel_names {
        if !seen.insert(name) {
            return Err(Error::Schema(format!("duplicate column `{name}`")));
        }
    }

    let mut samples = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let timestamp_ms = parse_timestamp(&record[0]).ok_or_else(|| {
            Error::Schema(format!("data row {}: bad timestamp `{}`", i + 1, &record[0]))
        })?;
        let values = positions.iter().map(|&p| parse_cell(&record[p])).collect();
        samples.push(RawSample {
            timestamp_ms,
            values,
        });
    }
    if samples.is_empty() {
        return Err(Error::NoSamples);
    }
    RawSensorStream::new(schema.device_id.clone(), channel_names, samples)
}

/// Integer milliseconds; fractional values round half-up.
fn parse_timestamp(cell: &str) -> Option<i64> {
    if let Ok(v) = cell.parse::<i64>() {
        return Some(v);
    }
    let v = cell.parse::<f64>().ok().filter(|v| v.is_finite())?;
    Some((v + 0.5).floor() as i64)
}

fn parse_cell(cell: &str) -> Option<f64> {
    if cell.is_empty() || cell.eq_ignore_ascii_case("nan") {
        return None;
    }
    cell.parse::<f64>().ok().filter(|v| v.is_finite())
}

pub(crate) fn format_value(v: f64) -> String {
    if v.is_nan() {
        "NAN".to_string()
    } else {
        v.to_string()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RowMeta {
    pub subject: u32,
    pub activity: String,
    pub trial: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub timestamp_ms: i64,
    /// `NaN` marks a missing cell.
    pub features: Vec<f64>,
    pub meta: RowMeta,
    pub label: Option<u8>,
}

/// Units of the feature columns. SMV thresholds only make sense on raw g.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum FeatureScale {
    #[default]
    Raw,
    ZScore,
}

/// Synchronized feature table with per-row metadata and optional labels.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalDataset {
    pub(crate) feature_names: Vec<String>,
    pub(crate) rows: Vec<Row>,
    pub(crate) scale: FeatureScale,
}

impl CanonicalDataset {
    pub fn new(feature_names: Vec<String>, rows: Vec<Row>) -> Result<Self> {
        let mut seen = HashSet::new();
        for name in &feature_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::Schema(format!("duplicate feature `{name}`")));
            }
        }
        for (i, row) in rows.iter().enumerate() {
            if row.features.len() != feature_names.len() {
                return Err(Error::LengthMismatch {
                    expected: feature_names.len(),
                    found: row.features.len(),
                });
            }
            if i > 0 && row.timestamp_ms < rows[i - 1].timestamp_ms {
                return Err(Error::NonMonotonicTimestamps {
                    row: i + 1,
                    previous: rows[i - 1].timestamp_ms,
                    current: row.timestamp_ms,
                });
            }
            if let Some(l) = row.label {
                if l > 1 {
                    return Err(Error::InvalidLabel(l.to_string()));
                }
            }
        }
        Ok(Self {
            feature_names,
            rows,
            scale: FeatureScale::Raw,
        })
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn width(&self) -> usize {
        self.feature_names.len()
    }

    pub fn scale(&self) -> FeatureScale {
        self.scale
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    pub fn column(&self, index: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r.features[index]).collect()
    }

    pub fn timestamps(&self) -> Vec<i64> {
        self.rows.iter().map(|r| r.timestamp_ms).collect()
    }

    pub fn is_labeled(&self) -> bool {
        !self.rows.is_empty() && self.rows.iter().all(|r| r.label.is_some())
    }

    /// Labels of every row; fails when any row is unlabeled.
    pub fn labels(&self) -> Result<Vec<u8>> {
        self.rows
            .iter()
            .map(|r| r.label.ok_or(Error::Unlabeled))
            .collect()
    }

    /// Feature matrix, one `Vec` per row.
    pub fn matrix(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(|r| r.features.clone()).collect()
    }

    /// Feature matrix and labels, rejecting missing cells.
    pub fn to_xy(&self) -> Result<(Vec<Vec<f64>>, Vec<u8>)> {
        let y = self.labels()?;
        for (j, name) in self.feature_names.iter().enumerate() {
            if self.rows.iter().any(|r| !r.features[j].is_finite()) {
                return Err(Error::MissingValues(name.clone()));
            }
        }
        Ok((self.matrix(), y))
    }

    /// Keeps the named columns, in the given order.
    pub fn select_columns<S: AsRef<str>>(&self, names: &[S]) -> Result<Self> {
        let idx = names
            .iter()
            .map(|n| {
                self.column_index(n.as_ref())
                    .ok_or_else(|| Error::MissingColumn(n.as_ref().to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        let rows = self
            .rows
            .iter()
            .map(|r| Row {
                features: idx.iter().map(|&j| r.features[j]).collect(),
                ..r.clone()
            })
            .collect();
        let mut out = Self::new(names.iter().map(|n| n.as_ref().to_string()).collect(), rows)?;
        out.scale = self.scale;
        Ok(out)
    }

    /// Appends whole columns at the right edge of the table.
    pub fn append_columns(&self, names: &[String], columns: &[Vec<f64>]) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::LengthMismatch {
                expected: names.len(),
                found: columns.len(),
            });
        }
        for c in columns {
            if c.len() != self.rows.len() {
                return Err(Error::LengthMismatch {
                    expected: self.rows.len(),
                    found: c.len(),
                });
            }
        }
        let mut feature_names = self.feature_names.clone();
        feature_names.extend(names.iter().cloned());
        let rows = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let mut features = r.features.clone();
                features.extend(columns.iter().map(|c| c[i]));
                Row {
                    features,
                    ..r.clone()
                }
            })
            .collect();
        let mut out = Self::new(feature_names, rows)?;
        out.scale = self.scale;
        Ok(out)
    }

    /// Replaces every row label.
    pub fn with_labels(&self, labels: &[u8]) -> Result<Self> {
        if labels.len() != self.rows.len() {
            return Err(Error::LengthMismatch {
                expected: self.rows.len(),
                found: labels.len(),
            });
        }
        if let Some(bad) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::InvalidLabel(bad.to_string()));
        }
        let mut out = self.clone();
        for (row, &l) in out.rows.iter_mut().zip(labels) {
            row.label = Some(l);
        }
        Ok(out)
    }

    /// Rows at the given (ascending) positions.
    pub fn take_rows(&self, indices: &[usize]) -> Result<Self> {
        let rows = indices.iter().map(|&i| self.rows[i].clone()).collect();
        let mut out = Self::new(self.feature_names.clone(), rows)?;
        out.scale = self.scale;
        Ok(out)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file)
    }

    /// Parses the canonical CSV layout
    /// `timestamp_ms,subject,activity,trial,<features...>[,label]`.
    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let fixed = [TIMESTAMP_COLUMN, "subject", "activity", "trial"];
        if header.len() < fixed.len() || header[..4] != fixed {
            return Err(Error::Schema(format!(
                "canonical header must start with {fixed:?}, found {header:?}"
            )));
        }
        let has_label = header.last().map(String::as_str) == Some("label");
        let feature_end = if has_label { header.len() - 1 } else { header.len() };
        let feature_names = header[4..feature_end].to_vec();

        let mut rows = Vec::new();
        for (i, record) in rdr.records().enumerate() {
            let record = record?;
            let bad = |what: &str, cell: &str| {
                Error::Schema(format!("data row {}: bad {what} `{cell}`", i + 1))
            };
            let timestamp_ms =
                parse_timestamp(&record[0]).ok_or_else(|| bad("timestamp", &record[0]))?;
            let subject = record[1].parse().map_err(|_| bad("subject", &record[1]))?;
            let trial = record[3].parse().map_err(|_| bad("trial", &record[3]))?;
            let features = (4..feature_end)
                .map(|j| parse_cell(&record[j]).unwrap_or(f64::NAN))
                .collect();
            let label = if has_label {
                match &record[feature_end] {
                    "" => None,
                    "0" => Some(0),
                    "1" => Some(1),
                    other => return Err(Error::InvalidLabel(other.to_string())),
                }
            } else {
                None
            };
            rows.push(Row {
                timestamp_ms,
                features,
                meta: RowMeta {
                    subject,
                    activity: record[2].to_string(),
                    trial,
                },
                label,
            });
        }
        Self::new(feature_names, rows)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.to_writer(file)
    }

    /// Writes the canonical CSV layout. The label column is emitted only when
    /// at least one row is labeled.
    pub fn to_writer<W: Write>(&self, writer: W) -> Result<()> {
        let with_label = self.rows.iter().any(|r| r.label.is_some());
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = [TIMESTAMP_COLUMN, "subject", "activity", "trial"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.extend(self.feature_names.iter().cloned());
        if with_label {
            header.push("label".into());
        }
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![
                r.timestamp_ms.to_string(),
                r.meta.subject.to_string(),
                r.meta.activity.clone(),
                r.meta.trial.to_string(),
            ];
            rec.extend(r.features.iter().map(|&v| format_value(v)));
            if with_label {
                rec.push(r.label.map(|l| l.to_string()).unwrap_or_default());
            }
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

/// Joins every stream onto the reference device's clock.
///
/// Each reference timestamp takes, from every other stream, the sample whose
/// timestamp is nearest (ties go to the earlier sample) provided it lies within
/// `tolerance_ms`; reference rows lacking a match in any stream are dropped.
/// Output columns are `<device>_<channel>`, reference device first, then the
/// other streams in input order.
pub fn synchronize(
    streams: &[RawSensorStream],
    reference: &str,
    tolerance_ms: i64,
) -> Result<CanonicalDataset> {
    if tolerance_ms <= 0 {
        return Err(Error::InvalidParameter(format!(
            "tolerance must be positive, got {tolerance_ms} ms"
        )));
    }
    let mut ids = HashSet::new();
    for s in streams {
        if !ids.insert(s.device_id()) {
            return Err(Error::DuplicateDevice(s.device_id().to_string()));
        }
    }
    let ref_stream = streams
        .iter()
        .find(|s| s.device_id() == reference)
        .ok_or_else(|| Error::UnknownDevice(reference.to_string()))?;
    if ref_stream.is_empty() {
        return Err(Error::EmptyStream(reference.to_string()));
    }
    let others: Vec<&RawSensorStream> = streams
        .iter()
        .filter(|s| s.device_id() != reference)
        .collect();

    let mut feature_names = Vec::new();
    for s in std::iter::once(ref_stream).chain(others.iter().copied()) {
        feature_names.extend(
            s.channel_names()
                .iter()
                .map(|c| format!("{}_{}", s.device_id(), c)),
        );
    }

    let mut rows = Vec::with_capacity(ref_stream.len());
    'rows: for sample in ref_stream.samples() {
        let t = sample.timestamp_ms;
        let mut features: Vec<f64> = sample.values.iter().map(|v| v.unwrap_or(f64::NAN)).collect();
        for other in &others {
            match nearest_within(other.samples(), t, tolerance_ms) {
                Some(j) => features.extend(
                    other.samples()[j]
                        .values
                        .iter()
                        .map(|v| v.unwrap_or(f64::NAN)),
                ),
                None => continue 'rows,
            }
        }
        rows.push(Row {
            timestamp_ms: t,
            features,
            meta: RowMeta::default(),
            label: None,
        });
    }
    if rows.is_empty() {
        return Err(Error::EmptySynchronization);
    }
    CanonicalDataset::new(feature_names, rows)
}

fn nearest_within(samples: &[RawSample], t: i64, tolerance_ms: i64) -> Option<usize> {
    // First sample at or after t.
    let after = samples.partition_point(|s| s.timestamp_ms < t);
    let before = after.checked_sub(1);
    let candidate = match (before, samples.get(after)) {
        (Some(b), Some(a)) => {
            let db = t - samples[b].timestamp_ms;
            let da = a.timestamp_ms - t;
            if db <= da {
                b
            } else {
                after
            }
        }
        (Some(b), None) => b,
        (None, Some(_)) => after,
        (None, None) => return None,
    };
    ((samples[candidate].timestamp_ms - t).abs() <= tolerance_ms).then_some(candidate)
}

/// A labeled time range of the recording, e.g. one trial of one subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub trace_id: u32,
    pub subject: u32,
    pub activity: String,
    pub trial: u32,
    pub start_ms: i64,
    pub end_ms: i64,
}

/// Copies segment metadata onto the rows falling in `[start_ms, end_ms]`.
pub fn annotate_segments(dataset: &CanonicalDataset, segments: &[Segment]) -> CanonicalDataset {
    let mut out = dataset.clone();
    for row in &mut out.rows {
        if let Some(seg) = segments
            .iter()
            .find(|s| s.start_ms <= row.timestamp_ms && row.timestamp_ms <= s.end_ms)
        {
            row.meta = RowMeta {
                subject: seg.subject,
                activity: seg.activity.clone(),
                trial: seg.trial,
            };
        }
    }
    out
}

pub fn read_segments(path: impl AsRef<Path>) -> Result<Vec<Segment>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    Ok(rdr.deserialize().collect::<std::result::Result<_, _>>()?)
}

pub fn write_segments(path: impl AsRef<Path>, segments: &[Segment]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    for s in segments {
        w.serialize(s)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Replaces missing cells with the column mean of `statistics_source`.
pub fn impute_missing(
    dataset: &CanonicalDataset,
    statistics_source: &CanonicalDataset,
) -> Result<CanonicalDataset> {
    if dataset.feature_names != statistics_source.feature_names {
        return Err(Error::FeatureMismatch {
            expected: statistics_source.feature_names.clone(),
            found: dataset.feature_names.clone(),
        });
    }
    let means = column_means(statistics_source)?;
    let mut out = dataset.clone();
    for row in &mut out.rows {
        for (v, &m) in row.features.iter_mut().zip(&means) {
            if v.is_nan() {
                *v = m;
            }
        }
    }
    Ok(out)
}

fn column_means(ds: &CanonicalDataset) -> Result<Vec<f64>> {
    (0..ds.width())
        .map(|j| {
            let (sum, n) = ds
                .rows
                .iter()
                .map(|r| r.features[j])
                .filter(|v| !v.is_nan())
                .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
            if n == 0 {
                Err(Error::UninformativeColumn(ds.feature_names[j].clone()))
            } else {
                Ok(sum / n as f64)
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
    pub stratified: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            val_fraction: 0.1,
            test_fraction: 0.1,
            seed: 0,
            stratified: true,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let fr = [self.train_fraction, self.val_fraction, self.test_fraction];
        if fr.iter().any(|f| !(*f > 0.0 && *f < 1.0)) {
            return Err(Error::InvalidParameter(format!(
                "split fractions must lie in (0, 1), got {fr:?}"
            )));
        }
        let sum: f64 = fr.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "split fractions must sum to 1, got {sum}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: CanonicalDataset,
    pub validation: CanonicalDataset,
    pub test: CanonicalDataset,
}

/// Row indices of each part, ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Disjoint, exhaustive, seeded train/validation/test partition.
///
/// Validation and test sizes are `floor(n * fraction)`, the remainder goes to
/// training. When stratified, each class contributes the floor of its share
/// plus at most one extra row (largest fractional remainder first).
pub fn split(dataset: &CanonicalDataset, spec: &SplitSpec) -> Result<Splits> {
    let idx = split_indices(dataset, spec)?;
    Ok(Splits {
        train: dataset.take_rows(&idx.train)?,
        validation: dataset.take_rows(&idx.validation)?,
        test: dataset.take_rows(&idx.test)?,
    })
}

pub fn split_indices(dataset: &CanonicalDataset, spec: &SplitSpec) -> Result<SplitIndices> {
    spec.validate()?;
    let labels = dataset.labels()?;
    let n = labels.len();
    let n_val = floor_share(n, spec.val_fraction);
    let n_test = floor_share(n, spec.test_fraction);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let groups: Vec<Vec<usize>> = if spec.stratified {
        let mut g = vec![Vec::new(), Vec::new()];
        for (i, &l) in labels.iter().enumerate() {
            g[l as usize].push(i);
        }
        for (class, members) in g.iter().enumerate() {
            if members.len() < 3 {
                return Err(Error::ClassTooSmall {
                    class: class as u8,
                    count: members.len(),
                    required: 3,
                });
            }
        }
        g
    } else {
        vec![(0..n).collect()]
    };

    let sizes: Vec<usize> = groups.iter().map(Vec::len).collect();
    let val_alloc = allocate(&sizes, spec.val_fraction, n_val);
    let test_alloc = allocate(&sizes, spec.test_fraction, n_test);

    let mut out = SplitIndices {
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
    };
    for (c, mut members) in groups.into_iter().enumerate() {
        if val_alloc[c] + test_alloc[c] > members.len() {
            return Err(Error::InvalidParameter(format!(
                "class {c} has too few rows for the requested fractions"
            )));
        }
        members.shuffle(&mut rng);
        let (val, rest) = members.split_at(val_alloc[c]);
        let (test, train) = rest.split_at(test_alloc[c]);
        out.validation.extend_from_slice(val);
        out.test.extend_from_slice(test);
        out.train.extend_from_slice(train);
    }
    out.train.sort_unstable();
    out.validation.sort_unstable();
    out.test.sort_unstable();
    Ok(out)
}

fn floor_share(n: usize, fraction: f64) -> usize {
    // Tolerates products that land one ulp below an integer.
    (n as f64 * fraction + 1e-9).floor() as usize
}

/// Largest-remainder allocation of `total` rows across groups.
fn allocate(sizes: &[usize], fraction: f64, total: usize) -> Vec<usize> {
    let exact: Vec<f64> = sizes.iter().map(|&s| s as f64 * fraction).collect();
    let mut alloc: Vec<usize> = exact.iter().map(|e| (e + 1e-9).floor() as usize).collect();
    let assigned: usize = alloc.iter().sum();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - alloc[a] as f64;
        let fb = exact[b] - alloc[b] as f64;
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &g in order.iter().take(total.saturating_sub(assigned)) {
        alloc[g] += 1;
    }
    alloc
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> CsvSchema {
        CsvSchema::all_channels("dev")
    }

    fn stream(id: &str, ts: &[i64], base: f64) -> RawSensorStream {
        let samples = ts
            .iter()
            .enumerate()
            .map(|(i, &t)| RawSample {
                timestamp_ms: t,
                values: vec![Some(base + i as f64)],
            })
            .collect();
        RawSensorStream::new(id, vec!["x".into()], samples).unwrap()
    }

    fn labeled(n: usize, positives: usize) -> CanonicalDataset {
        let rows = (0..n)
            .map(|i| Row {
                timestamp_ms: i as i64,
                features: vec![i as f64],
                meta: RowMeta::default(),
                label: Some(u8::from(i < positives)),
            })
            .collect();
        CanonicalDataset::new(vec!["f".into()], rows).unwrap()
    }

    #[test]
    fn ingest_three_rows_four_channels() {
        let csv = "timestamp_ms,a,b,c,d\n0,1,2,3,4\n50,1,2,3,4\n100,1,2,3,4\n";
        let s = ingest_reader(csv.as_bytes(), &schema()).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.channel_names().len(), 4);
    }

    #[test]
    fn ingest_header_only_is_no_samples() {
        let err = ingest_reader("timestamp_ms,a\n".as_bytes(), &schema()).unwrap_err();
        assert_eq!(err.to_string(), "no samples");
    }

    #[test]
    fn ingest_nan_cells_are_missing() {
        let csv = "timestamp_ms,a,b,c\n0,NAN,nan,\n1,x,2.5,1e0\n";
        let s = ingest_reader(csv.as_bytes(), &schema()).unwrap();
        assert_eq!(s.samples()[0].values, vec![None, None, None]);
        assert_eq!(s.samples()[1].values, vec![None, Some(2.5), Some(1.0)]);
    }

    #[test]
    fn ingest_rejects_bad_header_and_order() {
        let err = ingest_reader("time,a\n0,1\n".as_bytes(), &schema()).unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
        let err = ingest_reader("timestamp_ms,a\n5,1\n5,1\n".as_bytes(), &schema()).unwrap_err();
        assert!(matches!(err, Error::NonMonotonicTimestamps { .. }));
        let sch = CsvSchema {
            device_id: "dev".into(),
            channels: Some(vec!["zz".into()]),
        };
        let err = ingest_reader("timestamp_ms,a\n0,1\n".as_bytes(), &sch).unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
    }

    #[test]
    fn ingest_missing_file() {
        let err = ingest_csv("/nonexistent/file.csv", &schema()).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn fractional_timestamps_round_half_up() {
        assert_eq!(parse_timestamp("10.5"), Some(11));
        assert_eq!(parse_timestamp("10.49"), Some(10));
        assert_eq!(parse_timestamp("-0.5"), Some(0));
        assert_eq!(parse_timestamp("abc"), None);
    }

    #[test]
    fn schema_selects_and_reorders_channels() {
        let sch = CsvSchema {
            device_id: "dev".into(),
            channels: Some(vec!["c".into(), "a".into()]),
        };
        let s = ingest_reader("timestamp_ms,a,b,c\n0,1,2,3\n".as_bytes(), &sch).unwrap();
        assert_eq!(s.channel_names(), ["c", "a"]);
        assert_eq!(s.samples()[0].values, vec![Some(3.0), Some(1.0)]);
    }

    #[test]
    fn sync_identical_timestamps() {
        let ts = [0, 55, 111, 166, 222];
        let ds = synchronize(&[stream("a", &ts, 0.0), stream("b", &ts, 10.0)], "a", 10).unwrap();
        assert_eq!(ds.len(), 5);
        assert_eq!(ds.feature_names(), ["a_x", "b_x"]);
        assert!(ds.rows().iter().all(|r| r.features.iter().all(|v| v.is_finite())));
    }

    #[test]
    fn sync_offset_within_tolerance_hand_walk() {
        // B is shifted by +3 ms; every reference row pairs with the B sample of
        // the same index (distance 3 vs 52+ for its neighbours).
        let ts = [0, 55, 111, 166, 222];
        let tb: Vec<i64> = ts.iter().map(|t| t + 3).collect();
        let ds = synchronize(&[stream("a", &ts, 0.0), stream("b", &tb, 10.0)], "a", 10).unwrap();
        let joined: Vec<f64> = ds.rows().iter().map(|r| r.features[1]).collect();
        assert_eq!(joined, vec![10.0, 11.0, 12.0, 13.0, 14.0]);
    }

    #[test]
    fn sync_tie_prefers_earlier_sample() {
        let a = stream("a", &[10], 0.0);
        let b = stream("b", &[5, 15], 100.0);
        let ds = synchronize(&[a, b], "a", 10).unwrap();
        assert_eq!(ds.rows()[0].features[1], 100.0);
    }

    #[test]
    fn sync_out_of_tolerance_is_empty() {
        let ts = [0, 100, 200];
        let tb: Vec<i64> = ts.iter().map(|t| t + 50).collect();
        let err = synchronize(&[stream("a", &ts, 0.0), stream("b", &tb, 0.0)], "a", 10).unwrap_err();
        assert_eq!(err.to_string(), "empty result after synchronization");
    }

    #[test]
    fn sync_errors() {
        let a = stream("a", &[0], 0.0);
        assert!(matches!(
            synchronize(std::slice::from_ref(&a), "zz", 10),
            Err(Error::UnknownDevice(_))
        ));
        let empty = RawSensorStream::new("e", vec!["x".into()], vec![]).unwrap();
        assert!(matches!(synchronize(&[empty], "e", 10), Err(Error::EmptyStream(_))));
        assert!(matches!(synchronize(&[a], "a", 0), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn impute_uses_source_means() {
        let mk = |vals: &[f64]| {
            let rows = vals
                .iter()
                .enumerate()
                .map(|(i, &v)| Row {
                    timestamp_ms: i as i64,
                    features: vec![v],
                    meta: RowMeta::default(),
                    label: None,
                })
                .collect();
            CanonicalDataset::new(vec!["f".into()], rows).unwrap()
        };
        let ds = mk(&[1.0, f64::NAN, 3.0]);
        let out = impute_missing(&ds, &ds).unwrap();
        assert_eq!(out.column(0), vec![1.0, 2.0, 3.0]);

        let full = mk(&[1.0, 2.0]);
        assert_eq!(impute_missing(&full, &full).unwrap(), full);

        let empty = mk(&[f64::NAN, f64::NAN]);
        let err = impute_missing(&empty, &empty).unwrap_err();
        assert!(err.to_string().contains("uninformative column"));
    }

    #[test]
    fn impute_feature_mismatch() {
        let a = labeled(4, 2);
        let b = a.append_columns(&["g".into()], &[vec![0.0; 4]]).unwrap();
        assert!(matches!(impute_missing(&a, &b), Err(Error::FeatureMismatch { .. })));
    }

    #[test]
    fn split_sizes_80_10_10() {
        let ds = labeled(100, 30);
        let s = split(&ds, &SplitSpec::default()).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (80, 10, 10));
    }

    #[test]
    fn split_stratified_balance_on_40_rows() {
        let ds = labeled(40, 20);
        let s = split(&ds, &SplitSpec::default()).unwrap();
        for part in [&s.train, &s.validation, &s.test] {
            let pos = part.labels().unwrap().iter().filter(|&&l| l == 1).count() as f64;
            assert!((pos - part.len() as f64 / 2.0).abs() <= 1.0);
        }
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (32, 4, 4));
    }

    #[test]
    fn split_errors() {
        let unlabeled = CanonicalDataset::new(
            vec!["f".into()],
            vec![Row {
                timestamp_ms: 0,
                features: vec![0.0],
                meta: RowMeta::default(),
                label: None,
            }],
        )
        .unwrap();
        assert!(matches!(split(&unlabeled, &SplitSpec::default()), Err(Error::Unlabeled)));
        let tiny = labeled(20, 2);
        assert!(matches!(
            split(&tiny, &SplitSpec::default()),
            Err(Error::ClassTooSmall { class: 1, count: 2, .. })
        ));
        let bad = SplitSpec {
            train_fraction: 0.7,
            ..SplitSpec::default()
        };
        assert!(matches!(split(&tiny, &bad), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn canonical_csv_round_trip() {
        let ds = labeled(5, 2)
            .append_columns(&["g".into()], &[vec![0.1, f64::NAN, -2.5, 1e-7, 3.0]])
            .unwrap();
        let mut buf = Vec::new();
        ds.to_writer(&mut buf).unwrap();
        let back = CanonicalDataset::from_reader(buf.as_slice()).unwrap();
        assert_eq!(back.feature_names(), ds.feature_names());
        assert_eq!(back.labels().unwrap(), ds.labels().unwrap());
        assert_eq!(back.column(1)[0], 0.1);
        assert!(back.column(1)[1].is_nan());
        assert_eq!(back.column(1)[3], 1e-7);
    }
}
