//! Forest-importance feature ranking and the top-k study.

use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataio::{format_value, CanonicalDataset};
use crate::error::{Error, Result};
use crate::trees::{fit_forest, forest_importances, oob_error, ForestConfig};

/// Study grid used when none is given; the full width is appended.
pub const DEFAULT_TOPK_GRID: [usize; 4] = [3, 5, 10, 20];
pub const DEFAULT_TOP_K: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedFeature {
    pub feature: String,
    pub importance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRanking {
    /// Descending importance; equal importances keep column order.
    pub entries: Vec<RankedFeature>,
    pub seed: u64,
    pub forest: ForestConfig,
}

impl FeatureRanking {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.feature.clone()).collect()
    }

    /// `rank,feature,importance`, rank starting at 1.
    pub fn to_writer<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["rank", "feature", "importance"])?;
        for (i, e) in self.entries.iter().enumerate() {
            w.write_record([(i + 1).to_string(), e.feature.clone(), format_value(e.importance)])?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.to_writer(File::create(path).map_err(|e| Error::io(path, e))?)
    }

    /// Reads `importances.csv`; rows must be in rank order.
    pub fn read_csv(path: impl AsRef<Path>, seed: u64, forest: ForestConfig) -> Result<Self> {
        #[derive(Deserialize)]
        struct Rec {
            rank: usize,
            feature: String,
            importance: f64,
        }
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut rdr = csv::Reader::from_reader(file);
        let mut entries = Vec::new();
        for (i, rec) in rdr.deserialize::<Rec>().enumerate() {
            let rec = rec?;
            if rec.rank != i + 1 {
                return Err(Error::Schema(format!(
                    "importances out of rank order at rank {}",
                    rec.rank
                )));
            }
            entries.push(RankedFeature {
                feature: rec.feature,
                importance: rec.importance,
            });
        }
        Ok(Self {
            entries,
            seed,
            forest,
        })
    }
}

/// Fits a forest on the labeled training set and sorts its normalised Gini
/// importances.
pub fn rank_features(
    train: &CanonicalDataset,
    config: &ForestConfig,
    seed: u64,
) -> Result<FeatureRanking> {
    let (x, y) = train.to_xy()?;
    let forest = fit_forest(&x, &y, config, seed)?;
    let imp = forest_importances(&forest);
    let mut entries: Vec<RankedFeature> = train
        .feature_names()
        .iter()
        .zip(imp)
        .map(|(f, importance)| RankedFeature {
            feature: f.clone(),
            importance,
        })
        .collect();
    entries.sort_by(|a, b| b.importance.total_cmp(&a.importance));
    Ok(FeatureRanking {
        entries,
        seed,
        forest: *config,
    })
}

/// First `k` names in ranking order.
pub fn select_top_k(ranking: &FeatureRanking, k: usize) -> Result<Vec<String>> {
    if k == 0 || k > ranking.len() {
        return Err(Error::InvalidParameter(format!(
            "k must lie in [1, {}], got {k}",
            ranking.len()
        )));
    }
    Ok(ranking.entries[..k].iter().map(|e| e.feature.clone()).collect())
}

/// The default grid clipped to `width`, plus `width` itself.
pub fn default_grid(width: usize) -> Vec<usize> {
    let mut ks: Vec<usize> = DEFAULT_TOPK_GRID.into_iter().filter(|&k| k < width).collect();
    ks.push(width);
    ks
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopKRow {
    pub k: usize,
    pub oob_error: f64,
    /// Median wall-clock fit time; `None` when timing is off.
    pub train_seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopKStudy {
    pub rows: Vec<TopKRow>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudyOptions {
    /// Fits per k; the reported time is their median.
    pub repeats: usize,
    pub record_timing: bool,
}

impl Default for StudyOptions {
    fn default() -> Self {
        Self {
            repeats: 3,
            record_timing: true,
        }
    }
}

/// For each k, fits a forest on the top-k columns and records its OOB error
/// and fit time. Forests are grown sequentially so times are comparable.
pub fn topk_study(
    train: &CanonicalDataset,
    ranking: &FeatureRanking,
    ks: &[usize],
    config: &ForestConfig,
    seed: u64,
    options: &StudyOptions,
) -> Result<TopKStudy> {
    if ks.is_empty() {
        return Err(Error::InvalidParameter("empty k grid".into()));
    }
    if ks.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter(format!(
            "k values must be strictly increasing, got {ks:?}"
        )));
    }
    let repeats = if options.record_timing {
        options.repeats.max(1)
    } else {
        1
    };
    let config = ForestConfig {
        parallel: false,
        ..*config
    };
    let mut rows = Vec::with_capacity(ks.len());
    for &k in ks {
        let names = select_top_k(ranking, k)?;
        let (x, y) = train.select_columns(&names)?.to_xy()?;
        let mut times = Vec::with_capacity(repeats);
        let mut forest = None;
        for _ in 0..repeats {
            let start = Instant::now();
            let f = fit_forest(&x, &y, &config, seed)?;
            times.push(start.elapsed().as_secs_f64());
            forest = Some(f);
        }
        let forest = forest.expect("at least one repeat");
        times.sort_by(f64::total_cmp);
        rows.push(TopKRow {
            k,
            oob_error: oob_error(&forest, &x, &y)?,
            train_seconds: options.record_timing.then(|| times[times.len() / 2]),
        });
    }
    Ok(TopKStudy { rows })
}

impl TopKStudy {
    /// `k,oob_error,train_seconds`; the time cell is empty when not recorded.
    pub fn to_writer<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["k", "oob_error", "train_seconds"])?;
        for r in &self.rows {
            w.write_record([
                r.k.to_string(),
                format_value(r.oob_error),
                r.train_seconds.map(format_value).unwrap_or_default(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.to_writer(File::create(path).map_err(|e| Error::io(path, e))?)
    }
}

/// One name per line.
pub fn write_feature_list(path: impl AsRef<Path>, names: &[String]) -> Result<()> {
    let path = path.as_ref();
    let mut text = names.join("\n");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_feature_list(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{Row, RowMeta};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dataset(seed: u64, n: usize, extra_constant: bool) -> CanonicalDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut names = vec!["noise_a".to_string(), "signal".to_string(), "noise_b".to_string()];
        if extra_constant {
            names.push("constant".into());
        }
        let rows = (0..n)
            .map(|i| {
                let label = u8::from(rng.random_bool(0.3));
                let mut f = vec![
                    rng.random_range(-1.0..1.0),
                    label as f64 + rng.random_range(-0.2..0.2),
                    rng.random_range(-1.0..1.0),
                ];
                if extra_constant {
                    f.push(7.0);
                }
                Row {
                    timestamp_ms: i as i64,
                    features: f,
                    meta: RowMeta::default(),
                    label: Some(label),
                }
            })
            .collect();
        CanonicalDataset::new(names, rows).unwrap()
    }

    fn small_forest() -> ForestConfig {
        ForestConfig {
            n_estimators: 20,
            ..ForestConfig::default()
        }
    }

    #[test]
    fn informative_feature_ranks_first() {
        for seed in 0..5 {
            let r = rank_features(&dataset(seed, 200, false), &small_forest(), seed).unwrap();
            assert_eq!(r.entries[0].feature, "signal");
            let total: f64 = r.entries.iter().map(|e| e.importance).sum();
            assert!((total - 1.0).abs() < 1e-9);
            assert!(r.entries.windows(2).all(|w| w[0].importance >= w[1].importance));
        }
    }

    #[test]
    fn constant_feature_gets_zero_and_ranks_last() {
        let r = rank_features(&dataset(3, 200, true), &small_forest(), 3).unwrap();
        let last = r.entries.last().unwrap();
        assert_eq!(last.feature, "constant");
        assert_eq!(last.importance, 0.0);
        assert_eq!(r.entries[0].feature, "signal");
    }

    #[test]
    fn single_feature_ranking() {
        let ds = dataset(1, 50, false).select_columns(&["signal"]).unwrap();
        let r = rank_features(&ds, &small_forest(), 0).unwrap();
        assert_eq!(r.entries.len(), 1);
        assert_eq!(r.entries[0].importance, 1.0);
    }

    #[test]
    fn ranking_is_deterministic() {
        let ds = dataset(9, 120, false);
        assert_eq!(
            rank_features(&ds, &small_forest(), 4).unwrap(),
            rank_features(&ds, &small_forest(), 4).unwrap()
        );
    }

    #[test]
    fn select_bounds() {
        let r = rank_features(&dataset(0, 60, false), &small_forest(), 0).unwrap();
        assert!(select_top_k(&r, 0).is_err());
        assert!(select_top_k(&r, 4).is_err());
        assert_eq!(select_top_k(&r, 3).unwrap(), r.names());
    }

    #[test]
    fn study_full_width_equals_plain_forest() {
        let ds = dataset(2, 150, false);
        let cfg = small_forest();
        let r = rank_features(&ds, &cfg, 0).unwrap();
        let opts = StudyOptions {
            repeats: 1,
            record_timing: false,
        };
        let study = topk_study(&ds, &r, &[1, 3], &cfg, 5, &opts).unwrap();
        assert_eq!(study.rows[1].k, 3);
        assert!(study.rows.iter().all(|r| r.train_seconds.is_none()));
        let reordered = ds.select_columns(&r.names()).unwrap();
        let (x, y) = reordered.to_xy().unwrap();
        let f = fit_forest(&x, &y, &cfg, 5).unwrap();
        assert_eq!(study.rows[1].oob_error, oob_error(&f, &x, &y).unwrap());
        assert!(topk_study(&ds, &r, &[3, 3], &cfg, 5, &opts).is_err());
        assert!(topk_study(&ds, &r, &[4], &cfg, 5, &opts).is_err());
    }

    #[test]
    fn study_times_recorded_and_csv_layout() {
        let ds = dataset(2, 80, false);
        let r = rank_features(&ds, &small_forest(), 0).unwrap();
        let s = topk_study(&ds, &r, &[1, 2], &small_forest(), 0, &StudyOptions::default()).unwrap();
        assert!(s.rows.iter().all(|r| r.train_seconds.unwrap() > 0.0));
        let mut buf = Vec::new();
        r.to_writer(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("rank,feature,importance\n1,signal,"));
    }

    #[test]
    fn default_grid_clips() {
        assert_eq!(default_grid(37), vec![3, 5, 10, 20, 37]);
        assert_eq!(default_grid(6), vec![3, 5, 6]);
        assert_eq!(default_grid(5), vec![3, 5]);
        assert_eq!(default_grid(2), vec![2]);
    }

    proptest! {
        #[test]
        fn top_k_is_prefix(imps in prop::collection::vec(0.0f64..1.0, 1..40)) {
            let ranking = FeatureRanking {
                entries: imps
                    .iter()
                    .enumerate()
                    .map(|(i, &importance)| RankedFeature { feature: format!("f{i}"), importance })
                    .collect(),
                seed: 0,
                forest: ForestConfig::default(),
            };
            for k in 1..ranking.len() {
                let a = select_top_k(&ranking, k).unwrap();
                let b = select_top_k(&ranking, k + 1).unwrap();
                prop_assert_eq!(&b[..k], &a[..]);
            }
        }
    }
}
