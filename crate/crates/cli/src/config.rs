//! The versioned TOML pipeline configuration.
//!
//! Every table rejects unknown keys. Relative paths resolve against the
//! directory holding the config file.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use fallimpact_core::classifiers::{KnnConfig, LogRegConfig, SgdConfig, SvmConfig};
use fallimpact_core::dataio::DEFAULT_SYNC_TOLERANCE_MS;
use fallimpact_core::featsel::DEFAULT_TOP_K;
use fallimpact_core::trees::{BoostConfig, ForestConfig, TreeConfig};
use fallimpact_core::{DetectorConfig, ModelConfig, ModelKind, SplitSpec};
use serde::Deserialize;

use crate::error::{CliError, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    /// Artifact directory.
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// Measure fit times. Timed fits run one at a time and their outputs
    /// differ between runs.
    #[serde(default = "yes")]
    pub record_timing: bool,
    pub data: DataConfig,
    #[serde(default)]
    pub detector: DetectorConfig,
    #[serde(default)]
    pub review: ReviewConfig,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub features: FeaturesConfig,
    #[serde(default)]
    pub models: ModelsConfig,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceConfig {
    pub id: String,
    pub path: PathBuf,
    /// Channels to keep; all of them when absent.
    #[serde(default)]
    pub channels: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub devices: Vec<DeviceConfig>,
    /// Device whose clock the others are joined onto.
    pub reference: String,
    #[serde(default = "default_tolerance")]
    pub tolerance_ms: i64,
    /// Optional `trace_id,subject,activity,trial,start_ms,end_ms` file.
    #[serde(default)]
    pub segments: Option<PathBuf>,
    /// Synchronized column names of the three axes in g.
    pub smv_axes: [String; 3],
}

fn default_tolerance() -> i64 {
    DEFAULT_SYNC_TOLERANCE_MS
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReviewConfig {
    /// `start_ms,end_ms,label` overrides; no review when absent.
    #[serde(default)]
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub test_fraction: f64,
    pub stratified: bool,
}

impl Default for SplitConfig {
    fn default() -> Self {
        let s = SplitSpec::default();
        Self {
            train_fraction: s.train_fraction,
            val_fraction: s.val_fraction,
            test_fraction: s.test_fraction,
            stratified: s.stratified,
        }
    }
}

impl SplitConfig {
    pub fn split_spec(&self, seed: u64) -> SplitSpec {
        SplitSpec {
            train_fraction: self.train_fraction,
            val_fraction: self.val_fraction,
            test_fraction: self.test_fraction,
            seed,
            stratified: self.stratified,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturesConfig {
    pub top_k: usize,
    /// k values of the top-k study; the default grid clipped to the width
    /// when absent.
    pub study_grid: Option<Vec<usize>>,
    pub study_repeats: usize,
    /// Forest used for ranking and for the study.
    pub forest: ForestConfig,
}

impl Default for FeaturesConfig {
    fn default() -> Self {
        Self {
            top_k: DEFAULT_TOP_K,
            study_grid: None,
            study_repeats: 3,
            forest: ForestConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelsConfig {
    pub enabled: Vec<ModelKind>,
    /// Pick thresholds by validation accuracy.
    pub tune_threshold: bool,
    pub svm: SvmConfig,
    pub rf: ForestConfig,
    pub sgd: SgdConfig,
    pub dt: TreeConfig,
    pub knn: KnnConfig,
    pub lr: LogRegConfig,
    pub gboost: BoostConfig,
}

impl Default for ModelsConfig {
    fn default() -> Self {
        Self {
            enabled: ModelKind::ALL.to_vec(),
            tune_threshold: false,
            svm: SvmConfig::default(),
            rf: ForestConfig::default(),
            sgd: SgdConfig::default(),
            dt: TreeConfig::default(),
            knn: KnnConfig::default(),
            lr: LogRegConfig::default(),
            gboost: BoostConfig::default(),
        }
    }
}

impl ModelsConfig {
    pub fn config_for(&self, kind: ModelKind) -> ModelConfig {
        match kind {
            ModelKind::Svm => ModelConfig::Svm(self.svm),
            ModelKind::Rf => ModelConfig::Rf(self.rf),
            ModelKind::Sgd => ModelConfig::Sgd(self.sgd),
            ModelKind::Nb => ModelConfig::Nb,
            ModelKind::Dt => ModelConfig::Dt(self.dt),
            ModelKind::Knn => ModelConfig::Knn(self.knn),
            ModelKind::Lr => ModelConfig::Lr(self.lr),
            ModelKind::Gboost => ModelConfig::Gboost(self.gboost),
        }
    }

    /// Enabled models in report order.
    pub fn kinds(&self) -> Vec<ModelKind> {
        ModelKind::ALL
            .into_iter()
            .filter(|k| self.enabled.contains(k))
            .collect()
    }

    pub fn configs(&self) -> Vec<ModelConfig> {
        self.kinds().into_iter().map(|k| self.config_for(k)).collect()
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub beta: Option<f64>,
    pub models: Option<Vec<ModelKind>>,
    pub k: Option<usize>,
    pub out: Option<PathBuf>,
    pub no_timing: bool,
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Reads, resolves paths, applies overrides and validates.
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Config(format!("cannot read {}: {e}", path.display()))
        })?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        cfg.apply(overrides);
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        join(&mut self.out);
        for d in &mut self.data.devices {
            join(&mut d.path);
        }
        if let Some(p) = &mut self.data.segments {
            join(p);
        }
        if let Some(p) = &mut self.review.path {
            join(p);
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(beta) = o.beta {
            self.detector.beta = beta;
        }
        if let Some(models) = &o.models {
            self.models.enabled = models.clone();
        }
        if let Some(k) = o.k {
            self.features.top_k = k;
        }
        if let Some(out) = &o.out {
            self.out = out.clone();
        }
        if o.no_timing {
            self.record_timing = false;
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        let d = &self.data;
        if d.devices.is_empty() {
            return bad("data.devices is empty".into());
        }
        let mut ids = HashSet::new();
        for dev in &d.devices {
            if dev.id.is_empty() || dev.id.contains(['/', '\\']) {
                return bad(format!("invalid device id `{}`", dev.id));
            }
            if !ids.insert(dev.id.as_str()) {
                return bad(format!("duplicate device `{}`", dev.id));
            }
            if dev.channels.as_ref().is_some_and(Vec::is_empty) {
                return bad(format!("device `{}` keeps no channels", dev.id));
            }
        }
        if !ids.contains(d.reference.as_str()) {
            return bad(format!("reference `{}` is not a configured device", d.reference));
        }
        if d.tolerance_ms <= 0 {
            return bad(format!("tolerance_ms must be positive, got {}", d.tolerance_ms));
        }
        let core = |r: fallimpact_core::Result<()>| r.map_err(|e| CliError::Config(e.to_string()));
        core(self.detector.validate())?;
        core(self.split.split_spec(self.seed).validate())?;
        let f = &self.features;
        if f.top_k == 0 {
            return bad("features.top_k must be at least 1".into());
        }
        if f.study_repeats == 0 {
            return bad("features.study_repeats must be at least 1".into());
        }
        if let Some(grid) = &f.study_grid {
            if grid.is_empty() || grid[0] == 0 || grid.windows(2).any(|w| w[0] >= w[1]) {
                return bad(format!(
                    "features.study_grid must be non-empty, positive and strictly increasing, got {grid:?}"
                ));
            }
        }
        core(ModelConfig::Rf(f.forest).validate())?;
        let m = &self.models;
        if m.enabled.is_empty() {
            return bad("models.enabled is empty".into());
        }
        let mut seen = HashSet::new();
        for k in &m.enabled {
            if !seen.insert(*k) {
                return bad(format!("model {k} enabled twice"));
            }
            core(m.config_for(*k).validate())?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema_version = 1

[data]
reference = "waist"
smv_axes = ["waist_ax", "waist_ay", "waist_az"]

[[data.devices]]
id = "waist"
path = "raw/waist.csv"
"#;

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg = PipelineConfig::parse(MINIMAL).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.detector.beta, 2.0);
        assert_eq!(cfg.features.top_k, 5);
        assert_eq!(cfg.models.kinds(), ModelKind::ALL.to_vec());
        assert_eq!(cfg.data.tolerance_ms, 10);
        assert!(cfg.record_timing);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let cases = [
            format!("bogus = 1\n{MINIMAL}"),
            format!("{MINIMAL}[detector]\nwindow = 3\n"),
            format!("{MINIMAL}[models.svm]\ngama = 1.0\n"),
            format!("{MINIMAL}[review]\nfile = \"r.csv\"\n"),
        ];
        for text in cases {
            assert!(PipelineConfig::parse(&text).is_err(), "{text}");
        }
    }

    #[test]
    fn validation_failures() {
        let cases: [(&str, &str); 6] = [
            ("schema_version = 1", "schema_version = 2"),
            ("reference = \"waist\"", "reference = \"hip\""),
            ("reference = \"waist\"", "reference = \"waist\"\ntolerance_ms = 0"),
            ("schema_version = 1", "schema_version = 1\n[detector]\nbeta = -1.0"),
            ("schema_version = 1", "schema_version = 1\n[models.knn]\nk = 4"),
            ("schema_version = 1", "schema_version = 1\n[split]\ntest_fraction = 0.5"),
        ];
        for (from, to) in cases {
            let text = MINIMAL.replacen(from, to, 1);
            let cfg = PipelineConfig::parse(&text);
            assert!(cfg.is_err() || cfg.unwrap().validate().is_err(), "{to}");
        }
    }

    #[test]
    fn overrides_win() {
        let mut cfg = PipelineConfig::parse(MINIMAL).unwrap();
        cfg.apply(&Overrides {
            seed: Some(7),
            beta: Some(1.5),
            models: Some(vec![ModelKind::Lr, ModelKind::Svm]),
            k: Some(3),
            out: Some("elsewhere".into()),
            no_timing: true,
        });
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.detector.beta, 1.5);
        assert_eq!(cfg.models.kinds(), vec![ModelKind::Svm, ModelKind::Lr]);
        assert_eq!(cfg.features.top_k, 3);
        assert_eq!(cfg.out, PathBuf::from("elsewhere"));
        assert!(!cfg.record_timing);
    }

    #[test]
    fn relative_paths_follow_the_config() {
        let mut cfg = PipelineConfig::parse(MINIMAL).unwrap();
        cfg.resolve_paths(Path::new("/data/run"));
        assert_eq!(cfg.data.devices[0].path, PathBuf::from("/data/run/raw/waist.csv"));
        assert_eq!(cfg.out, PathBuf::from("/data/run/out"));
    }
}
