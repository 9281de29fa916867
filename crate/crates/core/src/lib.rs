//! Impact-point detection inside fall events from wearable accelerometer
//! data.
//!
//! The pipeline synchronizes per-device CSV streams onto one clock, computes
//! the signal magnitude vector (SMV), labels samples whose SMV exceeds a
//! threshold as impacts, ranks features by random-forest Gini importance and
//! benchmarks eight from-scratch classifiers on the selected features.
//!
//! ```
//! use fallimpact_core::signal::{smv, AccelSample};
//!
//! let g = smv(&AccelSample::new(0.0, 0.6, 0.8)).unwrap();
//! assert!((g - 1.0).abs() < 1e-12);
//! ```

pub mod classifiers;
pub mod dataio;
pub mod error;
pub mod eval;
pub mod featsel;
pub mod model;
pub mod signal;
pub mod synth;
pub mod trees;

pub use dataio::{
    CanonicalDataset, CsvSchema, FeatureScale, RawSample, RawSensorStream, Row, RowMeta, Segment,
    SplitSpec, Splits,
};
pub use error::{Error, Result};
pub use eval::{
    BenchmarkOptions, ConfusionMatrix, EvaluationReport, MetricSet, ModelReport, RocCurve,
};
pub use featsel::{FeatureRanking, TopKStudy};
pub use model::{fit_model, ModelConfig, ModelKind, Prediction, TrainedModel};
pub use signal::{DetectorConfig, ImpactEvent, NormParams, SmvSeries};
pub use synth::{DatasetSpec, TraceProfile};
