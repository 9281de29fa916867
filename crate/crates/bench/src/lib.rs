//! Shared inputs for the benchmarks: the default synthetic recording,
//! z-scored and reduced to the top-ranked columns.

use fallimpact_core::dataio::split;
use fallimpact_core::featsel::{rank_features, select_top_k};
use fallimpact_core::signal::{zscore_apply, zscore_fit};
use fallimpact_core::synth::gen_dataset;
use fallimpact_core::trees::ForestConfig;
use fallimpact_core::{CanonicalDataset, DatasetSpec, SplitSpec};

pub struct Fixture {
    /// Synchronized raw dataset with SMV features and labels.
    pub raw: CanonicalDataset,
    /// Z-scored training part, every column.
    pub train: CanonicalDataset,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<u8>,
    /// Test part on the same columns as `x`.
    pub test_x: Vec<Vec<f64>>,
    pub test_y: Vec<u8>,
}

pub fn fixture(top_k: usize) -> Fixture {
    let raw = gen_dataset(&DatasetSpec::default())
        .expect("default dataset parameters are valid")
        .dataset;
    let parts = split(&raw, &SplitSpec::default()).expect("both classes present");
    let params = zscore_fit(&parts.train).expect("no missing cells");
    let train = zscore_apply(&parts.train, &params).expect("same columns");
    let test = zscore_apply(&parts.test, &params).expect("same columns");
    let ranking = rank_features(&train, &ForestConfig::default(), 0).expect("labeled");
    let names = select_top_k(&ranking, top_k).expect("k within width");
    let (x, y) = train.select_columns(&names).and_then(|d| d.to_xy()).expect("labeled");
    let (test_x, test_y) = test.select_columns(&names).and_then(|d| d.to_xy()).expect("labeled");
    Fixture {
        raw,
        train,
        x,
        y,
        test_x,
        test_y,
    }
}
