use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cart::grow;
use super::{TreeConfig, TreeModel};
use crate::error::{Error, Result};
use crate::model::{check_query, check_training, Prediction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaxFeatures {
    /// `ceil(sqrt(d))`
    Sqrt,
    All,
    Count(usize),
}

impl MaxFeatures {
    pub fn resolve(self, d: usize) -> usize {
        match self {
            MaxFeatures::Sqrt => (d as f64).sqrt().ceil() as usize,
            MaxFeatures::All => d,
            MaxFeatures::Count(k) => k.min(d),
        }
        .max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub n_estimators: usize,
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub max_features: MaxFeatures,
    /// When false every tree sees the full training set once.
    pub bootstrap: bool,
    /// Grow trees on the rayon pool. Results do not depend on this flag.
    #[serde(default = "default_parallel", skip_serializing)]
    pub parallel: bool,
}

fn default_parallel() -> bool {
    true
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_estimators: 100,
            max_depth: None,
            min_samples_split: 2,
            max_features: MaxFeatures::Sqrt,
            bootstrap: true,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub config: ForestConfig,
    pub seed: u64,
    pub n_features: usize,
    pub trees: Vec<TreeModel>,
    /// `in_bag[t][i]` is true when row `i` was drawn into tree `t`'s bootstrap.
    #[serde(with = "bitstrings")]
    pub in_bag: Vec<Vec<bool>>,
}

/// Fits `n_estimators` trees. Tree `t` draws its bootstrap and its candidate
/// features from a generator seeded with `seed + t`, so the forest does not
/// depend on scheduling.
pub fn fit_forest(
    x: &[Vec<f64>],
    y: &[u8],
    config: &ForestConfig,
    seed: u64,
) -> Result<ForestModel> {
    let d = check_training(x, y)?;
    if config.n_estimators == 0 {
        return Err(Error::InvalidParameter("n_estimators must be at least 1".into()));
    }
    let n = x.len();
    let tree_config = |t: usize| TreeConfig {
        max_depth: config.max_depth,
        min_samples_split: config.min_samples_split,
        max_features: Some(config.max_features.resolve(d)),
        seed: seed.wrapping_add(t as u64),
    };
    let fit_one = |t: usize| {
        let tc = tree_config(t);
        let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
        let idx: Vec<usize> = if config.bootstrap {
            (0..n).map(|_| rng.random_range(0..n)).collect()
        } else {
            (0..n).collect()
        };
        let mut mask = vec![false; n];
        for &i in &idx {
            mask[i] = true;
        }
        let nodes = grow(x, y, idx, &tc, d, &mut rng);
        (
            TreeModel {
                config: tc,
                n_features: d,
                nodes,
            },
            mask,
        )
    };
    let fitted: Vec<(TreeModel, Vec<bool>)> = if config.parallel {
        (0..config.n_estimators).into_par_iter().map(fit_one).collect()
    } else {
        (0..config.n_estimators).map(fit_one).collect()
    };
    let (trees, in_bag) = fitted.into_iter().unzip();
    Ok(ForestModel {
        config: *config,
        seed,
        n_features: d,
        trees,
        in_bag,
    })
}

impl ForestModel {
    /// Score is the fraction of trees voting positive.
    pub fn predict(&self, row: &[f64]) -> Result<Prediction> {
        check_query(self.n_features, row)?;
        let votes = self.trees.iter().filter(|t| tree_vote(t, row) == 1).count();
        Ok(Prediction::from_probability(
            votes as f64 / self.trees.len() as f64,
        ))
    }
}

fn tree_vote(tree: &TreeModel, row: &[f64]) -> u8 {
    let c = tree.leaf_counts(row);
    u8::from(c[1] > c[0])
}

/// Mean impurity-decrease importance over trees, normalized to sum to 1
/// (uniform when no tree ever split).
pub fn forest_importances(model: &ForestModel) -> Vec<f64> {
    let d = model.n_features;
    let mut total = vec![0.0; d];
    for tree in &model.trees {
        for (acc, v) in total.iter_mut().zip(tree.raw_importances()) {
            *acc += v;
        }
    }
    let k = model.trees.len() as f64;
    for v in &mut total {
        *v /= k;
    }
    let sum: f64 = total.iter().sum();
    if sum > 0.0 {
        total.iter_mut().for_each(|v| *v /= sum);
    } else {
        total = vec![1.0 / d as f64; d];
    }
    total
}

/// Misclassification rate of each training row under a majority vote of the
/// trees that did not draw it (vote ties predict 0). Rows that were in every
/// bootstrap are skipped.
pub fn oob_error(model: &ForestModel, x: &[Vec<f64>], y: &[u8]) -> Result<f64> {
    let n = model.in_bag.first().map_or(0, Vec::len);
    if x.len() != n || y.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            found: x.len(),
        });
    }
    let mut evaluated = 0usize;
    let mut wrong = 0usize;
    for i in 0..n {
        let mut votes = [0usize; 2];
        for (tree, mask) in model.trees.iter().zip(&model.in_bag) {
            if !mask[i] {
                votes[tree_vote(tree, &x[i]) as usize] += 1;
            }
        }
        if votes[0] + votes[1] == 0 {
            continue;
        }
        evaluated += 1;
        let predicted = u8::from(votes[1] > votes[0]);
        if predicted != y[i] {
            wrong += 1;
        }
    }
    if evaluated == 0 {
        return Err(Error::NoOutOfBag);
    }
    Ok(wrong as f64 / evaluated as f64)
}

mod bitstrings {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(masks: &[Vec<bool>], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(masks.iter().map(|m| {
            m.iter()
                .map(|&b| if b { '1' } else { '0' })
                .collect::<String>()
        }))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<bool>>, D::Error> {
        Vec::<String>::deserialize(d)?
            .into_iter()
            .map(|s| {
                s.chars()
                    .map(|c| match c {
                        '0' => Ok(false),
                        '1' => Ok(true),
                        other => Err(D::Error::custom(format!("bad mask character `{other}`"))),
                    })
                    .collect()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trees::{fit_tree, Node};

    fn separable(n: usize) -> (Vec<Vec<f64>>, Vec<u8>) {
        let x: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let t = i as f64 / n as f64;
                vec![t, (i * 37 % 17) as f64, ((i * 11) % 7) as f64 * 0.1]
            })
            .collect();
        let y = x.iter().map(|r| u8::from(r[0] > 0.5)).collect();
        (x, y)
    }

    #[test]
    fn single_unbootstrapped_tree_equals_fit_tree() {
        let (x, y) = separable(60);
        let cfg = ForestConfig {
            n_estimators: 1,
            bootstrap: false,
            ..ForestConfig::default()
        };
        let forest = fit_forest(&x, &y, &cfg, 42).unwrap();
        let tree = fit_tree(
            &x,
            &y,
            &TreeConfig {
                max_features: Some(2),
                seed: 42,
                ..TreeConfig::default()
            },
        )
        .unwrap();
        assert_eq!(forest.trees[0], tree);
    }

    #[test]
    fn deterministic_and_schedule_independent() {
        let (x, y) = separable(80);
        let par = fit_forest(&x, &y, &ForestConfig::default(), 7).unwrap();
        let seq = fit_forest(
            &x,
            &y,
            &ForestConfig {
                parallel: false,
                ..ForestConfig::default()
            },
            7,
        )
        .unwrap();
        assert_eq!(par.trees, seq.trees);
        assert_eq!(par.in_bag, seq.in_bag);
        assert_eq!(par.trees.len(), 100);
        assert!(par.in_bag.iter().all(|m| m.len() == 80));
    }

    #[test]
    fn separable_training_accuracy_is_one() {
        let (x, y) = separable(120);
        let f = fit_forest(&x, &y, &ForestConfig::default(), 0).unwrap();
        for (row, &label) in x.iter().zip(&y) {
            assert_eq!(f.predict(row).unwrap().label, label);
        }
    }

    #[test]
    fn importances_normalized_and_single_feature() {
        let (x, y) = separable(60);
        let f = fit_forest(&x, &y, &ForestConfig::default(), 1).unwrap();
        let imp = forest_importances(&f);
        assert!((imp.iter().sum::<f64>() - 1.0).abs() < 1e-9);

        let x1: Vec<Vec<f64>> = x.iter().map(|r| vec![r[0]]).collect();
        let f1 = fit_forest(&x1, &y, &ForestConfig::default(), 1).unwrap();
        assert_eq!(forest_importances(&f1), vec![1.0]);
    }

    #[test]
    fn unused_feature_has_zero_importance() {
        let (x, y) = separable(60);
        let x: Vec<Vec<f64>> = x.iter().map(|r| vec![r[0], 5.0]).collect();
        let f = fit_forest(&x, &y, &ForestConfig::default(), 3).unwrap();
        assert_eq!(forest_importances(&f)[1], 0.0);
    }

    #[test]
    fn oob_zero_when_all_correct_and_error_without_oob() {
        let (x, y) = separable(100);
        let f = fit_forest(&x, &y, &ForestConfig::default(), 0).unwrap();
        let cfg = ForestConfig {
            bootstrap: false,
            n_estimators: 3,
            ..ForestConfig::default()
        };
        let no_oob = fit_forest(&x, &y, &cfg, 0).unwrap();
        assert!(matches!(oob_error(&no_oob, &x, &y), Err(Error::NoOutOfBag)));
        let x1: Vec<Vec<f64>> = x.iter().map(|r| vec![r[0]]).collect();
        let f1 = fit_forest(&x1, &y, &ForestConfig::default(), 0).unwrap();
        assert!(oob_error(&f1, &x1, &y).unwrap() < 0.05);
        assert!(oob_error(&f, &x, &y).unwrap() <= 0.1);
    }

    #[test]
    fn oob_matches_hand_tally_on_three_stumps() {
        // Stumps: tree 0 says 1 if x > 0.5, tree 1 always 0, tree 2 always 1.
        let stump = |thr: f64| TreeModel {
            config: TreeConfig::default(),
            n_features: 1,
            nodes: vec![
                Node::Split {
                    feature: 0,
                    threshold: thr,
                    left: 1,
                    right: 2,
                    n_samples: 4,
                    impurity_decrease: 0.5,
                },
                Node::Leaf { counts: [2, 0] },
                Node::Leaf { counts: [0, 2] },
            ],
        };
        let leaf = |c: [usize; 2]| TreeModel {
            config: TreeConfig::default(),
            n_features: 1,
            nodes: vec![Node::Leaf { counts: c }],
        };
        let model = ForestModel {
            config: ForestConfig::default(),
            seed: 0,
            n_features: 1,
            trees: vec![stump(0.5), leaf([3, 1]), leaf([0, 4])],
            in_bag: vec![
                vec![true, false, false, true],
                vec![false, true, true, true],
                vec![false, false, true, true],
            ],
        };
        let x = vec![vec![0.0], vec![1.0], vec![0.0], vec![1.0]];
        let y = [0, 1, 1, 0];
        // row 0: trees 1,2 -> 0,1 tie -> 0, correct
        // row 1: trees 0,2 -> 1,1 -> 1, correct
        // row 2: tree 0 -> 0, wrong
        // row 3: never out of bag, skipped
        assert!((oob_error(&model, &x, &y).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn json_round_trip_keeps_predictions() {
        let (x, y) = separable(50);
        let cfg = ForestConfig {
            n_estimators: 10,
            ..ForestConfig::default()
        };
        let f = fit_forest(&x, &y, &cfg, 9).unwrap();
        let back: ForestModel = serde_json::from_str(&serde_json::to_string(&f).unwrap()).unwrap();
        assert_eq!(back, f);
    }
}
