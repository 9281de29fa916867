//! Kernel, linear, instance-based and probabilistic classifiers: an RBF
//! support vector machine, logistic regression, a hinge-loss SGD classifier,
//! k-nearest neighbours and Gaussian naive Bayes.
//!
//! Labels are 0/1 at every boundary. Margin models map them to -1/+1
//! internally.

mod gnb;
mod knn;
mod logreg;
mod sgd;
mod svm;

pub use gnb::{fit_gnb, GnbModel, VAR_SMOOTHING};
pub use knn::{fit_knn, KnnConfig, KnnModel, KnnWeights};
pub use logreg::{fit_logreg, gradient as logreg_gradient, objective as logreg_objective};
pub use logreg::{LogRegConfig, LogRegModel};
pub use sgd::{fit_sgd, SgdConfig, SgdModel};
pub use svm::{fit_svm, scale_gamma, solve_dual, DualSolution, Gamma, SvmConfig, SvmModel};
