use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{check_query, check_training, require_both_classes, Prediction};

/// Coefficients with smaller magnitude are not kept as support vectors.
pub const SUPPORT_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gamma {
    /// `1 / (d * Var(all training cells))`
    Scale,
    Value(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmConfig {
    pub c: f64,
    pub gamma: Gamma,
    /// Stop when the maximal KKT violation falls below this.
    pub tolerance: f64,
    /// Kernel row cache budget in MiB.
    pub cache_mb: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            gamma: Gamma::Scale,
            tolerance: 1e-3,
            cache_mb: 200,
        }
    }
}

impl SvmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::InvalidParameter(format!("C must be positive, got {}", self.c)));
        }
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return Err(Error::InvalidParameter("SVM tolerance must be positive".into()));
        }
        if let Gamma::Value(g) = self.gamma {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::InvalidParameter(format!("gamma must be positive, got {g}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub config: SvmConfig,
    pub n_features: usize,
    pub gamma: f64,
    pub support_vectors: Vec<Vec<f64>>,
    /// `alpha_i * y_i` per support vector, with `y` in {-1, +1}.
    pub dual_coef: Vec<f64>,
    pub rho: f64,
}

/// Raw solution of the dual problem over every training row.
#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    pub rho: f64,
    pub iterations: usize,
}

pub fn scale_gamma(x: &[Vec<f64>]) -> Result<f64> {
    let d = x[0].len();
    let cells = (x.len() * d) as f64;
    let mean = x.iter().flatten().sum::<f64>() / cells;
    let var = x.iter().flatten().map(|v| (v - mean).powi(2)).sum::<f64>() / cells;
    if var == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok(1.0 / (d as f64 * var))
}

fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum();
    (-gamma * d2).exp()
}

/// Rows of `Q_ij = y_i y_j K(x_i, x_j)`, computed on demand and evicted
/// first-in first-out once the budget is spent.
struct KernelCache<'a> {
    x: &'a [Vec<f64>],
    y: &'a [f64],
    gamma: f64,
    capacity: usize,
    rows: HashMap<usize, Vec<f64>>,
    order: VecDeque<usize>,
}

impl<'a> KernelCache<'a> {
    fn new(x: &'a [Vec<f64>], y: &'a [f64], gamma: f64, cache_mb: usize) -> Self {
        let per_row = x.len() * std::mem::size_of::<f64>();
        let capacity = ((cache_mb << 20) / per_row.max(1)).max(2);
        Self {
            x,
            y,
            gamma,
            capacity,
            rows: HashMap::new(),
            order: VecDeque::new(),
        }
    }

    fn ensure(&mut self, i: usize) {
        if self.rows.contains_key(&i) {
            return;
        }
        if self.rows.len() >= self.capacity {
            if let Some(old) = self.order.pop_front() {
                self.rows.remove(&old);
            }
        }
        let xi = &self.x[i];
        let row = self
            .x
            .iter()
            .zip(self.y)
            .map(|(xj, &yj)| self.y[i] * yj * rbf(xi, xj, self.gamma))
            .collect();
        self.rows.insert(i, row);
        self.order.push_back(i);
    }

    /// Rows `i` and `j`, both resident.
    fn pair(&mut self, i: usize, j: usize) -> (&[f64], &[f64]) {
        self.ensure(i);
        self.ensure(j);
        if !self.rows.contains_key(&i) {
            // `j` evicted `i` when capacity is tiny.
            self.ensure(i);
        }
        (&self.rows[&i], &self.rows[&j])
    }
}

/// Solves `min 1/2 a'Qa - e'a` s.t. `y'a = 0`, `0 <= a <= C` by sequential
/// minimal optimisation with second-order working-set selection. Ties in
/// selection go to the lowest index.
pub fn solve_dual(x: &[Vec<f64>], y: &[u8], c: f64, gamma: f64, tolerance: f64) -> DualSolution {
    solve(x, y, c, gamma, tolerance, SvmConfig::default().cache_mb)
}

fn solve(x: &[Vec<f64>], y: &[u8], c: f64, gamma: f64, eps: f64, cache_mb: usize) -> DualSolution {
    const TAU: f64 = 1e-12;
    let n = x.len();
    let ys: Vec<f64> = y.iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect();
    // Q_ii = 1 for the RBF kernel.
    let qd = vec![1.0; n];
    let mut cache = KernelCache::new(x, &ys, gamma, cache_mb);
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let max_iter = (100 * n).max(10_000_000);
    let mut iterations = 0;
    let up = |a: f64, yt: f64| if yt > 0.0 { a < c } else { a > 0.0 };
    let low = |a: f64, yt: f64| if yt > 0.0 { a > 0.0 } else { a < c };
    let mut verified = false;

    while iterations < max_iter {
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..n {
            if up(alpha[t], ys[t]) && -ys[t] * grad[t] > gmax {
                gmax = -ys[t] * grad[t];
                i = t;
            }
        }
        let mut gmin = f64::INFINITY;
        let mut j = usize::MAX;
        if i != usize::MAX {
            cache.ensure(i);
            let qi = &cache.rows[&i];
            let mut best = f64::INFINITY;
            for t in 0..n {
                if !low(alpha[t], ys[t]) {
                    continue;
                }
                let v = -ys[t] * grad[t];
                gmin = gmin.min(v);
                let b = gmax - v;
                if b > 0.0 {
                    let a = qd[i] + qd[t] - 2.0 * ys[i] * ys[t] * qi[t];
                    let obj = -(b * b) / if a > 0.0 { a } else { TAU };
                    if obj < best {
                        best = obj;
                        j = t;
                    }
                }
            }
        }
        if i == usize::MAX || j == usize::MAX || gmax - gmin < eps {
            if verified {
                break;
            }
            // Incremental gradient drift must not fake convergence.
            grad = full_gradient(&alpha, &ys, x, gamma);
            verified = true;
            continue;
        }
        verified = false;
        iterations += 1;

        let (qi, qj) = cache.pair(i, j);
        let (ai_old, aj_old) = (alpha[i], alpha[j]);
        let (yi, yj) = (ys[i], ys[j]);
        if yi != yj {
            let mut quad = qd[i] + qd[j] + 2.0 * qi[j];
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let mut quad = qd[i] + qd[j] - 2.0 * qi[j];
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - ai_old, alpha[j] - aj_old);
        for t in 0..n {
            grad[t] += qi[t] * di + qj[t] * dj;
        }
    }

    let rho = compute_rho(&alpha, &ys, &grad, c);
    DualSolution {
        alpha,
        rho,
        iterations,
    }
}

fn full_gradient(alpha: &[f64], ys: &[f64], x: &[Vec<f64>], gamma: f64) -> Vec<f64> {
    let active: Vec<usize> = (0..alpha.len()).filter(|&j| alpha[j] != 0.0).collect();
    (0..alpha.len())
        .map(|i| {
            let s: f64 = active
                .iter()
                .map(|&j| alpha[j] * ys[j] * rbf(&x[i], &x[j], gamma))
                .sum();
            ys[i] * s - 1.0
        })
        .collect()
}

fn compute_rho(alpha: &[f64], ys: &[f64], grad: &[f64], c: f64) -> f64 {
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free, mut sum) = (0usize, 0.0);
    for t in 0..alpha.len() {
        let yg = ys[t] * grad[t];
        if alpha[t] >= c {
            if ys[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if ys[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum += yg;
        }
    }
    if free > 0 {
        sum / free as f64
    } else {
        (ub + lb) / 2.0
    }
}

/// Soft-margin RBF support vector classifier.
pub fn fit_svm(x: &[Vec<f64>], y: &[u8], config: &SvmConfig) -> Result<SvmModel> {
    config.validate()?;
    let d = check_training(x, y)?;
    require_both_classes(y)?;
    let gamma = match config.gamma {
        Gamma::Scale => scale_gamma(x)?,
        Gamma::Value(g) => g,
    };
    let sol = solve(x, y, config.c, gamma, config.tolerance, config.cache_mb);
    let mut support_vectors = Vec::new();
    let mut dual_coef = Vec::new();
    for (i, &a) in sol.alpha.iter().enumerate() {
        if a > SUPPORT_EPS {
            support_vectors.push(x[i].clone());
            dual_coef.push(if y[i] == 1 { a } else { -a });
        }
    }
    Ok(SvmModel {
        config: *config,
        n_features: d,
        gamma,
        support_vectors,
        dual_coef,
        rho: sol.rho,
    })
}

impl SvmModel {
    /// `sum_i alpha_i y_i K(x_i, x) - rho`
    pub fn decision_value(&self, row: &[f64]) -> Result<f64> {
        check_query(self.n_features, row)?;
        let s: f64 = self
            .support_vectors
            .iter()
            .zip(&self.dual_coef)
            .map(|(sv, &c)| c * rbf(sv, row, self.gamma))
            .sum();
        Ok(s - self.rho)
    }

    pub fn predict(&self, row: &[f64]) -> Result<Prediction> {
        Ok(Prediction::from_margin(self.decision_value(row)?))
    }
}
