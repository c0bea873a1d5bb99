//! Multiclass gradient boosting (log-loss) and AdaBoost (SAMME / SAMME.R).

use serde::{Deserialize, Serialize};

use super::tree::{
    grow, xlnx_table, ClassStats, ClassificationTree, Criterion, MaxFeatures, RegStats, RegressionCriterion,
    SortedColumns, Splitter, Tree, TreeParams,
};
use super::{softmax_in_place, Classifier, ParamReader};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng;

/// Negative gradient of multiclass log-loss w.r.t. raw scores: `y − p`.
pub fn gb_negative_gradient(y_onehot: &Matrix, proba: &Matrix) -> Result<Matrix> {
    if y_onehot.rows() != proba.rows() || y_onehot.cols() != proba.cols() {
        return Err(Error::invalid(format!(
            "shape mismatch: labels {}×{}, probabilities {}×{}",
            y_onehot.rows(),
            y_onehot.cols(),
            proba.rows(),
            proba.cols()
        )));
    }
    let data = y_onehot.as_slice().iter().zip(proba.as_slice()).map(|(y, p)| y - p).collect();
    Matrix::from_vec(y_onehot.rows(), y_onehot.cols(), data)
}

/// SAMME stage weight `ln((1−ε)/ε) + ln(K−1)`; `None` when ε is outside
/// `(0, 1 − 1/K]`. At the upper end the weight is 0.
pub fn samme_update(error: f64, n_classes: usize) -> Option<f64> {
    let k = n_classes as f64;
    if !(error > 0.0 && error <= 1.0 - 1.0 / k) {
        return None;
    }
    Some(((1.0 - error) / error).ln() + (k - 1.0).ln())
}

/// Multiplies weights of misclassified rows by `exp(alpha)` and renormalizes.
pub fn reweight(weights: &mut [f64], misclassified: &[bool], alpha: f64) {
    let factor = alpha.exp();
    for (w, &m) in weights.iter_mut().zip(misclassified) {
        if m {
            *w *= factor;
        }
    }
    normalize(weights);
}

fn normalize(weights: &mut [f64]) {
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
}

#[derive(Debug, Clone, PartialEq)]
pub struct GbConfig {
    pub n_estimators: usize,
    pub learning_rate: f64,
    pub criterion: RegressionCriterion,
    pub tree: TreeParams,
}

impl GbConfig {
    pub(crate) fn from_params(r: &ParamReader) -> Result<Self> {
        r.choice("loss", "log_loss", &["log_loss"])?;
        let criterion = match r.choice("criterion", "friedman_mse", &["friedman_mse", "squared_error"])? {
            "squared_error" => RegressionCriterion::SquaredError,
            _ => RegressionCriterion::FriedmanMse,
        };
        let min_samples_split = r.usize("min_samples_split", 2)?;
        if min_samples_split < 2 {
            return Err(r.err("'min_samples_split' must be at least 2"));
        }
        let min_impurity_decrease = r.f64("min_impurity_decrease", 0.0)?;
        if min_impurity_decrease < 0.0 {
            return Err(r.err("'min_impurity_decrease' must be non-negative"));
        }
        Ok(Self {
            n_estimators: r.positive_usize("n_estimators", 100)?,
            learning_rate: r.positive_f64("learning_rate", 0.1)?,
            criterion,
            tree: TreeParams {
                splitter: Splitter::Best,
                max_depth: Some(r.positive_usize("max_depth", 3)?),
                min_samples_split,
                min_samples_leaf: r.positive_usize("min_samples_leaf", 1)?,
                max_features: MaxFeatures::All,
                min_impurity_decrease,
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbModel {
    pub n_classes: usize,
    pub learning_rate: f64,
    pub init: Vec<f64>,
    /// `stages[m][k]` is the class-k tree of stage m.
    pub stages: Vec<Vec<Tree<f64>>>,
    /// Training log-loss before the first stage and after each stage.
    pub train_loss: Vec<f64>,
}

fn mean_log_loss(raw: &[f64], y: &[usize], k: usize) -> f64 {
    let n = y.len();
    let mut total = 0.0;
    for (i, &label) in y.iter().enumerate() {
        let row = &raw[i * k..(i + 1) * k];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        total += lse - row[label];
    }
    total / n as f64
}

impl GbModel {
    pub fn fit(cfg: &GbConfig, x: &Matrix, y: &[usize], n_classes: usize, seed: u64) -> Result<Self> {
        let n = x.rows();
        let k = n_classes;
        let counts = crate::tabular::class_counts(y, k);
        let init: Vec<f64> = counts.iter().map(|&c| (c.max(1) as f64 / n as f64).ln()).collect();
        let mut raw: Vec<f64> = (0..n).flat_map(|_| init.iter().copied()).collect();
        let data = SortedColumns::new(x);
        let mut rng = rng::seeded(seed);
        let scale = (k as f64 - 1.0) / k as f64;

        let mut stages = Vec::with_capacity(cfg.n_estimators);
        let mut train_loss = vec![mean_log_loss(&raw, y, k)];
        let mut proba = vec![0.0; n * k];
        let mut residual = vec![0.0; n];
        for _ in 0..cfg.n_estimators {
            proba.copy_from_slice(&raw);
            proba.chunks_mut(k).for_each(softmax_in_place);
            let mut trees = Vec::with_capacity(k);
            for c in 0..k {
                for i in 0..n {
                    residual[i] = f64::from(u8::from(y[i] == c)) - proba[i * k + c];
                }
                let stats = RegStats::new(&residual, cfg.criterion);
                let lr = cfg.learning_rate;
                let tree = grow(&data, stats, &cfg.tree, &mut rng, |_, rows| {
                    let (mut num, mut den) = (0.0, 0.0);
                    for &r in rows {
                        let v = residual[r as usize];
                        num += v;
                        den += v.abs() * (1.0 - v.abs());
                    }
                    let gamma = if den.abs() < 1e-150 { 0.0 } else { scale * num / den };
                    for &r in rows {
                        raw[r as usize * k + c] += lr * gamma;
                    }
                    gamma
                });
                trees.push(tree);
            }
            stages.push(trees);
            let loss = mean_log_loss(&raw, y, k);
            if !loss.is_finite() {
                return Err(Error::Numeric("gradient boosting training loss became non-finite".into()));
            }
            train_loss.push(loss);
        }
        Ok(Self {
            n_classes,
            learning_rate: cfg.learning_rate,
            init,
            stages,
            train_loss,
        })
    }

    /// Raw (pre-softmax) scores.
    pub fn decision_function(&self, x: &Matrix) -> Matrix {
        let k = self.n_classes;
        let mut out = Matrix::zeros(x.rows(), k);
        for (i, row) in x.iter_rows().enumerate() {
            let acc = out.row_mut(i);
            acc.copy_from_slice(&self.init);
            for stage in &self.stages {
                for (a, t) in acc.iter_mut().zip(stage) {
                    *a += self.learning_rate * t.leaf(row);
                }
            }
        }
        out
    }
}

impl Classifier for GbModel {
    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn predict_proba(&self, x: &Matrix) -> Matrix {
        let mut m = self.decision_function(x);
        for i in 0..m.rows() {
            softmax_in_place(m.row_mut(i));
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AdaAlgorithm {
    #[serde(rename = "SAMME")]
    Samme,
    #[serde(rename = "SAMME.R")]
    SammeR,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaConfig {
    pub n_estimators: usize,
    pub algorithm: AdaAlgorithm,
    pub learning_rate: f64,
}

impl AdaConfig {
    pub(crate) fn from_params(r: &ParamReader) -> Result<Self> {
        let algorithm = match r.choice("algorithm", "SAMME", &["SAMME", "SAMME.R"])? {
            "SAMME.R" => AdaAlgorithm::SammeR,
            _ => AdaAlgorithm::Samme,
        };
        Ok(Self {
            n_estimators: r.positive_usize("n_estimators", 50)?,
            algorithm,
            learning_rate: r.positive_f64("learning_rate", 1.0)?,
        })
    }
}

/// Probability floor applied before logs in SAMME.R.
const SAMME_R_EPS: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaModel {
    pub n_classes: usize,
    pub algorithm: AdaAlgorithm,
    pub stumps: Vec<ClassificationTree>,
    /// Stage weights α (all 1 for SAMME.R).
    pub alphas: Vec<f64>,
    /// Sum of the sample-weight vector after each stage's update.
    pub weight_sums: Vec<f64>,
}

fn samme_r_scores(p: &[f64], out: &mut [f64]) {
    let k = p.len() as f64;
    let logs: Vec<f64> = p.iter().map(|&v| v.max(SAMME_R_EPS).ln()).collect();
    let mean = logs.iter().sum::<f64>() / k;
    for (o, l) in out.iter_mut().zip(&logs) {
        *o += (k - 1.0) * (l - mean);
    }
}

impl AdaModel {
    pub fn fit(cfg: &AdaConfig, x: &Matrix, y: &[usize], n_classes: usize, seed: u64) -> Result<Self> {
        let n = x.rows();
        let k = n_classes as f64;
        let data = SortedColumns::new(x);
        let xlnx = xlnx_table(0);
        let mut rng = rng::seeded(seed);
        let stump = TreeParams {
            max_depth: Some(1),
            ..TreeParams::default()
        };
        let mut w = vec![1.0 / n as f64; n];
        let mut stumps = Vec::new();
        let mut alphas = Vec::new();
        let mut weight_sums = Vec::new();
        let mut miss = vec![false; n];

        for stage in 0..cfg.n_estimators {
            let stats = ClassStats::new(y, Some(&w), &xlnx, n_classes, Criterion::Gini);
            let tree = ClassificationTree {
                tree: grow(&data, stats, &stump, &mut rng, |s, _| s.distribution()),
                n_classes,
            };
            let mut error = 0.0;
            for i in 0..n {
                let p = tree.proba_row(x.row(i));
                miss[i] = super::argmax(p) != y[i];
                if miss[i] {
                    error += w[i];
                }
            }
            if error <= 0.0 {
                // a perfect stump ends boosting
                stumps.push(tree);
                alphas.push(1.0);
                weight_sums.push(w.iter().sum());
                break;
            }
            match cfg.algorithm {
                AdaAlgorithm::Samme => {
                    let Some(a) = samme_update(error, n_classes).filter(|&a| a > 1e-12) else {
                        if stage == 0 {
                            return Err(Error::Numeric(format!(
                                "first AdaBoost stage is no better than chance (weighted error {error:.4})"
                            )));
                        }
                        break;
                    };
                    let alpha = cfg.learning_rate * a;
                    let mut next = w.clone();
                    reweight(&mut next, &miss, alpha);
                    if next.iter().any(|v| !v.is_finite()) {
                        break;
                    }
                    w = next;
                    stumps.push(tree);
                    alphas.push(alpha);
                }
                AdaAlgorithm::SammeR => {
                    let mut next = w.clone();
                    for (i, wi) in next.iter_mut().enumerate() {
                        let p = tree.proba_row(x.row(i));
                        // y coding: 1 for the true class, −1/(K−1) elsewhere
                        let mut s = 0.0;
                        for (c, &pc) in p.iter().enumerate() {
                            let code = if c == y[i] { 1.0 } else { -1.0 / (k - 1.0) };
                            s += code * pc.max(SAMME_R_EPS).ln();
                        }
                        *wi *= (-cfg.learning_rate * (k - 1.0) / k * s).exp();
                    }
                    normalize(&mut next);
                    if next.iter().any(|v| !v.is_finite()) {
                        break;
                    }
                    w = next;
                    stumps.push(tree);
                    alphas.push(1.0);
                }
            }
            weight_sums.push(w.iter().sum());
        }
        Ok(Self {
            n_classes,
            algorithm: cfg.algorithm,
            stumps,
            alphas,
            weight_sums,
        })
    }

    /// Stage-weighted class scores, normalized by the total stage weight.
    pub fn decision_function(&self, x: &Matrix) -> Matrix {
        let k = self.n_classes;
        let total: f64 = self.alphas.iter().sum();
        let mut out = Matrix::zeros(x.rows(), k);
        for (i, row) in x.iter_rows().enumerate() {
            let acc = out.row_mut(i);
            for (t, &a) in self.stumps.iter().zip(&self.alphas) {
                let p = t.proba_row(row);
                match self.algorithm {
                    AdaAlgorithm::Samme => acc[super::argmax(p)] += a,
                    AdaAlgorithm::SammeR => samme_r_scores(p, acc),
                }
            }
            acc.iter_mut().for_each(|v| *v /= total);
        }
        out
    }
}

impl Classifier for AdaModel {
    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn predict_proba(&self, x: &Matrix) -> Matrix {
        let mut m = self.decision_function(x);
        let scale = 1.0 / (self.n_classes as f64 - 1.0).max(1.0);
        for i in 0..m.rows() {
            let row = m.row_mut(i);
            row.iter_mut().for_each(|v| *v *= scale);
            softmax_in_place(row);
        }
        m
    }

    fn predict(&self, x: &Matrix) -> Vec<usize> {
        super::argmax_rows(&self.decision_function(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samme_examples() {
        assert!(samme_update(0.5, 2).unwrap().abs() < 1e-15);
        assert!((samme_update(0.1, 2).unwrap() - 9f64.ln()).abs() < 1e-12);
        assert!((samme_update(0.5, 3).unwrap() - 2f64.ln()).abs() < 1e-12);
        assert!(samme_update(0.0, 3).is_none());
        assert!(samme_update(0.7, 3).is_none());
    }

    #[test]
    fn negative_gradient_examples() {
        let y = Matrix::from_rows(&[[1.0, 0.0, 0.0]]).unwrap();
        let r = gb_negative_gradient(&y, &y).unwrap();
        assert_eq!(r.as_slice(), &[0.0, 0.0, 0.0]);
        let y = Matrix::from_rows(&[[1.0, 0.0]]).unwrap();
        let p = Matrix::from_rows(&[[0.5, 0.5]]).unwrap();
        assert_eq!(gb_negative_gradient(&y, &p).unwrap().as_slice(), &[0.5, -0.5]);
        assert!(gb_negative_gradient(&y, &Matrix::zeros(1, 3)).is_err());
    }
}
