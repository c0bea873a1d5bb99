//! Gaussian and Bernoulli naive Bayes.

use serde::{Deserialize, Serialize};

use super::{softmax_in_place, Classifier, ParamReader};
use crate::error::Result;
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianConfig {
    /// Variance floor as a fraction of the largest feature variance.
    pub var_smoothing: f64,
}

impl GaussianConfig {
    pub(crate) fn from_params(r: &ParamReader) -> Result<Self> {
        Ok(Self {
            var_smoothing: r.positive_f64("var_smoothing", 1e-9)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianNbModel {
    pub n_classes: usize,
    /// ln prior per class; `None` for classes absent from training.
    pub log_prior: Vec<Option<f64>>,
    /// `n_classes × n_features`.
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
}

fn group_by_class(y: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut g = vec![Vec::new(); k];
    for (i, &c) in y.iter().enumerate() {
        g[c].push(i);
    }
    g
}

fn log_prior(groups: &[Vec<usize>], n: usize) -> Vec<Option<f64>> {
    groups
        .iter()
        .map(|g| (!g.is_empty()).then(|| (g.len() as f64 / n as f64).ln()))
        .collect()
}

/// Softmax over the present classes' log scores; absent classes get 0.
fn normalize_log_scores(scores: &mut [f64], present: &[Option<f64>]) {
    for (s, p) in scores.iter_mut().zip(present) {
        if p.is_none() {
            *s = f64::NEG_INFINITY;
        }
    }
    softmax_in_place(scores);
}

impl GaussianNbModel {
    pub fn fit(cfg: &GaussianConfig, x: &Matrix, y: &[usize], n_classes: usize) -> Self {
        let d = x.cols();
        let n = x.rows();
        let groups = group_by_class(y, n_classes);
        let max_var = (0..d)
            .map(|j| {
                let col = x.column(j);
                let mean = col.iter().sum::<f64>() / n as f64;
                col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64
            })
            .fold(0.0, f64::max);
        let floor = (cfg.var_smoothing * max_var).max(f64::MIN_POSITIVE);
        let mut means = vec![0.0; n_classes * d];
        let mut variances = vec![1.0; n_classes * d];
        for (c, rows) in groups.iter().enumerate() {
            if rows.is_empty() {
                continue;
            }
            let m = rows.len() as f64;
            for j in 0..d {
                let mean = rows.iter().map(|&i| x.get(i, j)).sum::<f64>() / m;
                let var = rows.iter().map(|&i| (x.get(i, j) - mean).powi(2)).sum::<f64>() / m;
                means[c * d + j] = mean;
                variances[c * d + j] = var.max(floor);
            }
        }
        Self {
            n_classes,
            log_prior: log_prior(&groups, n),
            means,
            variances,
        }
    }
}

impl Classifier for GaussianNbModel {
    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn predict_proba(&self, x: &Matrix) -> Matrix {
        let d = x.cols();
        let mut out = Matrix::zeros(x.rows(), self.n_classes);
        for (i, row) in x.iter_rows().enumerate() {
            let scores = out.row_mut(i);
            for (c, s) in scores.iter_mut().enumerate() {
                let Some(lp) = self.log_prior[c] else { continue };
                let mut ll = lp;
                for (j, &v) in row.iter().enumerate() {
                    let var = self.variances[c * d + j];
                    let diff = v - self.means[c * d + j];
                    ll -= 0.5 * ((2.0 * std::f64::consts::PI * var).ln() + diff * diff / var);
                }
                *s = ll;
            }
            normalize_log_scores(scores, &self.log_prior);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BernoulliConfig {
    pub alpha: f64,
    pub binarize: f64,
}

impl BernoulliConfig {
    pub(crate) fn from_params(r: &ParamReader) -> Result<Self> {
        Ok(Self {
            alpha: r.positive_f64("alpha", 1.0)?,
            binarize: r.f64("binarize", 0.5)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BernoulliNbModel {
    pub n_classes: usize,
    pub binarize: f64,
    pub log_prior: Vec<Option<f64>>,
    /// ln P(feature on | class), `n_classes × n_features`.
    pub log_on: Vec<f64>,
    pub log_off: Vec<f64>,
}

impl BernoulliNbModel {
    pub fn fit(cfg: &BernoulliConfig, x: &Matrix, y: &[usize], n_classes: usize) -> Self {
        let d = x.cols();
        let groups = group_by_class(y, n_classes);
        let mut log_on = vec![0.0; n_classes * d];
        let mut log_off = vec![0.0; n_classes * d];
        for (c, rows) in groups.iter().enumerate() {
            for j in 0..d {
                let on = rows.iter().filter(|&&i| x.get(i, j) > cfg.binarize).count() as f64;
                let p = (on + cfg.alpha) / (rows.len() as f64 + 2.0 * cfg.alpha);
                log_on[c * d + j] = p.ln();
                log_off[c * d + j] = (1.0 - p).ln();
            }
        }
        Self {
            n_classes,
            binarize: cfg.binarize,
            log_prior: log_prior(&groups, x.rows()),
            log_on,
            log_off,
        }
    }
}

impl Classifier for BernoulliNbModel {
    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn predict_proba(&self, x: &Matrix) -> Matrix {
        let d = x.cols();
        let mut out = Matrix::zeros(x.rows(), self.n_classes);
        for (i, row) in x.iter_rows().enumerate() {
            let scores = out.row_mut(i);
            for (c, s) in scores.iter_mut().enumerate() {
                let Some(lp) = self.log_prior[c] else { continue };
                *s = lp
                    + row
                        .iter()
                        .enumerate()
                        .map(|(j, &v)| {
                            if v > self.binarize {
                                self.log_on[c * d + j]
                            } else {
                                self.log_off[c * d + j]
                            }
                        })
                        .sum::<f64>();
            }
            normalize_log_scores(scores, &self.log_prior);
        }
        out
    }
}
