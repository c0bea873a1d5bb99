//! Logistic regression (multinomial or one-vs-rest) and a one-vs-rest
//! linear SVM trained by stochastic sub-gradient descent.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{softmax_in_place, Classifier, ParamReader};
use crate::error::{Error, Result};
use crate::matrix::{gemm, Matrix};
use crate::rng::{self, Rng};

/// Linear scores `x·Wᵀ + b` for `k` outputs; `w` is `k × d` row-major.
fn linear_scores(x: &Matrix, w: &[f64], b: &[f64]) -> Matrix {
    let k = b.len();
    let d = x.cols();
    let mut out = Matrix::zeros(x.rows(), k);
    for i in 0..x.rows() {
        out.row_mut(i).copy_from_slice(b);
    }
    gemm(
        x.rows(),
        d,
        k,
        1.0,
        (x.as_slice(), d as isize, 1),
        (w, 1, d as isize),
        1.0,
        out.as_mut_slice(),
    );
    out
}

fn uniform_init(rows: usize, cols: usize, rng: &mut Rng) -> Vec<f64> {
    let r = (6.0 / (rows + cols) as f64).sqrt();
    (0..rows * cols).map(|_| rng.gen_range(-r..=r)).collect()
}

/// Largest eigenvalue of `X̃ᵀX̃ / n` where `X̃` is `x` with a ones column.
fn gram_spectral_norm(x: &Matrix) -> f64 {
    let n = x.rows() as f64;
    let d = x.cols();
    let mut v = vec![1.0; d + 1];
    let mut lambda = 0.0;
    let mut xv = vec![0.0; x.rows()];
    for _ in 0..100 {
        for (i, row) in x.iter_rows().enumerate() {
            xv[i] = row.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() + v[d];
        }
        let mut next = vec![0.0; d + 1];
        for (i, row) in x.iter_rows().enumerate() {
            for (nj, a) in next.iter_mut().zip(row) {
                *nj += a * xv[i];
            }
            next[d] += xv[i];
        }
        next.iter_mut().for_each(|z| *z /= n);
        let norm = next.iter().map(|z| z * z).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        let prev = lambda;
        lambda = norm / v.iter().map(|z| z * z).sum::<f64>().sqrt();
        v = next.into_iter().map(|z| z / norm).collect();
        if (lambda - prev).abs() <= 1e-10 * lambda {
            break;
        }
    }
    // power iteration approaches from below; pad so the step stays safe
    lambda * 1.01
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MultiClass {
    Multinomial,
    Ovr,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LrConfig {
    /// Inverse regularization strength; `None` means no penalty.
    pub c: Option<f64>,
    pub multi_class: MultiClass,
    pub max_iter: usize,
    pub tol: f64,
}

impl LrConfig {
    pub(crate) fn from_params(r: &ParamReader) -> Result<Self> {
        let penalty = r.choice("penalty", "l2", &["l2", "none"])?;
        let c = r.positive_f64("C", 1.0)?;
        let multi_class = match r.choice("multi_class", "auto", &["auto", "multinomial", "ovr"])? {
            "ovr" => MultiClass::Ovr,
            _ => MultiClass::Multinomial,
        };
        Ok(Self {
            c: (penalty == "l2").then_some(c),
            multi_class,
            max_iter: r.positive_usize("max_iter", 1000)?,
            tol: r.positive_f64("tol", 1e-6)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub n_classes: usize,
    pub multi_class: MultiClass,
    /// `n_classes × n_features`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl LogisticModel {
    /// Full-batch gradient descent with step `1/L` on the mean log-loss
    /// plus `‖W‖² / (2·C·n)`.
    pub fn fit(cfg: &LrConfig, x: &Matrix, y: &[usize], n_classes: usize, seed: u64) -> Result<Self> {
        let n = x.rows();
        let d = x.cols();
        let k = n_classes;
        let lambda = cfg.c.map_or(0.0, |c| 1.0 / (c * n as f64));
        let curvature = match cfg.multi_class {
            MultiClass::Multinomial => 0.5,
            MultiClass::Ovr => 0.25,
        };
        let lipschitz = curvature * gram_spectral_norm(x) + lambda;
        let step = 1.0 / lipschitz.max(1e-12);

        let mut rng = rng::seeded(seed);
        let mut w = uniform_init(k, d, &mut rng);
        let mut b = vec![0.0; k];
        let mut grad_w = vec![0.0; k * d];
        let mut grad_b = vec![0.0; k];
        let mut converged = false;
        let mut iterations = 0;
        for it in 0..cfg.max_iter {
            iterations = it + 1;
            let mut scores = linear_scores(x, &w, &b);
            // residual p − y, scaled by 1/n
            for i in 0..n {
                let row = scores.row_mut(i);
                match cfg.multi_class {
                    MultiClass::Multinomial => softmax_in_place(row),
                    MultiClass::Ovr => row.iter_mut().for_each(|s| *s = sigmoid(*s)),
                }
                row[y[i]] -= 1.0;
                row.iter_mut().for_each(|v| *v /= n as f64);
            }
            // grad_w = residualᵀ · x + λ w
            grad_w.copy_from_slice(&w);
            gemm(
                k,
                n,
                d,
                1.0,
                (scores.as_slice(), 1, k as isize),
                (x.as_slice(), d as isize, 1),
                lambda,
                &mut grad_w,
            );
            grad_b.iter_mut().for_each(|g| *g = 0.0);
            for row in scores.iter_rows() {
                for (g, r) in grad_b.iter_mut().zip(row) {
                    *g += r;
                }
            }
            let gmax = grad_w.iter().chain(&grad_b).fold(0.0f64, |m, g| m.max(g.abs()));
            if !gmax.is_finite() {
                return Err(Error::Numeric("logistic regression gradient became non-finite".into()));
            }
            if gmax < cfg.tol {
                converged = true;
                break;
            }
            for (wv, g) in w.iter_mut().zip(&grad_w) {
                *wv -= step * g;
            }
            for (bv, g) in b.iter_mut().zip(&grad_b) {
                *bv -= step * g;
            }
        }
        Ok(Self {
            n_classes,
            multi_class: cfg.multi_class,
            weights: w,
            bias: b,
            iterations,
            converged,
        })
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Classifier for LogisticModel {
    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn predict_proba(&self, x: &Matrix) -> Matrix {
        let mut s = linear_scores(x, &self.weights, &self.bias);
        for i in 0..s.rows() {
            let row = s.row_mut(i);
            match self.multi_class {
                MultiClass::Multinomial => softmax_in_place(row),
                MultiClass::Ovr => {
                    row.iter_mut().for_each(|v| *v = sigmoid(*v));
                    let total: f64 = row.iter().sum();
                    row.iter_mut().for_each(|v| *v /= total);
                }
            }
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvcConfig {
    pub c: f64,
    pub max_iter: usize,
}

impl SvcConfig {
    pub(crate) fn from_params(r: &ParamReader) -> Result<Self> {
        r.choice("kernel", "linear", &["linear"])?;
        r.bool("probability", true)?;
        Ok(Self {
            c: r.positive_f64("C", 1.0)?,
            max_iter: r.positive_usize("max_iter", 100)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvcModel {
    pub n_classes: usize,
    /// One-vs-rest hyperplanes, `n_classes × n_features`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl SvcModel {
    /// Pegasos: minimizes `λ/2 ‖w‖² + mean hinge` with `λ = 1/(C·n)`, step
    /// `1/(λ t)`, projection onto the `1/√λ` ball, and averaging of the
    /// second half of the iterates. The bias is an extra feature fixed at 1.
    pub fn fit(cfg: &SvcConfig, x: &Matrix, y: &[usize], n_classes: usize, seed: u64) -> Result<Self> {
        let n = x.rows();
        let d = x.cols();
        let lambda = 1.0 / (cfg.c * n as f64);
        let radius = 1.0 / lambda.sqrt();
        let mut weights = vec![0.0; n_classes * d];
        let mut bias = vec![0.0; n_classes];
        let total_steps = cfg.max_iter * n;
        let average_from = total_steps / 2;

        for c in 0..n_classes {
            let mut rng = rng::seeded(rng::derive(seed, c as u64));
            let init = uniform_init(1, d + 1, &mut rng);
            // w is stored as (scale, v) with w = scale·v so shrinkage is O(1)
            let mut v = init;
            let mut scale = 1.0;
            let mut sq_norm: f64 = v.iter().map(|z| z * z).sum();
            let mut avg = vec![0.0; d + 1];
            let mut n_avg = 0usize;
            let mut order: Vec<usize> = (0..n).collect();
            let mut t = 0usize;
            for _ in 0..cfg.max_iter {
                order.shuffle(&mut rng);
                for &i in &order {
                    t += 1;
                    let eta = 1.0 / (lambda * t as f64);
                    let row = x.row(i);
                    let yi = if y[i] == c { 1.0 } else { -1.0 };
                    let margin = yi * scale * (row.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() + v[d]);
                    let shrink = 1.0 - eta * lambda;
                    if shrink <= 0.0 {
                        // first step: w ← 0 before the data term
                        v.iter_mut().for_each(|z| *z = 0.0);
                        scale = 1.0;
                        sq_norm = 0.0;
                    } else {
                        scale *= shrink;
                        sq_norm *= shrink * shrink;
                    }
                    if margin < 1.0 {
                        let coef = eta * yi / scale;
                        let dot_vx = row.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() + v[d];
                        let x_sq = row.iter().map(|a| a * a).sum::<f64>() + 1.0;
                        // ‖scale·(v + coef·x)‖²
                        sq_norm = scale * scale * (sq_norm / (scale * scale) + 2.0 * coef * dot_vx + coef * coef * x_sq);
                        for (vj, a) in v.iter_mut().zip(row) {
                            *vj += coef * a;
                        }
                        v[d] += coef;
                    }
                    let norm = sq_norm.max(0.0).sqrt();
                    if norm > radius {
                        scale *= radius / norm;
                        sq_norm = radius * radius;
                    }
                    if scale < 1e-100 || scale > 1e100 {
                        v.iter_mut().for_each(|z| *z *= scale);
                        scale = 1.0;
                    }
                    if t > average_from {
                        n_avg += 1;
                        for (a, z) in avg.iter_mut().zip(&v) {
                            *a += scale * z;
                        }
                    }
                }
            }
            if n_avg == 0 {
                avg = v.iter().map(|z| scale * z).collect();
                n_avg = 1;
            }
            let inv = 1.0 / n_avg as f64;
            for j in 0..d {
                weights[c * d + j] = avg[j] * inv;
            }
            bias[c] = avg[d] * inv;
            if weights.iter().chain(&bias).any(|z| !z.is_finite()) {
                return Err(Error::Numeric("linear SVM weights became non-finite".into()));
            }
        }
        Ok(Self {
            n_classes,
            weights,
            bias,
        })
    }

    pub fn decision_function(&self, x: &Matrix) -> Matrix {
        linear_scores(x, &self.weights, &self.bias)
    }
}

impl Classifier for SvcModel {
    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn predict_proba(&self, x: &Matrix) -> Matrix {
        let mut s = self.decision_function(x);
        for i in 0..s.rows() {
            softmax_in_place(s.row_mut(i));
        }
        s
    }

    fn predict(&self, x: &Matrix) -> Vec<usize> {
        super::argmax_rows(&self.decision_function(x))
    }
}
