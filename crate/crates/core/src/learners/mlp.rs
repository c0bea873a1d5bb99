//! Fully connected ReLU network with a softmax output, trained by
//! mini-batch gradient descent on cross-entropy.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{one_hot, softmax_in_place, Classifier, ParamReader};
use crate::error::{Error, Result};
use crate::matrix::{gemm, Matrix};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub fan_in: usize,
    pub fan_out: usize,
    /// `fan_in × fan_out`, row-major.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub layers: Vec<Layer>,
}

impl Network {
    /// Weights and biases uniform in `±sqrt(6 / (fan_in + fan_out))`.
    pub fn new(sizes: &[usize], rng: &mut Rng) -> Self {
        let layers = sizes
            .windows(2)
            .map(|s| {
                let r = (6.0 / (s[0] + s[1]) as f64).sqrt();
                Layer {
                    fan_in: s[0],
                    fan_out: s[1],
                    w: (0..s[0] * s[1]).map(|_| rng.gen_range(-r..=r)).collect(),
                    b: (0..s[1]).map(|_| rng.gen_range(-r..=r)).collect(),
                }
            })
            .collect();
        Self { layers }
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        let layers = sizes
            .windows(2)
            .map(|s| Layer {
                fan_in: s[0],
                fan_out: s[1],
                w: vec![0.0; s[0] * s[1]],
                b: vec![0.0; s[1]],
            })
            .collect();
        Self { layers }
    }

    pub fn n_inputs(&self) -> usize {
        self.layers[0].fan_in
    }

    pub fn n_outputs(&self) -> usize {
        self.layers.last().map_or(0, |l| l.fan_out)
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// All weights then biases, layer by layer.
    pub fn params(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            v.extend_from_slice(&l.w);
            v.extend_from_slice(&l.b);
        }
        v
    }

    pub fn set_params(&mut self, v: &[f64]) {
        let mut at = 0;
        for l in &mut self.layers {
            let nw = l.w.len();
            l.w.copy_from_slice(&v[at..at + nw]);
            at += nw;
            let nb = l.b.len();
            l.b.copy_from_slice(&v[at..at + nb]);
            at += nb;
        }
    }

    /// Activations per layer for `n` rows of `x`; the last entry holds
    /// logits.
    fn forward(&self, x: &[f64], n: usize) -> Vec<Vec<f64>> {
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        for (li, l) in self.layers.iter().enumerate() {
            let input: &[f64] = if li == 0 { x } else { &acts[li - 1] };
            let mut z = Vec::with_capacity(n * l.fan_out);
            for _ in 0..n {
                z.extend_from_slice(&l.b);
            }
            gemm(
                n,
                l.fan_in,
                l.fan_out,
                1.0,
                (input, l.fan_in as isize, 1),
                (&l.w, l.fan_out as isize, 1),
                1.0,
                &mut z,
            );
            if li + 1 < self.layers.len() {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(z);
        }
        acts
    }

    pub fn predict_proba(&self, x: &Matrix) -> Matrix {
        let k = self.n_outputs();
        let mut logits = self.forward(x.as_slice(), x.rows()).pop().unwrap_or_default();
        logits.chunks_mut(k).for_each(softmax_in_place);
        Matrix::from_vec(x.rows(), k, logits).expect("shape from forward pass")
    }

    /// Mean cross-entropy plus `alpha/(2n)·Σw²` and its gradient (same
    /// layout as [`Network::params`]). `y` rows are target distributions.
    pub fn loss_and_gradient(&self, x: &[f64], y: &[f64], n: usize, alpha: f64) -> (f64, Vec<Layer>) {
        let k = self.n_outputs();
        let mut acts = self.forward(x, n);
        let mut delta = acts.pop().expect("at least one layer");
        let mut loss = 0.0;
        for (z, t) in delta.chunks_mut(k).zip(y.chunks(k)) {
            let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            loss += z.iter().zip(t).map(|(zv, tv)| tv * (lse - zv)).sum::<f64>();
            softmax_in_place(z);
            for (p, tv) in z.iter_mut().zip(t) {
                *p = (*p - tv) / n as f64;
            }
        }
        loss /= n as f64;
        let sq: f64 = self.layers.iter().map(|l| l.w.iter().map(|w| w * w).sum::<f64>()).sum();
        loss += 0.5 * alpha * sq / n as f64;

        let mut grads: Vec<Layer> = self
            .layers
            .iter()
            .map(|l| Layer {
                fan_in: l.fan_in,
                fan_out: l.fan_out,
                w: l.w.iter().map(|w| alpha * w / n as f64).collect(),
                b: vec![0.0; l.fan_out],
            })
            .collect();
        for li in (0..self.layers.len()).rev() {
            let l = &self.layers[li];
            let input: &[f64] = if li == 0 { x } else { &acts[li - 1] };
            // dW = inputᵀ · delta
            gemm(
                l.fan_in,
                n,
                l.fan_out,
                1.0,
                (input, 1, l.fan_in as isize),
                (&delta, l.fan_out as isize, 1),
                1.0,
                &mut grads[li].w,
            );
            for row in delta.chunks(l.fan_out) {
                for (g, d) in grads[li].b.iter_mut().zip(row) {
                    *g += d;
                }
            }
            if li > 0 {
                // delta_prev = (delta · Wᵀ) ⊙ relu'(a_prev)
                let mut prev = vec![0.0; n * l.fan_in];
                gemm(
                    n,
                    l.fan_out,
                    l.fan_in,
                    1.0,
                    (&delta, l.fan_out as isize, 1),
                    (&l.w, 1, l.fan_out as isize),
                    0.0,
                    &mut prev,
                );
                for (p, a) in prev.iter_mut().zip(&acts[li - 1]) {
                    if *a <= 0.0 {
                        *p = 0.0;
                    }
                }
                delta = prev;
            }
        }
        (loss, grads)
    }

    fn apply(&mut self, grads: &[Layer], rate: f64) {
        for (l, g) in self.layers.iter_mut().zip(grads) {
            for (w, gw) in l.w.iter_mut().zip(&g.w) {
                *w -= rate * gw;
            }
            for (b, gb) in l.b.iter_mut().zip(&g.b) {
                *b -= rate * gb;
            }
        }
    }
}

/// One gradient step on a batch; returns the batch loss before the step.
/// A zero rate leaves the network unchanged.
pub fn mlp_backprop_step(net: &mut Network, x: &Matrix, y_onehot: &Matrix, rate: f64, alpha: f64) -> Result<f64> {
    if x.rows() == 0 {
        return Err(Error::invalid("empty batch"));
    }
    if x.rows() != y_onehot.rows() || x.cols() != net.n_inputs() || y_onehot.cols() != net.n_outputs() {
        return Err(Error::invalid("batch shape does not match the network"));
    }
    let (loss, grads) = net.loss_and_gradient(x.as_slice(), y_onehot.as_slice(), x.rows(), alpha);
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("non-finite MLP loss ({loss})")));
    }
    if rate != 0.0 {
        net.apply(&grads, rate);
    }
    Ok(loss)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    Constant,
    /// Divide the rate by 5 after 2 consecutive epochs without a `tol`
    /// improvement; stop once it falls below 1e-6.
    Adaptive,
    /// `rate0 / sqrt(epoch)`.
    Invscaling,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpConfig {
    pub hidden: Vec<usize>,
    pub max_iter: usize,
    pub schedule: Schedule,
    pub learning_rate_init: f64,
    pub batch_size: usize,
    pub alpha: f64,
    pub tol: f64,
    pub n_iter_no_change: usize,
}

impl MlpConfig {
    pub(crate) fn from_params(r: &ParamReader) -> Result<Self> {
        r.choice("activation", "relu", &["relu"])?;
        r.choice("solver", "sgd", &["sgd"])?;
        let schedule = match r.choice("learning_rate", "constant", &["constant", "adaptive", "invscaling"])? {
            "adaptive" => Schedule::Adaptive,
            "invscaling" => Schedule::Invscaling,
            _ => Schedule::Constant,
        };
        let alpha = r.f64("alpha", 1e-4)?;
        if alpha < 0.0 {
            return Err(r.err("'alpha' must be non-negative"));
        }
        Ok(Self {
            hidden: r.usize_list("hidden_layer_sizes", &[100])?,
            max_iter: r.positive_usize("max_iter", 200)?,
            schedule,
            learning_rate_init: r.positive_f64("learning_rate_init", 0.05)?,
            batch_size: r.positive_usize("batch_size", 200)?,
            alpha,
            tol: r.positive_f64("tol", 1e-4)?,
            n_iter_no_change: r.positive_usize("n_iter_no_change", 10)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub net: Network,
    pub epochs: usize,
    /// Mean training loss per epoch.
    pub loss_curve: Vec<f64>,
}

impl MlpModel {
    pub fn fit(cfg: &MlpConfig, x: &Matrix, y: &[usize], n_classes: usize, seed: u64) -> Result<Self> {
        Self::fit_targets(cfg, x, &one_hot(y, n_classes), seed)
    }

    /// Trains on target distributions (one row per sample).
    pub fn fit_targets(cfg: &MlpConfig, x: &Matrix, targets: &Matrix, seed: u64) -> Result<Self> {
        let n = x.rows();
        let d = x.cols();
        let k = targets.cols();
        let mut sizes = vec![d];
        sizes.extend_from_slice(&cfg.hidden);
        sizes.push(k);
        let mut rng = rng::seeded(seed);
        let mut net = Network::new(&sizes, &mut rng);
        let batch = cfg.batch_size.min(n);
        let mut order: Vec<usize> = (0..n).collect();
        let mut xb = Vec::with_capacity(batch * d);
        let mut yb = Vec::with_capacity(batch * k);
        let mut rate = cfg.learning_rate_init;
        let mut best = f64::INFINITY;
        let mut stale = 0usize;
        let mut loss_curve = Vec::new();

        for epoch in 1..=cfg.max_iter {
            if cfg.schedule == Schedule::Invscaling {
                rate = cfg.learning_rate_init / (epoch as f64).sqrt();
            }
            order.shuffle(&mut rng);
            let mut total = 0.0;
            for chunk in order.chunks(batch) {
                xb.clear();
                yb.clear();
                for &i in chunk {
                    xb.extend_from_slice(x.row(i));
                    yb.extend_from_slice(targets.row(i));
                }
                let (loss, grads) = net.loss_and_gradient(&xb, &yb, chunk.len(), cfg.alpha);
                if !loss.is_finite() {
                    return Err(Error::Numeric(format!(
                        "MLP loss became non-finite at epoch {epoch} (learning rate {rate})"
                    )));
                }
                total += loss * chunk.len() as f64;
                net.apply(&grads, rate);
            }
            let epoch_loss = total / n as f64;
            loss_curve.push(epoch_loss);

            if epoch_loss > best - cfg.tol {
                stale += 1;
            } else {
                stale = 0;
            }
            best = best.min(epoch_loss);
            match cfg.schedule {
                Schedule::Adaptive => {
                    if stale >= 2 {
                        rate /= 5.0;
                        stale = 0;
                        if rate < 1e-6 {
                            break;
                        }
                    }
                }
                _ => {
                    if stale >= cfg.n_iter_no_change {
                        break;
                    }
                }
            }
        }
        Ok(Self {
            net,
            epochs: loss_curve.len(),
            loss_curve,
        })
    }
}

impl Classifier for MlpModel {
    fn n_classes(&self) -> usize {
        self.net.n_outputs()
    }

    fn predict_proba(&self, x: &Matrix) -> Matrix {
        self.net.predict_proba(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_net_loss_is_ln_k() {
        let mut net = Network::zeros(&[2, 3, 2]);
        let x = Matrix::from_rows(&[[0.1, 0.2], [0.3, 0.4]]).unwrap();
        let y = one_hot(&[0, 1], 2);
        let before = net.clone();
        let loss = mlp_backprop_step(&mut net, &x, &y, 0.0, 0.0).unwrap();
        assert!((loss - 2f64.ln()).abs() < 1e-15);
        assert_eq!(net, before);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = rng::seeded(3);
        let net = Network::new(&[3, 5, 4, 2], &mut rng);
        let x: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y = one_hot(&[0, 1, 1, 0], 2);
        let (_, grads) = net.loss_and_gradient(&x, y.as_slice(), 4, 0.01);
        let analytic: Vec<f64> = grads.iter().flat_map(|g| g.w.iter().chain(&g.b).copied()).collect();
        let p0 = net.params();
        let mut probe = net.clone();
        for i in 0..p0.len() {
            let mut p = p0.clone();
            p[i] += 1e-5;
            probe.set_params(&p);
            let up = probe.loss_and_gradient(&x, y.as_slice(), 4, 0.01).0;
            p[i] -= 2e-5;
            probe.set_params(&p);
            let down = probe.loss_and_gradient(&x, y.as_slice(), 4, 0.01).0;
            let numeric = (up - down) / 2e-5;
            let denom = analytic[i].abs().max(numeric.abs()).max(1e-8);
            assert!((analytic[i] - numeric).abs() / denom < 1e-4 || (analytic[i] - numeric).abs() < 1e-9);
        }
    }
}
