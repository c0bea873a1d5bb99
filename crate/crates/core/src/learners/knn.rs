//! Brute-force k-nearest-neighbour classifier.

use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use super::{Classifier, ParamReader};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Manhattan,
    Euclidean,
    Cosine,
    Minkowski,
}

static ZERO_VECTOR_COSINE: AtomicUsize = AtomicUsize::new(0);

/// Number of cosine distances that involved a zero vector so far.
pub fn zero_vector_cosine_count() -> usize {
    ZERO_VECTOR_COSINE.load(Ordering::Relaxed)
}

/// Distance between `a` and `b`. Cosine distance with a zero vector is
/// defined as 1 and counted in [`zero_vector_cosine_count`].
pub fn knn_distance(a: &[f64], b: &[f64], metric: Metric, p: f64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(distance(a, b, metric, p))
}

#[inline]
fn distance(a: &[f64], b: &[f64], metric: Metric, p: f64) -> f64 {
    match metric {
        Metric::Manhattan => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
        Metric::Euclidean => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
        Metric::Minkowski => {
            if p == 1.0 {
                distance(a, b, Metric::Manhattan, p)
            } else if p == 2.0 {
                distance(a, b, Metric::Euclidean, p)
            } else {
                a.iter().zip(b).map(|(x, y)| (x - y).abs().powf(p)).sum::<f64>().powf(1.0 / p)
            }
        }
        Metric::Cosine => {
            let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
            for (x, y) in a.iter().zip(b) {
                dot += x * y;
                na += x * x;
                nb += y * y;
            }
            if na == 0.0 || nb == 0.0 {
                if ZERO_VECTOR_COSINE.fetch_add(1, Ordering::Relaxed) == 0 {
                    log::warn!("cosine distance with a zero vector; using distance 1");
                }
                return 1.0;
            }
            (1.0 - dot / (na.sqrt() * nb.sqrt())).max(0.0)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnnConfig {
    pub n_neighbors: usize,
    pub metric: Metric,
    pub p: f64,
}

impl KnnConfig {
    pub(crate) fn from_params(r: &ParamReader) -> Result<Self> {
        // the search is exact, so the index structure has no effect
        r.choice("algorithm", "auto", &["auto", "kd_tree", "ball_tree", "brute"])?;
        let metric = match r.choice("metric", "minkowski", &["minkowski", "manhattan", "euclidean", "cosine"])? {
            "manhattan" => Metric::Manhattan,
            "euclidean" => Metric::Euclidean,
            "cosine" => Metric::Cosine,
            _ => Metric::Minkowski,
        };
        let p = r.f64("p", 2.0)?;
        if p < 1.0 {
            return Err(r.err("'p' must be at least 1"));
        }
        Ok(Self {
            n_neighbors: r.positive_usize("n_neighbors", 5)?,
            metric,
            p,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub n_classes: usize,
    pub k: usize,
    pub metric: Metric,
    pub p: f64,
    pub x: Matrix,
    pub y: Vec<usize>,
}

impl KnnModel {
    pub fn fit(cfg: &KnnConfig, x: &Matrix, y: &[usize], n_classes: usize) -> Self {
        Self {
            n_classes,
            k: cfg.n_neighbors.min(x.rows()),
            metric: cfg.metric,
            p: cfg.p,
            x: x.clone(),
            y: y.to_vec(),
        }
    }

    /// The `k` nearest stored rows as `(distance, index)`, ties by index.
    pub fn neighbors(&self, query: &[f64]) -> Vec<(f64, usize)> {
        let mut d: Vec<(f64, usize)> = self
            .x
            .iter_rows()
            .enumerate()
            .map(|(i, r)| (distance(query, r, self.metric, self.p), i))
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if self.k < d.len() {
            d.select_nth_unstable_by(self.k - 1, cmp);
            d.truncate(self.k);
        }
        d.sort_by(cmp);
        d
    }

    /// Vote counts and summed distances per class.
    fn tally(&self, query: &[f64]) -> (Vec<usize>, Vec<f64>) {
        let mut votes = vec![0usize; self.n_classes];
        let mut dist = vec![0.0; self.n_classes];
        for (dv, i) in self.neighbors(query) {
            votes[self.y[i]] += 1;
            dist[self.y[i]] += dv;
        }
        (votes, dist)
    }
}

impl Classifier for KnnModel {
    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn predict_proba(&self, x: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(x.rows(), self.n_classes);
        for (i, q) in x.iter_rows().enumerate() {
            let (votes, _) = self.tally(q);
            for (o, v) in out.row_mut(i).iter_mut().zip(votes) {
                *o = v as f64 / self.k as f64;
            }
        }
        out
    }

    /// Most votes; ties go to the smaller summed neighbour distance, then
    /// to the lower class id.
    fn predict(&self, x: &Matrix) -> Vec<usize> {
        x.iter_rows()
            .map(|q| {
                let (votes, dist) = self.tally(q);
                let mut best = 0;
                for c in 1..self.n_classes {
                    if votes[c] > votes[best] || (votes[c] == votes[best] && dist[c] < dist[best]) {
                        best = c;
                    }
                }
                best
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distance_examples() {
        let e = knn_distance(&[0.0, 0.0], &[3.0, 4.0], Metric::Euclidean, 2.0).unwrap();
        assert_eq!(e, 5.0);
        let c = knn_distance(&[1.0, 0.0], &[0.0, 1.0], Metric::Cosine, 2.0).unwrap();
        assert_eq!(c, 1.0);
        let m = knn_distance(&[0.0, 0.0], &[1.0, 1.0], Metric::Minkowski, 7.0).unwrap();
        assert!((m - 2f64.powf(1.0 / 7.0)).abs() < 1e-12);
        assert!((m - 1.10409).abs() < 1e-5);
        let z = knn_distance(&[0.0, 0.0], &[1.0, 1.0], Metric::Cosine, 2.0).unwrap();
        assert_eq!(z, 1.0);
        assert!(zero_vector_cosine_count() >= 1);
        assert!(knn_distance(&[0.0], &[1.0, 2.0], Metric::Manhattan, 2.0).is_err());
    }

    fn model(x: Vec<Vec<f64>>, y: Vec<usize>, k: usize, classes: usize) -> KnnModel {
        let cfg = KnnConfig {
            n_neighbors: k,
            metric: Metric::Euclidean,
            p: 2.0,
        };
        KnnModel::fit(&cfg, &Matrix::from_rows(&x).unwrap(), &y, classes)
    }

    #[test]
    fn one_nn_queries() {
        let m = model(vec![vec![0.0], vec![10.0]], vec![0, 1], 1, 2);
        assert_eq!(m.predict(&Matrix::from_rows(&[[1.0]]).unwrap()), vec![0]);
        let m = model(vec![vec![0.0], vec![5.0], vec![10.0]], vec![1, 0, 1], 1, 2);
        assert_eq!(m.predict(&Matrix::from_rows(&[[5.0]]).unwrap()), vec![0]);
    }

    #[test]
    fn vote_fractions_and_ties() {
        let m = model(vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]], vec![0, 0, 0, 1], 4, 2);
        let p = m.predict_proba(&Matrix::from_rows(&[[0.0]]).unwrap());
        assert_eq!(p.row(0), &[0.75, 0.25]);
        // 1 vote each; class 1's neighbour is nearer
        let m = model(vec![vec![0.0], vec![3.0]], vec![0, 1], 2, 2);
        assert_eq!(m.predict(&Matrix::from_rows(&[[2.0]]).unwrap()), vec![1]);
        // full tie falls to the lower class id
        assert_eq!(m.predict(&Matrix::from_rows(&[[1.5]]).unwrap()), vec![0]);
    }
}
