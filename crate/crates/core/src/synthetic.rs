//! Seeded synthetic classification data for smoke tests and demos.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::matrix::Matrix;
use crate::rng;
use crate::tabular::DataTable;

/// Gaussian blobs: class `c` is centred at a random point of `[0, 10]^d`
/// with per-feature standard deviation `spread`. `counts[c]` rows per class,
/// interleaved in row order.
pub fn blobs(counts: &[usize], n_features: usize, spread: f64, seed: u64) -> Result<DataTable> {
    let mut rng = rng::seeded(seed);
    let centres: Vec<Vec<f64>> = counts
        .iter()
        .map(|_| (0..n_features).map(|_| rng.gen_range(0.0..10.0)).collect())
        .collect();
    let mut remaining = counts.to_vec();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    while remaining.iter().any(|&r| r > 0) {
        for (c, r) in remaining.iter_mut().enumerate() {
            if *r == 0 {
                continue;
            }
            *r -= 1;
            let row: Vec<f64> = centres[c]
                .iter()
                .map(|&m| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    m + spread * z
                })
                .collect();
            rows.push(row);
            labels.push(c);
        }
    }
    let names = (0..counts.len()).map(|c| format!("class_{c}")).collect();
    DataTable::new(Matrix::from_rows(&rows)?, labels, names)
}
