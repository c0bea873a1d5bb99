//! SMOTE oversampling: every class is raised to the majority count by
//! interpolating between a member and one of its nearest same-class
//! neighbours.

use std::collections::HashMap;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng;
use crate::tabular::DataTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResampleScope {
    /// Only the training partition is oversampled.
    TrainOnly,
    /// The whole table is oversampled before it is partitioned, so the
    /// validation and test partitions are balanced as well.
    TrainAndEval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmoteConfig {
    pub k_neighbors: usize,
    pub seed: u64,
    pub scope: ResampleScope,
}

impl Default for SmoteConfig {
    fn default() -> Self {
        Self {
            k_neighbors: 5,
            seed: 0,
            scope: ResampleScope::TrainOnly,
        }
    }
}

/// Where a synthetic row came from: `base + lambda * (neighbor - base)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticOrigin {
    pub row: usize,
    pub base: usize,
    pub neighbor: usize,
    pub lambda: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// The `k` rows of `class_rows` nearest to row `i` (Euclidean), excluding
/// `i`; ties go to the lower row index.
pub fn knn_same_class(
    features: &Matrix,
    class_rows: &[usize],
    i: usize,
    k: usize,
) -> Result<Vec<usize>> {
    let others = class_rows.iter().filter(|&&r| r != i).count();
    if k == 0 || k > others {
        return Err(Error::invalid(format!(
            "k = {k} neighbours requested from a class of {} rows",
            class_rows.len()
        )));
    }
    let xi = features.row(i);
    let mut cand: Vec<(f64, usize)> = class_rows
        .iter()
        .filter(|&&r| r != i)
        .map(|&r| (sq_dist(xi, features.row(r)), r))
        .collect();
    cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(cand.into_iter().take(k).map(|(_, r)| r).collect())
}

pub fn smote_resample(table: &DataTable, config: &SmoteConfig) -> Result<DataTable> {
    smote_with_origins(table, config).map(|(t, _)| t)
}

/// SMOTE that also reports the provenance of each synthetic row.
/// Original rows come first and unchanged; synthetic rows follow, grouped
/// by class id.
pub fn smote_with_origins(
    table: &DataTable,
    config: &SmoteConfig,
) -> Result<(DataTable, Vec<SyntheticOrigin>)> {
    if table.n_rows() == 0 {
        return Err(Error::invalid("SMOTE on an empty table"));
    }
    if config.k_neighbors == 0 {
        return Err(Error::invalid("k_neighbors must be at least 1"));
    }
    let x = table.features();
    let n_classes = table.n_classes();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &l) in table.labels().iter().enumerate() {
        members[l].push(i);
    }
    let target = members.iter().map(Vec::len).max().unwrap_or(0);

    for (c, rows) in members.iter().enumerate() {
        if !rows.is_empty() && rows.len() < target && rows.len() <= config.k_neighbors {
            return Err(Error::invalid(format!(
                "class '{}' has {} rows; SMOTE with k = {} needs at least {}",
                table.class_names()[c],
                rows.len(),
                config.k_neighbors,
                config.k_neighbors + 1
            )));
        }
    }

    let mut rng = rng::seeded(config.seed);
    let mut features = x.clone();
    let mut labels = table.labels().to_vec();
    let mut origins = Vec::new();
    let mut row_buf = vec![0.0; x.cols()];

    for (c, rows) in members.iter().enumerate() {
        if rows.is_empty() || rows.len() >= target {
            continue;
        }
        let deficit = target - rows.len();
        let mut neighbours: HashMap<usize, Vec<usize>> = HashMap::new();
        for _ in 0..deficit {
            let base = rows[rng.gen_range(0..rows.len())];
            let nn = match neighbours.get(&base) {
                Some(v) => v,
                None => {
                    let v = knn_same_class(x, rows, base, config.k_neighbors)?;
                    neighbours.entry(base).or_insert(v)
                }
            };
            let neighbor = nn[rng.gen_range(0..nn.len())];
            let lambda: f64 = rng.gen();
            for ((out, &a), &b) in row_buf.iter_mut().zip(x.row(base)).zip(x.row(neighbor)) {
                *out = a + lambda * (b - a);
            }
            origins.push(SyntheticOrigin {
                row: labels.len(),
                base,
                neighbor,
                lambda,
            });
            features.push_row(&row_buf)?;
            labels.push(c);
        }
    }
    Ok((table.with_data(features, labels)?, origins))
}
