//! Stratified k-fold cross-validation of a spec list, ranking, and top-k
//! selection.

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::{self, LearnerSpec};
use crate::metrics::{self, MetricBundle};
use crate::rng;
use crate::tabular::DataTable;

/// Metrics averaged for every spec, in report order.
pub const LEADERBOARD_METRICS: [&str; 4] = ["roc_auc", "average_precision", "accuracy", "f1_macro"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub specs: Vec<LearnerSpec>,
    pub folds: usize,
    pub scoring: Vec<String>,
    pub seed: u64,
}

impl SweepConfig {
    pub fn new(specs: Vec<LearnerSpec>) -> Self {
        Self {
            specs,
            folds: 10,
            scoring: vec!["roc_auc".into(), "f1_macro".into()],
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.specs.is_empty() {
            return Err(Error::Config("the sweep needs at least one spec".into()));
        }
        if self.folds < 2 {
            return Err(Error::Config(format!("folds must be at least 2, got {}", self.folds)));
        }
        let mut seen = HashSet::new();
        for s in &self.specs {
            if !seen.insert(s.id.as_str()) {
                return Err(Error::Config(format!("duplicate spec id '{}'", s.id)));
            }
            s.validate()?;
        }
        if self.scoring.is_empty() {
            return Err(Error::Config("scoring needs at least one metric".into()));
        }
        for m in &self.scoring {
            if !MetricBundle::NAMES.contains(&m.as_str()) {
                return Err(Error::Config(format!(
                    "unknown scoring metric '{m}' (known: {:?})",
                    MetricBundle::NAMES
                )));
            }
        }
        Ok(())
    }
}

/// Splits row indices into `k` folds: each class is shuffled and dealt
/// round-robin, with the dealing position carried across classes so fold
/// sizes stay within one of each other. Each fold is sorted ascending.
pub fn stratified_folds(labels: &[usize], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::invalid(format!("need at least 2 folds, got {k}")));
    }
    let n_classes = labels.iter().max().map_or(0, |&m| m + 1);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        members[l].push(i);
    }
    for (c, m) in members.iter().enumerate() {
        if !m.is_empty() && m.len() < k {
            return Err(Error::invalid(format!(
                "class {c} has {} rows, fewer than the {k} folds",
                m.len()
            )));
        }
    }
    let mut rng = rng::seeded(seed);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0usize;
    for m in &mut members {
        m.shuffle(&mut rng);
        for &i in m.iter() {
            folds[next % k].push(i);
            next += 1;
        }
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CVResult {
    pub spec: LearnerSpec,
    pub folds: Vec<MetricBundle>,
    /// Arithmetic mean over folds for every metric all folds reported.
    pub mean: BTreeMap<String, f64>,
}

impl CVResult {
    pub fn id(&self) -> &str {
        &self.spec.id
    }

    pub fn mean_of(&self, metric: &str) -> Option<f64> {
        self.mean.get(metric).copied()
    }
}

fn fold_seed(seed: u64, fold: usize) -> u64 {
    rng::derive(seed, fold as u64)
}

/// Fits on all folds but one and scores the held-out fold, for every fold.
/// `seed` feeds learners without an explicit `random_state`.
pub fn cross_validate(spec: &LearnerSpec, table: &DataTable, folds: &[Vec<usize>], seed: u64) -> Result<CVResult> {
    let n = table.n_rows();
    let mut in_fold = vec![usize::MAX; n];
    for (f, rows) in folds.iter().enumerate() {
        for &r in rows {
            if r >= n || in_fold[r] != usize::MAX {
                return Err(Error::invalid("folds are not a partition of the table rows"));
            }
            in_fold[r] = f;
        }
    }
    let mut bundles = Vec::with_capacity(folds.len());
    for (f, test_rows) in folds.iter().enumerate() {
        let train_rows: Vec<usize> = (0..n).filter(|&r| in_fold[r] != f).collect();
        let train = table.select_rows(&train_rows);
        let test = table.select_rows(test_rows);
        let model = learners::fit(spec, train.features(), train.labels(), table.n_classes(), fold_seed(seed, f))
            .map_err(|e| match e {
                Error::InvalidInput(m) => Error::InvalidInput(format!("spec {} fold {f}: {m}", spec.id)),
                other => other,
            })?;
        let proba = model.predict_proba(test.features())?;
        let pred = model.predict(test.features())?;
        let (_, bundle) = metrics::evaluate(test.labels(), &pred, Some(&proba), table.class_names())?;
        bundles.push(bundle);
    }
    let mut mean = BTreeMap::new();
    for name in MetricBundle::NAMES {
        let vals: Option<Vec<f64>> = bundles.iter().map(|b| b.get(name)).collect();
        if let Some(v) = vals {
            mean.insert(name.to_string(), v.iter().sum::<f64>() / v.len() as f64);
        }
    }
    Ok(CVResult {
        spec: spec.clone(),
        folds: bundles,
        mean,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leaderboard {
    pub scoring: Vec<String>,
    pub rows: Vec<CVResult>,
}

impl Leaderboard {
    /// Sorts by each scoring metric descending (missing values last), then
    /// by spec id.
    pub fn new(mut rows: Vec<CVResult>, scoring: &[String]) -> Self {
        rows.sort_by(|a, b| {
            for m in scoring {
                let va = a.mean_of(m).unwrap_or(f64::NEG_INFINITY);
                let vb = b.mean_of(m).unwrap_or(f64::NEG_INFINITY);
                match vb.total_cmp(&va) {
                    std::cmp::Ordering::Equal => continue,
                    o => return o,
                }
            }
            a.spec.id.cmp(&b.spec.id)
        });
        Self {
            scoring: scoring.to_vec(),
            rows,
        }
    }

    pub fn top(&self, k: usize) -> Result<Vec<LearnerSpec>> {
        if k == 0 || k > self.rows.len() {
            return Err(Error::invalid(format!(
                "cannot select top {k} of {} results",
                self.rows.len()
            )));
        }
        Ok(self.rows[..k].iter().map(|r| r.spec.clone()).collect())
    }

    pub fn get(&self, id: &str) -> Option<&CVResult> {
        self.rows.iter().find(|r| r.spec.id == id)
    }

    /// `id,family,params,roc_auc,average_precision,accuracy,f1_macro`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["id", "family", "params"];
        header.extend(LEADERBOARD_METRICS);
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.spec.id.clone(), r.spec.family.to_string(), r.spec.params_text()];
            for m in LEADERBOARD_METRICS {
                rec.push(r.mean_of(m).map(|v| format!("{v}")).unwrap_or_default());
            }
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Serde(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Serde(e.to_string()))
    }
}

/// First `top_k` specs in leaderboard order.
pub fn rank_and_select(results: Vec<CVResult>, top_k: usize, scoring: &[String]) -> Result<Vec<LearnerSpec>> {
    Leaderboard::new(results, scoring).top(top_k)
}

/// Cross-validates every spec on shared folds. Specs run in parallel on
/// the current rayon pool; results keep spec order before ranking.
pub fn run_sweep(config: &SweepConfig, table: &DataTable) -> Result<Leaderboard> {
    config.validate()?;
    let folds = stratified_folds(table.labels(), config.folds, config.seed)?;
    let total = config.specs.len();
    let results: Vec<Result<CVResult>> = config
            .specs
            .par_iter()
            .map(|spec| {
                let started = std::time::Instant::now();
                let r = cross_validate(spec, table, &folds, config.seed);
                if let Ok(r) = &r {
                    log::info!(
                        "cv {} ({}): roc_auc {:.4}, accuracy {:.4} in {:.1}s",
                        spec.id,
                        spec.family,
                        r.mean_of("roc_auc").unwrap_or(f64::NAN),
                        r.mean_of("accuracy").unwrap_or(f64::NAN),
                        started.elapsed().as_secs_f64()
                    );
                }
                r
            })
            .collect();
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;
    log::info!("sweep finished: {total} specs, {} folds", config.folds);
    Ok(Leaderboard::new(results, &config.scoring))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_twenty_rows() {
        let labels: Vec<usize> = (0..20).map(|i| i % 2).collect();
        let folds = stratified_folds(&labels, 10, 1).unwrap();
        for f in &folds {
            assert_eq!(f.len(), 2);
            assert_eq!(f.iter().filter(|&&i| labels[i] == 0).count(), 1);
        }
    }

    #[test]
    fn twenty_five_single_class() {
        let folds = stratified_folds(&[0; 25], 10, 1).unwrap();
        let mut sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![2, 2, 2, 2, 2, 3, 3, 3, 3, 3]);
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..25).collect::<Vec<_>>());
    }

    #[test]
    fn small_class_rejected() {
        assert!(stratified_folds(&[0, 0, 0, 1], 2, 0).is_err());
    }

    fn result(id: &str, auc: f64, f1: f64) -> CVResult {
        CVResult {
            spec: LearnerSpec::new(id, learners::Family::GaussianNb),
            folds: vec![],
            mean: [("roc_auc".to_string(), auc), ("f1_macro".to_string(), f1)].into(),
        }
    }

    #[test]
    fn ranking_keys() {
        let scoring = vec!["roc_auc".to_string(), "f1_macro".to_string()];
        let top = rank_and_select(
            vec![result("c", 0.7, 0.0), result("a", 0.9, 0.0), result("b", 0.8, 0.0)],
            2,
            &scoring,
        )
        .unwrap();
        assert_eq!(top.iter().map(|s| s.id.as_str()).collect::<Vec<_>>(), vec!["a", "b"]);
        let top = rank_and_select(vec![result("x", 0.9, 0.7), result("y", 0.9, 0.8)], 1, &scoring).unwrap();
        assert_eq!(top[0].id, "y");
        let top = rank_and_select(vec![result("z", 0.9, 0.8), result("y", 0.9, 0.8)], 1, &scoring).unwrap();
        assert_eq!(top[0].id, "y");
        assert!(rank_and_select(vec![result("a", 0.9, 0.8)], 2, &scoring).is_err());
    }
}
