//! Majority hard voting, weighted hard voting, and stacking with an MLP
//! meta-classifier over rank-ordered base models.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::{self, Family, LearnerSpec, TrainedModel};
use crate::matrix::Matrix;
use crate::modelsel::stratified_folds;
use crate::rng;
use crate::tabular::DataTable;

fn check_votes(preds: &[Vec<usize>], n_classes: usize) -> Result<usize> {
    let first = preds.first().ok_or_else(|| Error::invalid("no member predictions"))?;
    let n = first.len();
    if preds.iter().any(|p| p.len() != n) {
        return Err(Error::invalid("member prediction rows differ in length"));
    }
    if preds.iter().flatten().any(|&c| c >= n_classes) {
        return Err(Error::invalid(format!("predicted class id out of range for {n_classes} classes")));
    }
    Ok(n)
}

/// Winner among `tied` classes: the vote of the highest-ranked member
/// (lowest index) that voted for one of them.
fn break_tie(preds: &[Vec<usize>], row: usize, tied: &[bool]) -> usize {
    preds
        .iter()
        .map(|p| p[row])
        .find(|&c| tied[c])
        .expect("a tied class always has at least one vote")
}

/// Plurality vote per row. `preds[m]` are member m's labels; members are
/// in rank order (index 0 ranks highest).
pub fn majority_hard_vote(preds: &[Vec<usize>], n_classes: usize) -> Result<Vec<usize>> {
    let n = check_votes(preds, n_classes)?;
    let mut counts = vec![0usize; n_classes];
    let mut tied = vec![false; n_classes];
    Ok((0..n)
        .map(|row| {
            counts.iter_mut().for_each(|c| *c = 0);
            preds.iter().for_each(|p| counts[p[row]] += 1);
            let best = *counts.iter().max().expect("non-empty");
            for (t, &c) in tied.iter_mut().zip(&counts) {
                *t = c == best;
            }
            break_tie(preds, row, &tied)
        })
        .collect())
}

/// Normalizes positive validation scores to weights summing to 1.
pub fn compute_weights(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::invalid("no validation scores"));
    }
    if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(Error::invalid(format!("validation score {v} is not positive")));
    }
    let total: f64 = values.iter().sum();
    Ok(values.iter().map(|v| v / total).collect())
}

/// Relative tolerance under which two weighted class scores count as tied.
pub const WEIGHT_TIE_TOLERANCE: f64 = 1e-9;

/// Weighted plurality vote; scores within [`WEIGHT_TIE_TOLERANCE`] of the
/// best (relative to the total weight) are ties, resolved by member rank.
pub fn weighted_hard_vote(preds: &[Vec<usize>], weights: &[f64], n_classes: usize) -> Result<Vec<usize>> {
    let n = check_votes(preds, n_classes)?;
    if weights.len() != preds.len() {
        return Err(Error::DimensionMismatch {
            expected: preds.len(),
            got: weights.len(),
        });
    }
    if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(Error::invalid("vote weights must be positive"));
    }
    let tol = WEIGHT_TIE_TOLERANCE * weights.iter().sum::<f64>();
    let mut scores = vec![0.0; n_classes];
    let mut tied = vec![false; n_classes];
    Ok((0..n)
        .map(|row| {
            scores.iter_mut().for_each(|s| *s = 0.0);
            for (p, w) in preds.iter().zip(weights) {
                scores[p[row]] += w;
            }
            let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            for (t, &s) in tied.iter_mut().zip(&scores) {
                *t = s > 0.0 && best - s <= tol;
            }
            break_tie(preds, row, &tied)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoteMode {
    Majority,
    Weighted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VotingEnsemble {
    pub mode: VoteMode,
    /// Rank order; earlier members win ties.
    pub members: Vec<TrainedModel>,
    pub weights: Vec<f64>,
}

impl VotingEnsemble {
    pub fn majority(members: Vec<TrainedModel>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::invalid("an ensemble needs at least one member"));
        }
        let weights = vec![1.0; members.len()];
        Ok(Self {
            mode: VoteMode::Majority,
            members,
            weights,
        })
    }

    /// Weights proportional to `scores` (one per member).
    pub fn weighted(members: Vec<TrainedModel>, scores: &[f64]) -> Result<Self> {
        if members.len() != scores.len() {
            return Err(Error::DimensionMismatch {
                expected: members.len(),
                got: scores.len(),
            });
        }
        Ok(Self {
            mode: VoteMode::Weighted,
            weights: compute_weights(scores)?,
            members,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.members[0].class_count
    }

    pub fn member_predictions(&self, x: &Matrix) -> Result<Vec<Vec<usize>>> {
        self.members.iter().map(|m| m.predict(x)).collect()
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        let preds = self.member_predictions(x)?;
        match self.mode {
            VoteMode::Majority => majority_hard_vote(&preds, self.n_classes()),
            VoteMode::Weighted => weighted_hard_vote(&preds, &self.weights, self.n_classes()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetaFeatures {
    /// Class probabilities of each member.
    Probabilities,
    /// One-hot predicted label of each member.
    Labels,
}

/// Column layout of the meta-feature matrix: member-major, so column
/// `m·n_classes + c` holds member m's value for class c.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetaLayout {
    pub members: Vec<String>,
    pub n_classes: usize,
    pub kind: MetaFeatures,
}

impl MetaLayout {
    pub fn width(&self) -> usize {
        self.members.len() * self.n_classes
    }

    pub fn column_names(&self) -> Vec<String> {
        self.members
            .iter()
            .flat_map(|m| (0..self.n_classes).map(move |c| format!("{m}:{c}")))
            .collect()
    }
}

/// Meta-features of `x` from `models` in the given layout.
pub fn meta_features(models: &[TrainedModel], x: &Matrix, layout: &MetaLayout) -> Result<Matrix> {
    let k = layout.n_classes;
    let mut out = Matrix::zeros(x.rows(), layout.width());
    for (m, model) in models.iter().enumerate() {
        match layout.kind {
            MetaFeatures::Probabilities => {
                let p = model.predict_proba(x)?;
                for i in 0..x.rows() {
                    out.row_mut(i)[m * k..(m + 1) * k].copy_from_slice(p.row(i));
                }
            }
            MetaFeatures::Labels => {
                for (i, c) in model.predict(x)?.into_iter().enumerate() {
                    out.set(i, m * k + c, 1.0);
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackingConfig {
    pub folds: usize,
    pub meta_features: MetaFeatures,
    /// Out-of-fold meta-features when true; in-sample predictions of the
    /// full-data base models otherwise.
    pub out_of_fold: bool,
    pub seed: u64,
    pub meta_spec: LearnerSpec,
}

/// Meta MLP: hidden (100, 100), 500 epochs, adaptive rate, seed 0.
pub fn default_meta_spec() -> LearnerSpec {
    LearnerSpec::new("META", Family::Mlp)
        .with("hidden_layer_sizes", vec![100i64, 100])
        .with("max_iter", 500i64)
        .with("learning_rate", "adaptive")
        .with("random_state", 0i64)
}

impl Default for StackingConfig {
    fn default() -> Self {
        Self {
            folds: 10,
            meta_features: MetaFeatures::Probabilities,
            out_of_fold: true,
            seed: 0,
            meta_spec: default_meta_spec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackingEnsemble {
    /// Base models fit on the full training table.
    pub base: Vec<TrainedModel>,
    pub meta: TrainedModel,
    pub layout: MetaLayout,
}

/// Which fold produced each training row's meta-features, and which rows
/// each fold's base models were trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct OofRecord {
    pub fold_of_row: Vec<usize>,
    pub train_rows: Vec<Vec<usize>>,
}

impl OofRecord {
    /// No row's meta-features came from a model that saw that row.
    pub fn is_leak_free(&self) -> bool {
        self.train_rows
            .iter()
            .enumerate()
            .all(|(f, rows)| rows.iter().all(|&r| self.fold_of_row[r] != f))
    }
}

/// Fits base models on the full table, builds meta-features, and fits the
/// meta model on them.
pub fn fit_stacking(base_specs: &[LearnerSpec], table: &DataTable, cfg: &StackingConfig) -> Result<StackingEnsemble> {
    let bases = base_specs
        .iter()
        .enumerate()
        .map(|(m, s)| {
            learners::fit(s, table.features(), table.labels(), table.n_classes(), rng::derive(cfg.seed, 1000 + m as u64))
        })
        .collect::<Result<Vec<_>>>()?;
    fit_stacking_with_bases(bases, table, cfg).map(|(e, _)| e)
}

/// As [`fit_stacking`] but reuses base models already fit on `table`.
pub fn fit_stacking_with_bases(
    bases: Vec<TrainedModel>,
    table: &DataTable,
    cfg: &StackingConfig,
) -> Result<(StackingEnsemble, Option<OofRecord>)> {
    if bases.is_empty() {
        return Err(Error::invalid("stacking needs at least one base model"));
    }
    if cfg.meta_spec.family != Family::Mlp {
        return Err(Error::Config(format!(
            "the meta model must be an mlp spec, got {}",
            cfg.meta_spec.family
        )));
    }
    let k = table.n_classes();
    let layout = MetaLayout {
        members: bases.iter().map(|b| b.spec.id.clone()).collect(),
        n_classes: k,
        kind: cfg.meta_features,
    };
    let (meta_x, record) = if cfg.out_of_fold {
        let (m, r) = out_of_fold_features(&bases, table, cfg, &layout)?;
        (m, Some(r))
    } else {
        (meta_features(&bases, table.features(), &layout)?, None)
    };
    let meta = learners::fit(&cfg.meta_spec, &meta_x, table.labels(), k, cfg.seed)?;
    Ok((
        StackingEnsemble {
            base: bases,
            meta,
            layout,
        },
        record,
    ))
}

fn out_of_fold_features(
    bases: &[TrainedModel],
    table: &DataTable,
    cfg: &StackingConfig,
    layout: &MetaLayout,
) -> Result<(Matrix, OofRecord)> {
    let n = table.n_rows();
    let folds = stratified_folds(table.labels(), cfg.folds, cfg.seed)?;
    let mut fold_of_row = vec![usize::MAX; n];
    for (f, rows) in folds.iter().enumerate() {
        rows.iter().for_each(|&r| fold_of_row[r] = f);
    }
    let specs: Vec<&LearnerSpec> = bases.iter().map(|b| &b.spec).collect();
    let per_fold: Vec<Result<(Vec<usize>, Matrix)>> = (0..folds.len())
        .into_par_iter()
        .map(|f| {
            let train_rows: Vec<usize> = (0..n).filter(|&r| fold_of_row[r] != f).collect();
            let train = table.select_rows(&train_rows);
            let held = table.features().select_rows(&folds[f]);
            let models = specs
                .iter()
                .map(|s| learners::fit(s, train.features(), train.labels(), table.n_classes(), rng::derive(cfg.seed, f as u64)))
                .collect::<Result<Vec<_>>>()?;
            Ok((train_rows, meta_features(&models, &held, layout)?))
        })
        .collect();
    let mut meta = Matrix::zeros(n, layout.width());
    let mut train_rows = Vec::with_capacity(folds.len());
    for (f, res) in per_fold.into_iter().enumerate() {
        let (rows, m) = res?;
        for (j, &r) in folds[f].iter().enumerate() {
            meta.row_mut(r).copy_from_slice(m.row(j));
        }
        train_rows.push(rows);
    }
    let record = OofRecord { fold_of_row, train_rows };
    assert!(record.is_leak_free(), "out-of-fold bookkeeping violated");
    Ok((meta, record))
}

impl StackingEnsemble {
    pub fn meta_features(&self, x: &Matrix) -> Result<Matrix> {
        meta_features(&self.base, x, &self.layout)
    }

    /// Meta-model probabilities for precomputed meta-features; `layout`
    /// must equal the one the meta model was trained with.
    pub fn predict_proba_meta(&self, meta: &Matrix, layout: &MetaLayout) -> Result<Matrix> {
        if *layout != self.layout {
            return Err(Error::invalid(format!(
                "meta-feature layout {:?} does not match the trained layout {:?}",
                layout.column_names(),
                self.layout.column_names()
            )));
        }
        self.meta.predict_proba(meta)
    }

    pub fn predict_meta(&self, meta: &Matrix, layout: &MetaLayout) -> Result<Vec<usize>> {
        if *layout != self.layout {
            return Err(Error::invalid("meta-feature layout does not match the trained layout"));
        }
        self.meta.predict(meta)
    }

    pub fn predict_proba(&self, x: &Matrix) -> Result<Matrix> {
        self.predict_proba_meta(&self.meta_features(x)?, &self.layout)
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        self.predict_meta(&self.meta_features(x)?, &self.layout)
    }
}

/// `predict_stacking` in function form.
pub fn predict_stacking(ensemble: &StackingEnsemble, x: &Matrix) -> Result<Vec<usize>> {
    ensemble.predict(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn majority_examples() {
        assert_eq!(majority_hard_vote(&[vec![0], vec![0], vec![1]], 2).unwrap(), vec![0]);
        assert_eq!(majority_hard_vote(&[vec![0], vec![1], vec![2]], 3).unwrap(), vec![0]);
        assert_eq!(majority_hard_vote(&[vec![2], vec![1], vec![1]], 3).unwrap(), vec![1]);
        assert!(majority_hard_vote(&[], 2).is_err());
    }

    #[test]
    fn weights_and_weighted_vote() {
        assert_eq!(compute_weights(&[0.9, 0.9, 0.9]).unwrap(), vec![1.0 / 3.0; 3]);
        let w = compute_weights(&[0.8, 0.6, 0.6]).unwrap();
        assert!((w[0] - 0.4).abs() < 1e-15 && (w[1] - 0.3).abs() < 1e-15);
        assert!(compute_weights(&[0.5, 0.0]).is_err());
        let v = weighted_hard_vote(&[vec![0], vec![1], vec![1]], &[0.6, 0.2, 0.2], 2).unwrap();
        assert_eq!(v, vec![0]);
        // 0.2 + 0.3 against 0.5 is a tie, won by the top-ranked member
        let v = weighted_hard_vote(&[vec![1], vec![1], vec![0]], &[0.2, 0.3, 0.5], 2).unwrap();
        assert_eq!(v, vec![1]);
        assert!(weighted_hard_vote(&[vec![0]], &[0.5, 0.5], 2).is_err());
    }

    #[test]
    fn layout_columns() {
        let l = MetaLayout {
            members: vec!["A".into(), "B".into()],
            n_classes: 2,
            kind: MetaFeatures::Probabilities,
        };
        assert_eq!(l.column_names(), vec!["A:0", "A:1", "B:0", "B:1"]);
    }
}
