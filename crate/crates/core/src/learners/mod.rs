//! Base classifier families behind one fit / predict / predict_proba
//! contract.

pub mod boosting;
pub mod forest;
pub mod knn;
pub mod linear;
pub mod mlp;
pub mod naive_bayes;
pub mod tree;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub use boosting::{gb_negative_gradient, samme_update};
pub use knn::{knn_distance, Metric};
pub use mlp::mlp_backprop_step;
pub use tree::{impurity, Criterion};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    LogisticRegression,
    Knn,
    GaussianNb,
    BernoulliNb,
    DecisionTree,
    RandomForest,
    GradientBoosting,
    Adaboost,
    LinearSvc,
    Mlp,
}

impl Family {
    pub const ALL: [Family; 10] = [
        Family::LogisticRegression,
        Family::Knn,
        Family::GaussianNb,
        Family::BernoulliNb,
        Family::DecisionTree,
        Family::RandomForest,
        Family::GradientBoosting,
        Family::Adaboost,
        Family::LinearSvc,
        Family::Mlp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::LogisticRegression => "logistic_regression",
            Family::Knn => "knn",
            Family::GaussianNb => "gaussian_nb",
            Family::BernoulliNb => "bernoulli_nb",
            Family::DecisionTree => "decision_tree",
            Family::RandomForest => "random_forest",
            Family::GradientBoosting => "gradient_boosting",
            Family::Adaboost => "adaboost",
            Family::LinearSvc => "linear_svc",
            Family::Mlp => "mlp",
        }
    }

    pub fn parse(s: &str) -> Option<Family> {
        Family::ALL.into_iter().find(|f| f.name() == s)
    }

    /// Parameter names accepted for this family.
    pub fn legal_params(self) -> &'static [&'static str] {
        match self {
            Family::LogisticRegression => {
                &["penalty", "C", "multi_class", "max_iter", "tol", "random_state"]
            }
            Family::Knn => &["n_neighbors", "algorithm", "p", "metric"],
            Family::GaussianNb => &["var_smoothing"],
            Family::BernoulliNb => &["alpha", "binarize"],
            Family::DecisionTree => &[
                "criterion",
                "splitter",
                "max_depth",
                "min_samples_split",
                "min_samples_leaf",
                "max_features",
                "min_impurity_decrease",
                "random_state",
            ],
            Family::RandomForest => &[
                "n_estimators",
                "criterion",
                "max_features",
                "bootstrap",
                "max_depth",
                "min_samples_split",
                "min_samples_leaf",
                "min_impurity_decrease",
                "random_state",
            ],
            Family::GradientBoosting => &[
                "n_estimators",
                "loss",
                "criterion",
                "learning_rate",
                "max_depth",
                "min_samples_split",
                "min_samples_leaf",
                "min_impurity_decrease",
                "random_state",
            ],
            Family::Adaboost => &["n_estimators", "algorithm", "learning_rate", "random_state"],
            Family::LinearSvc => &["C", "kernel", "probability", "max_iter", "random_state"],
            Family::Mlp => &[
                "hidden_layer_sizes",
                "activation",
                "solver",
                "max_iter",
                "learning_rate",
                "learning_rate_init",
                "batch_size",
                "alpha",
                "tol",
                "n_iter_no_change",
                "random_state",
            ],
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One hyperparameter value as written in a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Bool(bool),
    Int(i64),
    Float(f64),
    Text(String),
    IntList(Vec<i64>),
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Bool(b) => write!(f, "{b}"),
            ParamValue::Int(i) => write!(f, "{i}"),
            ParamValue::Float(x) => write!(f, "{x}"),
            ParamValue::Text(s) => f.write_str(s),
            ParamValue::IntList(v) => {
                let parts: Vec<String> = v.iter().map(|i| i.to_string()).collect();
                write!(f, "({})", parts.join(","))
            }
        }
    }
}

impl From<bool> for ParamValue {
    fn from(v: bool) -> Self {
        ParamValue::Bool(v)
    }
}

impl From<i64> for ParamValue {
    fn from(v: i64) -> Self {
        ParamValue::Int(v)
    }
}

impl From<f64> for ParamValue {
    fn from(v: f64) -> Self {
        ParamValue::Float(v)
    }
}

impl From<&str> for ParamValue {
    fn from(v: &str) -> Self {
        ParamValue::Text(v.to_string())
    }
}

impl From<Vec<i64>> for ParamValue {
    fn from(v: Vec<i64>) -> Self {
        ParamValue::IntList(v)
    }
}

pub type Params = BTreeMap<String, ParamValue>;

/// A family plus one concrete hyperparameter assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerSpec {
    pub id: String,
    pub family: Family,
    #[serde(default)]
    pub params: Params,
}

impl LearnerSpec {
    pub fn new(id: impl Into<String>, family: Family) -> Self {
        Self {
            id: id.into(),
            family,
            params: Params::new(),
        }
    }

    pub fn with(mut self, name: &str, value: impl Into<ParamValue>) -> Self {
        self.params.insert(name.to_string(), value.into());
        self
    }

    /// `name=value` pairs joined by `;`, in name order.
    pub fn params_text(&self) -> String {
        self.params
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(";")
    }

    /// Checks parameter names and values without fitting.
    pub fn validate(&self) -> Result<()> {
        let legal = self.family.legal_params();
        for name in self.params.keys() {
            if !legal.contains(&name.as_str()) {
                return Err(Error::param(
                    self.family.name(),
                    format!("unknown parameter '{name}' in spec {}", self.id),
                ));
            }
        }
        let r = ParamReader::new(self);
        match self.family {
            Family::LogisticRegression => linear::LrConfig::from_params(&r).map(drop),
            Family::Knn => knn::KnnConfig::from_params(&r).map(drop),
            Family::GaussianNb => naive_bayes::GaussianConfig::from_params(&r).map(drop),
            Family::BernoulliNb => naive_bayes::BernoulliConfig::from_params(&r).map(drop),
            Family::DecisionTree => forest::DtConfig::from_params(&r).map(drop),
            Family::RandomForest => forest::RfConfig::from_params(&r).map(drop),
            Family::GradientBoosting => boosting::GbConfig::from_params(&r).map(drop),
            Family::Adaboost => boosting::AdaConfig::from_params(&r).map(drop),
            Family::LinearSvc => linear::SvcConfig::from_params(&r).map(drop),
            Family::Mlp => mlp::MlpConfig::from_params(&r).map(drop),
        }
    }
}

/// Typed access to a spec's parameters with family-scoped errors.
pub(crate) struct ParamReader<'a> {
    family: Family,
    params: &'a Params,
}

impl<'a> ParamReader<'a> {
    pub(crate) fn new(spec: &'a LearnerSpec) -> Self {
        Self {
            family: spec.family,
            params: &spec.params,
        }
    }

    pub(crate) fn err(&self, msg: impl Into<String>) -> Error {
        Error::param(self.family.name(), msg)
    }

    fn get(&self, name: &str) -> Option<&'a ParamValue> {
        self.params.get(name)
    }

    pub(crate) fn f64(&self, name: &str, default: f64) -> Result<f64> {
        match self.get(name) {
            None => Ok(default),
            Some(ParamValue::Float(x)) if x.is_finite() => Ok(*x),
            Some(ParamValue::Int(i)) => Ok(*i as f64),
            Some(v) => Err(self.err(format!("'{name}' must be a finite number, got {v}"))),
        }
    }

    pub(crate) fn positive_f64(&self, name: &str, default: f64) -> Result<f64> {
        let v = self.f64(name, default)?;
        if v > 0.0 {
            Ok(v)
        } else {
            Err(self.err(format!("'{name}' must be positive, got {v}")))
        }
    }

    pub(crate) fn usize(&self, name: &str, default: usize) -> Result<usize> {
        match self.get(name) {
            None => Ok(default),
            Some(ParamValue::Int(i)) if *i >= 0 => Ok(*i as usize),
            Some(v) => Err(self.err(format!("'{name}' must be a non-negative integer, got {v}"))),
        }
    }

    pub(crate) fn positive_usize(&self, name: &str, default: usize) -> Result<usize> {
        let v = self.usize(name, default)?;
        if v >= 1 {
            Ok(v)
        } else {
            Err(self.err(format!("'{name}' must be at least 1")))
        }
    }

    /// Absent or `"none"` → `None`.
    pub(crate) fn opt_usize(&self, name: &str) -> Result<Option<usize>> {
        match self.get(name) {
            None => Ok(None),
            Some(ParamValue::Text(s)) if s == "none" => Ok(None),
            Some(ParamValue::Int(i)) if *i >= 1 => Ok(Some(*i as usize)),
            Some(v) => Err(self.err(format!("'{name}' must be a positive integer or \"none\", got {v}"))),
        }
    }

    pub(crate) fn choice(&self, name: &str, default: &'static str, allowed: &[&'static str]) -> Result<&'static str> {
        let s = match self.get(name) {
            None => return Ok(default),
            Some(ParamValue::Text(s)) => s.as_str(),
            Some(v) => return Err(self.err(format!("'{name}' must be one of {allowed:?}, got {v}"))),
        };
        allowed
            .iter()
            .copied()
            .find(|a| *a == s)
            .ok_or_else(|| self.err(format!("'{name}' must be one of {allowed:?}, got \"{s}\"")))
    }

    pub(crate) fn bool(&self, name: &str, default: bool) -> Result<bool> {
        match self.get(name) {
            None => Ok(default),
            Some(ParamValue::Bool(b)) => Ok(*b),
            Some(v) => Err(self.err(format!("'{name}' must be true or false, got {v}"))),
        }
    }

    pub(crate) fn usize_list(&self, name: &str, default: &[usize]) -> Result<Vec<usize>> {
        match self.get(name) {
            None => Ok(default.to_vec()),
            Some(ParamValue::IntList(v)) if v.iter().all(|&i| i >= 1) => {
                Ok(v.iter().map(|&i| i as usize).collect())
            }
            Some(ParamValue::Int(i)) if *i >= 1 => Ok(vec![*i as usize]),
            Some(v) => Err(self.err(format!("'{name}' must be a list of positive integers, got {v}"))),
        }
    }

    /// `random_state` when given, else the caller's seed.
    pub(crate) fn seed(&self, fallback: u64) -> Result<u64> {
        match self.get("random_state") {
            None => Ok(fallback),
            Some(ParamValue::Int(i)) if *i >= 0 => Ok(*i as u64),
            Some(v) => Err(self.err(format!("'random_state' must be a non-negative integer, got {v}"))),
        }
    }
}

/// Shared behaviour of fitted family states.
pub trait Classifier {
    fn n_classes(&self) -> usize;

    /// Row-stochastic `[n_rows × n_classes]` matrix.
    fn predict_proba(&self, x: &Matrix) -> Matrix;

    fn predict(&self, x: &Matrix) -> Vec<usize> {
        argmax_rows(&self.predict_proba(x))
    }
}

/// Index of the largest entry per row; ties go to the lowest index.
pub fn argmax_rows(m: &Matrix) -> Vec<usize> {
    m.iter_rows().map(argmax).collect()
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// In-place numerically stable softmax.
pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "model", rename_all = "snake_case")]
pub enum FittedState {
    LogisticRegression(linear::LogisticModel),
    Knn(knn::KnnModel),
    GaussianNb(naive_bayes::GaussianNbModel),
    BernoulliNb(naive_bayes::BernoulliNbModel),
    DecisionTree(forest::DecisionTreeModel),
    RandomForest(forest::ForestModel),
    GradientBoosting(boosting::GbModel),
    Adaboost(boosting::AdaModel),
    LinearSvc(linear::SvcModel),
    Mlp(mlp::MlpModel),
}

impl FittedState {
    fn as_classifier(&self) -> &dyn Classifier {
        match self {
            FittedState::LogisticRegression(m) => m,
            FittedState::Knn(m) => m,
            FittedState::GaussianNb(m) => m,
            FittedState::BernoulliNb(m) => m,
            FittedState::DecisionTree(m) => m,
            FittedState::RandomForest(m) => m,
            FittedState::GradientBoosting(m) => m,
            FittedState::Adaboost(m) => m,
            FittedState::LinearSvc(m) => m,
            FittedState::Mlp(m) => m,
        }
    }
}

/// Current on-disk model format version.
pub const MODEL_FORMAT_VERSION: u32 = 1;
const MODEL_FORMAT: &str = "tabens-model";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub spec: LearnerSpec,
    pub class_count: usize,
    pub feature_count: usize,
    pub state: FittedState,
}

#[derive(Serialize, Deserialize)]
struct ModelFile<T> {
    format: String,
    version: u32,
    model: T,
}

impl TrainedModel {
    fn check_width(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.feature_count {
            return Err(Error::DimensionMismatch {
                expected: self.feature_count,
                got: x.cols(),
            });
        }
        Ok(())
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        self.check_width(x)?;
        Ok(self.state.as_classifier().predict(x))
    }

    pub fn predict_proba(&self, x: &Matrix) -> Result<Matrix> {
        self.check_width(x)?;
        Ok(self.state.as_classifier().predict_proba(x))
    }

    /// Self-describing JSON; floats round-trip exactly.
    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_FORMAT_VERSION,
            model: self,
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: ModelFile<TrainedModel> = serde_json::from_str(s)?;
        if file.format != MODEL_FORMAT {
            return Err(Error::Serde(format!("not a model file (format '{}')", file.format)));
        }
        if file.version != MODEL_FORMAT_VERSION {
            return Err(Error::Serde(format!(
                "model format version {} is not supported (expected {MODEL_FORMAT_VERSION})",
                file.version
            )));
        }
        Ok(file.model)
    }
}

fn check_training_data(x: &Matrix, y: &[usize], n_classes: usize) -> Result<()> {
    if x.rows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.rows(),
            got: y.len(),
        });
    }
    if x.cols() == 0 {
        return Err(Error::invalid("training data has no features"));
    }
    if !x.all_finite() {
        return Err(Error::invalid("training data contains a non-finite feature value"));
    }
    if let Some(&bad) = y.iter().find(|&&l| l >= n_classes) {
        return Err(Error::invalid(format!("label {bad} is out of range for {n_classes} classes")));
    }
    let mut seen = vec![false; n_classes];
    y.iter().for_each(|&l| seen[l] = true);
    if seen.iter().filter(|&&s| s).count() < 2 {
        return Err(Error::invalid("training data must contain at least two distinct classes"));
    }
    Ok(())
}

/// Fits `spec` on `(x, y)`. Labels are ids in `0..n_classes`; classes absent
/// from `y` still get a (near-zero) probability column.
pub fn fit(spec: &LearnerSpec, x: &Matrix, y: &[usize], n_classes: usize, seed: u64) -> Result<TrainedModel> {
    spec.validate()?;
    check_training_data(x, y, n_classes)?;
    let r = ParamReader::new(spec);
    let seed = r.seed(seed)?;
    let state = match spec.family {
        Family::LogisticRegression => FittedState::LogisticRegression(linear::LogisticModel::fit(
            &linear::LrConfig::from_params(&r)?,
            x,
            y,
            n_classes,
            seed,
        )?),
        Family::Knn => FittedState::Knn(knn::KnnModel::fit(&knn::KnnConfig::from_params(&r)?, x, y, n_classes)),
        Family::GaussianNb => FittedState::GaussianNb(naive_bayes::GaussianNbModel::fit(
            &naive_bayes::GaussianConfig::from_params(&r)?,
            x,
            y,
            n_classes,
        )),
        Family::BernoulliNb => FittedState::BernoulliNb(naive_bayes::BernoulliNbModel::fit(
            &naive_bayes::BernoulliConfig::from_params(&r)?,
            x,
            y,
            n_classes,
        )),
        Family::DecisionTree => FittedState::DecisionTree(forest::DecisionTreeModel::fit(
            &forest::DtConfig::from_params(&r)?,
            x,
            y,
            n_classes,
            seed,
        )),
        Family::RandomForest => FittedState::RandomForest(forest::ForestModel::fit(
            &forest::RfConfig::from_params(&r)?,
            x,
            y,
            n_classes,
            seed,
        )),
        Family::GradientBoosting => FittedState::GradientBoosting(boosting::GbModel::fit(
            &boosting::GbConfig::from_params(&r)?,
            x,
            y,
            n_classes,
            seed,
        )?),
        Family::Adaboost => FittedState::Adaboost(boosting::AdaModel::fit(
            &boosting::AdaConfig::from_params(&r)?,
            x,
            y,
            n_classes,
            seed,
        )?),
        Family::LinearSvc => FittedState::LinearSvc(linear::SvcModel::fit(
            &linear::SvcConfig::from_params(&r)?,
            x,
            y,
            n_classes,
            seed,
        )?),
        Family::Mlp => FittedState::Mlp(mlp::MlpModel::fit(&mlp::MlpConfig::from_params(&r)?, x, y, n_classes, seed)?),
    };
    Ok(TrainedModel {
        spec: spec.clone(),
        class_count: n_classes,
        feature_count: x.cols(),
        state,
    })
}

/// One-hot encoding of `y` as an `[n × k]` matrix.
pub fn one_hot(y: &[usize], k: usize) -> Matrix {
    let mut m = Matrix::zeros(y.len(), k);
    for (i, &l) in y.iter().enumerate() {
        m.set(i, l, 1.0);
    }
    m
}
