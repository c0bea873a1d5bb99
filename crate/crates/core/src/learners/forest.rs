//! Decision tree and random forest classifiers.

use serde::{Deserialize, Serialize};

use super::tree::{xlnx_table, ClassificationTree, Criterion, MaxFeatures, SortedColumns, Splitter, TreeParams};
use super::{Classifier, ParamReader, ParamValue};
use crate::error::Result;
use crate::matrix::Matrix;
use crate::rng;

fn tree_params(r: &ParamReader, default_max_features: MaxFeatures) -> Result<TreeParams> {
    let max_features = match r.params.get("max_features") {
        None => default_max_features,
        Some(ParamValue::Int(k)) if *k >= 1 => MaxFeatures::Count(*k as usize),
        Some(_) => match r.choice("max_features", "none", &["sqrt", "log2", "none"])? {
            "sqrt" => MaxFeatures::Sqrt,
            "log2" => MaxFeatures::Log2,
            _ => MaxFeatures::All,
        },
    };
    let min_samples_split = r.usize("min_samples_split", 2)?;
    if min_samples_split < 2 {
        return Err(r.err("'min_samples_split' must be at least 2"));
    }
    let min_impurity_decrease = r.f64("min_impurity_decrease", 0.0)?;
    if min_impurity_decrease < 0.0 {
        return Err(r.err("'min_impurity_decrease' must be non-negative"));
    }
    let splitter = match r.choice("splitter", "best", &["best", "random"])? {
        "random" => Splitter::Random,
        _ => Splitter::Best,
    };
    Ok(TreeParams {
        splitter,
        max_depth: r.opt_usize("max_depth")?,
        min_samples_split,
        min_samples_leaf: r.positive_usize("min_samples_leaf", 1)?,
        max_features,
        min_impurity_decrease,
    })
}

fn criterion(r: &ParamReader) -> Result<Criterion> {
    let c = r.choice("criterion", "gini", &["gini", "entropy", "log_loss"])?;
    Ok(Criterion::parse(c).expect("listed criterion"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DtConfig {
    pub criterion: Criterion,
    pub tree: TreeParams,
}

impl DtConfig {
    pub(crate) fn from_params(r: &ParamReader) -> Result<Self> {
        Ok(Self {
            criterion: criterion(r)?,
            tree: tree_params(r, MaxFeatures::All)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTreeModel {
    pub tree: ClassificationTree,
}

impl DecisionTreeModel {
    pub fn fit(cfg: &DtConfig, x: &Matrix, y: &[usize], n_classes: usize, seed: u64) -> Self {
        let mut rng = rng::seeded(seed);
        Self {
            tree: ClassificationTree::fit(x, y, n_classes, cfg.criterion, &cfg.tree, &mut rng),
        }
    }
}

impl Classifier for DecisionTreeModel {
    fn n_classes(&self) -> usize {
        self.tree.n_classes
    }

    fn predict_proba(&self, x: &Matrix) -> Matrix {
        self.tree.predict_proba(x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RfConfig {
    pub n_estimators: usize,
    pub criterion: Criterion,
    pub tree: TreeParams,
}

impl RfConfig {
    pub(crate) fn from_params(r: &ParamReader) -> Result<Self> {
        if r.bool("bootstrap", false)? {
            return Err(r.err("only bootstrap = false is supported (every tree sees all rows)"));
        }
        let tree = tree_params(r, MaxFeatures::Sqrt)?;
        Ok(Self {
            n_estimators: r.positive_usize("n_estimators", 100)?,
            criterion: criterion(r)?,
            tree,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<ClassificationTree>,
    pub n_classes: usize,
}

impl ForestModel {
    pub fn fit(cfg: &RfConfig, x: &Matrix, y: &[usize], n_classes: usize, seed: u64) -> Self {
        let data = SortedColumns::new(x);
        let xlnx = xlnx_table(x.rows());
        let trees = (0..cfg.n_estimators)
            .map(|t| {
                let mut rng = rng::seeded(rng::derive(seed, t as u64));
                ClassificationTree::fit_presorted(&data, y, None, &xlnx, n_classes, cfg.criterion, &cfg.tree, &mut rng)
            })
            .collect();
        Self { trees, n_classes }
    }
}

impl Classifier for ForestModel {
    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn predict_proba(&self, x: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(x.rows(), self.n_classes);
        let scale = 1.0 / self.trees.len() as f64;
        for (i, row) in x.iter_rows().enumerate() {
            let acc = out.row_mut(i);
            for t in &self.trees {
                for (a, p) in acc.iter_mut().zip(t.proba_row(row)) {
                    *a += p;
                }
            }
            acc.iter_mut().for_each(|a| *a *= scale);
        }
        out
    }
}
