//! Saving and loading the fitted models of a run.
//!
//! Layout: `manifest.json` (weights, tie-break order, meta layout, schema,
//! scaler) plus one JSON file per base model and one for the stacking meta
//! model. The voting ensembles need nothing beyond the manifest.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::report::{sanitize, EvaluationReport, ModelKind, Partition};
use super::run::{FittedModels, MAJORITY, STACKING, WEIGHTED};
use crate::ensemble::{MetaLayout, StackingEnsemble, VoteMode, VotingEnsemble};
use crate::error::{Error, Result};
use crate::learners::TrainedModel;
use crate::matrix::Matrix;
use crate::metrics;
use crate::tabular::{apply_scaler, load_csv, ColumnSchema, DataTable, ScalerParams};

pub const MANIFEST_FORMAT: &str = "tabens-bundle";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberEntry {
    pub id: String,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    /// Schema with category lists filled in, so evaluation files encode
    /// exactly as the training file did.
    pub schema: Vec<ColumnSchema>,
    pub class_names: Vec<String>,
    pub scaler: Option<ScalerParams>,
    /// Base models in rank order, which is also the vote tie-break order.
    pub members: Vec<MemberEntry>,
    pub majority_weights: Vec<f64>,
    pub weighted_weights: Vec<f64>,
    pub tie_break_order: Vec<String>,
    pub meta_layout: MetaLayout,
    pub meta_file: String,
}

#[derive(Debug, Clone)]
pub struct ModelBundle {
    pub manifest: Manifest,
    pub bases: Vec<TrainedModel>,
    pub meta: TrainedModel,
}

impl ModelBundle {
    pub fn new(original: &DataTable, scaler: Option<ScalerParams>, models: &FittedModels) -> Self {
        let ids: Vec<String> = models.bases.iter().map(|b| b.spec.id.clone()).collect();
        let manifest = Manifest {
            format: MANIFEST_FORMAT.into(),
            version: MANIFEST_VERSION,
            schema: original.resolved_schema(),
            class_names: original.class_names().to_vec(),
            scaler,
            members: ids
                .iter()
                .map(|id| MemberEntry {
                    id: id.clone(),
                    file: format!("base_{}.json", sanitize(id)),
                })
                .collect(),
            majority_weights: models.majority.weights.clone(),
            weighted_weights: models.weighted.weights.clone(),
            tie_break_order: ids,
            meta_layout: models.stacking.layout.clone(),
            meta_file: "stacking_meta.json".into(),
        };
        Self {
            manifest,
            bases: models.bases.clone(),
            meta: models.stacking.meta.clone(),
        }
    }

    pub fn save(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::new();
        let mut put = |name: &str, text: String| -> Result<()> {
            let path = dir.join(name);
            std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
            written.push(path);
            Ok(())
        };
        put("manifest.json", serde_json::to_string_pretty(&self.manifest)?)?;
        for (entry, model) in self.manifest.members.iter().zip(&self.bases) {
            put(&entry.file, model.to_json()?)?;
        }
        put(&self.manifest.meta_file, self.meta.to_json()?)?;
        Ok(written)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let read = |name: &str| -> Result<String> {
            let path = dir.join(name);
            std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))
        };
        let manifest: Manifest = serde_json::from_str(&read("manifest.json")?)?;
        if manifest.format != MANIFEST_FORMAT || manifest.version != MANIFEST_VERSION {
            return Err(Error::Serde(format!(
                "unsupported bundle {} v{}",
                manifest.format, manifest.version
            )));
        }
        let n = manifest.members.len();
        if n == 0 || manifest.majority_weights.len() != n || manifest.weighted_weights.len() != n {
            return Err(Error::Serde("manifest member and weight counts disagree".into()));
        }
        let bases = manifest
            .members
            .iter()
            .map(|m| {
                let model = TrainedModel::from_json(&read(&m.file)?)?;
                if model.spec.id != m.id {
                    return Err(Error::Serde(format!("{} holds model '{}', expected '{}'", m.file, model.spec.id, m.id)));
                }
                Ok(model)
            })
            .collect::<Result<Vec<_>>>()?;
        let meta = TrainedModel::from_json(&read(&manifest.meta_file)?)?;
        if meta.feature_count != manifest.meta_layout.width() {
            return Err(Error::DimensionMismatch {
                expected: manifest.meta_layout.width(),
                got: meta.feature_count,
            });
        }
        Ok(Self { manifest, bases, meta })
    }

    /// The three ensembles rebuilt from the saved members.
    pub fn ensembles(&self) -> (VotingEnsemble, VotingEnsemble, StackingEnsemble) {
        let majority = VotingEnsemble {
            mode: VoteMode::Majority,
            members: self.bases.clone(),
            weights: self.manifest.majority_weights.clone(),
        };
        let weighted = VotingEnsemble {
            mode: VoteMode::Weighted,
            members: self.bases.clone(),
            weights: self.manifest.weighted_weights.clone(),
        };
        let stacking = StackingEnsemble {
            base: self.bases.clone(),
            meta: self.meta.clone(),
            layout: self.manifest.meta_layout.clone(),
        };
        (majority, weighted, stacking)
    }

    /// Reads a CSV with the training schema and applies the training scaler.
    pub fn load_table(&self, path: &Path) -> Result<DataTable> {
        let table = load_csv(path, &self.manifest.schema)?;
        match &self.manifest.scaler {
            Some(s) => apply_scaler(&table, s),
            None => Ok(table),
        }
    }

    /// Hard predictions and (where available) probabilities of every model,
    /// bases first, then the ensembles.
    pub fn predict_all(&self, x: &Matrix) -> Result<Vec<(String, Vec<usize>, Option<Matrix>)>> {
        let mut out = Vec::new();
        for b in &self.bases {
            out.push((b.spec.id.clone(), b.predict(x)?, Some(b.predict_proba(x)?)));
        }
        let (majority, weighted, stacking) = self.ensembles();
        out.push((MAJORITY.to_string(), majority.predict(x)?, None));
        out.push((WEIGHTED.to_string(), weighted.predict(x)?, None));
        out.push((STACKING.to_string(), stacking.predict(x)?, Some(stacking.predict_proba(x)?)));
        Ok(out)
    }

    /// Scores every model on an already-scaled table.
    pub fn evaluate_table(&self, table: &DataTable) -> Result<Vec<EvaluationReport>> {
        if table.class_names() != self.manifest.class_names.as_slice() {
            return Err(Error::invalid("evaluation table classes differ from the training classes"));
        }
        let n_bases = self.bases.len();
        self.predict_all(table.features())?
            .into_iter()
            .enumerate()
            .map(|(i, (model, pred, proba))| {
                let (confusion, metrics) =
                    metrics::evaluate(table.labels(), &pred, proba.as_ref(), table.class_names())?;
                Ok(EvaluationReport {
                    model,
                    kind: if i < n_bases { ModelKind::Base } else { ModelKind::Ensemble },
                    partition: Partition::Test,
                    confusion,
                    metrics,
                })
            })
            .collect()
    }
}

/// Writes `evaluation.json` and one confusion CSV per model.
pub fn write_evaluations(evals: &[EvaluationReport], dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let path = dir.join("evaluation.json");
    std::fs::write(&path, serde_json::to_string_pretty(evals)?).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    for e in evals {
        let path = dir.join(format!("confusion_{}.csv", sanitize(&e.model)));
        std::fs::write(&path, e.confusion.to_csv()).map_err(|err| Error::io(&path, err))?;
        written.push(path);
    }
    Ok(written)
}
