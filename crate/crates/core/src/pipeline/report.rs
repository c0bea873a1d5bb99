//! Run report and its file set.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::error::{Error, Result};
use crate::learners::Family;
use crate::metrics::{ConfusionMatrix, MetricBundle};
use crate::modelsel::Leaderboard;
use crate::resample::ResampleScope;
use crate::tabular::FeatureOutliers;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Base,
    Ensemble,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    Train,
    Validation,
    Test,
}

/// Confusion matrix and metrics of one model on one partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub model: String,
    pub kind: ModelKind,
    pub partition: Partition,
    pub confusion: ConfusionMatrix,
    pub metrics: MetricBundle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelatedFeature {
    pub feature: String,
    pub pearson_r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub rows: usize,
    pub features: Vec<String>,
    pub class_names: Vec<String>,
    pub class_counts: Vec<usize>,
    /// Class counts of the table that was partitioned (after SMOTE when the
    /// whole table is resampled).
    pub split_source_counts: Vec<usize>,
    pub train_counts: Vec<usize>,
    pub validation_counts: Vec<usize>,
    pub test_counts: Vec<usize>,
    pub resample_scope: Option<ResampleScope>,
    pub most_correlated_feature: Option<CorrelatedFeature>,
    pub outliers: Vec<FeatureOutliers>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedMember {
    pub id: String,
    pub family: Family,
    pub rank: usize,
    /// Validation-partition value of the weight metric.
    pub validation_score: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub split: u64,
    pub resample: u64,
    pub sweep: u64,
    pub ensemble: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seeds: Seeds,
    pub version: String,
    pub dataset: PathBuf,
    pub wall_clock_seconds: f64,
}

impl Provenance {
    pub fn new(cfg: &RunConfig, wall_clock_seconds: f64) -> Self {
        Self {
            config_hash: cfg.hash.clone(),
            seeds: Seeds {
                split: cfg.split.seed,
                resample: cfg.resample.seed,
                sweep: cfg.sweep.seed,
                ensemble: cfg.ensemble.seed,
            },
            version: env!("CARGO_PKG_VERSION").to_string(),
            dataset: cfg.dataset.path.clone(),
            wall_clock_seconds,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub data: DataSummary,
    pub leaderboard: Leaderboard,
    pub selected: Vec<SelectedMember>,
    pub evaluations: Vec<EvaluationReport>,
    pub provenance: Provenance,
}

/// Everything in a report except provenance; serialized as metrics.json.
#[derive(Serialize)]
struct MetricsFile<'a> {
    config_hash: &'a str,
    data: &'a DataSummary,
    selected: &'a [SelectedMember],
    evaluations: &'a [EvaluationReport],
    leaderboard: &'a Leaderboard,
}

impl RunReport {
    pub fn evaluation(&self, model: &str, partition: Partition) -> Option<&EvaluationReport> {
        self.evaluations
            .iter()
            .find(|e| e.model == model && e.partition == partition)
    }

    /// Model names in report order: bases by rank, then the ensembles.
    pub fn model_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for e in self.evaluations.iter().filter(|e| e.partition == Partition::Test) {
            if !names.contains(&e.model) {
                names.push(e.model.clone());
            }
        }
        names
    }

    /// Deterministic JSON of everything but the wall-clock provenance.
    pub fn metrics_json(&self) -> Result<String> {
        let file = MetricsFile {
            config_hash: &self.provenance.config_hash,
            data: &self.data,
            selected: &self.selected,
            evaluations: &self.evaluations,
            leaderboard: &self.leaderboard,
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    /// Fixed-width comparison of the test-partition rows.
    pub fn summary_table(&self) -> String {
        let mut out = format!(
            "{:<16} {:>9} {:>9} {:>9} {:>9} {:>9}\n",
            "model", "accuracy", "precision", "recall", "f1", "roc_auc"
        );
        for e in self.evaluations.iter().filter(|e| e.partition == Partition::Test) {
            let m = &e.metrics;
            let auc = m.roc_auc.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
            out.push_str(&format!(
                "{:<16} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>9}\n",
                e.model, m.accuracy, m.precision_macro, m.recall_macro, m.f1_macro, auc
            ));
        }
        out
    }
}

/// Filename-safe form of a model id.
pub fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect()
}

fn write(path: PathBuf, text: &str, written: &mut Vec<PathBuf>) -> Result<()> {
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(())
}

/// Writes leaderboard.csv, metrics.json, provenance.json and one
/// confusion_<model>.csv per model (test partition). Returns the paths.
pub fn emit_report(report: &RunReport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    write(dir.join("leaderboard.csv"), &report.leaderboard.to_csv()?, &mut written)?;
    write(dir.join("metrics.json"), &report.metrics_json()?, &mut written)?;
    for e in report.evaluations.iter().filter(|e| e.partition == Partition::Test) {
        let name = format!("confusion_{}.csv", sanitize(&e.model));
        write(dir.join(name), &e.confusion.to_csv(), &mut written)?;
    }
    write(
        dir.join("provenance.json"),
        &serde_json::to_string_pretty(&report.provenance)?,
        &mut written,
    )?;
    Ok(written)
}
