//! The end-to-end run: load → split → scale → resample → sweep → select →
//! fit bases → ensembles → evaluate.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::persist::ModelBundle;
use super::report::{
    CorrelatedFeature, DataSummary, EvaluationReport, ModelKind, Partition, Provenance, RunReport, SelectedMember,
};
use crate::ensemble::{fit_stacking_with_bases, StackingEnsemble, VotingEnsemble};
use crate::error::{Error, Result};
use crate::learners::{self, TrainedModel};
use crate::matrix::Matrix;
use crate::metrics;
use crate::modelsel::{run_sweep, Leaderboard};
use crate::resample::{smote_resample, ResampleScope};
use crate::rng;
use crate::tabular::{
    apply_scaler, fit_scaler, load_csv, most_correlated_feature, outlier_scan, stratified_split, DataTable,
    ScalerParams, SplitIndices,
};

pub const MAJORITY: &str = "majority_vote";
pub const WEIGHTED: &str = "weighted_vote";
pub const STACKING: &str = "stacking";

/// Thread count from `TABENS_THREADS`, else the machine's parallelism.
pub fn default_threads() -> usize {
    std::env::var("TABENS_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs `f` on a rayon pool of `threads` workers.
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Train / validation / test tables after scaling and resampling.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub original: DataTable,
    pub split: SplitIndices,
    pub scaler: Option<ScalerParams>,
    pub train: DataTable,
    pub validation: DataTable,
    pub test: DataTable,
    /// Class counts of the table the split was drawn from.
    pub split_source_counts: Vec<usize>,
}

/// Splits, scales and resamples per the config. With `train_only` scope the
/// scaler is fit on the training partition and SMOTE touches only it. With
/// `train_and_eval` the whole table is scaled (extrema over all rows) and
/// resampled before it is split.
pub fn prepare(cfg: &RunConfig, original: DataTable) -> Result<PreparedData> {
    let smote = cfg.resample.smote();
    let resample_all = cfg.resample.enabled && smote.scope == ResampleScope::TrainAndEval;
    if resample_all {
        let all: Vec<usize> = (0..original.n_rows()).collect();
        let scaler = if cfg.scaling.enabled {
            Some(fit_scaler(&original, &all).map_err(|e| e.in_stage("scale"))?)
        } else {
            None
        };
        let scaled = match &scaler {
            Some(s) => apply_scaler(&original, s).map_err(|e| e.in_stage("scale"))?,
            None => original.clone(),
        };
        let balanced = smote_resample(&scaled, &smote).map_err(|e| e.in_stage("resample"))?;
        let split = stratified_split(balanced.labels(), cfg.split.ratios, cfg.split.seed)
            .map_err(|e| e.in_stage("split"))?;
        return Ok(PreparedData {
            train: balanced.select_rows(&split.train),
            validation: balanced.select_rows(&split.validation),
            test: balanced.select_rows(&split.test),
            split_source_counts: balanced.class_counts(),
            original,
            split,
            scaler,
        });
    }
    let split =
        stratified_split(original.labels(), cfg.split.ratios, cfg.split.seed).map_err(|e| e.in_stage("split"))?;
    let scaler = if cfg.scaling.enabled {
        Some(fit_scaler(&original, &split.train).map_err(|e| e.in_stage("scale"))?)
    } else {
        None
    };
    let scaled = match &scaler {
        Some(s) => apply_scaler(&original, s).map_err(|e| e.in_stage("scale"))?,
        None => original.clone(),
    };
    let mut train = scaled.select_rows(&split.train);
    if cfg.resample.enabled {
        train = smote_resample(&train, &smote).map_err(|e| e.in_stage("resample"))?;
    }
    Ok(PreparedData {
        validation: scaled.select_rows(&split.validation),
        test: scaled.select_rows(&split.test),
        split_source_counts: original.class_counts(),
        train,
        original,
        split,
        scaler,
    })
}

/// Everything fitted by a run, for persistence.
#[derive(Debug, Clone)]
pub struct FittedModels {
    pub bases: Vec<TrainedModel>,
    pub majority: VotingEnsemble,
    pub weighted: VotingEnsemble,
    pub stacking: StackingEnsemble,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub report: RunReport,
    pub models: FittedModels,
    pub bundle: ModelBundle,
}

/// What had been computed when a stage failed.
#[derive(Debug, Default, Serialize, Deserialize)]
pub struct PartialRun {
    pub failed_stage: String,
    pub error: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<DataSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub leaderboard: Option<Leaderboard>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selected: Option<Vec<String>>,
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Stage { .. } => e,
        other => other.in_stage(name),
    })
}

fn evaluate_model(
    model: &str,
    kind: ModelKind,
    partition: Partition,
    table: &DataTable,
    pred: Vec<usize>,
    proba: Option<Matrix>,
) -> Result<EvaluationReport> {
    let (confusion, metrics) = metrics::evaluate(table.labels(), &pred, proba.as_ref(), table.class_names())?;
    Ok(EvaluationReport {
        model: model.to_string(),
        kind,
        partition,
        confusion,
        metrics,
    })
}

/// Runs the whole pipeline on the rayon pool of the caller. On failure the
/// partial results are written to `<output>/quarantine/`.
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunReport> {
    run_pipeline_full(cfg).map(|o| o.report)
}

pub fn run_pipeline_full(cfg: &RunConfig) -> Result<PipelineOutput> {
    let mut partial = PartialRun::default();
    let started = Instant::now();
    match run_stages(cfg, &mut partial, started) {
        Ok(out) => Ok(out),
        Err(e) => {
            partial.failed_stage = match &e {
                Error::Stage { stage, .. } => stage.to_string(),
                _ => "unknown".into(),
            };
            partial.error = e.to_string();
            if let Err(q) = write_quarantine(&cfg.output.dir, &partial) {
                log::error!("could not write quarantine output: {q}");
            }
            Err(e)
        }
    }
}

fn write_quarantine(dir: &Path, partial: &PartialRun) -> Result<()> {
    let q = dir.join("quarantine");
    std::fs::create_dir_all(&q).map_err(|e| Error::io(&q, e))?;
    let path = q.join("partial.json");
    let text = serde_json::to_string_pretty(partial)?;
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    if let Some(lb) = &partial.leaderboard {
        let path = q.join("leaderboard.csv");
        std::fs::write(&path, lb.to_csv()?).map_err(|e| Error::io(&path, e))?;
    }
    log::warn!("partial results written to {}", q.display());
    Ok(())
}

fn run_stages(cfg: &RunConfig, partial: &mut PartialRun, started: Instant) -> Result<PipelineOutput> {
    let original = stage("load", load_csv(&cfg.dataset.path, &cfg.dataset.columns))?;
    log::info!(
        "loaded {} rows, {} features, {} classes from {}",
        original.n_rows(),
        original.n_features(),
        original.n_classes(),
        cfg.dataset.path.display()
    );
    let outliers = stage("inspect", outlier_scan(&original))?;
    let correlated = most_correlated_feature(&original);

    let data = prepare(cfg, original)?;
    let summary = DataSummary {
        rows: data.original.n_rows(),
        features: data.original.feature_names().to_vec(),
        class_names: data.original.class_names().to_vec(),
        class_counts: data.original.class_counts(),
        split_source_counts: data.split_source_counts.clone(),
        train_counts: data.train.class_counts(),
        validation_counts: data.validation.class_counts(),
        test_counts: data.test.class_counts(),
        resample_scope: cfg.resample.enabled.then_some(cfg.resample.scope),
        most_correlated_feature: correlated.clone().map(|(feature, pearson_r)| CorrelatedFeature { feature, pearson_r }),
        outliers: outliers.clone(),
    };
    partial.data = Some(summary.clone());
    if let Some((name, r)) = &correlated {
        log::info!("most correlated feature with the label: {name} (r = {r:.4})");
    }

    let sweep = cfg.sweep_config();
    let leaderboard = stage("sweep", run_sweep(&sweep, &data.train))?;
    partial.leaderboard = Some(leaderboard.clone());
    let selected = stage("select", leaderboard.top(cfg.sweep.top_k))?;
    partial.selected = Some(selected.iter().map(|s| s.id.clone()).collect());
    log::info!(
        "selected: {}",
        selected.iter().map(|s| s.id.as_str()).collect::<Vec<_>>().join(", ")
    );

    let k = data.train.n_classes();
    let bases = stage(
        "fit_bases",
        selected
            .iter()
            .enumerate()
            .map(|(m, s)| {
                learners::fit(
                    s,
                    data.train.features(),
                    data.train.labels(),
                    k,
                    rng::derive(cfg.ensemble.seed, 1000 + m as u64),
                )
            })
            .collect::<Result<Vec<_>>>(),
    )?;

    let (majority, weighted, stacking, members) = stage("ensemble", {
        (|| {
            let mut members = Vec::new();
            let mut scores = Vec::new();
            for (rank, b) in bases.iter().enumerate() {
                let pred = b.predict(data.validation.features())?;
                let proba = b.predict_proba(data.validation.features())?;
                let (_, bundle) = metrics::evaluate(
                    data.validation.labels(),
                    &pred,
                    Some(&proba),
                    data.validation.class_names(),
                )?;
                let score = bundle.get(&cfg.ensemble.weight_metric).ok_or_else(|| {
                    Error::Config(format!("weight metric '{}' unavailable", cfg.ensemble.weight_metric))
                })?;
                scores.push(score);
                members.push(SelectedMember {
                    id: b.spec.id.clone(),
                    family: b.spec.family,
                    rank: rank + 1,
                    validation_score: score,
                    weight: 0.0,
                });
            }
            let majority = VotingEnsemble::majority(bases.clone())?;
            let weighted = VotingEnsemble::weighted(bases.clone(), &scores)?;
            for (m, w) in members.iter_mut().zip(&weighted.weights) {
                m.weight = *w;
            }
            let (stacking, _) = fit_stacking_with_bases(bases.clone(), &data.train, &cfg.ensemble.stacking())?;
            Ok((majority, weighted, stacking, members))
        })()
    })?;

    let evaluations = stage("evaluate", {
        (|| {
            let mut out = Vec::new();
            for (partition, table) in [(Partition::Test, &data.test), (Partition::Train, &data.train)] {
                let x = table.features();
                for b in &bases {
                    out.push(evaluate_model(
                        &b.spec.id,
                        ModelKind::Base,
                        partition,
                        table,
                        b.predict(x)?,
                        Some(b.predict_proba(x)?),
                    )?);
                }
                out.push(evaluate_model(MAJORITY, ModelKind::Ensemble, partition, table, majority.predict(x)?, None)?);
                out.push(evaluate_model(WEIGHTED, ModelKind::Ensemble, partition, table, weighted.predict(x)?, None)?);
                let meta = stacking.meta_features(x)?;
                out.push(evaluate_model(
                    STACKING,
                    ModelKind::Ensemble,
                    partition,
                    table,
                    stacking.predict_meta(&meta, &stacking.layout)?,
                    Some(stacking.predict_proba_meta(&meta, &stacking.layout)?),
                )?);
            }
            Ok(out)
        })()
    })?;

    let report = RunReport {
        data: summary,
        leaderboard,
        selected: members,
        evaluations,
        provenance: Provenance::new(cfg, started.elapsed().as_secs_f64()),
    };
    let models = FittedModels {
        bases,
        majority,
        weighted,
        stacking,
    };
    let bundle = ModelBundle::new(&data.original, data.scaler.clone(), &models);
    Ok(PipelineOutput {
        report,
        models,
        bundle,
    })
}
