//! TOML run configuration.
//!
//! Relative paths (dataset, specs file, output directory) are resolved
//! against the directory containing the config file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ensemble::{default_meta_spec, MetaFeatures, StackingConfig};
use crate::error::{Error, Result};
use crate::learners::LearnerSpec;
use crate::metrics::MetricBundle;
use crate::modelsel::SweepConfig;
use crate::resample::{ResampleScope, SmoteConfig};
use crate::tabular::{validate_schema, ColumnSchema};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub path: PathBuf,
    pub columns: Vec<ColumnSchema>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSection {
    pub ratios: [f64; 3],
    pub seed: u64,
}

impl Default for SplitSection {
    fn default() -> Self {
        Self {
            ratios: [0.6, 0.2, 0.2],
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScalingSection {
    pub enabled: bool,
}

impl Default for ScalingSection {
    fn default() -> Self {
        Self { enabled: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResampleSection {
    pub enabled: bool,
    pub k_neighbors: usize,
    pub seed: u64,
    pub scope: ResampleScope,
}

impl Default for ResampleSection {
    fn default() -> Self {
        Self {
            enabled: true,
            k_neighbors: 5,
            seed: 0,
            scope: ResampleScope::TrainOnly,
        }
    }
}

impl ResampleSection {
    pub fn smote(&self) -> SmoteConfig {
        SmoteConfig {
            k_neighbors: self.k_neighbors,
            seed: self.seed,
            scope: self.scope,
        }
    }
}

fn default_scoring() -> Vec<String> {
    vec!["roc_auc".into(), "f1_macro".into()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default = "ten")]
    pub folds: usize,
    #[serde(default = "default_scoring")]
    pub scoring: Vec<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "three")]
    pub top_k: usize,
    /// Specs file with a top-level `[[specs]]` array; its specs come first.
    #[serde(default)]
    pub specs_file: Option<PathBuf>,
    #[serde(default)]
    pub specs: Vec<LearnerSpec>,
}

fn ten() -> usize {
    10
}

fn three() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleSection {
    /// Validation metric that weights the weighted vote.
    pub weight_metric: String,
    pub stacking_folds: usize,
    pub meta_features: MetaFeatures,
    pub out_of_fold: bool,
    pub seed: u64,
    pub meta: Option<LearnerSpec>,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        Self {
            weight_metric: "accuracy".into(),
            stacking_folds: 10,
            meta_features: MetaFeatures::Probabilities,
            out_of_fold: true,
            seed: 0,
            meta: None,
        }
    }
}

impl EnsembleSection {
    pub fn stacking(&self) -> StackingConfig {
        StackingConfig {
            folds: self.stacking_folds,
            meta_features: self.meta_features,
            out_of_fold: self.out_of_fold,
            seed: self.seed,
            meta_spec: self.meta.clone().unwrap_or_else(default_meta_spec),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetSection,
    #[serde(default)]
    pub split: SplitSection,
    #[serde(default)]
    pub scaling: ScalingSection,
    #[serde(default)]
    pub resample: ResampleSection,
    pub sweep: SweepSection,
    #[serde(default)]
    pub ensemble: EnsembleSection,
    #[serde(default)]
    pub output: OutputSection,
    /// SHA-256 over the config bytes and the specs-file bytes.
    #[serde(skip)]
    pub hash: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecsFile {
    specs: Vec<LearnerSpec>,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Reads a `[[specs]]` file.
pub fn load_specs(path: &Path) -> Result<Vec<LearnerSpec>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_specs(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

pub fn parse_specs(text: &str) -> Result<Vec<LearnerSpec>> {
    let f: SpecsFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    Ok(f.specs)
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_bytes(&bytes, base).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Parses config text, resolving relative paths against `base`.
    pub fn from_bytes(bytes: &[u8], base: &Path) -> Result<Self> {
        let text = std::str::from_utf8(bytes).map_err(|e| Error::Config(format!("not UTF-8: {e}")))?;
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut hasher = Sha256::new();
        hasher.update(bytes);
        cfg.dataset.path = resolve(base, &cfg.dataset.path);
        cfg.output.dir = resolve(base, &cfg.output.dir);
        if let Some(sf) = cfg.sweep.specs_file.take() {
            let sf = resolve(base, &sf);
            let spec_bytes = std::fs::read(&sf).map_err(|e| Error::io(&sf, e))?;
            hasher.update(b"\0specs\0");
            hasher.update(&spec_bytes);
            let mut specs = load_specs(&sf)?;
            specs.append(&mut cfg.sweep.specs);
            cfg.sweep.specs = specs;
            cfg.sweep.specs_file = Some(sf);
        }
        cfg.hash = hex::encode(hasher.finalize());
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        validate_schema(&self.dataset.columns).map_err(|e| Error::Config(e.to_string()))?;
        let r = self.split.ratios;
        if r.iter().any(|v| *v < 0.0) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split ratios {r:?} must be non-negative and sum to 1")));
        }
        if r[0] <= 0.0 || r[1] <= 0.0 || r[2] <= 0.0 {
            return Err(Error::Config("every split partition needs a positive ratio".into()));
        }
        if self.resample.k_neighbors == 0 {
            return Err(Error::Config("resample.k_neighbors must be at least 1".into()));
        }
        self.sweep_config().validate().map_err(|e| match e {
            Error::InvalidParam { .. } | Error::Config(_) => e,
            other => Error::Config(other.to_string()),
        })?;
        if self.sweep.top_k == 0 || self.sweep.top_k > self.sweep.specs.len() {
            return Err(Error::Config(format!(
                "top_k = {} must be between 1 and the number of specs ({})",
                self.sweep.top_k,
                self.sweep.specs.len()
            )));
        }
        if !MetricBundle::NAMES.contains(&self.ensemble.weight_metric.as_str()) {
            return Err(Error::Config(format!(
                "unknown weight_metric '{}' (known: {:?})",
                self.ensemble.weight_metric,
                MetricBundle::NAMES
            )));
        }
        if self.ensemble.stacking_folds < 2 {
            return Err(Error::Config("ensemble.stacking_folds must be at least 2".into()));
        }
        let meta = self.ensemble.stacking().meta_spec;
        if meta.family != crate::learners::Family::Mlp {
            return Err(Error::Config(format!("ensemble.meta must be an mlp spec, got {}", meta.family)));
        }
        meta.validate()?;
        Ok(())
    }

    pub fn sweep_config(&self) -> SweepConfig {
        SweepConfig {
            specs: self.sweep.specs.clone(),
            folds: self.sweep.folds,
            scoring: self.sweep.scoring.clone(),
            seed: self.sweep.seed,
        }
    }

    /// Replaces every seed (split, resample, sweep, ensemble).
    pub fn override_seed(&mut self, seed: u64) {
        self.split.seed = seed;
        self.resample.seed = seed;
        self.sweep.seed = seed;
        self.ensemble.seed = seed;
        let mut hasher = Sha256::new();
        hasher.update(self.hash.as_bytes());
        hasher.update(format!("\0seed-override\0{seed}").as_bytes());
        self.hash = hex::encode(hasher.finalize());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[dataset]
path = "data.csv"
columns = [
  { name = "a", kind = "numeric" },
  { name = "t", kind = "target" },
]

[sweep]
top_k = 1
specs = [{ id = "NB1", family = "gaussian_nb" }]
"#;

    #[test]
    fn minimal_config_defaults() {
        let cfg = RunConfig::from_bytes(MINIMAL.as_bytes(), Path::new("/cfg")).unwrap();
        assert_eq!(cfg.dataset.path, PathBuf::from("/cfg/data.csv"));
        assert_eq!(cfg.split.ratios, [0.6, 0.2, 0.2]);
        assert_eq!(cfg.sweep.folds, 10);
        assert_eq!(cfg.resample.scope, ResampleScope::TrainOnly);
        assert_eq!(cfg.output.dir, PathBuf::from("/cfg/out"));
        assert_eq!(cfg.hash.len(), 64);
    }

    #[test]
    fn hash_tracks_bytes() {
        let a = RunConfig::from_bytes(MINIMAL.as_bytes(), Path::new(".")).unwrap();
        let b = RunConfig::from_bytes(format!("{MINIMAL}\n").as_bytes(), Path::new(".")).unwrap();
        assert_ne!(a.hash, b.hash);
    }

    #[test]
    fn bad_configs_rejected() {
        let bad = MINIMAL.replace("gaussian_nb", "no_such_family");
        assert!(matches!(RunConfig::from_bytes(bad.as_bytes(), Path::new(".")), Err(Error::Config(_))));
        let bad = format!("{MINIMAL}\n[split]\nratios = [0.5, 0.2, 0.2]\n");
        assert!(RunConfig::from_bytes(bad.as_bytes(), Path::new(".")).is_err());
        let bad = MINIMAL.replace("top_k = 1", "top_k = 2");
        assert!(RunConfig::from_bytes(bad.as_bytes(), Path::new(".")).is_err());
        let bad = MINIMAL.replace(r#"family = "gaussian_nb""#, r#"family = "gaussian_nb", params = { bogus = 1 }"#);
        let err = RunConfig::from_bytes(bad.as_bytes(), Path::new(".")).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
