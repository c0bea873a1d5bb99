//! Tabular data: CSV loading with a declared schema, label encoding,
//! min-max scaling, stratified partitioning and an IQR outlier scan.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    Categorical,
    Target,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    pub kind: ColumnKind,
    /// Declared category order. When absent for a categorical or target
    /// column, categories are discovered in first-appearance order at load.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub categories: Option<Vec<String>>,
}

impl ColumnSchema {
    pub fn numeric(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Numeric,
            categories: None,
        }
    }

    pub fn categorical(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Categorical,
            categories: None,
        }
    }

    pub fn target(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Target,
            categories: None,
        }
    }

    pub fn with_categories<S: Into<String>>(mut self, cats: impl IntoIterator<Item = S>) -> Self {
        self.categories = Some(cats.into_iter().map(Into::into).collect());
        self
    }
}

/// Checks the structural schema invariants: one target column, unique
/// names, and non-empty duplicate-free category lists where declared.
pub fn validate_schema(schema: &[ColumnSchema]) -> Result<()> {
    let targets = schema
        .iter()
        .filter(|c| c.kind == ColumnKind::Target)
        .count();
    if targets != 1 {
        return Err(Error::Schema(format!(
            "exactly one target column required, found {targets}"
        )));
    }
    if schema.len() < 2 {
        return Err(Error::Schema("at least one feature column required".into()));
    }
    let mut seen = HashMap::new();
    for (i, col) in schema.iter().enumerate() {
        if let Some(prev) = seen.insert(col.name.as_str(), i) {
            return Err(Error::Schema(format!(
                "duplicate column name '{}' at positions {prev} and {i}",
                col.name
            )));
        }
        if let Some(cats) = &col.categories {
            if col.kind == ColumnKind::Numeric {
                return Err(Error::Schema(format!(
                    "numeric column '{}' cannot declare categories",
                    col.name
                )));
            }
            if cats.is_empty() {
                return Err(Error::Schema(format!(
                    "column '{}' declares an empty category list",
                    col.name
                )));
            }
            let mut uniq = std::collections::HashSet::new();
            for c in cats {
                if !uniq.insert(c) {
                    return Err(Error::Schema(format!(
                        "column '{}' declares category '{c}' twice",
                        col.name
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Integer ids for text categories, in first-appearance order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelEncoding {
    categories: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl LabelEncoding {
    pub fn from_categories(categories: Vec<String>) -> Self {
        let index = categories
            .iter()
            .enumerate()
            .map(|(i, c)| (c.clone(), i))
            .collect();
        Self { categories, index }
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    pub fn id(&self, value: &str) -> Option<usize> {
        if self.index.is_empty() && !self.categories.is_empty() {
            // deserialized without the lookup table
            return self.categories.iter().position(|c| c == value);
        }
        self.index.get(value).copied()
    }

    pub fn decode(&self, id: usize) -> Option<&str> {
        self.categories.get(id).map(String::as_str)
    }

    /// Assigns the next id to an unseen value.
    fn intern(&mut self, value: &str) -> usize {
        if let Some(id) = self.id(value) {
            return id;
        }
        let id = self.categories.len();
        self.categories.push(value.to_string());
        self.index.insert(value.to_string(), id);
        id
    }
}

/// Encodes text values as ids by first appearance, starting at 0.
pub fn label_encode<S: AsRef<str>>(values: &[S]) -> Result<(Vec<usize>, LabelEncoding)> {
    if values.is_empty() {
        return Err(Error::invalid("label_encode on an empty list"));
    }
    let mut enc = LabelEncoding::from_categories(Vec::new());
    let ids = values.iter().map(|v| enc.intern(v.as_ref())).collect();
    Ok((ids, enc))
}

/// Numeric features plus integer class labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataTable {
    schema: Vec<ColumnSchema>,
    feature_names: Vec<String>,
    feature_kinds: Vec<ColumnKind>,
    features: Matrix,
    labels: Vec<usize>,
    class_names: Vec<String>,
}

impl DataTable {
    /// Builds a table from already-numeric data, with generated column
    /// names `x0..xN` and a `target` column.
    pub fn new(features: Matrix, labels: Vec<usize>, class_names: Vec<String>) -> Result<Self> {
        let names = (0..features.cols()).map(|j| format!("x{j}")).collect();
        Self::with_names(features, labels, class_names, names)
    }

    pub fn with_names(
        features: Matrix,
        labels: Vec<usize>,
        class_names: Vec<String>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        if feature_names.len() != features.cols() {
            return Err(Error::DimensionMismatch {
                expected: features.cols(),
                got: feature_names.len(),
            });
        }
        let mut schema: Vec<ColumnSchema> =
            feature_names.iter().map(ColumnSchema::numeric).collect();
        schema.push(ColumnSchema::target("target").with_categories(class_names.clone()));
        let kinds = vec![ColumnKind::Numeric; features.cols()];
        Self::assemble(schema, feature_names, kinds, features, labels, class_names)
    }

    fn assemble(
        schema: Vec<ColumnSchema>,
        feature_names: Vec<String>,
        feature_kinds: Vec<ColumnKind>,
        features: Matrix,
        labels: Vec<usize>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: features.rows(),
                got: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_names.len()) {
            return Err(Error::invalid(format!(
                "label id {bad} out of range for {} classes",
                class_names.len()
            )));
        }
        if !features.all_finite() {
            return Err(Error::invalid("features contain non-finite values"));
        }
        Ok(Self {
            schema,
            feature_names,
            feature_kinds,
            features,
            labels,
            class_names,
        })
    }

    pub fn schema(&self) -> &[ColumnSchema] {
        &self.schema
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn feature_kinds(&self) -> &[ColumnKind] {
        &self.feature_kinds
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.features.cols()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        class_counts(&self.labels, self.n_classes())
    }

    /// Table restricted to `rows`, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> DataTable {
        DataTable {
            schema: self.schema.clone(),
            feature_names: self.feature_names.clone(),
            feature_kinds: self.feature_kinds.clone(),
            features: self.features.select_rows(rows),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            class_names: self.class_names.clone(),
        }
    }

    /// Same schema and classes with replaced features/labels.
    pub fn with_data(&self, features: Matrix, labels: Vec<usize>) -> Result<DataTable> {
        if features.cols() != self.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.n_features(),
                got: features.cols(),
            });
        }
        Self::assemble(
            self.schema.clone(),
            self.feature_names.clone(),
            self.feature_kinds.clone(),
            features,
            labels,
            self.class_names.clone(),
        )
    }

    /// Schema with every categorical/target column's categories filled in,
    /// suitable for re-reading evaluation files with the same encoding.
    pub fn resolved_schema(&self) -> Vec<ColumnSchema> {
        self.schema.clone()
    }
}

pub fn class_counts(labels: &[usize], n_classes: usize) -> Vec<usize> {
    let mut counts = vec![0; n_classes];
    for &l in labels {
        counts[l] += 1;
    }
    counts
}

pub fn load_csv(path: impl AsRef<Path>, schema: &[ColumnSchema]) -> Result<DataTable> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, schema)
}

/// Parses RFC-4180 CSV (header row first) against `schema`.
pub fn read_csv<R: Read>(reader: R, schema: &[ColumnSchema]) -> Result<DataTable> {
    validate_schema(schema)?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::Fields)
        .from_reader(reader);

    let header = rdr.headers()?.clone();
    let got: Vec<&str> = header.iter().collect();
    let want: Vec<&str> = schema.iter().map(|c| c.name.as_str()).collect();
    if got != want {
        return Err(Error::Schema(format!(
            "header mismatch: expected {want:?}, found {got:?}"
        )));
    }

    let mut encoders: Vec<Option<(LabelEncoding, bool)>> = schema
        .iter()
        .map(|c| match c.kind {
            ColumnKind::Numeric => None,
            _ => Some(match &c.categories {
                Some(cats) => (LabelEncoding::from_categories(cats.clone()), true),
                None => (LabelEncoding::from_categories(Vec::new()), false),
            }),
        })
        .collect();

    let n_features = schema.len() - 1;
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let row_no = r + 1;
        for (c, (cell, col)) in record.iter().zip(schema).enumerate() {
            if cell.is_empty() {
                return Err(Error::Cell {
                    row: row_no,
                    column: col.name.clone(),
                    message: "missing value".into(),
                });
            }
            match (&mut encoders[c], col.kind) {
                (None, _) => {
                    let v: f64 = cell.parse().map_err(|_| Error::Cell {
                        row: row_no,
                        column: col.name.clone(),
                        message: format!("cannot parse '{cell}' as a number"),
                    })?;
                    if !v.is_finite() {
                        return Err(Error::Cell {
                            row: row_no,
                            column: col.name.clone(),
                            message: format!("non-finite value '{cell}'"),
                        });
                    }
                    data.push(v);
                }
                (Some((enc, declared)), kind) => {
                    let id = if *declared {
                        enc.id(cell).ok_or_else(|| Error::Cell {
                            row: row_no,
                            column: col.name.clone(),
                            message: format!("unknown category '{cell}'"),
                        })?
                    } else {
                        enc.intern(cell)
                    };
                    if kind == ColumnKind::Target {
                        labels.push(id);
                    } else {
                        data.push(id as f64);
                    }
                }
            }
        }
    }
    if labels.is_empty() {
        return Err(Error::invalid("CSV has no data rows"));
    }

    let mut resolved = schema.to_vec();
    let mut class_names = Vec::new();
    for (col, enc) in resolved.iter_mut().zip(&encoders) {
        if let Some((enc, _)) = enc {
            col.categories = Some(enc.categories().to_vec());
            if col.kind == ColumnKind::Target {
                class_names = enc.categories().to_vec();
            }
        }
    }
    let (feature_names, feature_kinds) = schema
        .iter()
        .filter(|c| c.kind != ColumnKind::Target)
        .map(|c| (c.name.clone(), c.kind))
        .unzip();
    let features = Matrix::from_vec(labels.len(), n_features, data)?;
    DataTable::assemble(
        resolved,
        feature_names,
        feature_kinds,
        features,
        labels,
        class_names,
    )
}

/// Per-feature extrema from a training partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl ScalerParams {
    pub fn transform_row(&self, row: &mut [f64]) {
        for ((x, &lo), &hi) in row.iter_mut().zip(&self.min).zip(&self.max) {
            let range = hi - lo;
            *x = if range > 0.0 { (*x - lo) / range } else { 0.0 };
        }
    }

    pub fn inverse_row(&self, row: &mut [f64]) {
        for ((x, &lo), &hi) in row.iter_mut().zip(&self.min).zip(&self.max) {
            *x = *x * (hi - lo) + lo;
        }
    }
}

pub fn fit_scaler(table: &DataTable, rows: &[usize]) -> Result<ScalerParams> {
    if rows.is_empty() {
        return Err(Error::invalid("fit_scaler needs at least one row"));
    }
    let d = table.n_features();
    let mut min = vec![f64::INFINITY; d];
    let mut max = vec![f64::NEG_INFINITY; d];
    for &r in rows {
        for (j, &v) in table.features().row(r).iter().enumerate() {
            min[j] = min[j].min(v);
            max[j] = max[j].max(v);
        }
    }
    Ok(ScalerParams { min, max })
}

/// Min-max transform; constant features map to 0, nothing is clipped.
pub fn apply_scaler(table: &DataTable, params: &ScalerParams) -> Result<DataTable> {
    let mut features = table.features().clone();
    scale_matrix(&mut features, params)?;
    table.with_data(features, table.labels().to_vec())
}

pub fn scale_matrix(features: &mut Matrix, params: &ScalerParams) -> Result<()> {
    if features.cols() != params.min.len() {
        return Err(Error::DimensionMismatch {
            expected: params.min.len(),
            got: features.cols(),
        });
    }
    for r in 0..features.rows() {
        params.transform_row(features.row_mut(r));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Largest-remainder apportionment of `n` items by `ratios`; ties in the
/// fractional part go to the earlier slot.
pub fn apportion(n: usize, ratios: &[f64]) -> Vec<usize> {
    let quotas: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    let mut alloc: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = alloc.iter().sum();
    let mut order: Vec<usize> = (0..ratios.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &slot in order.iter().take(n.saturating_sub(assigned)) {
        alloc[slot] += 1;
    }
    alloc
}

/// Per-class shuffled, largest-remainder train/validation/test partition.
/// Index lists are returned in ascending order.
pub fn stratified_split(labels: &[usize], ratios: [f64; 3], seed: u64) -> Result<SplitIndices> {
    if ratios.iter().any(|r| *r < 0.0) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "split ratios {ratios:?} must be non-negative and sum to 1"
        )));
    }
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        members[l].push(i);
    }
    let mut rng = rng::seeded(seed);
    let mut split = SplitIndices {
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
    };
    for (class, rows) in members.iter_mut().enumerate() {
        if rows.is_empty() {
            continue;
        }
        if rows.len() < 3 {
            return Err(Error::invalid(format!(
                "class {class} has {} member(s); at least 3 are needed to split",
                rows.len()
            )));
        }
        rows.shuffle(&mut rng);
        let sizes = apportion(rows.len(), &ratios);
        split.train.extend_from_slice(&rows[..sizes[0]]);
        split
            .validation
            .extend_from_slice(&rows[sizes[0]..sizes[0] + sizes[1]]);
        split.test.extend_from_slice(&rows[sizes[0] + sizes[1]..]);
    }
    split.train.sort_unstable();
    split.validation.sort_unstable();
    split.test.sort_unstable();
    Ok(split)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureOutliers {
    pub feature: String,
    pub q1: f64,
    pub q3: f64,
    pub lower_fence: f64,
    pub upper_fence: f64,
    pub count: usize,
}

/// Linear-interpolation quantile of sorted data (`p` in [0,1]).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Counts values outside the 1.5·IQR fences for each numeric feature.
/// Report only; the table is not modified.
pub fn outlier_scan(table: &DataTable) -> Result<Vec<FeatureOutliers>> {
    if table.n_rows() == 0 {
        return Err(Error::invalid("outlier scan on an empty table"));
    }
    let mut report = Vec::new();
    for (j, (name, kind)) in table
        .feature_names()
        .iter()
        .zip(table.feature_kinds())
        .enumerate()
    {
        if *kind != ColumnKind::Numeric {
            continue;
        }
        let col = table.features().column(j);
        let mut sorted = col.clone();
        sorted.sort_by(f64::total_cmp);
        let q1 = quantile_sorted(&sorted, 0.25);
        let q3 = quantile_sorted(&sorted, 0.75);
        let iqr = q3 - q1;
        let lower_fence = q1 - 1.5 * iqr;
        let upper_fence = q3 + 1.5 * iqr;
        let count = col
            .iter()
            .filter(|&&v| v < lower_fence || v > upper_fence)
            .count();
        report.push(FeatureOutliers {
            feature: name.clone(),
            q1,
            q3,
            lower_fence,
            upper_fence,
            count,
        });
    }
    Ok(report)
}

/// The feature with the largest absolute Pearson correlation to the
/// encoded label. Constant columns are skipped.
pub fn most_correlated_feature(table: &DataTable) -> Option<(String, f64)> {
    let y: Vec<f64> = table.labels().iter().map(|&l| l as f64).collect();
    let mut best: Option<(String, f64)> = None;
    for j in 0..table.n_features() {
        let x = table.features().column(j);
        let Some(r) = pearson(&x, &y) else { continue };
        if best.as_ref().is_none_or(|(_, b)| r.abs() > b.abs()) {
            best = Some((table.feature_names()[j].clone(), r));
        }
    }
    best
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}
