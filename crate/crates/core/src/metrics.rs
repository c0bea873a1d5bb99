//! Classification metrics: confusion matrix, precision/recall/F1 with macro
//! averaging, accuracy, one-vs-rest ROC-AUC and average precision.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
    pub class_names: Vec<String>,
}

impl ConfusionMatrix {
    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn tp(&self, c: usize) -> u64 {
        self.counts[c][c]
    }

    pub fn fp(&self, c: usize) -> u64 {
        self.counts.iter().map(|row| row[c]).sum::<u64>() - self.tp(c)
    }

    pub fn fn_(&self, c: usize) -> u64 {
        self.counts[c].iter().sum::<u64>() - self.tp(c)
    }

    pub fn tn(&self, c: usize) -> u64 {
        self.total() - self.tp(c) - self.fp(c) - self.fn_(c)
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    /// CSV with a header row and a leading column of class names.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("true\\predicted");
        for name in &self.class_names {
            out.push(',');
            out.push_str(&csv_field(name));
        }
        out.push('\n');
        for (name, row) in self.class_names.iter().zip(&self.counts) {
            out.push_str(&csv_field(name));
            for v in row {
                out.push(',');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn confusion_matrix(y_true: &[usize], y_pred: &[usize], k: usize) -> Result<ConfusionMatrix> {
    let names = (0..k).map(|c| c.to_string()).collect();
    confusion_matrix_named(y_true, y_pred, names)
}

pub fn confusion_matrix_named(
    y_true: &[usize],
    y_pred: &[usize],
    class_names: Vec<String>,
) -> Result<ConfusionMatrix> {
    let k = class_names.len();
    if y_true.len() != y_pred.len() {
        return Err(Error::DimensionMismatch {
            expected: y_true.len(),
            got: y_pred.len(),
        });
    }
    let mut counts = vec![vec![0u64; k]; k];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if t >= k || p >= k {
            return Err(Error::invalid(format!(
                "class id {} out of range for {k} classes",
                t.max(p)
            )));
        }
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix {
        counts,
        class_names,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
    pub precision_macro: f64,
    pub recall_macro: f64,
    pub f1_macro: f64,
    /// Number of per-class values that hit a zero denominator and were set to 0.
    pub zero_division: usize,
}

fn ratio(num: f64, den: f64, zero_division: &mut usize) -> f64 {
    if den == 0.0 {
        *zero_division += 1;
        0.0
    } else {
        num / den
    }
}

pub fn precision_recall_f1(cm: &ConfusionMatrix) -> ClassScores {
    let k = cm.n_classes();
    let mut zd = 0;
    let mut precision = Vec::with_capacity(k);
    let mut recall = Vec::with_capacity(k);
    let mut f1 = Vec::with_capacity(k);
    for c in 0..k {
        let tp = cm.tp(c) as f64;
        let p = ratio(tp, tp + cm.fp(c) as f64, &mut zd);
        let r = ratio(tp, tp + cm.fn_(c) as f64, &mut zd);
        let f = ratio(2.0 * p * r, p + r, &mut zd);
        precision.push(p);
        recall.push(r);
        f1.push(f);
    }
    if zd > 0 {
        log::debug!("{zd} per-class metric value(s) had a zero denominator");
    }
    let mean = |v: &[f64]| {
        if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    ClassScores {
        precision_macro: mean(&precision),
        recall_macro: mean(&recall),
        f1_macro: mean(&f1),
        precision,
        recall,
        f1,
        zero_division: zd,
    }
}

/// trace / total.
pub fn accuracy(cm: &ConfusionMatrix) -> f64 {
    let total = cm.total();
    if total == 0 {
        return 0.0;
    }
    let trace: u64 = (0..cm.n_classes()).map(|c| cm.tp(c)).sum();
    trace as f64 / total as f64
}

/// Binary AUC by the rank statistic; tied positive/negative pairs count half.
/// Returns `None` when either side is empty.
pub fn binary_auc(positive: &[bool], scores: &[f64]) -> Option<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // average ranks over tie groups, then Mann-Whitney U
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        let pos_in_group = order[i..=j].iter().filter(|&&r| positive[r]).count();
        rank_sum_pos += avg_rank * pos_in_group as f64;
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

/// Average precision, `Σ (R_k − R_{k−1}) · P_k` over descending distinct
/// score thresholds. `None` when there are no positives.
pub fn binary_average_precision(positive: &[bool], scores: &[f64]) -> Option<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    if n_pos == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut ap = 0.0;
    let mut tp = 0usize;
    let mut seen = 0usize;
    let mut prev_recall = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        for &r in &order[i..=j] {
            seen += 1;
            if positive[r] {
                tp += 1;
            }
        }
        let recall = tp as f64 / n_pos as f64;
        let precision = tp as f64 / seen as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j + 1;
    }
    Some(ap)
}

fn ovr_macro(
    y_true: &[usize],
    proba: &Matrix,
    what: &str,
    per_class: impl Fn(&[bool], &[f64]) -> Option<f64>,
) -> Result<f64> {
    if y_true.len() != proba.rows() {
        return Err(Error::DimensionMismatch {
            expected: y_true.len(),
            got: proba.rows(),
        });
    }
    let k = proba.cols();
    if let Some(&bad) = y_true.iter().find(|&&y| y >= k) {
        return Err(Error::invalid(format!("class id {bad} out of range for {k} classes")));
    }
    let present = {
        let mut seen = vec![false; k];
        for &y in y_true {
            seen[y] = true;
        }
        seen
    };
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(Error::invalid(format!(
            "{what} needs at least two classes present in y_true"
        )));
    }
    let mut total = 0.0;
    let mut used = 0usize;
    for c in 0..k {
        if !present[c] {
            log::warn!("{what}: class {c} absent from y_true, skipped");
            continue;
        }
        let pos: Vec<bool> = y_true.iter().map(|&y| y == c).collect();
        let scores = proba.column(c);
        if let Some(v) = per_class(&pos, &scores) {
            total += v;
            used += 1;
        }
    }
    Ok(total / used as f64)
}

/// Macro mean of per-class one-vs-rest AUC.
pub fn roc_auc_ovr_macro(y_true: &[usize], proba: &Matrix) -> Result<f64> {
    ovr_macro(y_true, proba, "roc_auc", binary_auc)
}

pub fn average_precision_macro(y_true: &[usize], proba: &Matrix) -> Result<f64> {
    ovr_macro(y_true, proba, "average_precision", binary_average_precision)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricBundle {
    pub accuracy: f64,
    pub precision_macro: f64,
    pub recall_macro: f64,
    pub f1_macro: f64,
    /// Absent for models that expose only hard labels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub roc_auc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub average_precision: Option<f64>,
}

impl MetricBundle {
    /// Looks a metric up by its report name.
    pub fn get(&self, name: &str) -> Option<f64> {
        match name {
            "accuracy" => Some(self.accuracy),
            "precision_macro" => Some(self.precision_macro),
            "recall_macro" => Some(self.recall_macro),
            "f1_macro" | "f1" => Some(self.f1_macro),
            "roc_auc" => self.roc_auc,
            "average_precision" => self.average_precision,
            _ => None,
        }
    }

    pub const NAMES: [&'static str; 6] = [
        "roc_auc",
        "average_precision",
        "accuracy",
        "f1_macro",
        "precision_macro",
        "recall_macro",
    ];
}

/// Evaluates hard predictions, plus probability metrics when `proba` is given.
pub fn evaluate(
    y_true: &[usize],
    y_pred: &[usize],
    proba: Option<&Matrix>,
    class_names: &[String],
) -> Result<(ConfusionMatrix, MetricBundle)> {
    let cm = confusion_matrix_named(y_true, y_pred, class_names.to_vec())?;
    let scores = precision_recall_f1(&cm);
    let (roc_auc, average_precision) = match proba {
        Some(p) => (
            Some(roc_auc_ovr_macro(y_true, p)?),
            Some(average_precision_macro(y_true, p)?),
        ),
        None => (None, None),
    };
    let bundle = MetricBundle {
        accuracy: accuracy(&cm),
        precision_macro: scores.precision_macro,
        recall_macro: scores.recall_macro,
        f1_macro: scores.f1_macro,
        roc_auc,
        average_precision,
    };
    Ok((cm, bundle))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confusion_examples() {
        let cm = confusion_matrix(&[0, 1, 2], &[0, 1, 2], 3).unwrap();
        assert_eq!(cm.counts, vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]]);
        let cm = confusion_matrix(&[0, 0, 1], &[0, 1, 1], 2).unwrap();
        assert_eq!(cm.counts, vec![vec![1, 1], vec![0, 1]]);
        assert_eq!(cm.total(), 3);
        assert!(confusion_matrix(&[0, 1], &[0], 2).is_err());
        assert!(confusion_matrix(&[0, 2], &[0, 1], 2).is_err());
    }

    #[test]
    fn prf_hand_example() {
        let cm = confusion_matrix(&[0, 0, 1], &[0, 1, 1], 2).unwrap();
        let s = precision_recall_f1(&cm);
        assert_eq!(s.precision, vec![1.0, 0.5]);
        assert_eq!(s.recall, vec![0.5, 1.0]);
        assert!((s.f1[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((s.f1[1] - 2.0 / 3.0).abs() < 1e-15);
        assert!((s.f1_macro - 2.0 / 3.0).abs() < 1e-15);
        assert!((accuracy(&cm) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn perfect_and_absent_class() {
        let cm = confusion_matrix(&[0, 1], &[0, 1], 3).unwrap();
        let s = precision_recall_f1(&cm);
        assert_eq!(s.precision, vec![1.0, 1.0, 0.0]);
        assert_eq!(s.f1[2], 0.0);
        assert_eq!(s.zero_division, 3);
        assert_eq!(accuracy(&cm), 1.0);
    }

    #[test]
    fn tp_fp_fn_tn_partition() {
        let cm = confusion_matrix(&[0, 0, 1, 2, 2, 2], &[0, 2, 1, 2, 0, 1], 3).unwrap();
        for c in 0..3 {
            assert_eq!(cm.tp(c) + cm.fp(c) + cm.fn_(c) + cm.tn(c), cm.total());
        }
        assert_eq!((cm.tp(2), cm.fp(2), cm.fn_(2), cm.tn(2)), (1, 1, 2, 2));
    }

    #[test]
    fn auc_examples() {
        let pos = [true, true, false, false];
        assert_eq!(binary_auc(&pos, &[0.9, 0.4, 0.6, 0.1]), Some(0.75));
        assert_eq!(binary_auc(&pos, &[0.9, 0.8, 0.2, 0.1]), Some(1.0));
        assert_eq!(binary_auc(&pos, &[0.5; 4]), Some(0.5));
        assert_eq!(binary_auc(&[true, true], &[0.1, 0.2]), None);
    }

    #[test]
    fn ap_examples() {
        assert_eq!(binary_average_precision(&[true, false], &[0.2, 0.8]), Some(0.5));
        assert_eq!(
            binary_average_precision(&[true, false, true], &[0.9, 0.1, 0.8]),
            Some(1.0)
        );
    }

    #[test]
    fn ovr_identical_scores() {
        let p = Matrix::from_rows(&[[0.5, 0.5], [0.5, 0.5], [0.5, 0.5]]).unwrap();
        assert_eq!(roc_auc_ovr_macro(&[0, 1, 1], &p).unwrap(), 0.5);
    }

    #[test]
    fn ovr_single_class_is_error() {
        let p = Matrix::from_rows(&[[0.5, 0.5], [0.2, 0.8]]).unwrap();
        assert!(roc_auc_ovr_macro(&[1, 1], &p).is_err());
    }

    #[test]
    fn ovr_skips_absent_class() {
        let p = Matrix::from_rows(&[[0.8, 0.1, 0.1], [0.1, 0.8, 0.1]]).unwrap();
        assert_eq!(roc_auc_ovr_macro(&[0, 1], &p).unwrap(), 1.0);
    }

    #[test]
    fn confusion_csv_layout() {
        let cm = confusion_matrix_named(&[0, 1], &[1, 1], vec!["a".into(), "b,c".into()]).unwrap();
        assert_eq!(cm.to_csv(), "true\\predicted,a,\"b,c\"\na,0,1\n\"b,c\",0,1\n");
    }
}
