//! Exact-split binary trees over presorted columns.
//!
//! Each feature keeps its rows in ascending value order; a node owns the
//! same `[start, end)` range in every feature's order array, and splitting
//! stably partitions each range so children stay sorted. Split search is
//! one linear scan per candidate feature.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Gini,
    /// Shannon entropy in bits.
    Entropy,
    /// Shannon entropy in nats.
    LogLoss,
}

impl Criterion {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "gini" => Some(Self::Gini),
            "entropy" => Some(Self::Entropy),
            "log_loss" => Some(Self::LogLoss),
            _ => None,
        }
    }
}

/// Node impurity from class counts: gini `1 − Σp²`, entropy `−Σ p log2 p`,
/// log_loss `−Σ p ln p`.
pub fn impurity(counts: &[f64], criterion: Criterion) -> Result<f64> {
    let total: f64 = counts.iter().sum();
    if counts.iter().any(|&c| c < 0.0) {
        return Err(Error::invalid("negative class count"));
    }
    if total <= 0.0 {
        return Err(Error::invalid("impurity of an empty node"));
    }
    Ok(match criterion {
        Criterion::Gini => 1.0 - counts.iter().map(|c| (c / total).powi(2)).sum::<f64>(),
        Criterion::Entropy | Criterion::LogLoss => {
            let h: f64 = counts
                .iter()
                .filter(|&&c| c > 0.0)
                .map(|&c| {
                    let p = c / total;
                    -p * p.ln()
                })
                .sum();
            if criterion == Criterion::Entropy {
                h / std::f64::consts::LN_2
            } else {
                h
            }
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Splitter {
    Best,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    All,
    Sqrt,
    Log2,
    Count(usize),
}

impl MaxFeatures {
    pub fn resolve(self, n_features: usize) -> usize {
        let k = match self {
            MaxFeatures::All => n_features,
            MaxFeatures::Sqrt => (n_features as f64).sqrt().floor() as usize,
            MaxFeatures::Log2 => (n_features as f64).log2().floor() as usize,
            MaxFeatures::Count(k) => k,
        };
        k.clamp(1, n_features.max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub splitter: Splitter,
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub max_features: MaxFeatures,
    pub min_impurity_decrease: f64,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            splitter: Splitter::Best,
            max_depth: None,
            min_samples_split: 2,
            min_samples_leaf: 1,
            max_features: MaxFeatures::All,
            min_impurity_decrease: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node<L> {
    Leaf(L),
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree<L> {
    pub nodes: Vec<Node<L>>,
}

impl<L> Tree<L> {
    pub fn leaf(&self, row: &[f64]) -> &L {
        let mut i = 0usize;
        loop {
            match &self.nodes[i] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if row[*feature as usize] <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
            }
        }
    }

    /// Depth of the deepest leaf (root alone has depth 0).
    pub fn depth(&self) -> usize {
        let mut best = 0;
        let mut stack = vec![(0usize, 0usize)];
        while let Some((i, d)) = stack.pop() {
            match &self.nodes[i] {
                Node::Leaf(_) => best = best.max(d),
                Node::Split { left, right, .. } => {
                    stack.push((*left as usize, d + 1));
                    stack.push((*right as usize, d + 1));
                }
            }
        }
        best
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf(_)))
            .count()
    }
}

/// Column-major copy of the features with each column's row order sorted
/// by value (ties by row index).
pub struct SortedColumns {
    values: Vec<Vec<f64>>,
    order: Vec<Vec<u32>>,
    n_rows: usize,
}

impl SortedColumns {
    pub fn new(x: &Matrix) -> Self {
        let values: Vec<Vec<f64>> = (0..x.cols()).map(|j| x.column(j)).collect();
        let order = values
            .iter()
            .map(|col| {
                let mut idx: Vec<u32> = (0..col.len() as u32).collect();
                idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
                idx
            })
            .collect();
        Self {
            values,
            order,
            n_rows: x.rows(),
        }
    }

    pub fn n_features(&self) -> usize {
        self.values.len()
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }
}

/// Running left/right statistics for one candidate split.
pub(crate) trait SplitStats: Clone {
    /// Puts every row of `rows` on the right side.
    fn reset_from_rows(&mut self, rows: &[u32]);
    fn restore(&mut self, template: &Self);
    fn move_left(&mut self, row: u32);
    fn n_left(&self) -> usize;
    fn n_right(&self) -> usize;
    /// Total sample weight of the node.
    fn weight(&self) -> f64;
    /// Larger is better among splits of the same node.
    fn proxy(&self) -> f64;
    /// Σ over children of weight × impurity.
    fn children_impurity(&self) -> f64;
    /// weight × impurity of the node; valid right after a reset.
    fn node_impurity(&self) -> f64;
}

/// Weighted class-count statistics for classification trees.
#[derive(Clone)]
pub(crate) struct ClassStats<'a> {
    y: &'a [usize],
    w: Option<&'a [f64]>,
    /// `c·ln c` for integer counts, used when unweighted.
    xlnx: &'a [f64],
    criterion: Criterion,
    left: Vec<f64>,
    right: Vec<f64>,
    wl: f64,
    wr: f64,
    nl: usize,
    nr: usize,
    /// Σ c² (gini) or Σ c ln c (entropy) per side.
    acc_l: f64,
    acc_r: f64,
}

impl<'a> ClassStats<'a> {
    pub(crate) fn new(
        y: &'a [usize],
        w: Option<&'a [f64]>,
        xlnx: &'a [f64],
        n_classes: usize,
        criterion: Criterion,
    ) -> Self {
        Self {
            y,
            w,
            xlnx,
            criterion,
            left: vec![0.0; n_classes],
            right: vec![0.0; n_classes],
            wl: 0.0,
            wr: 0.0,
            nl: 0,
            nr: 0,
            acc_l: 0.0,
            acc_r: 0.0,
        }
    }

    #[inline]
    fn term(&self, c: f64) -> f64 {
        match self.criterion {
            Criterion::Gini => c * c,
            _ => {
                if self.w.is_none() {
                    self.xlnx[c as usize]
                } else if c > 0.0 {
                    c * c.ln()
                } else {
                    0.0
                }
            }
        }
    }

    #[inline]
    fn xlnx_of(&self, c: f64) -> f64 {
        if self.w.is_none() {
            self.xlnx[c as usize]
        } else if c > 0.0 {
            c * c.ln()
        } else {
            0.0
        }
    }

    fn side_impurity(&self, w: f64, acc: f64) -> f64 {
        if w <= 0.0 {
            return 0.0;
        }
        match self.criterion {
            Criterion::Gini => w - acc / w,
            Criterion::LogLoss => self.xlnx_of(w) - acc,
            Criterion::Entropy => (self.xlnx_of(w) - acc) / std::f64::consts::LN_2,
        }
    }

    pub(crate) fn distribution(&self) -> Vec<f64> {
        let total: f64 = self.right.iter().sum();
        self.right.iter().map(|c| c / total).collect()
    }
}

/// Integer-count `c ln c` table for `0..=n`.
pub(crate) fn xlnx_table(n: usize) -> Vec<f64> {
    (0..=n)
        .map(|c| if c == 0 { 0.0 } else { c as f64 * (c as f64).ln() })
        .collect()
}

impl SplitStats for ClassStats<'_> {
    fn reset_from_rows(&mut self, rows: &[u32]) {
        self.left.iter_mut().for_each(|v| *v = 0.0);
        self.right.iter_mut().for_each(|v| *v = 0.0);
        for &r in rows {
            let wt = self.w.map_or(1.0, |w| w[r as usize]);
            self.right[self.y[r as usize]] += wt;
        }
        self.wr = self.right.iter().sum();
        self.wl = 0.0;
        self.nl = 0;
        self.nr = rows.len();
        self.acc_l = 0.0;
        self.acc_r = self.right.iter().map(|&c| self.term(c)).sum();
    }

    fn restore(&mut self, t: &Self) {
        self.left.copy_from_slice(&t.left);
        self.right.copy_from_slice(&t.right);
        self.wl = t.wl;
        self.wr = t.wr;
        self.nl = t.nl;
        self.nr = t.nr;
        self.acc_l = t.acc_l;
        self.acc_r = t.acc_r;
    }

    #[inline]
    fn move_left(&mut self, row: u32) {
        let k = self.y[row as usize];
        let wt = self.w.map_or(1.0, |w| w[row as usize]);
        let (l0, r0) = (self.left[k], self.right[k]);
        let (l1, r1) = (l0 + wt, (r0 - wt).max(0.0));
        self.acc_l += self.term(l1) - self.term(l0);
        self.acc_r += self.term(r1) - self.term(r0);
        self.left[k] = l1;
        self.right[k] = r1;
        self.wl += wt;
        self.wr -= wt;
        self.nl += 1;
        self.nr -= 1;
    }

    fn n_left(&self) -> usize {
        self.nl
    }

    fn n_right(&self) -> usize {
        self.nr
    }

    fn weight(&self) -> f64 {
        self.wl + self.wr
    }

    fn proxy(&self) -> f64 {
        -self.children_impurity()
    }

    fn children_impurity(&self) -> f64 {
        self.side_impurity(self.wl, self.acc_l) + self.side_impurity(self.wr, self.acc_r)
    }

    fn node_impurity(&self) -> f64 {
        self.side_impurity(self.wr, self.acc_r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegressionCriterion {
    SquaredError,
    FriedmanMse,
}

/// Sum / sum-of-squares statistics for squared-error regression trees.
#[derive(Clone)]
pub(crate) struct RegStats<'a> {
    y: &'a [f64],
    criterion: RegressionCriterion,
    sum_l: f64,
    sum_r: f64,
    sq_l: f64,
    sq_r: f64,
    nl: usize,
    nr: usize,
}

impl<'a> RegStats<'a> {
    pub(crate) fn new(y: &'a [f64], criterion: RegressionCriterion) -> Self {
        Self {
            y,
            criterion,
            sum_l: 0.0,
            sum_r: 0.0,
            sq_l: 0.0,
            sq_r: 0.0,
            nl: 0,
            nr: 0,
        }
    }
}

impl SplitStats for RegStats<'_> {
    fn reset_from_rows(&mut self, rows: &[u32]) {
        self.sum_l = 0.0;
        self.sq_l = 0.0;
        self.nl = 0;
        self.nr = rows.len();
        self.sum_r = 0.0;
        self.sq_r = 0.0;
        for &r in rows {
            let v = self.y[r as usize];
            self.sum_r += v;
            self.sq_r += v * v;
        }
    }

    fn restore(&mut self, t: &Self) {
        self.sum_l = t.sum_l;
        self.sum_r = t.sum_r;
        self.sq_l = t.sq_l;
        self.sq_r = t.sq_r;
        self.nl = t.nl;
        self.nr = t.nr;
    }

    #[inline]
    fn move_left(&mut self, row: u32) {
        let v = self.y[row as usize];
        self.sum_l += v;
        self.sum_r -= v;
        self.sq_l += v * v;
        self.sq_r -= v * v;
        self.nl += 1;
        self.nr -= 1;
    }

    fn n_left(&self) -> usize {
        self.nl
    }

    fn n_right(&self) -> usize {
        self.nr
    }

    fn weight(&self) -> f64 {
        (self.nl + self.nr) as f64
    }

    fn proxy(&self) -> f64 {
        let (nl, nr) = (self.nl as f64, self.nr as f64);
        match self.criterion {
            RegressionCriterion::SquaredError => {
                self.sum_l * self.sum_l / nl + self.sum_r * self.sum_r / nr
            }
            RegressionCriterion::FriedmanMse => {
                let diff = self.sum_l / nl - self.sum_r / nr;
                nl * nr * diff * diff / (nl + nr)
            }
        }
    }

    fn children_impurity(&self) -> f64 {
        let side = |sum: f64, sq: f64, n: usize| {
            if n == 0 {
                0.0
            } else {
                (sq - sum * sum / n as f64).max(0.0)
            }
        };
        side(self.sum_l, self.sq_l, self.nl) + side(self.sum_r, self.sq_r, self.nr)
    }

    fn node_impurity(&self) -> f64 {
        if self.nr == 0 {
            0.0
        } else {
            (self.sq_r - self.sum_r * self.sum_r / self.nr as f64).max(0.0)
        }
    }
}

struct Candidate {
    feature: usize,
    threshold: f64,
    proxy: f64,
    children: f64,
}

/// Grows one tree. `make_leaf` receives the node statistics (all rows on
/// the right side) and the node's rows.
pub(crate) fn grow<S, L>(
    data: &SortedColumns,
    template: S,
    params: &TreeParams,
    rng: &mut Rng,
    mut make_leaf: impl FnMut(&S, &[u32]) -> L,
) -> Tree<L>
where
    S: SplitStats,
{
    let n = data.n_rows;
    let n_features = data.n_features();
    let mtry = params.max_features.resolve(n_features);
    let mut order = data.order.clone();
    let mut go_left = vec![false; n];
    let mut buf: Vec<u32> = Vec::with_capacity(n);
    let mut node_stats = template.clone();
    let mut work = template;
    node_stats.reset_from_rows(&order[0]);
    let total_weight = node_stats.weight();
    let mut feature_pool: Vec<usize> = (0..n_features).collect();

    let mut nodes: Vec<Node<L>> = Vec::new();
    // (node slot, start, end, depth); slots are filled when popped
    let mut stack: Vec<(usize, usize, usize, usize)> = Vec::new();
    nodes.push(Node::Split {
        feature: 0,
        threshold: 0.0,
        left: 0,
        right: 0,
    });
    stack.push((0, 0, n, 0));

    while let Some((slot, start, end, depth)) = stack.pop() {
        let m = end - start;
        node_stats.reset_from_rows(&order[0][start..end]);
        let node_imp = node_stats.node_impurity();

        let can_split = m >= params.min_samples_split
            && m >= 2 * params.min_samples_leaf
            && params.max_depth.is_none_or(|d| depth < d)
            && node_imp > 1e-12 * node_stats.weight().max(1.0);

        let mut best: Option<Candidate> = None;
        if can_split {
            // visit features in random order until `mtry` non-constant ones are evaluated
            let mut evaluated = 0;
            let mut remaining = n_features;
            while evaluated < mtry && remaining > 0 {
                let pick = rng.gen_range(0..remaining);
                feature_pool.swap(pick, remaining - 1);
                remaining -= 1;
                let f = feature_pool[remaining];
                let ord = &order[f][start..end];
                let vals = &data.values[f];
                let lo = vals[ord[0] as usize];
                let hi = vals[ord[m - 1] as usize];
                if hi <= lo {
                    continue;
                }
                evaluated += 1;
                let cand = match params.splitter {
                    Splitter::Best => best_threshold(&mut work, &node_stats, ord, vals, params),
                    Splitter::Random => {
                        let mut t = lo + rng.gen::<f64>() * (hi - lo);
                        if t >= hi {
                            t = lo;
                        }
                        threshold_split(&mut work, &node_stats, ord, vals, t, params)
                    }
                };
                if let Some((threshold, proxy, children)) = cand {
                    if best.as_ref().is_none_or(|b| proxy > b.proxy) {
                        best = Some(Candidate {
                            feature: f,
                            threshold,
                            proxy,
                            children,
                        });
                    }
                }
            }
            feature_pool.sort_unstable();
        }

        let accepted = best.filter(|b| {
            let decrease = (node_imp - b.children) / total_weight;
            decrease + 1e-12 >= params.min_impurity_decrease
        });

        match accepted {
            None => {
                nodes[slot] = Node::Leaf(make_leaf(&node_stats, &order[0][start..end]));
            }
            Some(b) => {
                let vals = &data.values[b.feature];
                let mut n_left = 0;
                for &r in &order[b.feature][start..end] {
                    let l = vals[r as usize] <= b.threshold;
                    go_left[r as usize] = l;
                    n_left += l as usize;
                }
                for ord in order.iter_mut() {
                    stable_partition(&mut ord[start..end], &go_left, &mut buf);
                }
                let left = nodes.len();
                let right = left + 1;
                for _ in 0..2 {
                    nodes.push(Node::Split {
                        feature: 0,
                        threshold: 0.0,
                        left: 0,
                        right: 0,
                    });
                }
                nodes[slot] = Node::Split {
                    feature: b.feature as u32,
                    threshold: b.threshold,
                    left: left as u32,
                    right: right as u32,
                };
                stack.push((right, start + n_left, end, depth + 1));
                stack.push((left, start, start + n_left, depth + 1));
            }
        }
    }
    Tree { nodes }
}

fn stable_partition(seg: &mut [u32], go_left: &[bool], buf: &mut Vec<u32>) {
    buf.clear();
    let mut w = 0;
    for i in 0..seg.len() {
        let r = seg[i];
        if go_left[r as usize] {
            seg[w] = r;
            w += 1;
        } else {
            buf.push(r);
        }
    }
    seg[w..].copy_from_slice(buf);
}

/// Best threshold on one feature: midpoints between consecutive distinct
/// values, respecting `min_samples_leaf`.
fn best_threshold<S: SplitStats>(
    work: &mut S,
    node: &S,
    ord: &[u32],
    vals: &[f64],
    params: &TreeParams,
) -> Option<(f64, f64, f64)> {
    work.restore(node);
    let m = ord.len();
    let min_leaf = params.min_samples_leaf;
    let mut best: Option<(usize, f64)> = None;
    for p in 0..m - 1 {
        work.move_left(ord[p]);
        let (v0, v1) = (vals[ord[p] as usize], vals[ord[p + 1] as usize]);
        if v1 <= v0 || work.n_left() < min_leaf {
            continue;
        }
        if work.n_right() < min_leaf {
            break;
        }
        let proxy = work.proxy();
        if best.is_none_or(|(_, b)| proxy > b) {
            best = Some((p, proxy));
        }
    }
    let (p, proxy) = best?;
    let (v0, v1) = (vals[ord[p] as usize], vals[ord[p + 1] as usize]);
    let mut threshold = v0 + (v1 - v0) / 2.0;
    if threshold >= v1 || !threshold.is_finite() {
        threshold = v0;
    }
    // replay to the chosen position for the children impurity
    work.restore(node);
    for &r in &ord[..=p] {
        work.move_left(r);
    }
    Some((threshold, proxy, work.children_impurity()))
}

fn threshold_split<S: SplitStats>(
    work: &mut S,
    node: &S,
    ord: &[u32],
    vals: &[f64],
    threshold: f64,
    params: &TreeParams,
) -> Option<(f64, f64, f64)> {
    work.restore(node);
    for &r in ord {
        if vals[r as usize] > threshold {
            break;
        }
        work.move_left(r);
    }
    if work.n_left() < params.min_samples_leaf.max(1)
        || work.n_right() < params.min_samples_leaf.max(1)
    {
        return None;
    }
    Some((threshold, work.proxy(), work.children_impurity()))
}

/// A classification tree whose leaves hold class distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationTree {
    pub tree: Tree<Vec<f64>>,
    pub n_classes: usize,
}

impl ClassificationTree {
    pub(crate) fn fit_presorted(
        data: &SortedColumns,
        y: &[usize],
        w: Option<&[f64]>,
        xlnx: &[f64],
        n_classes: usize,
        criterion: Criterion,
        params: &TreeParams,
        rng: &mut Rng,
    ) -> Self {
        let stats = ClassStats::new(y, w, xlnx, n_classes, criterion);
        let tree = grow(data, stats, params, rng, |s, _| s.distribution());
        Self { tree, n_classes }
    }

    pub fn fit(
        x: &Matrix,
        y: &[usize],
        n_classes: usize,
        criterion: Criterion,
        params: &TreeParams,
        rng: &mut Rng,
    ) -> Self {
        let data = SortedColumns::new(x);
        let xlnx = xlnx_table(x.rows());
        Self::fit_presorted(&data, y, None, &xlnx, n_classes, criterion, params, rng)
    }

    pub fn proba_row(&self, row: &[f64]) -> &[f64] {
        self.tree.leaf(row)
    }

    pub fn predict_proba(&self, x: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(x.rows(), self.n_classes);
        for (i, row) in x.iter_rows().enumerate() {
            out.row_mut(i).copy_from_slice(self.proba_row(row));
        }
        out
    }
}
