//! Property tests over learners, trees, SMOTE, metrics, splitting and
//! voting.

use std::collections::HashMap;

use proptest::prelude::*;

use tabens::ensemble::{majority_hard_vote, weighted_hard_vote};
use tabens::learners::tree::{ClassificationTree, Criterion, MaxFeatures, Splitter, TreeParams};
use tabens::learners::{self, Family, LearnerSpec, TrainedModel};
use tabens::metrics;
use tabens::modelsel::stratified_folds;
use tabens::resample::{smote_with_origins, ResampleScope, SmoteConfig};
use tabens::synthetic::blobs;
use tabens::tabular::{apply_scaler, fit_scaler, stratified_split};
use tabens::{rng, Matrix};

fn quick_specs() -> Vec<LearnerSpec> {
    vec![
        LearnerSpec::new("lr", Family::LogisticRegression).with("max_iter", 200i64),
        LearnerSpec::new("lr_ovr", Family::LogisticRegression)
            .with("multi_class", "ovr")
            .with("max_iter", 200i64),
        LearnerSpec::new("knn", Family::Knn).with("n_neighbors", 3i64).with("metric", "cosine"),
        LearnerSpec::new("gnb", Family::GaussianNb),
        LearnerSpec::new("bnb", Family::BernoulliNb),
        LearnerSpec::new("dt", Family::DecisionTree)
            .with("splitter", "random")
            .with("max_depth", 4i64),
        LearnerSpec::new("rf", Family::RandomForest).with("n_estimators", 5i64),
        LearnerSpec::new("gb", Family::GradientBoosting).with("n_estimators", 5i64),
        LearnerSpec::new("ada", Family::Adaboost).with("n_estimators", 5i64),
        LearnerSpec::new("ada_r", Family::Adaboost)
            .with("n_estimators", 5i64)
            .with("algorithm", "SAMME.R"),
        LearnerSpec::new("svc", Family::LinearSvc).with("max_iter", 10i64),
        LearnerSpec::new("mlp", Family::Mlp)
            .with("hidden_layer_sizes", vec![8i64])
            .with("max_iter", 10i64),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn every_family_outputs_distributions(seed in 0u64..1000, k in 2usize..5) {
        let table = blobs(&vec![12; k], 3, 2.0, seed).unwrap();
        let (x, y) = (table.features(), table.labels());
        for spec in quick_specs() {
            let model = learners::fit(&spec, x, y, k, seed).unwrap();
            let proba = model.predict_proba(x).unwrap();
            prop_assert_eq!(proba.cols(), k);
            for row in proba.iter_rows() {
                let s: f64 = row.iter().sum();
                prop_assert!((s - 1.0).abs() < 1e-9, "{} row sums to {}", spec.id, s);
                prop_assert!(row.iter().all(|p| (0.0..=1.0 + 1e-12).contains(p)));
            }
            let pred = model.predict(x).unwrap();
            prop_assert!(pred.iter().all(|&c| c < k));
        }
    }

    #[test]
    fn fits_are_deterministic_and_round_trip(seed in 0u64..1000) {
        let table = blobs(&[10, 14, 9], 4, 2.5, seed).unwrap();
        let (x, y) = (table.features(), table.labels());
        for spec in quick_specs() {
            let a = learners::fit(&spec, x, y, 3, seed).unwrap();
            let b = learners::fit(&spec, x, y, 3, seed).unwrap();
            prop_assert_eq!(&a, &b);
            let back = TrainedModel::from_json(&a.to_json().unwrap()).unwrap();
            let pa = a.predict_proba(x).unwrap();
            let pb = back.predict_proba(x).unwrap();
            let bits = |m: &Matrix| m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(&pa), bits(&pb), "{} changed after a JSON round trip", spec.id);
        }
    }

    #[test]
    fn tree_respects_depth_and_leaf_size(
        seed in 0u64..1000,
        depth in 1usize..6,
        leaf in 1usize..6,
        random in any::<bool>(),
        crit in 0usize..3,
    ) {
        let table = blobs(&[25, 20, 15], 4, 3.0, seed).unwrap();
        let (x, y) = (table.features(), table.labels());
        let params = TreeParams {
            splitter: if random { Splitter::Random } else { Splitter::Best },
            max_depth: Some(depth),
            min_samples_leaf: leaf,
            max_features: MaxFeatures::Sqrt,
            ..TreeParams::default()
        };
        let criterion = [Criterion::Gini, Criterion::Entropy, Criterion::LogLoss][crit];
        let tree = ClassificationTree::fit(x, y, 3, criterion, &params, &mut rng::seeded(seed));
        prop_assert!(tree.tree.depth() <= depth);
        let mut per_leaf: HashMap<*const Vec<f64>, usize> = HashMap::new();
        for row in x.iter_rows() {
            *per_leaf.entry(tree.tree.leaf(row) as *const _).or_default() += 1;
        }
        prop_assert!(per_leaf.values().all(|&n| n >= leaf));
        prop_assert_eq!(per_leaf.len(), tree.tree.n_leaves());
    }

    #[test]
    fn smote_balances_and_interpolates(seed in 0u64..1000, a in 6usize..20, b in 6usize..30, c in 6usize..40) {
        let table = blobs(&[a, b, c], 3, 1.0, seed).unwrap();
        let cfg = SmoteConfig { k_neighbors: 5, seed, scope: ResampleScope::TrainOnly };
        let (out, origins) = smote_with_origins(&table, &cfg).unwrap();
        let target = a.max(b).max(c);
        prop_assert!(out.class_counts().iter().all(|&n| n == target));
        // originals first and untouched
        prop_assert_eq!(out.features().select_rows(&(0..table.n_rows()).collect::<Vec<_>>()), table.features().clone());
        for o in &origins {
            prop_assert!(o.base < table.n_rows() && o.neighbor < table.n_rows());
            for j in 0..3 {
                let (p, q) = (out.features().get(o.base, j), out.features().get(o.neighbor, j));
                prop_assert!((out.features().get(o.row, j) - (p + o.lambda * (q - p))).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn metric_bounds(y in prop::collection::vec(0usize..4, 2..40), p_seed in 0u64..1000) {
        let k = 4;
        let p: Vec<usize> = y.iter().enumerate().map(|(i, &t)| if (i as u64 + p_seed) % 3 == 0 { (t + 1) % k } else { t }).collect();
        let names: Vec<String> = (0..k).map(|c| c.to_string()).collect();
        let (cm, m) = metrics::evaluate(&y, &p, None, &names).unwrap();
        prop_assert_eq!(cm.total() as usize, y.len());
        prop_assert_eq!(cm.row_sums().iter().sum::<u64>() as usize, y.len());
        for v in [m.accuracy, m.precision_macro, m.recall_macro, m.f1_macro] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        let (_, perfect) = metrics::evaluate(&y, &y, None, &names).unwrap();
        prop_assert_eq!(perfect.accuracy, 1.0);
    }

    #[test]
    fn folds_partition_and_stratify(counts in prop::collection::vec(10usize..60, 2..6), k in 2usize..11, seed in 0u64..100) {
        let y: Vec<usize> = counts.iter().enumerate().flat_map(|(c, &n)| std::iter::repeat(c).take(n)).collect();
        let folds = stratified_folds(&y, k, seed).unwrap();
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        prop_assert_eq!(all, (0..y.len()).collect::<Vec<_>>());
        for f in &folds {
            for (c, &n) in counts.iter().enumerate() {
                let got = f.iter().filter(|&&i| y[i] == c).count() as f64;
                prop_assert!((got - n as f64 / k as f64).abs() < 1.0);
            }
        }
    }

    #[test]
    fn split_partitions_rows(counts in prop::collection::vec(5usize..50, 2..5), seed in 0u64..100) {
        let y: Vec<usize> = counts.iter().enumerate().flat_map(|(c, &n)| std::iter::repeat(c).take(n)).collect();
        let s = stratified_split(&y, [0.6, 0.2, 0.2], seed).unwrap();
        let mut all = [s.train.clone(), s.validation.clone(), s.test.clone()].concat();
        all.sort_unstable();
        prop_assert_eq!(all, (0..y.len()).collect::<Vec<_>>());
        for (c, &n) in counts.iter().enumerate() {
            let tr = s.train.iter().filter(|&&i| y[i] == c).count() as f64;
            prop_assert!((tr - 0.6 * n as f64).abs() <= 1.0);
        }
    }

    #[test]
    fn scaled_training_rows_lie_in_unit_box(seed in 0u64..1000) {
        let table = blobs(&[15, 15], 3, 4.0, seed).unwrap();
        let rows: Vec<usize> = (0..20).collect();
        let params = fit_scaler(&table, &rows).unwrap();
        let scaled = apply_scaler(&table, &params).unwrap();
        for &r in &rows {
            prop_assert!(scaled.features().row(r).iter().all(|v| (-1e-12..=1.0 + 1e-12).contains(v)));
        }
    }

    #[test]
    fn voting_reductions(votes in prop::collection::vec(prop::collection::vec(0usize..5, 8), 1..6)) {
        let maj = majority_hard_vote(&votes, 5).unwrap();
        let eq = weighted_hard_vote(&votes, &vec![2.5; votes.len()], 5).unwrap();
        prop_assert_eq!(&maj, &eq);
        // a single member, or a member outweighing all others, decides alone
        let solo = majority_hard_vote(&votes[..1], 5).unwrap();
        prop_assert_eq!(&solo, &votes[0]);
        let mut w = vec![1.0; votes.len()];
        w[votes.len() - 1] = votes.len() as f64;
        let dominated = weighted_hard_vote(&votes, &w, 5).unwrap();
        prop_assert_eq!(&dominated, &votes[votes.len() - 1]);
        // unanimous rows always return the shared label
        for row in 0..8 {
            if votes.iter().all(|v| v[row] == votes[0][row]) {
                prop_assert_eq!(maj[row], votes[0][row]);
            }
        }
    }
}
