//! Fits every family once on a synthetic 7-class set and prints training
//! accuracy and fit time.

use std::time::Instant;

use tabens::learners::{fit, Family, LearnerSpec};
use tabens::synthetic::blobs;

fn main() {
    let table = blobs(&[230, 230, 230, 230, 230, 230, 230], 16, 2.5, 1).unwrap();
    let x = table.features();
    let y = table.labels();
    let specs = [
        LearnerSpec::new("lr", Family::LogisticRegression),
        LearnerSpec::new("knn", Family::Knn),
        LearnerSpec::new("gnb", Family::GaussianNb),
        LearnerSpec::new("bnb", Family::BernoulliNb),
        LearnerSpec::new("dt", Family::DecisionTree),
        LearnerSpec::new("rf", Family::RandomForest).with("n_estimators", 500i64).with("max_features", "none"),
        LearnerSpec::new("gb", Family::GradientBoosting).with("n_estimators", 1000i64),
        LearnerSpec::new("ada", Family::Adaboost).with("n_estimators", 1000i64).with("learning_rate", 2.0),
        LearnerSpec::new("svc", Family::LinearSvc),
        LearnerSpec::new("mlp", Family::Mlp).with("hidden_layer_sizes", vec![100i64, 100]).with("max_iter", 1000i64).with("learning_rate", "adaptive"),
    ];
    for s in &specs {
        let t = Instant::now();
        let m = fit(s, x, y, 7, 0).unwrap();
        let secs = t.elapsed().as_secs_f64();
        let pred = m.predict(x).unwrap();
        let acc = pred.iter().zip(y).filter(|(a, b)| a == b).count() as f64 / y.len() as f64;
        println!("{:>4}: train acc {acc:.4}, fit {secs:.2}s", s.id);
    }
}
