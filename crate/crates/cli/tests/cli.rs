use std::path::Path;
use std::process::Command;

fn tabens() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_tabens"));
    c.arg("--log-level").arg("warn").env("TABENS_THREADS", "2");
    c
}

fn fixture(dir: &Path) {
    let mut csv = String::from("a,b,colour,label\n");
    for i in 0..150 {
        let c = i % 3;
        let a = c as f64 * 2.0 + ((i * 37) % 11) as f64 / 10.0;
        let b = ((i * 17) % 13) as f64 / 5.0 - c as f64;
        let colour = ["red", "blue"][i % 2];
        csv.push_str(&format!("{a},{b},{colour},{}\n", ["lo", "mid", "hi"][c]));
    }
    std::fs::write(dir.join("d.csv"), csv).unwrap();
    std::fs::write(
        dir.join("run.toml"),
        r#"
[dataset]
path = "d.csv"
columns = [
  { name = "a", kind = "numeric" },
  { name = "b", kind = "numeric" },
  { name = "colour", kind = "categorical" },
  { name = "label", kind = "target" },
]
[sweep]
folds = 3
top_k = 2
specs = [
  { id = "NB1", family = "gaussian_nb" },
  { id = "KNN1", family = "knn", params = { n_neighbors = 3 } },
  { id = "DT1", family = "decision_tree", params = { max_depth = 3 } },
]
[ensemble]
stacking_folds = 3
meta = { id = "META", family = "mlp", params = { hidden_layer_sizes = [4], max_iter = 20, random_state = 0 } }
"#,
    )
    .unwrap();
}

#[test]
fn run_then_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    let out = dir.path().join("out");
    let status = tabens()
        .args(["run", "--config"])
        .arg(dir.path().join("run.toml"))
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    for f in ["leaderboard.csv", "metrics.json", "provenance.json", "confusion_stacking.csv", "models/manifest.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let ev = tabens()
        .args(["evaluate", "--models"])
        .arg(out.join("models"))
        .arg("--data")
        .arg(dir.path().join("d.csv"))
        .arg("--out")
        .arg(dir.path().join("ev"))
        .output()
        .unwrap();
    assert!(ev.status.success());
    let text = String::from_utf8(ev.stdout).unwrap();
    assert!(text.contains("weighted_vote"));
    assert!(dir.path().join("ev/evaluation.json").exists());
}

#[test]
fn sweep_and_inspect() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    let sweep = tabens()
        .args(["sweep", "--config"])
        .arg(dir.path().join("run.toml"))
        .arg("--out")
        .arg(dir.path().join("s"))
        .output()
        .unwrap();
    assert!(sweep.status.success());
    let board = std::fs::read_to_string(dir.path().join("s/leaderboard.csv")).unwrap();
    assert_eq!(board.lines().count(), 4);
    let inspect = tabens()
        .args(["inspect", "--config"])
        .arg(dir.path().join("run.toml"))
        .output()
        .unwrap();
    assert!(inspect.status.success());
    let text = String::from_utf8(inspect.stdout).unwrap();
    assert!(text.contains("150 rows"));
    assert!(text.contains("most correlated feature"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    let missing = tabens().args(["run", "--config", "/nonexistent/run.toml"]).status().unwrap();
    assert_eq!(missing.code(), Some(2));

    let text = std::fs::read_to_string(dir.path().join("run.toml")).unwrap();
    std::fs::write(dir.path().join("bad.toml"), text.replace("folds = 3", "folds = 1")).unwrap();
    let bad = tabens().args(["run", "--config"]).arg(dir.path().join("bad.toml")).status().unwrap();
    assert_eq!(bad.code(), Some(2));

    std::fs::write(dir.path().join("d.csv"), "a,b,colour,label\n1,oops,red,lo\n").unwrap();
    let data = tabens()
        .args(["run", "--config"])
        .arg(dir.path().join("run.toml"))
        .arg("--out")
        .arg(dir.path().join("o"))
        .status()
        .unwrap();
    assert_eq!(data.code(), Some(3));
    assert!(dir.path().join("o/quarantine/partial.json").exists());
}
