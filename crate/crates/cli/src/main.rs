use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tabens::modelsel::run_sweep;
use tabens::pipeline::{self, emit_report, write_evaluations, ModelBundle, RunConfig};
use tabens::tabular::{load_csv, most_correlated_feature, outlier_scan};
use tabens::{Error, Result};

#[derive(Parser)]
#[command(name = "tabens", version, about = "Sweep base classifiers, ensemble the best, report")]
struct Cli {
    /// Worker threads for the sweep and stacking folds.
    #[arg(long, global = true, env = "TABENS_THREADS")]
    threads: Option<usize>,

    /// error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "info")]
    log_level: log::LevelFilter,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,

    /// Output directory; overrides `[output] dir`.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Replaces every seed in the config.
    #[arg(long)]
    seed_override: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Full pipeline: sweep, ensembles, reports and saved models.
    Run(ConfigArgs),
    /// Cross-validated leaderboard only.
    Sweep(ConfigArgs),
    /// Score a CSV with models saved by `run`.
    Evaluate {
        /// The `models` directory written by `run`.
        #[arg(long)]
        models: PathBuf,
        /// CSV with the training schema, labels included.
        #[arg(long)]
        data: PathBuf,
        /// Where to write evaluation.json and confusion CSVs.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dataset summary and outlier scan.
    Inspect {
        #[arg(long)]
        config: PathBuf,
    },
}

fn load_config(args: &ConfigArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed_override {
        cfg.override_seed(seed);
    }
    if let Some(out) = &args.out {
        cfg.output.dir = out.clone();
    }
    Ok(cfg)
}

fn list(paths: &[PathBuf]) {
    for p in paths {
        println!("  {}", p.display());
    }
}

fn run(args: &ConfigArgs) -> Result<()> {
    let cfg = load_config(args)?;
    let out = pipeline::run_pipeline_full(&cfg)?;
    let dir = &cfg.output.dir;
    let written = emit_report(&out.report, dir)?;
    let saved = out.bundle.save(&dir.join("models"))?;
    if let Some(c) = &out.report.data.most_correlated_feature {
        println!("most correlated feature: {} (r = {:.4})", c.feature, c.pearson_r);
    }
    print!("{}", out.report.summary_table());
    println!("wrote {} report files and {} model files:", written.len(), saved.len());
    list(&written);
    Ok(())
}

fn sweep(args: &ConfigArgs) -> Result<()> {
    let cfg = load_config(args)?;
    let table = load_csv(&cfg.dataset.path, &cfg.dataset.columns).map_err(|e| e.in_stage("load"))?;
    let data = pipeline::prepare(&cfg, table)?;
    let board = run_sweep(&cfg.sweep_config(), &data.train).map_err(|e| e.in_stage("sweep"))?;
    let dir = &cfg.output.dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join("leaderboard.csv");
    let csv = board.to_csv()?;
    std::fs::write(&path, &csv).map_err(|e| Error::io(&path, e))?;
    print!("{csv}");
    println!("wrote {}", path.display());
    Ok(())
}

fn evaluate(models: &Path, data: &Path, out: Option<&Path>) -> Result<()> {
    let bundle = ModelBundle::load(models)?;
    let table = bundle.load_table(data)?;
    let evals = bundle.evaluate_table(&table)?;
    println!("{:<16} {:>9} {:>9}", "model", "accuracy", "f1");
    for e in &evals {
        println!("{:<16} {:>9.4} {:>9.4}", e.model, e.metrics.accuracy, e.metrics.f1_macro);
    }
    if let Some(dir) = out {
        list(&write_evaluations(&evals, dir)?);
    }
    Ok(())
}

fn inspect(config: &Path) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    let table = load_csv(&cfg.dataset.path, &cfg.dataset.columns)?;
    println!(
        "{}: {} rows, {} features, {} classes",
        cfg.dataset.path.display(),
        table.n_rows(),
        table.n_features(),
        table.n_classes()
    );
    for (name, n) in table.class_names().iter().zip(table.class_counts()) {
        println!("  class {name}: {n}");
    }
    println!("outliers (1.5 IQR fences):");
    for o in outlier_scan(&table)? {
        println!(
            "  {:<36} {:>5}  [{:.4}, {:.4}]",
            o.feature, o.count, o.lower_fence, o.upper_fence
        );
    }
    if let Some((name, r)) = most_correlated_feature(&table) {
        println!("most correlated feature: {name} (r = {r:.4})");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(cli.log_level)
        .format_timestamp(None)
        .init();
    let threads = cli.threads.unwrap_or_else(pipeline::default_threads);
    let result = pipeline::with_threads(threads, || match &cli.command {
        Command::Run(a) => run(a),
        Command::Sweep(a) => sweep(a),
        Command::Evaluate { models, data, out } => evaluate(models, data, out.as_deref()),
        Command::Inspect { config } => inspect(config),
    })
    .and_then(|r| r);
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
