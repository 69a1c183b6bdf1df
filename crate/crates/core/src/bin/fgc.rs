use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fgc::config::ConfigFile;
use fgc::error::{FgcError, Result};
use fgc::experiment::{
    aggregate_csv, desk_preset, run_experiment, run_method, run_sweep, write_experiment, write_sweep, ExperimentSpec,
    Method, MethodSettings, SweepGrid,
};
use fgc::fairness::FairnessSystem;
use fgc::io::{generate_dataset, read_dataset, read_fit, read_group_labels, write_dataset, write_fit, Dataset};
use fgc::metrics::MetricReport;
use fgc::synthetic::{NoiseSpec, VsbmParams};
use fgc::theory::{estimation_bound_suite, strong_convexity_suite};

/// Fair spectral clustering with graphs learned from smooth signals.
#[derive(Parser)]
#[command(name = "fgc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset: graph.txt, labels.txt, signals.csv.
    Gen(GenArgs),
    /// Fit one method on a dataset and write a result directory.
    Fit(FitArgs),
    /// Score existing result directories against a dataset.
    Eval(EvalArgs),
    /// Run repeated trials; writes trials.csv and aggregate.csv.
    Experiment(RunArgs),
    /// Grid search; writes sweep.csv and best.csv.
    Sweep(RunArgs),
    /// Randomized checks of the curvature and estimation-error bounds.
    CheckTheory(TheoryArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long = "D", default_value_t = 96)]
    nodes: usize,
    #[arg(long = "K", default_value_t = 4)]
    clusters: usize,
    #[arg(long = "S", default_value_t = 2)]
    groups: usize,
    #[arg(long = "N", default_value_t = 2000)]
    signals: usize,
    #[arg(long, default_value_t = 0.0)]
    noise_lo: f64,
    #[arg(long, default_value_t = 0.2)]
    noise_hi: f64,
    /// Same-cluster, same-group edge probability.
    #[arg(long, default_value_t = 0.8)]
    a: f64,
    /// Same-cluster, different-group edge probability.
    #[arg(long, default_value_t = 0.2)]
    b: f64,
    /// Different-cluster, same-group edge probability.
    #[arg(long, default_value_t = 0.15)]
    c: f64,
    /// Different-cluster, different-group edge probability.
    #[arg(long, default_value_t = 0.05)]
    d: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    /// Dataset directory.
    #[arg(long)]
    data: PathBuf,
    /// unified, sep, sep-kmeans, no-denoise, fjgsed, fsrsc, corr, knn or epsnn.
    #[arg(long, default_value = "unified")]
    method: String,
    /// Result directory; defaults to <data>/<method>.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of clusters; defaults to the number in the dataset labels.
    #[arg(long = "K")]
    clusters: Option<usize>,
    /// Standalone `node,group` file replacing the dataset's groups.
    #[arg(long)]
    groups: Option<PathBuf>,
    #[command(flatten)]
    settings: SettingArgs,
}

#[derive(Args)]
struct SettingArgs {
    #[arg(long)]
    xi: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Settings file; `[fit]` entries apply.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Any setting as KEY=VALUE, e.g. outer_max_iter=50 or fjgsed.neighbors=8.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl SettingArgs {
    fn apply(&self, s: &mut MethodSettings) -> Result<()> {
        if let Some(path) = &self.config {
            for (k, v) in load_config(path)?.section("fit") {
                s.set(k, v)?;
            }
        }
        for (key, value) in [
            ("xi", self.xi.map(|v| v.to_string())),
            ("beta", self.beta.map(|v| v.to_string())),
            ("alpha", self.alpha.map(|v| v.to_string())),
            ("mu", self.mu.map(|v| v.to_string())),
            ("gamma", self.gamma.map(|v| v.to_string())),
        ] {
            if let Some(v) = value {
                s.set(key, &v)?;
            }
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| FgcError::parse("--set", format!("expected KEY=VALUE, got {kv:?}")))?;
            s.set(k.trim(), v)?;
        }
        if let Some(seed) = self.seed {
            *s = s.with_seed(seed);
        }
        Ok(())
    }
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    /// Result directories written by `fit`.
    #[arg(required = true)]
    results: Vec<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment file with [dataset], [experiment], [fit], [fit.<method>] and [sweep] sections.
    #[arg(long, conflicts_with = "preset")]
    spec: Option<PathBuf>,
    /// Built-in experiment; `table2-desk` is the only one.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    out: PathBuf,
    /// Trials run concurrently.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Override the trial count.
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Args)]
struct TheoryArgs {
    #[arg(long, default_value_t = 50)]
    instances: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn load_config(path: &Path) -> Result<ConfigFile> {
    let text = std::fs::read_to_string(path).map_err(|e| FgcError::io(path, e))?;
    ConfigFile::parse(&text).map_err(|e| match e {
        FgcError::Parse { location, message } => FgcError::Parse {
            location: format!("{} {location}", path.display()),
            message,
        },
        other => other,
    })
}

fn fairness_for(data: &Dataset, groups: Option<&Path>) -> Result<FairnessSystem> {
    match groups {
        Some(path) => {
            let labels = read_group_labels(path)?;
            if labels.len() != data.num_nodes() {
                return Err(FgcError::DimensionMismatch(format!(
                    "{} group labels for {} nodes",
                    labels.len(),
                    data.num_nodes()
                )));
            }
            FairnessSystem::from_labels(&labels)
        }
        None => FairnessSystem::new(&data.group_labels, data.num_groups()),
    }
}

fn cmd_gen(a: &GenArgs) -> Result<()> {
    let params = VsbmParams {
        num_nodes: a.nodes,
        num_clusters: a.clusters,
        num_groups: a.groups,
        a: a.a,
        b: a.b,
        c: a.c,
        d: a.d,
        ..Default::default()
    };
    let noise = NoiseSpec::Uniform {
        lo: a.noise_lo,
        hi: a.noise_hi,
    };
    let (_, data) = generate_dataset(&params, a.signals, &noise, a.seed)?;
    write_dataset(&a.out, &data)?;
    println!(
        "D={} K={} S={} N={} edges={} seed={} out={}",
        a.nodes,
        a.clusters,
        a.groups,
        a.signals,
        data.weights.edge_count(0.0),
        a.seed,
        a.out.display()
    );
    Ok(())
}

fn cmd_fit(a: &FitArgs) -> Result<()> {
    let method: Method = a.method.parse()?;
    let data = read_dataset(&a.data)?;
    let fs = fairness_for(&data, a.groups.as_deref())?;
    let k = a.clusters.unwrap_or_else(|| data.num_clusters());
    let mut settings = MethodSettings::default();
    a.settings.apply(&mut settings)?;
    let fit = run_method(method, &data.signals, &fs, k, &settings)?;
    let out = a.out.clone().unwrap_or_else(|| a.data.join(method.name()));
    write_fit(&out, &fit, &settings.to_pairs(method))?;
    let truth = data.weights.to_laplacian();
    let m = MetricReport::evaluate(&fit.laplacian(), &fit.labels, &truth, &data.cluster_labels, &fs, k)?;
    println!("method,fs,ee,ce,balance");
    println!("{},{},{},{},{}", method, m.fs, m.ee, m.ce, m.balance);
    Ok(())
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let data = read_dataset(&a.data)?;
    let fs = fairness_for(&data, None)?;
    let truth = data.weights.to_laplacian();
    let k = data.num_clusters();
    println!("result,{}", MetricReport::CSV_HEADER);
    for dir in &a.results {
        let (weights, labels) = read_fit(dir)?;
        let m = MetricReport::evaluate(&weights.to_laplacian(), &labels, &truth, &data.cluster_labels, &fs, k)?;
        println!("{},{}", dir.display(), m.csv_row());
    }
    Ok(())
}

/// `(label, spec, grid)`; the label names a subdirectory when non-empty.
fn specs(a: &RunArgs) -> Result<Vec<(String, ExperimentSpec, SweepGrid)>> {
    let mut out = match (&a.spec, a.preset.as_deref()) {
        (Some(path), _) => {
            let cfg = load_config(path)?;
            vec![(
                String::new(),
                ExperimentSpec::from_config(&cfg)?,
                SweepGrid::from_config(&cfg),
            )]
        }
        (None, Some("table2-desk")) | (None, None) => desk_preset()
            .into_iter()
            .map(|(label, spec)| (label, spec, SweepGrid::default()))
            .collect(),
        (None, Some(other)) => {
            return Err(FgcError::InvalidParameter(format!(
                "unknown preset {other:?}; expected table2-desk"
            )))
        }
    };
    if let Some(t) = a.trials {
        for (_, spec, _) in &mut out {
            spec.trials = t;
        }
    }
    Ok(out)
}

/// Returns whether every trial succeeded.
fn cmd_experiment(a: &RunArgs) -> Result<bool> {
    let mut all_ok = true;
    for (label, spec, _) in specs(a)? {
        let rows = run_experiment(&spec, a.jobs)?;
        all_ok &= rows.iter().all(|r| r.report.is_some());
        let aggs = write_experiment(&a.out.join(&label), &rows)?;
        if !label.is_empty() {
            println!("[{label}]");
        }
        print!("{}", aggregate_csv(&aggs));
    }
    Ok(all_ok)
}

fn cmd_sweep(a: &RunArgs) -> Result<bool> {
    let mut all_ok = true;
    for (label, spec, grid) in specs(a)? {
        let rows = run_sweep(&spec, &grid, a.jobs)?;
        all_ok &= rows.iter().all(|r| r.aggregate.ok == r.aggregate.trials);
        let dir = a.out.join(&label);
        write_sweep(&dir, &rows)?;
        println!("{}", dir.join("best.csv").display());
    }
    Ok(all_ok)
}

fn cmd_check_theory(a: &TheoryArgs) -> Result<bool> {
    let mut ok = true;
    for check in [
        strong_convexity_suite(a.instances.max(100), a.seed)?,
        estimation_bound_suite(a.instances, a.seed)?,
    ] {
        println!(
            "{} {}: {} instances, {} failures, worst slack {:e}",
            if check.passed() { "PASS" } else { "FAIL" },
            check.name,
            check.instances,
            check.failures,
            check.worst_slack
        );
        ok &= check.passed();
    }
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Gen(a) => cmd_gen(a).map(|_| true),
        Command::Fit(a) => cmd_fit(a).map(|_| true),
        Command::Eval(a) => cmd_eval(a).map(|_| true),
        Command::Experiment(a) => cmd_experiment(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::CheckTheory(a) => cmd_check_theory(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                FgcError::IsolatedNode { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
