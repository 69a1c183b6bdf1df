//! Repeated-trial experiments and hyperparameter sweeps on synthetic data.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use crate::baselines::{fjgsed_fit, fsrsc_fit, ColumnForm, FjgsedConfig, FsrscConfig};
use crate::config::{split_list, ConfigFile};
use crate::error::{FgcError, Result};
use crate::fairness::FairnessSystem;
use crate::graph::SignalMatrix;
use crate::io::generate_dataset;
use crate::metrics::MetricReport;
use crate::pipeline::{
    median_row_distance, separate_fit, unified_fit, BaselineGraph, Discretizer, FitConfig, FitResult, GraphMethod,
};
use crate::synthetic::{NoiseSpec, VsbmParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Unified,
    Sep,
    SepKmeans,
    NoDenoise,
    Fjgsed,
    Fsrsc,
    Corr,
    Knn,
    EpsNn,
}

impl Method {
    pub const ALL: [Method; 9] = [
        Method::Unified,
        Method::Sep,
        Method::SepKmeans,
        Method::NoDenoise,
        Method::Fjgsed,
        Method::Fsrsc,
        Method::Corr,
        Method::Knn,
        Method::EpsNn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Unified => "unified",
            Method::Sep => "sep",
            Method::SepKmeans => "sep-kmeans",
            Method::NoDenoise => "no-denoise",
            Method::Fjgsed => "fjgsed",
            Method::Fsrsc => "fsrsc",
            Method::Corr => "corr",
            Method::Knn => "knn",
            Method::EpsNn => "epsnn",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = FgcError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL.into_iter().find(|m| m.name() == s.trim()).ok_or_else(|| {
            let names: Vec<&str> = Method::ALL.iter().map(|m| m.name()).collect();
            FgcError::InvalidParameter(format!("unknown method {s:?}; expected one of {}", names.join(", ")))
        })
    }
}

/// Settings for every method; each method reads the part it needs.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodSettings {
    pub fit: FitConfig,
    pub fjgsed: FjgsedConfig,
    pub fsrsc: FsrscConfig,
    pub knn_k: usize,
    /// `None` uses the median row distance.
    pub epsnn_radius: Option<f64>,
}

impl Default for MethodSettings {
    fn default() -> Self {
        Self {
            fit: FitConfig::default(),
            fjgsed: FjgsedConfig::default(),
            fsrsc: FsrscConfig::default(),
            knn_k: 10,
            epsnn_radius: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| FgcError::parse(key, format!("cannot parse {value:?}")))
}

impl MethodSettings {
    /// Applies one override. Keys prefixed `fjgsed.` / `fsrsc.` go to the
    /// baselines; anything else is a fit setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "knn_k" => self.knn_k = parse(key, value)?,
            "epsnn_radius" => {
                self.epsnn_radius = if value.trim() == "auto" {
                    None
                } else {
                    Some(parse(key, value)?)
                }
            }
            "fjgsed.neighbors" => self.fjgsed.neighbors = parse(key, value)?,
            "fjgsed.mu" => self.fjgsed.mu = parse(key, value)?,
            "fjgsed.gamma" => self.fjgsed.gamma = parse(key, value)?,
            "fjgsed.max_iter" => self.fjgsed.max_iter = parse(key, value)?,
            "fjgsed.rel_tol" => self.fjgsed.rel_tol = parse(key, value)?,
            "fsrsc.alpha" => self.fsrsc.alpha = parse(key, value)?,
            "fsrsc.mu" => self.fsrsc.mu = parse(key, value)?,
            "fsrsc.gamma" => self.fsrsc.gamma = parse(key, value)?,
            "fsrsc.rotation_weight" => self.fsrsc.rotation_weight = parse(key, value)?,
            "fsrsc.alm_iterations" => self.fsrsc.alm_iterations = parse(key, value)?,
            "fsrsc.max_iter" => self.fsrsc.max_iter = parse(key, value)?,
            "fsrsc.tol" => self.fsrsc.tol = parse(key, value)?,
            "fsrsc.column_form" => {
                self.fsrsc.column_form = match value.trim() {
                    "derived" => ColumnForm::Derived,
                    "as-printed" => ColumnForm::AsPrinted,
                    other => {
                        return Err(FgcError::parse(
                            key,
                            format!("expected derived or as-printed, got {other:?}"),
                        ))
                    }
                }
            }
            _ => self.fit.set(key, value)?,
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        let mut s = self.clone();
        s.fit.seed = seed;
        s.fjgsed.seed = seed;
        s.fsrsc.seed = seed;
        s
    }

    /// Snapshot of the settings `method` actually reads.
    pub fn to_pairs(&self, method: Method) -> Vec<(String, String)> {
        let own = |pairs: Vec<(&str, String)>| pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
        match method {
            Method::Fjgsed => own(vec![
                ("fjgsed.neighbors", self.fjgsed.neighbors.to_string()),
                ("fjgsed.mu", self.fjgsed.mu.to_string()),
                ("fjgsed.gamma", self.fjgsed.gamma.to_string()),
                ("fjgsed.max_iter", self.fjgsed.max_iter.to_string()),
                ("fjgsed.rel_tol", self.fjgsed.rel_tol.to_string()),
                ("seed", self.fjgsed.seed.to_string()),
            ]),
            Method::Fsrsc => own(vec![
                ("fsrsc.alpha", self.fsrsc.alpha.to_string()),
                ("fsrsc.mu", self.fsrsc.mu.to_string()),
                ("fsrsc.gamma", self.fsrsc.gamma.to_string()),
                ("fsrsc.rotation_weight", self.fsrsc.rotation_weight.to_string()),
                ("fsrsc.alm_iterations", self.fsrsc.alm_iterations.to_string()),
                ("fsrsc.max_iter", self.fsrsc.max_iter.to_string()),
                ("fsrsc.tol", self.fsrsc.tol.to_string()),
                (
                    "fsrsc.column_form",
                    match self.fsrsc.column_form {
                        ColumnForm::Derived => "derived",
                        ColumnForm::AsPrinted => "as-printed",
                    }
                    .to_string(),
                ),
                ("seed", self.fsrsc.seed.to_string()),
            ]),
            _ => {
                let mut pairs = own(self.fit.to_pairs());
                match method {
                    Method::Knn => pairs.push(("knn_k".into(), self.knn_k.to_string())),
                    Method::EpsNn => pairs.push((
                        "epsnn_radius".into(),
                        self.epsnn_radius.map_or_else(|| "auto".to_string(), |r| r.to_string()),
                    )),
                    _ => {}
                }
                pairs
            }
        }
    }
}

pub fn run_method(
    method: Method,
    x: &SignalMatrix,
    fs: &FairnessSystem,
    k: usize,
    s: &MethodSettings,
) -> Result<FitResult> {
    let sep = |graph, disc| separate_fit(x, fs, k, &s.fit, graph, disc);
    match method {
        Method::Unified => unified_fit(x, fs, k, &s.fit),
        Method::NoDenoise => {
            let cfg = FitConfig {
                denoise: false,
                ..s.fit.clone()
            };
            unified_fit(x, fs, k, &cfg)
        }
        Method::Sep => sep(GraphMethod::Learned, Discretizer::Rotation),
        Method::SepKmeans => sep(GraphMethod::Learned, Discretizer::Kmeans),
        Method::Corr => sep(GraphMethod::Baseline(BaselineGraph::Pearson), Discretizer::Rotation),
        Method::Knn => sep(
            GraphMethod::Baseline(BaselineGraph::Knn(s.knn_k)),
            Discretizer::Rotation,
        ),
        Method::EpsNn => {
            let radius = s.epsnn_radius.unwrap_or_else(|| median_row_distance(x));
            sep(
                GraphMethod::Baseline(BaselineGraph::EpsNn(radius)),
                Discretizer::Rotation,
            )
        }
        Method::Fjgsed => fjgsed_fit(x, fs, k, &s.fjgsed).map(|f| f.fit),
        Method::Fsrsc => fsrsc_fit(x, fs, k, &s.fsrsc).map(|f| f.fit),
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub params: VsbmParams,
    pub num_signals: usize,
    pub noise: NoiseSpec,
    pub methods: Vec<Method>,
    /// Aligned with `methods`.
    pub settings: Vec<MethodSettings>,
    pub trials: usize,
    pub seed_base: u64,
}

impl ExperimentSpec {
    pub fn new(params: VsbmParams, num_signals: usize, noise: NoiseSpec, methods: Vec<Method>, trials: usize) -> Self {
        let settings = vec![MethodSettings::default(); methods.len()];
        Self {
            params,
            num_signals,
            noise,
            methods,
            settings,
            trials,
            seed_base: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(FgcError::InvalidParameter("trial count must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(FgcError::InvalidParameter("no methods requested".into()));
        }
        if self.settings.len() != self.methods.len() {
            return Err(FgcError::InvalidParameter(
                "one settings block per method is required".into(),
            ));
        }
        self.params.validate()
    }

    /// Applies `key = value` to every method.
    pub fn set_all(&mut self, key: &str, value: &str) -> Result<()> {
        self.settings.iter_mut().try_for_each(|s| s.set(key, value))
    }

    /// Reads `[dataset]`, `[experiment]`, `[fit]` and `[fit.<method>]`.
    pub fn from_config(cfg: &ConfigFile) -> Result<Self> {
        let mut params = VsbmParams::default();
        let mut n = 2000;
        let (mut lo, mut hi) = (0.0, 0.2);
        for (k, v) in cfg.section("dataset") {
            match k.as_str() {
                "D" => params.num_nodes = parse(k, v)?,
                "K" => params.num_clusters = parse(k, v)?,
                "S" => params.num_groups = parse(k, v)?,
                "N" => n = parse(k, v)?,
                "a" => params.a = parse(k, v)?,
                "b" => params.b = parse(k, v)?,
                "c" => params.c = parse(k, v)?,
                "d" => params.d = parse(k, v)?,
                "noise_lo" => lo = parse(k, v)?,
                "noise_hi" => hi = parse(k, v)?,
                _ => return Err(FgcError::parse(format!("[dataset] {k}"), "unknown key")),
            }
        }
        let mut methods = vec![Method::Unified];
        let mut trials = 5;
        let mut seed_base = 0;
        for (k, v) in cfg.section("experiment") {
            match k.as_str() {
                "methods" => methods = split_list(v).iter().map(|m| m.parse()).collect::<Result<_>>()?,
                "trials" => trials = parse(k, v)?,
                "seed_base" => seed_base = parse(k, v)?,
                _ => return Err(FgcError::parse(format!("[experiment] {k}"), "unknown key")),
            }
        }
        let mut spec = Self::new(params, n, NoiseSpec::Uniform { lo, hi }, methods, trials);
        spec.seed_base = seed_base;
        for (k, v) in cfg.section("fit") {
            spec.set_all(k, v)?;
        }
        for (m, s) in spec.methods.iter().zip(spec.settings.iter_mut()) {
            for (k, v) in cfg.section(&format!("fit.{}", m.name())) {
                s.set(k, v)?;
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// One `(label, spec)` per noise regime of the desk-scale reproduction.
pub fn desk_preset() -> Vec<(String, ExperimentSpec)> {
    [(0.0, 0.2), (0.4, 0.6)]
        .into_iter()
        .map(|(lo, hi)| {
            let params = VsbmParams {
                num_nodes: 96,
                num_clusters: 4,
                num_groups: 2,
                ..Default::default()
            };
            let mut spec = ExperimentSpec::new(params, 2000, NoiseSpec::Uniform { lo, hi }, Method::ALL.to_vec(), 5);
            for (k, v) in DESK_PRESET_FIT {
                spec.set_all(k, v).expect("preset keys are valid");
            }
            (format!("noise-{lo}-{hi}"), spec)
        })
        .collect()
}

/// Fit settings of the desk preset.
pub const DESK_PRESET_FIT: [(&str, &str); 5] = [
    ("xi", "0.1"),
    ("beta", "0.025"),
    ("alpha", "0.1"),
    ("mu", "0.01"),
    ("gamma", "0.01"),
];

#[derive(Debug, Clone)]
pub struct TrialRow {
    pub method: Method,
    pub trial: usize,
    pub report: Option<MetricReport>,
    pub runtime_s: f64,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub method: Method,
    pub trials: usize,
    pub ok: usize,
    pub fs: f64,
    pub ee: f64,
    pub ce: f64,
    pub balance: f64,
    pub runtime_s: f64,
}

pub const TRIAL_HEADER: &str = "method,trial,fs,ee,ce,balance,runtime_s,status";
pub const AGGREGATE_HEADER: &str = "method,trials,ok,fs,ee,ce,balance,runtime_s";

fn status_text(e: &FgcError) -> String {
    format!("error: {e}").replace([',', '\n', '\r'], ";")
}

fn run_trial(spec: &ExperimentSpec, trial: usize) -> Vec<TrialRow> {
    let seed = spec.seed_base + trial as u64;
    let k = spec.params.num_clusters;
    let failed = |status: String| {
        spec.methods
            .iter()
            .map(|&method| TrialRow {
                method,
                trial,
                report: None,
                runtime_s: 0.0,
                status: status.clone(),
            })
            .collect()
    };
    let (truth, data) = match generate_dataset(&spec.params, spec.num_signals, &spec.noise, seed) {
        Ok(v) => v,
        Err(e) => return failed(status_text(&e)),
    };
    let fs = match FairnessSystem::new(&data.group_labels, spec.params.num_groups) {
        Ok(fs) => fs,
        Err(e) => return failed(status_text(&e)),
    };
    spec.methods
        .iter()
        .zip(&spec.settings)
        .map(|(&method, settings)| {
            let start = Instant::now();
            let outcome = run_method(method, &data.signals, &fs, k, &settings.with_seed(seed)).and_then(|fit| {
                MetricReport::evaluate(
                    &fit.laplacian(),
                    &fit.labels,
                    &truth.laplacian,
                    &truth.cluster_labels,
                    &fs,
                    k,
                )
            });
            let runtime_s = start.elapsed().as_secs_f64();
            match outcome {
                Ok(report) => TrialRow {
                    method,
                    trial,
                    report: Some(report),
                    runtime_s,
                    status: "ok".into(),
                },
                Err(e) => TrialRow {
                    method,
                    trial,
                    report: None,
                    runtime_s,
                    status: status_text(&e),
                },
            }
        })
        .collect()
}

/// Runs every trial; rows come back in trial order, methods in spec order.
pub fn run_experiment(spec: &ExperimentSpec, jobs: usize) -> Result<Vec<TrialRow>> {
    spec.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| FgcError::InvalidParameter(format!("thread pool: {e}")))?;
    let per_trial: Vec<Vec<TrialRow>> =
        pool.install(|| (0..spec.trials).into_par_iter().map(|t| run_trial(spec, t)).collect());
    Ok(per_trial.into_iter().flatten().collect())
}

/// Means over the successful trials of each method, in first-seen order.
pub fn aggregate(rows: &[TrialRow]) -> Vec<Aggregate> {
    let mut order: Vec<Method> = Vec::new();
    for r in rows {
        if !order.contains(&r.method) {
            order.push(r.method);
        }
    }
    order
        .into_iter()
        .map(|method| {
            let mine: Vec<&TrialRow> = rows.iter().filter(|r| r.method == method).collect();
            let ok: Vec<&MetricReport> = mine.iter().filter_map(|r| r.report.as_ref()).collect();
            let mean = |f: fn(&MetricReport) -> f64| {
                if ok.is_empty() {
                    f64::NAN
                } else {
                    ok.iter().map(|r| f(r)).sum::<f64>() / ok.len() as f64
                }
            };
            Aggregate {
                method,
                trials: mine.len(),
                ok: ok.len(),
                fs: mean(|r| r.fs),
                ee: mean(|r| r.ee),
                ce: mean(|r| r.ce),
                balance: mean(|r| r.balance),
                runtime_s: mine.iter().map(|r| r.runtime_s).sum::<f64>() / mine.len().max(1) as f64,
            }
        })
        .collect()
}

pub fn trial_csv(rows: &[TrialRow]) -> String {
    let mut out = format!("{TRIAL_HEADER}\n");
    for r in rows {
        let (fs, ee, ce, bal) = r.report.as_ref().map_or((f64::NAN, f64::NAN, f64::NAN, f64::NAN), |m| {
            (m.fs, m.ee, m.ce, m.balance)
        });
        out.push_str(&format!(
            "{},{},{fs},{ee},{ce},{bal},{:.3},{}\n",
            r.method, r.trial, r.runtime_s, r.status
        ));
    }
    out
}

pub fn aggregate_csv(aggs: &[Aggregate]) -> String {
    let mut out = format!("{AGGREGATE_HEADER}\n");
    for a in aggs {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{:.3}\n",
            a.method, a.trials, a.ok, a.fs, a.ee, a.ce, a.balance, a.runtime_s
        ));
    }
    out
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::File::create(path)
        .and_then(|mut f| f.write_all(text.as_bytes()))
        .map_err(|e| FgcError::io(path, e))
}

/// Writes `trials.csv` and `aggregate.csv` under `dir`.
pub fn write_experiment(dir: &Path, rows: &[TrialRow]) -> Result<Vec<Aggregate>> {
    fs::create_dir_all(dir).map_err(|e| FgcError::io(dir, e))?;
    let aggs = aggregate(rows);
    write_text(&dir.join("trials.csv"), &trial_csv(rows))?;
    write_text(&dir.join("aggregate.csv"), &aggregate_csv(&aggs))?;
    Ok(aggs)
}

/// Hyperparameter grid: every combination of the listed values.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub axes: Vec<(String, Vec<String>)>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        let values = || vec!["0.001".to_string(), "0.01".into(), "0.1".into()];
        Self {
            axes: vec![("xi".into(), values()), ("beta".into(), values())],
        }
    }
}

impl SweepGrid {
    /// Reads the `[sweep]` section; an absent or empty section gives the default grid.
    pub fn from_config(cfg: &ConfigFile) -> Self {
        let axes: Vec<(String, Vec<String>)> = cfg.section("sweep").map(|(k, v)| (k.clone(), split_list(v))).collect();
        if axes.is_empty() {
            Self::default()
        } else {
            Self { axes }
        }
    }

    pub fn points(&self) -> Vec<Vec<(String, String)>> {
        let mut points = vec![Vec::new()];
        for (key, values) in &self.axes {
            points = points
                .into_iter()
                .flat_map(|p| {
                    values.iter().map(move |v| {
                        let mut q = p.clone();
                        q.push((key.clone(), v.clone()));
                        q
                    })
                })
                .collect();
        }
        points
    }
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub config: String,
    pub aggregate: Aggregate,
}

pub const SWEEP_HEADER: &str = "method,config,trials,ok,fs,ee,ce,balance,runtime_s";
pub const BEST_HEADER: &str = "method,metric,config,value";

pub fn run_sweep(spec: &ExperimentSpec, grid: &SweepGrid, jobs: usize) -> Result<Vec<SweepRow>> {
    let mut out = Vec::new();
    for point in grid.points() {
        let mut s = spec.clone();
        for (k, v) in &point {
            s.set_all(k, v)?;
        }
        let label = point
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(";");
        for aggregate in aggregate(&run_experiment(&s, jobs)?) {
            out.push(SweepRow {
                config: label.clone(),
                aggregate,
            });
        }
    }
    Ok(out)
}

fn better(a: f64, b: f64, higher: bool) -> bool {
    if higher {
        a > b
    } else {
        a < b
    }
}

/// Best configuration per method and metric: highest FS and Balance, lowest EE and CE.
pub fn best_per_metric(rows: &[SweepRow]) -> Vec<(Method, &'static str, String, f64)> {
    let mut methods: Vec<Method> = Vec::new();
    for r in rows {
        if !methods.contains(&r.aggregate.method) {
            methods.push(r.aggregate.method);
        }
    }
    let metrics: [(&str, fn(&Aggregate) -> f64, bool); 4] = [
        ("fs", |a| a.fs, true),
        ("ee", |a| a.ee, false),
        ("ce", |a| a.ce, false),
        ("balance", |a| a.balance, true),
    ];
    let mut out = Vec::new();
    for m in methods {
        for (name, get, higher) in metrics {
            let best = rows
                .iter()
                .filter(|r| r.aggregate.method == m && get(&r.aggregate).is_finite())
                .fold(None::<&SweepRow>, |best, r| match best {
                    Some(b) if !better(get(&r.aggregate), get(&b.aggregate), higher) => Some(b),
                    _ => Some(r),
                });
            if let Some(b) = best {
                out.push((m, name, b.config.clone(), get(&b.aggregate)));
            }
        }
    }
    out
}

/// Writes `sweep.csv` and `best.csv` under `dir`.
pub fn write_sweep(dir: &Path, rows: &[SweepRow]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| FgcError::io(dir, e))?;
    let mut text = format!("{SWEEP_HEADER}\n");
    for r in rows {
        let a = &r.aggregate;
        text.push_str(&format!(
            "{},{},{},{},{},{},{},{},{:.3}\n",
            a.method, r.config, a.trials, a.ok, a.fs, a.ee, a.ce, a.balance, a.runtime_s
        ));
    }
    write_text(&dir.join("sweep.csv"), &text)?;
    let mut best = format!("{BEST_HEADER}\n");
    for (m, metric, config, value) in best_per_metric(rows) {
        best.push_str(&format!("{m},{metric},{config},{value}\n"));
    }
    write_text(&dir.join("best.csv"), &best)
}
