//! Experiment configs and the runners behind each CLI subcommand.
//!
//! A report is one pretty-printed JSON document tagged with
//! [`SCHEMA_VERSION`], plus one CSV side table per row-shaped section.
//! Reports contain no timestamps unless wall times are requested, so the
//! same config and seed give byte-identical files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bounds::{self, BoundReport};
use crate::classical::{self, Dataset};
use crate::error::{Error, Result};
use crate::hamsim::{self, ChannelConfig, CHANNEL_SAFETY};
use crate::io;
use crate::numkit::DEFAULT_DIM_BUDGET;
use crate::qcore::{OracleCounters, Precision};
use crate::qrr::{self, Alg1Config, Alg1Output, Alg2Config, CvEstimate, FoldChoice, NoiseModel};
use crate::synthetic::{self, SyntheticSpec};

pub const SCHEMA_VERSION: &str = "qridge-report/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    Csv {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        y_path: Option<PathBuf>,
    },
    Synthetic(SyntheticSpec),
    GoodFit {
        n: usize,
        m: usize,
        singular_values: Vec<f64>,
        noise: f64,
        seed: u64,
    },
    /// Uniform random entries with `κ <= 4`.
    Reference {
        n: usize,
        m: usize,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AlphaSpec {
    /// `l` points over `[(N+M)²/(10κ²), (N+M)²/2]`.
    Auto {
        l: usize,
    },
    Range {
        min: f64,
        max: f64,
        l: usize,
    },
    List {
        values: Vec<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Exact preparation and exact probabilities.
    #[default]
    Exact,
    /// Every estimated quantity carries its share of `epsilon`.
    Noise,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Mode::Exact),
            "noise" => Ok(Mode::Noise),
            other => Err(Error::Input(format!(
                "mode must be exact or noise, got {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    /// Number of generators.
    pub q: usize,
    /// System dimension.
    pub n: usize,
    pub t: f64,
    pub steps: Vec<usize>,
    pub epsilon: f64,
}

impl Default for ChannelSpec {
    fn default() -> Self {
        Self {
            q: 2,
            n: 2,
            t: 1.0,
            steps: vec![10, 100, 1000, 10000],
            epsilon: 0.05,
        }
    }
}

fn default_alphas() -> AlphaSpec {
    AlphaSpec::Auto { l: 5 }
}

fn default_s_list() -> Vec<u32> {
    vec![4, 6, 8, 10]
}

fn default_epsilon() -> f64 {
    0.05
}

fn default_budget() -> usize {
    DEFAULT_DIM_BUDGET
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub data: DataSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default = "default_alphas")]
    pub alphas: AlphaSpec,
    /// Regularization for `fit` and the fidelity sweep.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Phase bits; absent means the ideal eigen-index register.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<u32>,
    #[serde(default = "default_s_list")]
    pub s_list: Vec<u32>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default = "default_budget")]
    pub dim_budget: usize,
    #[serde(default)]
    pub channel: ChannelSpec,
    #[serde(default)]
    pub record_wall_times: bool,
}

impl ExperimentConfig {
    pub fn new(data: DataSource) -> Self {
        Self {
            data,
            k: None,
            alphas: default_alphas(),
            alpha: None,
            s: None,
            s_list: default_s_list(),
            epsilon: default_epsilon(),
            mode: Mode::Exact,
            seed: 0,
            out: None,
            dim_budget: DEFAULT_DIM_BUDGET,
            channel: ChannelSpec::default(),
            record_wall_times: false,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    fn precision(&self) -> Precision {
        self.s.map_or(Precision::Exact, Precision::Bits)
    }

    fn noise(&self) -> Option<NoiseModel> {
        (self.mode == Mode::Noise).then_some(NoiseModel {
            epsilon: self.epsilon,
            seed: self.seed,
        })
    }

    pub fn alg1(&self, alpha: f64) -> Alg1Config {
        Alg1Config {
            alpha,
            precision: self.precision(),
            c1: None,
            t0: None,
            exact_prep: self.mode == Mode::Exact,
            noise: self.noise(),
        }
    }

    pub fn alg2(&self, k: usize, alphas: Vec<f64>) -> Alg2Config {
        Alg2Config {
            k,
            alphas,
            precision: self.precision(),
            c2: None,
            t0: None,
            exact_prep: self.mode == Mode::Exact,
            noise: self.noise(),
        }
    }
}

pub fn load_dataset(source: &DataSource) -> Result<Dataset> {
    match source {
        DataSource::Csv { path, y_path } => io::ingest_csv(path, y_path.as_deref()),
        DataSource::Synthetic(spec) => synthetic::generate_synthetic(spec),
        DataSource::GoodFit {
            n,
            m,
            singular_values,
            noise,
            seed,
        } => synthetic::generate_good_fit(*n, *m, singular_values, *noise, *seed),
        DataSource::Reference { n, m, seed } => {
            if *n < 2 || *m == 0 || m > n {
                return Err(Error::Input(format!(
                    "reference data needs 2 <= N and 1 <= M <= N, got {n}x{m}"
                )));
            }
            Ok(synthetic::reference_instance(*n, *m, *seed))
        }
    }
}

pub fn resolve_alphas(spec: &AlphaSpec, d: &Dataset) -> Result<Vec<f64>> {
    match spec {
        AlphaSpec::Auto { l } => {
            let (lo, hi) = classical::default_alpha_range(d.nm(), d.normalized_kappa());
            classical::alpha_grid(lo, hi, *l)
        }
        AlphaSpec::Range { min, max, l } => classical::alpha_grid(*min, *max, *l),
        AlphaSpec::List { values } => {
            if values.is_empty() || values.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
                return Err(Error::Input(
                    "alpha list must be nonempty with positive entries".into(),
                ));
            }
            Ok(values.clone())
        }
    }
}

/// The configured `α`, or the geometric middle of the default range.
fn resolve_fit_alpha(cfg: &ExperimentConfig, d: &Dataset) -> f64 {
    cfg.alpha.unwrap_or_else(|| {
        let (lo, hi) = classical::default_alpha_range(d.nm(), d.normalized_kappa());
        (lo * hi).sqrt()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub n: usize,
    pub m: usize,
    pub rank: usize,
    pub kappa: f64,
    pub normalized_kappa: f64,
    pub x_max: f64,
    pub y_max: f64,
    pub singular_values: Vec<f64>,
}

impl DatasetSummary {
    pub fn of(d: &Dataset) -> Self {
        let meta = d.meta();
        Self {
            n: d.n(),
            m: d.m(),
            rank: meta.rank,
            kappa: d.kappa(),
            normalized_kappa: d.normalized_kappa(),
            x_max: meta.x_max,
            y_max: meta.y_max,
            singular_values: meta.singular_values.clone(),
        }
    }
}

/// Values the run derived rather than read from the config.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Resolved {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub folds: Option<FoldChoice>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub alphas: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c1: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub c2: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precision: Option<Precision>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub alpha: f64,
    pub c1: f64,
    pub t0: f64,
    pub success_prob: f64,
    pub flag_prob: f64,
    pub steps: Vec<(String, f64)>,
    pub w_norm_sq_est: f64,
    pub w_norm_sq_exact: f64,
    pub fidelity: f64,
    /// Real parts of `|φ_w⟩`.
    pub phi_w: Vec<f64>,
    pub noise: bool,
    pub counters: OracleCounters,
}

impl FitSummary {
    fn of(d: &Dataset, cfg: &Alg1Config, out: &Alg1Output) -> Result<Self> {
        Ok(Self {
            alpha: cfg.alpha,
            c1: out.c1,
            t0: out.t0,
            success_prob: out.success_prob,
            flag_prob: out.flag_prob,
            steps: out.steps.clone(),
            w_norm_sq_est: out.w_norm_sq_est,
            w_norm_sq_exact: classical::solve_ridge_svd(d, cfg.alpha)?.w.norm_squared(),
            fidelity: out.fidelity_vs_classical,
            phi_w: out.phi_w.amplitudes().iter().map(|a| a.re).collect(),
            noise: cfg.noise.is_some(),
            counters: out.counters,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityRow {
    pub s: u32,
    pub fidelity: f64,
    pub success_prob: f64,
    pub hamsim_invocations: u64,
    pub total_oracle_calls: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRow {
    pub steps: usize,
    pub delta_t: f64,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSweep {
    pub q: usize,
    pub n: usize,
    pub t: f64,
    pub rows: Vec<ChannelRow>,
    /// Least-squares slope of `log error` against `log Δt` over rows with
    /// nonzero error; 0 when fewer than two such rows exist.
    pub slope: f64,
    pub epsilon: f64,
    pub calibrated_steps: usize,
    pub calibrated_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: String,
    pub command: String,
    pub config: ExperimentConfig,
    pub resolved: Resolved,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<DatasetSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cv: Option<CvEstimate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitSummary>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fidelity: Vec<FidelityRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel: Option<ChannelSweep>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bounds: Vec<BoundReport>,
    pub counters: OracleCounters,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_times: Option<BTreeMap<String, f64>>,
}

impl RunReport {
    fn new(command: &str, cfg: &ExperimentConfig) -> Self {
        Self {
            schema_version: SCHEMA_VERSION.into(),
            command: command.into(),
            config: cfg.clone(),
            resolved: Resolved::default(),
            dataset: None,
            cv: None,
            fit: None,
            fidelity: Vec::new(),
            channel: None,
            bounds: Vec::new(),
            counters: OracleCounters::default(),
            wall_times: None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let value = serde_json::to_value(self).expect("report serializes");
        check_finite(&value, "$")?;
        Ok(serde_json::to_string_pretty(&value).expect("value serializes") + "\n")
    }

    pub fn all_bounds_hold(&self) -> bool {
        self.bounds.iter().all(|b| b.satisfied)
    }
}

/// Serialized non-finite floats become `null`; reports must not contain any.
fn check_finite(v: &serde_json::Value, at: &str) -> Result<()> {
    match v {
        serde_json::Value::Null => Err(Error::Contract(format!(
            "non-finite number in report at {at}"
        ))),
        serde_json::Value::Array(items) => items
            .iter()
            .enumerate()
            .try_for_each(|(i, x)| check_finite(x, &format!("{at}[{i}]"))),
        serde_json::Value::Object(map) => map
            .iter()
            .try_for_each(|(k, x)| check_finite(x, &format!("{at}.{k}"))),
        _ => Ok(()),
    }
}

struct Clock {
    on: bool,
    times: BTreeMap<String, f64>,
}

impl Clock {
    fn new(on: bool) -> Self {
        Self {
            on,
            times: BTreeMap::new(),
        }
    }

    fn time<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        if self.on {
            self.times
                .insert(name.into(), start.elapsed().as_secs_f64());
        }
        out
    }

    fn finish(self) -> Option<BTreeMap<String, f64>> {
        self.on.then_some(self.times)
    }
}

fn fold_choice(cfg: &ExperimentConfig, d: &Dataset) -> Result<FoldChoice> {
    let choice = qrr::resolve_k(d, cfg.k);
    if choice.k < 2 || choice.k > d.n() {
        return Err(Error::Input(format!(
            "K must be in 2..={}, got {}",
            d.n(),
            choice.k
        )));
    }
    Ok(choice)
}

fn fit_bounds(
    d: &Dataset,
    p: &classical::FoldPartition,
    est: &CvEstimate,
) -> Result<Vec<BoundReport>> {
    let row = &est.rows[est.quantum_index];
    let alpha = row.alpha;
    let mut out = Vec::new();
    let pw = bounds::pw_lower_bound(d, p, alpha, row.c2, row.p_w)?;
    out.extend([pw.chain, pw.rigorous, pw.omega]);
    let gf = bounds::p1_p2_goodfit_bounds(d, p, alpha, row.p1, row.p2)?;
    out.extend(gf.weight_norms);
    out.extend([gf.p1, gf.p2]);
    for l in 0..p.k {
        out.push(bounds::weyl_interval(d, p, l)?.report);
    }
    out.push(bounds::rank_kappa_bound(d));
    Ok(out)
}

/// Quantum cross-validation over the grid, then the ridge state and the
/// bounds at the selected `α`.
pub fn run_cv_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    let mut clock = Clock::new(cfg.record_wall_times);
    let d = load_dataset(&cfg.data)?;
    let folds = fold_choice(cfg, &d)?;
    let alphas = resolve_alphas(&cfg.alphas, &d)?;
    let p = classical::partition_folds(d.n(), folds.k)?;
    let est = clock.time("cv", || {
        qrr::select_alpha_quantum(&d, &p, &cfg.alg2(folds.k, alphas.clone()))
    })?;
    let fit_cfg = cfg.alg1(est.alpha_hat_quantum);
    let fit = clock.time("fit", || qrr::algorithm1_run(&d, &fit_cfg))?;
    let mut report = RunReport::new("cv", cfg);
    report.bounds = clock.time("bounds", || fit_bounds(&d, &p, &est))?;
    report.counters = est.counters;
    report.counters.merge(&fit.counters);
    report.resolved = Resolved {
        folds: Some(folds),
        alphas,
        alpha: Some(est.alpha_hat_quantum),
        c1: Some(fit.c1),
        c2: est.rows.iter().map(|r| r.c2).collect(),
        precision: Some(cfg.precision()),
    };
    report.fit = Some(FitSummary::of(&d, &fit_cfg, &fit)?);
    report.dataset = Some(DatasetSummary::of(&d));
    report.cv = Some(est);
    report.wall_times = clock.finish();
    Ok(report)
}

pub fn run_fit(cfg: &ExperimentConfig) -> Result<RunReport> {
    let mut clock = Clock::new(cfg.record_wall_times);
    let d = load_dataset(&cfg.data)?;
    let fit_cfg = cfg.alg1(resolve_fit_alpha(cfg, &d));
    let fit = clock.time("fit", || qrr::algorithm1_run(&d, &fit_cfg))?;
    let mut report = RunReport::new("fit", cfg);
    report.counters = fit.counters;
    report.resolved = Resolved {
        alpha: Some(fit_cfg.alpha),
        c1: Some(fit.c1),
        precision: Some(fit_cfg.precision),
        ..Resolved::default()
    };
    report.fit = Some(FitSummary::of(&d, &fit_cfg, &fit)?);
    report.dataset = Some(DatasetSummary::of(&d));
    report.wall_times = clock.finish();
    Ok(report)
}

/// Ridge-state fidelity for each phase-register size in `s_list`.
pub fn run_fidelity_sweep(cfg: &ExperimentConfig, s_list: &[u32]) -> Result<RunReport> {
    if s_list.is_empty() {
        return Err(Error::Input("fidelity sweep needs at least one s".into()));
    }
    let mut clock = Clock::new(cfg.record_wall_times);
    let d = load_dataset(&cfg.data)?;
    let alpha = resolve_fit_alpha(cfg, &d);
    let mut report = RunReport::new("sweep-fidelity", cfg);
    for &s in s_list {
        let fit_cfg = Alg1Config {
            precision: Precision::Bits(s),
            ..cfg.alg1(alpha)
        };
        let out = clock.time(&format!("s={s}"), || qrr::algorithm1_run(&d, &fit_cfg))?;
        report.counters.merge(&out.counters);
        report.fidelity.push(FidelityRow {
            s,
            fidelity: out.fidelity_vs_classical,
            success_prob: out.success_prob,
            hamsim_invocations: out.counters.hamsim_invocations,
            total_oracle_calls: out.counters.total_oracle_calls(),
        });
    }
    report.resolved.alpha = Some(alpha);
    report.dataset = Some(DatasetSummary::of(&d));
    report.wall_times = clock.finish();
    Ok(report)
}

/// Slope of the least-squares line through `(ln x, ln y)` for `y > 0`.
pub fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return 0.0;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

/// Channel error against `Δt = t/n` for seeded random generators.
pub fn run_channel_sweep(cfg: &ExperimentConfig, steps: &[usize]) -> Result<RunReport> {
    let spec = &cfg.channel;
    if spec.q == 0 || spec.n == 0 || steps.is_empty() {
        return Err(Error::Input(
            "channel sweep needs Q >= 1, N >= 1 and at least one step count".into(),
        ));
    }
    if spec.q * spec.n * spec.n > cfg.dim_budget {
        return Err(Error::Resource(format!(
            "Q·N² = {} exceeds the dimension budget {}",
            spec.q * spec.n * spec.n,
            cfg.dim_budget
        )));
    }
    let mut clock = Clock::new(cfg.record_wall_times);
    let a_list = hamsim::random_hermitian_family(spec.q, spec.n, cfg.seed);
    let states = hamsim::default_test_states(spec.q, spec.n, cfg.seed);
    let rows = clock.time("sweep", || {
        steps
            .iter()
            .map(|&n| {
                let cc = ChannelConfig::new(spec.t, n)?;
                let err = hamsim::channel_error(&a_list, &cc, &states, cfg.dim_budget)?;
                Ok(ChannelRow {
                    steps: n,
                    delta_t: cc.delta_t(),
                    error: err.max_trace_distance,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let slope = log_log_slope(
        &rows
            .iter()
            .map(|r| (r.delta_t, r.error))
            .collect::<Vec<_>>(),
    );
    let calibrated_steps = hamsim::step_count(
        hamsim::max_entry(&a_list),
        spec.t,
        spec.epsilon,
        CHANNEL_SAFETY,
    )?;
    let calibrated_error = clock.time("calibrated", || {
        hamsim::channel_error(
            &a_list,
            &ChannelConfig::new(spec.t, calibrated_steps)?,
            &states,
            cfg.dim_budget,
        )
    })?;
    let mut report = RunReport::new("sweep-channel", cfg);
    report.bounds.push(BoundReport::upper(
        "channel error at calibrated step count",
        spec.epsilon,
        calibrated_error.max_trace_distance,
    ));
    report.channel = Some(ChannelSweep {
        q: spec.q,
        n: spec.n,
        t: spec.t,
        rows,
        slope,
        epsilon: spec.epsilon,
        calibrated_steps,
        calibrated_error: calibrated_error.max_trace_distance,
    });
    report.wall_times = clock.finish();
    Ok(report)
}

/// Every analytic bound on the configured dataset and `α` grid.
pub fn run_bounds(cfg: &ExperimentConfig) -> Result<RunReport> {
    let d = load_dataset(&cfg.data)?;
    let folds = fold_choice(cfg, &d)?;
    let alphas = resolve_alphas(&cfg.alphas, &d)?;
    let p = classical::partition_folds(d.n(), folds.k)?;
    let nm = d.nm();
    let kappa = d.normalized_kappa().max(1.0);
    let mut report = RunReport::new("bounds", cfg);
    let mut counters = OracleCounters::default();
    let alg2 = cfg.alg2(folds.k, alphas.clone());
    let mut c2 = Vec::new();
    for &alpha in &alphas {
        let h_formula = bounds::h_max(nm, kappa, alpha);
        let h_grid = bounds::h_max_grid(nm, kappa, alpha, 100_001);
        report.bounds.push(BoundReport::upper(
            &format!("h_max alpha={alpha}"),
            h_formula * (1.0 + 1e-6),
            h_grid,
        ));
        let g_formula = bounds::g_max(nm, kappa, alpha);
        let g_grid = bounds::g_max_grid(nm, kappa, alpha, 100_001);
        report.bounds.push(BoundReport::upper(
            &format!("g_max alpha={alpha}"),
            g_formula * (1.0 + 1e-6),
            g_grid,
        ));
        let psi = qrr::algorithm2_psi_w(&d, &p, alpha, &alg2, &mut counters)?;
        let (_, p1) = qrr::algorithm2_yhat(&psi.state, &d, &p, &mut counters)?;
        let row = qrr::estimate_E_terms(&d, &p, alpha, &alg2)?;
        let pw = bounds::pw_lower_bound(&d, &p, alpha, psi.c2, psi.p_w)?;
        report.bounds.extend([pw.chain, pw.rigorous, pw.omega]);
        let gf = bounds::p1_p2_goodfit_bounds(&d, &p, alpha, p1, row.p2)?;
        report.bounds.extend(gf.weight_norms);
        report.bounds.extend([gf.p1, gf.p2]);
        c2.push(psi.c2);
    }
    for l in 0..p.k {
        report.bounds.push(bounds::weyl_interval(&d, &p, l)?.report);
    }
    report.bounds.push(bounds::rank_kappa_bound(&d));
    report.counters = counters;
    report.resolved = Resolved {
        folds: Some(folds),
        alphas,
        c2,
        precision: Some(cfg.precision()),
        ..Resolved::default()
    };
    report.dataset = Some(DatasetSummary::of(&d));
    Ok(report)
}

/// A CSV table written beside the report under `<stem>.<suffix>.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct SideTable {
    pub suffix: &'static str,
    pub text: String,
    pub rows: usize,
}

fn table(suffix: &'static str, header: &[&str], rows: Vec<Vec<String>>) -> SideTable {
    let mut text = header.join(",") + "\n";
    for r in &rows {
        text.push_str(&r.join(","));
        text.push('\n');
    }
    SideTable {
        suffix,
        text,
        rows: rows.len(),
    }
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\""))
}

pub fn side_tables(report: &RunReport) -> Vec<SideTable> {
    let mut out = Vec::new();
    if let Some(cv) = &report.cv {
        let rows = cv
            .rows
            .iter()
            .map(|r| {
                let mode = if r.noise { "noise" } else { "exact" };
                [
                    r.alpha,
                    r.e_est,
                    r.classical.e,
                    r.e1_est,
                    r.e2_est,
                    r.s3_est,
                    r.classical.e1,
                    r.classical.e2,
                    r.classical.s3,
                    r.p_w,
                    r.p1,
                    r.p2,
                    r.sign_s3,
                    r.c2,
                ]
                .iter()
                .map(f64::to_string)
                .chain([mode.to_string()])
                .collect()
            })
            .collect();
        out.push(table(
            "cv",
            &[
                "alpha", "e_est", "e_exact", "e1_est", "e2_est", "s3_est", "e1", "e2", "s3", "p_w",
                "p1", "p2", "sign_s3", "c2", "mode",
            ],
            rows,
        ));
    }
    if !report.fidelity.is_empty() {
        let rows = report
            .fidelity
            .iter()
            .map(|r| {
                vec![
                    r.s.to_string(),
                    r.fidelity.to_string(),
                    r.success_prob.to_string(),
                    r.hamsim_invocations.to_string(),
                    r.total_oracle_calls.to_string(),
                ]
            })
            .collect();
        out.push(table(
            "fidelity",
            &[
                "s",
                "fidelity",
                "success_prob",
                "hamsim_invocations",
                "oracle_calls",
            ],
            rows,
        ));
    }
    if let Some(ch) = &report.channel {
        let rows = ch
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.steps.to_string(),
                    r.delta_t.to_string(),
                    r.error.to_string(),
                ]
            })
            .collect();
        out.push(table("channel", &["steps", "delta_t", "error"], rows));
    }
    if !report.bounds.is_empty() {
        let rows = report
            .bounds
            .iter()
            .map(|b| {
                vec![
                    quote(&b.name),
                    b.analytic_value.to_string(),
                    b.empirical_value.to_string(),
                    b.satisfied.to_string(),
                    b.margin.to_string(),
                    b.applicable.to_string(),
                ]
            })
            .collect();
        out.push(table(
            "bounds",
            &[
                "name",
                "analytic",
                "empirical",
                "satisfied",
                "margin",
                "applicable",
            ],
            rows,
        ));
    }
    out
}

/// `report.json` → `report.<suffix>.csv`.
pub fn side_path(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}.csv"))
}

/// Writes the report and its side tables atomically; returns every path
/// written, report first.
pub fn emit_report(report: &RunReport, path: &Path) -> Result<Vec<PathBuf>> {
    let json = report.to_json()?;
    io::write_atomic(path, json.as_bytes())?;
    let mut written = vec![path.to_path_buf()];
    for t in side_tables(report) {
        let p = side_path(path, t.suffix);
        io::write_atomic(&p, t.text.as_bytes())?;
        written.push(p);
    }
    Ok(written)
}
