//! Configured experiments: scenarios, per-seed drivers, the eps-ladder
//! convergence study and its CSV output.

use std::fmt::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controlled::{Affine, FnCoefficient, SmoothCoefficient};
use crate::error::{Error, Result};
use crate::fastslow::drift::{averaged_drift_probes, DriftEstimate, DriftHandle, DriftSettings, EstimatorMode, OnTheFly, TabulatedDrift};
use crate::fastslow::fixed_point::pullback_steps;
use crate::fastslow::ou::{ou_horizon, ou_stationary_path};
use crate::fastslow::solve::{
    block_integrals, fixed_point_along, khasminskii_aux, solve_averaged, solve_fastslow, averaging_distance, Distance,
    FastSlowPaths,
};
use crate::fastslow::system::{FastSlowSystem, SystemParts};
use crate::fbm::{FbmMethod, FbmSampler};
use crate::lift::{lift_piecewise_linear, RoughLift};
use crate::path::{GridPath, HurstIndex};
use crate::rde::{FnDrift, RdeSolution, Scheme};
use crate::rng::RngSeed;
use crate::stats::median;
use crate::variation::{holder_exponent_estimate, RoughnessParams};

pub const SCHEMA_VERSION: u32 = 1;

const SLOW_NOISE: u64 = 1;
const FAST_NOISE: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    /// `f = sin x + sin y`, `h = 0.5 + 0.25 sin x`, `g~ = 0`, `A = 2`.
    Acceptance,
    /// As `Acceptance` with `g~ = sin x + 0.5 sin y`.
    Coupled,
    /// `f = x`, `h = 0`, `g~ = 0`: the averaged system is the slow one.
    Degenerate,
    /// `f = |y|^2`, `h = 0`, `g~ = 0`, `A = lambda Id`.
    OuMoment,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DriftSource {
    ClosedForm,
    Tabulated,
    OnTheFly,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub hurst: Option<f64>,
    pub hurst_fast: Option<f64>,
    /// Row-major `m x m`, or a single value for `lambda Id`.
    pub a: Option<Vec<f64>>,
    pub x0: Option<Vec<f64>>,
    pub y0: Option<Vec<f64>>,
    /// Fast dimension of the `ou-moment` scenario.
    pub fast_dim: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub t_end: f64,
    /// Slow step as a fraction of the smallest `eps`.
    pub fast_resolution: f64,
    /// Explicit slow step; must still resolve every `eps`.
    pub dt: Option<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            t_end: 1.0,
            fast_resolution: 0.02,
            dt: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudyConfig {
    pub eps: Vec<f64>,
    pub delta: Vec<f64>,
    pub seeds: u64,
    pub seed_base: u64,
    pub scheme: Scheme,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            eps: vec![0.5, 0.1, 0.02],
            delta: vec![0.2, 0.1, 0.05],
            seeds: 20,
            seed_base: 0,
            scheme: Scheme::Heun,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorConfig {
    /// Defaults to the closed form where the scenario has one.
    pub drift: Option<DriftSource>,
    pub mode: EstimatorMode,
    pub samples: usize,
    pub tol: f64,
    pub z_tol: f64,
    pub own_dt: f64,
    pub doublings: usize,
    pub horizon: f64,
    pub batches: usize,
    pub seed: u64,
    pub table_points: usize,
    /// The table covers `x0 +- table_half_width`.
    pub table_half_width: f64,
    /// Probe points of `avg-drift probe` (first slow component).
    pub probes: Vec<f64>,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        let d = DriftSettings::default();
        Self {
            drift: None,
            mode: EstimatorMode::Ensemble,
            samples: d.samples,
            tol: d.tol,
            z_tol: d.z_tol,
            own_dt: d.own_dt,
            doublings: d.doublings,
            horizon: d.horizon,
            batches: d.batches,
            seed: d.seed,
            table_points: 41,
            table_half_width: 3.0,
            probes: (0..10).map(|k| -2.25 + 0.5 * k as f64).collect(),
        }
    }
}

impl EstimatorConfig {
    pub fn settings(&self) -> DriftSettings {
        DriftSettings {
            own_dt: self.own_dt,
            tol: self.tol,
            z_tol: self.z_tol,
            doublings: self.doublings,
            samples: self.samples,
            horizon: self.horizon,
            batches: self.batches,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RoughnessConfig {
    pub p: f64,
    pub gamma: f64,
}

impl Default for RoughnessConfig {
    fn default() -> Self {
        Self { p: 2.7, gamma: 0.4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: String,
    /// Record wall-clock times; off keeps outputs byte-identical across runs.
    pub timings: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: "out".into(),
            timings: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub scenario: Scenario,
    #[serde(default)]
    pub system: SystemConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub study: StudyConfig,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub roughness: RoughnessConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn is_multiple(a: f64, b: f64) -> Option<usize> {
    let r = a / b;
    let k = r.round();
    (k >= 1.0 && (r - k).abs() <= 1e-6 * k).then_some(k as usize)
}

fn descending(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[0] > w[1])
}

impl ExperimentConfig {
    pub fn for_scenario(scenario: Scenario) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            scenario,
            system: SystemConfig::default(),
            grid: GridConfig::default(),
            study: StudyConfig::default(),
            estimator: EstimatorConfig::default(),
            roughness: RoughnessConfig::default(),
            output: OutputConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(file: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(file.as_ref())?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn dt(&self) -> f64 {
        let eps_min = self.study.eps.iter().copied().fold(f64::INFINITY, f64::min);
        self.grid.dt.unwrap_or(self.grid.fast_resolution * eps_min)
    }

    pub fn n_steps(&self) -> usize {
        (self.grid.t_end / self.dt()).round() as usize
    }

    pub fn roughness(&self) -> Result<RoughnessParams> {
        RoughnessParams::new(self.roughness.p, self.roughness.gamma).map_err(|e| config_err(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(config_err(format!(
                "schema_version {} unsupported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let s = &self.study;
        if s.eps.is_empty() || s.delta.is_empty() || s.seeds == 0 {
            return Err(config_err("eps ladder, delta ladder and seed count must be non-empty"));
        }
        if !descending(&s.eps) || !descending(&s.delta) {
            return Err(config_err("eps and delta ladders must be strictly descending"));
        }
        if s.eps.iter().any(|&e| !(e > 0.0 && e <= 1.0)) {
            return Err(config_err("every eps must lie in (0, 1]"));
        }
        let g = &self.grid;
        if !(g.t_end > 0.0) || !(g.fast_resolution > 0.0) {
            return Err(config_err("t_end and fast_resolution must be positive"));
        }
        let dt = self.dt();
        let eps_min = s.eps[s.eps.len() - 1];
        if !(dt > 0.0) || dt > g.fast_resolution * eps_min * (1.0 + 1e-9) {
            return Err(config_err(format!(
                "dt = {dt} exceeds fast_resolution * min eps = {}",
                g.fast_resolution * eps_min
            )));
        }
        if is_multiple(g.t_end, dt).is_none() {
            return Err(config_err(format!("t_end = {} is not a multiple of dt = {dt}", g.t_end)));
        }
        for &e in &s.eps {
            if is_multiple(s.eps[0], e).is_none() {
                return Err(config_err(format!("eps_max / {e} must be an integer")));
            }
        }
        for &d in &s.delta {
            if !(d < g.t_end) || is_multiple(d, dt).is_none() {
                return Err(config_err(format!("delta = {d} must be a multiple of dt below t_end")));
            }
        }
        self.roughness()?;
        self.estimator.settings().validate().map_err(|e| config_err(e.to_string()))?;
        if self.estimator.table_points < 2 || !(self.estimator.table_half_width > 0.0) {
            return Err(config_err("table needs at least two points and a positive half width"));
        }
        let setup = self.setup()?;
        let drift = self.estimator.drift.unwrap_or(if setup.closed_form.is_some() {
            DriftSource::ClosedForm
        } else {
            DriftSource::Tabulated
        });
        if drift == DriftSource::ClosedForm && setup.closed_form.is_none() {
            return Err(config_err(format!("scenario {:?} has no closed-form averaged drift", self.scenario)));
        }
        if drift == DriftSource::Tabulated && setup.system.n() != 1 {
            return Err(config_err("tabulated drift needs a one-dimensional slow variable"));
        }
        Ok(())
    }

    /// The scenario's system at `eps = 1` with the configured overrides.
    pub fn setup(&self) -> Result<Setup> {
        build_setup(self.scenario, &self.system).map_err(|e| match e {
            Error::Config(_) => e,
            other => config_err(other.to_string()),
        })
    }
}

/// A scenario instantiated: the system, initial states, and the averaged
/// drift where it is known in closed form.
#[derive(Debug, Clone)]
pub struct Setup {
    pub system: FastSlowSystem,
    pub x0: Vec<f64>,
    pub y0: Vec<f64>,
    pub closed_form: Option<FnDrift>,
}

fn modulated_diffusion() -> Arc<dyn SmoothCoefficient> {
    Arc::new(
        FnCoefficient::new(1, 1, |x, o| o[0] = 0.5 + 0.25 * x[0].sin(), |x, j| j[0] = 0.25 * x[0].cos())
            .with_bound(0.75),
    )
}

fn build_setup(scenario: Scenario, cfg: &SystemConfig) -> Result<Setup> {
    let m = match scenario {
        Scenario::OuMoment => cfg.fast_dim.unwrap_or(2),
        _ => {
            if cfg.fast_dim.is_some_and(|d| d != 1) {
                return Err(config_err("fast_dim is fixed at 1 for this scenario"));
            }
            1
        }
    };
    let a = match cfg.a.as_deref() {
        None => scaled_identity(m, 2.0),
        Some([lambda]) => scaled_identity(m, *lambda),
        Some(v) if v.len() == m * m => v.to_vec(),
        Some(v) => return Err(config_err(format!("A has {} entries, expected 1 or {}", v.len(), m * m))),
    };
    let hurst = HurstIndex::new(cfg.hurst.unwrap_or(0.5))?;
    let hurst_fast = HurstIndex::new(cfg.hurst_fast.unwrap_or(0.5))?;
    let x0 = cfg.x0.clone().unwrap_or_else(|| vec![1.0]);
    let y0 = cfg.y0.clone().unwrap_or_else(|| vec![0.0; m]);
    if x0.len() != 1 || y0.len() != m {
        return Err(config_err(format!("x0 must have 1 entry and y0 {m}")));
    }
    let sin_sum: Arc<crate::fastslow::system::PairFn> = Arc::new(|x, y, o| o[0] = x[0].sin() + y[0].sin());
    let zero_g: Arc<crate::fastslow::system::PairFn> = Arc::new(|_, _, o| o.fill(0.0));
    let (f, c_f, h, g_tilde, l_g, closed_form): (_, f64, Arc<dyn SmoothCoefficient>, _, f64, _) = match scenario {
        Scenario::Acceptance => (
            sin_sum,
            1.0,
            modulated_diffusion(),
            zero_g,
            0.0,
            Some(FnDrift::new(1, 1.0, |x, o| o[0] = x[0].sin())),
        ),
        Scenario::Coupled => (
            sin_sum,
            1.0,
            modulated_diffusion(),
            Arc::new(|x: &[f64], y: &[f64], o: &mut [f64]| o[0] = x[0].sin() + 0.5 * y[0].sin()) as Arc<_>,
            1.0,
            None,
        ),
        Scenario::Degenerate => (
            Arc::new(|x: &[f64], _: &[f64], o: &mut [f64]| o[0] = x[0]) as Arc<_>,
            1.0,
            Arc::new(Affine::zero(1, 1)) as Arc<dyn SmoothCoefficient>,
            zero_g,
            0.0,
            Some(FnDrift::new(1, 1.0, |x, o| o[0] = x[0])),
        ),
        Scenario::OuMoment => {
            let lambda = a[0];
            let diagonal = (0..m).all(|i| (0..m).all(|j| a[i * m + j] == if i == j { lambda } else { 0.0 }));
            let closed = (diagonal && hurst_fast.value() == 0.5)
                .then(|| FnDrift::new(1, 0.0, move |_, o| o[0] = m as f64 / (2.0 * lambda)));
            (
                Arc::new(|_: &[f64], y: &[f64], o: &mut [f64]| o[0] = y.iter().map(|v| v * v).sum()) as Arc<_>,
                1.0,
                Arc::new(Affine::zero(1, 1)) as Arc<dyn SmoothCoefficient>,
                zero_g,
                0.0,
                closed,
            )
        }
    };
    let system = FastSlowSystem::new(SystemParts {
        n: 1,
        m,
        d1: 1,
        f,
        c_f,
        h,
        a,
        g_tilde,
        l_g,
        eps: 1.0,
        hurst,
        hurst_fast,
    })?;
    Ok(Setup {
        system,
        x0,
        y0,
        closed_form,
    })
}

fn scaled_identity(m: usize, lambda: f64) -> Vec<f64> {
    let mut a = vec![0.0; m * m];
    for i in 0..m {
        a[i * m + i] = lambda;
    }
    a
}

/// The averaged drift the configuration asks for.
pub fn drift_handle(cfg: &ExperimentConfig, setup: &Setup) -> Result<DriftHandle> {
    let source = cfg.estimator.drift.unwrap_or(if setup.closed_form.is_some() {
        DriftSource::ClosedForm
    } else {
        DriftSource::Tabulated
    });
    let settings = cfg.estimator.settings();
    match source {
        DriftSource::ClosedForm => setup
            .closed_form
            .clone()
            .map(DriftHandle::ClosedForm)
            .ok_or_else(|| config_err("scenario has no closed-form averaged drift")),
        DriftSource::Tabulated => {
            let w = cfg.estimator.table_half_width;
            let table = TabulatedDrift::build(
                &setup.system,
                setup.x0[0] - w,
                setup.x0[0] + w,
                cfg.estimator.table_points,
                &settings,
                cfg.estimator.mode,
            )?;
            Ok(DriftHandle::Tabulated(table))
        }
        DriftSource::OnTheFly => Ok(DriftHandle::OnTheFly(Arc::new(OnTheFly {
            system: setup.system.clone(),
            settings,
        }))),
    }
}

/// Noise realisations of one seed, shared by every `eps` and by the
/// averaged solve.
#[derive(Debug, Clone)]
pub struct Drivers {
    pub omega1: RoughLift,
    /// Fast noise in its own time with step `dt / eps_max`, zero at own
    /// time 0 (node `origin`).
    pub omega2: GridPath,
    pub origin: usize,
    /// Stationary OU process on the same own-time grid.
    pub z: GridPath,
    pub z_origin: usize,
    pub eps_max: f64,
}

impl Drivers {
    pub fn sample(cfg: &ExperimentConfig, system: &FastSlowSystem, seed: u64) -> Result<Self> {
        let dt = cfg.dt();
        let n = cfg.n_steps();
        let eps = &cfg.study.eps;
        let (eps_max, eps_min) = (eps[0], eps[eps.len() - 1]);
        let h = dt / eps_max;
        let root = RngSeed::new(seed);
        let w1 = FbmSampler::new(system.hurst(), dt, n, FbmMethod::Auto)?.sample(
            system.d1(),
            0.0,
            root.child(SLOW_NOISE, 0),
        )?;
        let est = &cfg.estimator;
        let burn = (ou_horizon(system.lambda_a(), est.z_tol) / h).ceil() as usize + 1;
        let back = burn + pullback_steps(system, est.tol, h, est.doublings) + 1;
        let stride_max = is_multiple(eps_max, eps_min).unwrap_or(1);
        let forward = n * stride_max;
        let omega2 = FbmSampler::new(system.hurst_fast(), h, back + forward, FbmMethod::Auto)?.sample_two_sided(
            system.m(),
            back,
            root.child(FAST_NOISE, 0),
        )?;
        let z = ou_stationary_path(system.a(), est.z_tol, &omega2)?;
        let z_origin = z.index_of(0.0)?;
        Ok(Self {
            omega1: lift_piecewise_linear(&w1),
            omega2,
            origin: back,
            z,
            z_origin,
            eps_max,
        })
    }

    /// Own-time nodes per slow step at `eps`.
    pub fn stride(&self, eps: f64) -> Result<usize> {
        is_multiple(self.eps_max, eps).ok_or_else(|| Error::InvalidGrid(format!("eps_max / {eps} is not an integer")))
    }

    /// `t -> w2(t / eps)` on the slow grid.
    pub fn fast_driver(&self, eps: f64) -> Result<GridPath> {
        let stride = self.stride(eps)?;
        let base = self.omega1.base();
        let n = base.n_steps();
        let m = self.omega2.dim();
        if self.origin + n * stride > self.omega2.n_steps() {
            return Err(Error::InvalidGrid(format!("fast noise too short for eps = {eps}")));
        }
        let mut values = Vec::with_capacity((n + 1) * m);
        for i in 0..=n {
            values.extend_from_slice(self.omega2.node(self.origin + i * stride));
        }
        GridPath::new(base.t0(), base.dt(), m, values)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuxRow {
    pub delta: f64,
    /// `int_0^T ||Y - Yhat||`.
    pub y_yhat: f64,
    /// `int_0^T ||Yhat - Y_F(theta w, X_{r_delta})||`.
    pub yhat_yf: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellMetrics {
    pub distance: Distance,
    pub runtime_ms: u64,
    pub x_sup: f64,
    pub y_sup: f64,
    pub holder: f64,
    pub aux: Vec<AuxRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellRow {
    pub seed: u64,
    pub eps: f64,
    pub outcome: std::result::Result<CellMetrics, String>,
}

/// Coupled solve plus every per-cell diagnostic.
pub fn run_cell(
    cfg: &ExperimentConfig,
    setup: &Setup,
    drivers: &Drivers,
    x_bar: &RdeSolution,
    eps: f64,
) -> Result<CellMetrics> {
    let start = Instant::now();
    let system = setup.system.with_eps(eps)?;
    let w2 = drivers.fast_driver(eps)?;
    let scheme = cfg.study.scheme;
    let FastSlowPaths { x, y } = solve_fastslow(
        &system,
        &setup.x0,
        &setup.y0,
        &drivers.omega1,
        &w2,
        cfg.grid.fast_resolution,
        scheme,
    )?;
    let distance = averaging_distance(&x, x_bar, &drivers.omega1, &cfg.roughness()?)?;
    let stride = drivers.stride(eps)?;
    let mut aux = Vec::with_capacity(cfg.study.delta.len());
    for &delta in &cfg.study.delta {
        let y_hat = khasminskii_aux(&system, &x.path, &setup.y0, &w2, delta, scheme)?;
        let y_f = fixed_point_along(
            &system,
            &x.path,
            &drivers.z,
            drivers.z_origin,
            stride,
            delta,
            cfg.estimator.tol,
        )?;
        aux.push(AuxRow {
            delta,
            y_yhat: block_integrals(&y, &y_hat, delta)?.iter().sum(),
            yhat_yf: block_integrals(&y_hat, &y_f, delta)?.iter().sum(),
        });
    }
    let runtime_ms = if cfg.output.timings {
        start.elapsed().as_millis() as u64
    } else {
        0
    };
    Ok(CellMetrics {
        distance,
        runtime_ms,
        x_sup: x.path.sup_norm(),
        y_sup: y.sup_norm(),
        holder: holder_exponent_estimate(&x.path).unwrap_or(f64::NAN),
        aux,
    })
}

fn describe_panic(p: Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "panic".into())
}

fn isolated<T>(f: impl FnOnce() -> Result<T>) -> std::result::Result<T, String> {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(v)) => Ok(v),
        Ok(Err(e)) => Err(e.to_string()),
        Err(p) => Err(describe_panic(p)),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub eps: f64,
    pub n_ok: usize,
    pub n_failed: usize,
    pub median: [f64; 3],
    pub max: [f64; 3],
}

#[derive(Debug, Clone)]
pub struct StudyResult {
    pub config: ExperimentConfig,
    /// Sorted by `(seed, eps descending)`.
    pub rows: Vec<CellRow>,
}

/// The eps-ladder study: per seed, one `w1`, one fast noise and one
/// averaged solution; per `(seed, eps)` one coupled solve. Cells fail
/// independently.
pub fn run_convergence_study(cfg: &ExperimentConfig) -> Result<StudyResult> {
    cfg.validate()?;
    let setup = cfg.setup()?;
    let fbar = drift_handle(cfg, &setup)?;
    let seeds: Vec<u64> = (0..cfg.study.seeds).map(|k| cfg.study.seed_base + k).collect();
    let rows: Vec<Vec<CellRow>> = seeds
        .par_iter()
        .map(|&seed| {
            let shared = isolated(|| {
                let drivers = Drivers::sample(cfg, &setup.system, seed)?;
                let x_bar = solve_averaged(&setup.system, &fbar, &setup.x0, &drivers.omega1, cfg.study.scheme)?;
                Ok((drivers, x_bar))
            });
            cfg.study
                .eps
                .par_iter()
                .map(|&eps| CellRow {
                    seed,
                    eps,
                    outcome: match &shared {
                        Ok((drivers, x_bar)) => isolated(|| run_cell(cfg, &setup, drivers, x_bar, eps)),
                        Err(e) => Err(e.clone()),
                    },
                })
                .collect()
        })
        .collect();
    Ok(StudyResult {
        config: cfg.clone(),
        rows: rows.into_iter().flatten().collect(),
    })
}

fn fmt_f(v: f64) -> String {
    format!("{v}")
}

fn csv_message(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "'").replace('\n', " "))
}

impl StudyResult {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.outcome.is_err()).count()
    }

    fn ok_metrics(&self, eps: f64) -> Vec<&CellMetrics> {
        self.rows
            .iter()
            .filter(|r| r.eps == eps)
            .filter_map(|r| r.outcome.as_ref().ok())
            .collect()
    }

    pub fn summary(&self) -> Vec<SummaryRow> {
        self.config
            .study
            .eps
            .iter()
            .map(|&eps| {
                let ok = self.ok_metrics(eps);
                let pick = |k: usize| -> Vec<f64> {
                    ok.iter()
                        .map(|c| match k {
                            0 => c.distance.sup,
                            1 => c.distance.pvar,
                            _ => c.distance.rem,
                        })
                        .collect()
                };
                let mut median_v = [0.0; 3];
                let mut max_v = [0.0; 3];
                for k in 0..3 {
                    let v = pick(k);
                    median_v[k] = median(&v);
                    max_v[k] = v.iter().copied().fold(f64::NAN, f64::max);
                }
                SummaryRow {
                    eps,
                    n_ok: ok.len(),
                    n_failed: self.rows.iter().filter(|r| r.eps == eps).count() - ok.len(),
                    median: median_v,
                    max: max_v,
                }
            })
            .collect()
    }

    /// Per-eps medians of a per-cell metric, in ladder order.
    pub fn medians_by_eps(&self, metric: impl Fn(&CellMetrics) -> f64) -> Vec<f64> {
        self.config
            .study
            .eps
            .iter()
            .map(|&eps| median(&self.ok_metrics(eps).into_iter().map(&metric).collect::<Vec<_>>()))
            .collect()
    }

    /// Per-delta medians of an aux metric at one `eps`, in ladder order.
    pub fn aux_medians_by_delta(&self, eps: f64, metric: impl Fn(&AuxRow) -> f64) -> Vec<f64> {
        let ok = self.ok_metrics(eps);
        (0..self.config.study.delta.len())
            .map(|k| median(&ok.iter().map(|c| metric(&c.aux[k])).collect::<Vec<_>>()))
            .collect()
    }

    pub fn study_csv(&self) -> String {
        let sys = &self.config.system;
        let (hurst, hurst_fast) = (sys.hurst.unwrap_or(0.5), sys.hurst_fast.unwrap_or(0.5));
        let delta = self.config.study.delta[0];
        let mut s = String::from("seed,eps,delta,H,Hhat,sup_dist,pvar_dist,rem_dist,runtime_ms,status\n");
        for r in &self.rows {
            let _ = write!(s, "{},{},{},{},{},", r.seed, fmt_f(r.eps), fmt_f(delta), fmt_f(hurst), fmt_f(hurst_fast));
            match &r.outcome {
                Ok(c) => {
                    let d = c.distance;
                    let _ = writeln!(
                        s,
                        "{},{},{},{},ok",
                        fmt_f(d.sup),
                        fmt_f(d.pvar),
                        fmt_f(d.rem),
                        c.runtime_ms
                    );
                }
                Err(e) => {
                    let _ = writeln!(s, "NaN,NaN,NaN,0,{}", csv_message(e));
                }
            }
        }
        s
    }

    pub fn aux_csv(&self) -> String {
        let mut s = String::from("seed,eps,delta,y_yhat,yhat_yf\n");
        for r in &self.rows {
            if let Ok(c) = &r.outcome {
                for a in &c.aux {
                    let _ = writeln!(
                        s,
                        "{},{},{},{},{}",
                        r.seed,
                        fmt_f(r.eps),
                        fmt_f(a.delta),
                        fmt_f(a.y_yhat),
                        fmt_f(a.yhat_yf)
                    );
                }
            }
        }
        s
    }

    pub fn diagnostics_csv(&self) -> String {
        let mut s = String::from("seed,eps,x_sup,y_sup,holder_exponent\n");
        for r in &self.rows {
            if let Ok(c) = &r.outcome {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{}",
                    r.seed,
                    fmt_f(r.eps),
                    fmt_f(c.x_sup),
                    fmt_f(c.y_sup),
                    fmt_f(c.holder)
                );
            }
        }
        s
    }

    pub fn summary_csv(&self) -> String {
        let mut s = String::from("eps,n_ok,n_failed,median_sup,max_sup,median_pvar,max_pvar,median_rem,max_rem\n");
        for r in self.summary() {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                fmt_f(r.eps),
                r.n_ok,
                r.n_failed,
                fmt_f(r.median[0]),
                fmt_f(r.max[0]),
                fmt_f(r.median[1]),
                fmt_f(r.max[1]),
                fmt_f(r.median[2]),
                fmt_f(r.max[2])
            );
        }
        s
    }

    /// Writes `study.csv`, `aux.csv`, `diagnostics.csv` and `summary.csv`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("study.csv"), self.study_csv())?;
        std::fs::write(dir.join("aux.csv"), self.aux_csv())?;
        std::fs::write(dir.join("diagnostics.csv"), self.diagnostics_csv())?;
        std::fs::write(dir.join("summary.csv"), self.summary_csv())?;
        Ok(())
    }
}

/// `x..., fbar..., stderr..., n_samples` rows.
pub fn drift_probe_csv(xs: &[Vec<f64>], estimates: &[DriftEstimate]) -> String {
    let (n_x, n_f) = (
        xs.first().map_or(0, Vec::len),
        estimates.first().map_or(0, |e| e.value.len()),
    );
    let mut header: Vec<String> = (1..=n_x).map(|k| format!("x_{k}")).collect();
    header.extend((1..=n_f).map(|k| format!("fbar_{k}")));
    header.extend((1..=n_f).map(|k| format!("stderr_{k}")));
    header.push("n_samples".into());
    let mut s = header.join(",") + "\n";
    for (x, e) in xs.iter().zip(estimates) {
        let cols: Vec<String> = x
            .iter()
            .chain(&e.value)
            .chain(&e.stderr)
            .map(|v| fmt_f(*v))
            .chain(std::iter::once(e.n_samples.to_string()))
            .collect();
        s += &cols.join(",");
        s.push('\n');
    }
    s
}

/// Averaged-drift estimates at the configured probe points.
pub fn probe_averaged_drift(cfg: &ExperimentConfig) -> Result<(Vec<Vec<f64>>, Vec<DriftEstimate>)> {
    let setup = cfg.setup()?;
    let xs: Vec<Vec<f64>> = cfg.estimator.probes.iter().map(|&x| vec![x]).collect();
    let est = averaged_drift_probes(&setup.system, &xs, &cfg.estimator.settings(), cfg.estimator.mode)?;
    Ok((xs, est))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(scenario: Scenario) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::for_scenario(scenario);
        cfg.study.seeds = 2;
        cfg.study.eps = vec![0.5, 0.25];
        cfg.study.delta = vec![0.2, 0.1];
        cfg.grid.fast_resolution = 0.08;
        cfg
    }

    #[test]
    fn toml_round_trip_and_unknown_keys() {
        let cfg = small(Scenario::Acceptance);
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        let bad = cfg.to_toml().replace("seeds = 2", "seedz = 2");
        assert!(matches!(ExperimentConfig::from_toml(&bad), Err(Error::Config(_))));
        let minimal = "schema_version = 1\nscenario = \"degenerate\"\n";
        assert_eq!(ExperimentConfig::from_toml(minimal).unwrap().scenario, Scenario::Degenerate);
    }

    #[test]
    fn validation_rejects_bad_ladders() {
        let mut cfg = small(Scenario::Acceptance);
        cfg.study.eps = vec![0.25, 0.5];
        assert!(cfg.validate().is_err());
        let mut cfg = small(Scenario::Acceptance);
        cfg.study.eps = vec![0.5, 0.3];
        assert!(cfg.validate().is_err());
        let mut cfg = small(Scenario::Acceptance);
        cfg.grid.dt = Some(0.05);
        assert!(cfg.validate().is_err());
        let mut cfg = small(Scenario::Acceptance);
        cfg.system.a = Some(vec![0.3]);
        cfg.scenario = Scenario::Coupled;
        assert!(cfg.validate().is_err());
        let mut cfg = small(Scenario::Coupled);
        cfg.estimator.drift = Some(DriftSource::ClosedForm);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn fast_driver_is_time_rescaled_noise() {
        let cfg = small(Scenario::Acceptance);
        let setup = cfg.setup().unwrap();
        let d = Drivers::sample(&cfg, &setup.system, 3).unwrap();
        let w = d.fast_driver(0.25).unwrap();
        assert_eq!(w.node(0), &[0.0]);
        let own = d.omega2.node(d.origin + 10 * 2);
        assert_eq!(w.node(10), own);
        assert!((d.z.time(d.z_origin)).abs() < 1e-12);
    }

    #[test]
    fn degenerate_study_has_zero_distance() {
        let cfg = small(Scenario::Degenerate);
        let res = run_convergence_study(&cfg).unwrap();
        assert_eq!(res.rows.len(), 4);
        assert_eq!(res.failures(), 0, "{}", res.study_csv());
        for r in &res.rows {
            let c = r.outcome.as_ref().unwrap();
            assert!(c.distance.total() < 1e-12, "{:?}", c.distance);
        }
    }

    #[test]
    fn study_output_is_deterministic() {
        let cfg = small(Scenario::Acceptance);
        let a = run_convergence_study(&cfg).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| run_convergence_study(&cfg).unwrap());
        assert_eq!(a.study_csv(), b.study_csv());
        assert_eq!(a.aux_csv(), b.aux_csv());
        assert_eq!(a.summary_csv(), b.summary_csv());
        assert!(a.study_csv().starts_with("seed,eps,delta,H,Hhat,sup_dist"));
    }

    #[test]
    fn failures_are_isolated() {
        let mut cfg = small(Scenario::Acceptance);
        cfg.estimator.doublings = 0;
        cfg.estimator.tol = 1e-12;
        let res = run_convergence_study(&cfg).unwrap();
        assert_eq!(res.rows.len(), 4);
        assert!(res.failures() > 0);
        assert!(res.study_csv().contains("NaN"));
    }

    #[test]
    fn probe_csv_layout() {
        let csv = drift_probe_csv(
            &[vec![0.5]],
            &[DriftEstimate {
                value: vec![1.0],
                stderr: vec![0.1],
                n_samples: 7,
            }],
        );
        assert_eq!(csv, "x_1,fbar_1,stderr_1,n_samples\n0.5,1,0.1,7\n");
    }
}
