//! The averaged drift `fbar(x) = E f(x, Y_F(w, x))`.
//!
//! Two estimators: an ensemble over independent fast-noise paths, and a
//! time average of `f(x, Y_F(theta_s w, x))` along one long path. Probes at
//! several `x` share the same noise paths.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fbm::{FbmMethod, FbmSampler};
use crate::path::GridPath;
use crate::rde::{Drift, FnDrift};
use crate::rng::RngSeed;
use crate::stats;

use super::fixed_point::{pullback_fixed_point, pullback_steps, ConjugatedFlow};
use super::ou::{ou_horizon, ou_stationary_path};
use super::system::FastSlowSystem;

const ENSEMBLE_TAG: u64 = 0xE5;
const ERGODIC_TAG: u64 = 0xE6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorMode {
    Ensemble,
    Ergodic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DriftSettings {
    /// Own-time step of the fast noise.
    pub own_dt: f64,
    pub tol: f64,
    pub z_tol: f64,
    /// Pullback doublings the sampled history must support.
    pub doublings: usize,
    /// Ensemble size.
    pub samples: usize,
    /// Own-time length of the ergodic average.
    pub horizon: f64,
    pub batches: usize,
    pub seed: u64,
}

impl Default for DriftSettings {
    fn default() -> Self {
        Self {
            own_dt: 0.01,
            tol: 1e-6,
            z_tol: 1e-8,
            doublings: 2,
            samples: 400,
            horizon: 400.0,
            batches: 20,
            seed: 0,
        }
    }
}

impl DriftSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.own_dt > 0.0) || self.samples < 2 || self.batches < 2 || !(self.horizon > 0.0) {
            return Err(Error::InvalidParameter(format!("invalid drift estimator settings {self:?}")));
        }
        Ok(())
    }

    /// Nodes of history before the evaluation time: OU burn-in plus the
    /// longest pullback.
    pub fn history_steps(&self, system: &FastSlowSystem) -> usize {
        let burn = (ou_horizon(system.lambda_a(), self.z_tol) / self.own_dt).ceil() as usize;
        burn + pullback_steps(system, self.tol, self.own_dt, self.doublings) + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftEstimate {
    pub value: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n_samples: usize,
}

/// A two-sided fast-noise path with `back` steps before time zero and
/// `forward` after.
pub fn sample_fast_noise(
    system: &FastSlowSystem,
    own_dt: f64,
    back: usize,
    forward: usize,
    seed: RngSeed,
) -> Result<GridPath> {
    FbmSampler::new(system.hurst_fast(), own_dt, back + forward.max(1), FbmMethod::Auto)?
        .sample_two_sided(system.m(), back, seed)
}

/// Stationary OU path and the node of own time zero within it.
fn ou_and_origin(system: &FastSlowSystem, z_tol: f64, noise: &GridPath) -> Result<(GridPath, usize)> {
    let z = ou_stationary_path(system.a(), z_tol, noise)?;
    let origin = z.index_of(0.0)?;
    Ok((z, origin))
}

fn f_at(system: &FastSlowSystem, x: &[f64], y: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; system.n()];
    system.slow_drift(x, y, &mut out);
    out
}

/// Estimates at every probe `xs[k]` with shared noise.
pub fn averaged_drift_probes(
    system: &FastSlowSystem,
    xs: &[Vec<f64>],
    settings: &DriftSettings,
    mode: EstimatorMode,
) -> Result<Vec<DriftEstimate>> {
    settings.validate()?;
    if let Some(bad) = xs.iter().find(|x| x.len() != system.n()) {
        return Err(Error::DimensionMismatch(format!("probe {bad:?} for n = {}", system.n())));
    }
    match mode {
        EstimatorMode::Ensemble => ensemble(system, xs, settings),
        EstimatorMode::Ergodic => xs.iter().map(|x| ergodic(system, x, settings)).collect(),
    }
}

pub fn averaged_drift(
    system: &FastSlowSystem,
    x: &[f64],
    settings: &DriftSettings,
    mode: EstimatorMode,
) -> Result<DriftEstimate> {
    Ok(averaged_drift_probes(system, &[x.to_vec()], settings, mode)?.remove(0))
}

fn ensemble(system: &FastSlowSystem, xs: &[Vec<f64>], settings: &DriftSettings) -> Result<Vec<DriftEstimate>> {
    let back = settings.history_steps(system);
    let sampler = FbmSampler::new(system.hurst_fast(), settings.own_dt, back + 1, FbmMethod::Auto)?;
    let root = RngSeed::new(settings.seed);
    let per_sample: Vec<Result<Vec<Vec<f64>>>> = (0..settings.samples)
        .into_par_iter()
        .map(|i| {
            let noise = sampler.sample_two_sided(system.m(), back, root.child(ENSEMBLE_TAG, i as u64))?;
            let (z, origin) = ou_and_origin(system, settings.z_tol, &noise)?;
            xs.iter()
                .map(|x| {
                    let fp = pullback_fixed_point(system, x, &z, origin, settings.tol, None)?;
                    Ok(f_at(system, x, &fp.value))
                })
                .collect()
        })
        .collect();
    let per_sample = per_sample.into_iter().collect::<Result<Vec<_>>>()?;
    let n = system.n();
    Ok((0..xs.len())
        .map(|k| {
            let mut value = Vec::with_capacity(n);
            let mut se = Vec::with_capacity(n);
            for c in 0..n {
                let col: Vec<f64> = per_sample.iter().map(|s| s[k][c]).collect();
                value.push(stats::mean(&col));
                se.push(stats::stderr(&col));
            }
            DriftEstimate {
                value,
                stderr: se,
                n_samples: settings.samples,
            }
        })
        .collect())
}

fn ergodic(system: &FastSlowSystem, x: &[f64], settings: &DriftSettings) -> Result<DriftEstimate> {
    let back = settings.history_steps(system);
    let forward = (settings.horizon / settings.own_dt).ceil() as usize;
    let noise = sample_fast_noise(
        system,
        settings.own_dt,
        back,
        forward,
        RngSeed::new(settings.seed).child(ERGODIC_TAG, 0),
    )?;
    let (z, origin) = ou_and_origin(system, settings.z_tol, &noise)?;
    let fp = pullback_fixed_point(system, x, &z, origin, settings.tol, None)?;
    let mut flow = ConjugatedFlow::new(system, &z)?;
    let mut u = fp.conjugated;
    let n = system.n();
    let mut series = vec![Vec::with_capacity(forward); n];
    let mut y = vec![0.0; system.m()];
    for i in origin..origin + forward {
        for (yk, (uk, zk)) in y.iter_mut().zip(u.iter().zip(z.node(i))) {
            *yk = uk + zk;
        }
        let f = f_at(system, x, &y);
        for c in 0..n {
            series[c].push(f[c]);
        }
        flow.step(x, i, &mut u);
    }
    let mut value = Vec::with_capacity(n);
    let mut se = Vec::with_capacity(n);
    for s in &series {
        let (m, e) = stats::batch_means(s, settings.batches);
        value.push(m);
        se.push(e);
    }
    Ok(DriftEstimate {
        value,
        stderr: se,
        n_samples: forward,
    })
}

/// A one-dimensional table of `fbar` on `[lo, hi]`, linearly interpolated.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedDrift {
    lo: f64,
    hi: f64,
    values: Vec<f64>,
    stderr: Vec<f64>,
}

impl TabulatedDrift {
    pub fn new(lo: f64, hi: f64, values: Vec<f64>, stderr: Vec<f64>) -> Result<Self> {
        if !(hi > lo) || values.len() < 2 || stderr.len() != values.len() {
            return Err(Error::InvalidParameter(format!(
                "table on [{lo}, {hi}] with {} values",
                values.len()
            )));
        }
        Ok(Self { lo, hi, values, stderr })
    }

    pub fn build(
        system: &FastSlowSystem,
        lo: f64,
        hi: f64,
        points: usize,
        settings: &DriftSettings,
        mode: EstimatorMode,
    ) -> Result<Self> {
        if system.n() != 1 {
            return Err(Error::DimensionMismatch("tabulated drift needs n = 1".into()));
        }
        let points = points.max(2);
        let xs: Vec<Vec<f64>> = (0..points)
            .map(|k| vec![lo + (hi - lo) * k as f64 / (points - 1) as f64])
            .collect();
        let est = averaged_drift_probes(system, &xs, settings, mode)?;
        Self::new(
            lo,
            hi,
            est.iter().map(|e| e.value[0]).collect(),
            est.iter().map(|e| e.stderr[0]).collect(),
        )
    }

    pub fn range(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn nodes(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        let n = self.values.len();
        (0..n).map(move |k| {
            (
                self.lo + (self.hi - self.lo) * k as f64 / (n - 1) as f64,
                self.values[k],
                self.stderr[k],
            )
        })
    }

    /// Linear interpolation, extended linearly beyond the table.
    pub fn value(&self, x: f64) -> f64 {
        let n = self.values.len();
        let pos = (x - self.lo) / (self.hi - self.lo) * (n - 1) as f64;
        let k = (pos.floor().max(0.0) as usize).min(n - 2);
        let w = pos - k as f64;
        self.values[k] * (1.0 - w) + self.values[k + 1] * w
    }
}

/// How the averaged equation obtains `fbar`.
#[derive(Debug, Clone)]
pub enum DriftHandle {
    ClosedForm(FnDrift),
    Tabulated(TabulatedDrift),
    /// Ensemble estimate at every evaluation; NaN on estimator failure.
    OnTheFly(Arc<OnTheFly>),
}

#[derive(Debug, Clone)]
pub struct OnTheFly {
    pub system: FastSlowSystem,
    pub settings: DriftSettings,
}

impl DriftHandle {
    /// Interval on which the handle is valid (one-dimensional tables only).
    pub fn range(&self) -> Option<(f64, f64)> {
        match self {
            DriftHandle::Tabulated(t) => Some(t.range()),
            _ => None,
        }
    }
}

impl Drift for DriftHandle {
    fn dim(&self) -> usize {
        match self {
            DriftHandle::ClosedForm(f) => f.dim(),
            DriftHandle::Tabulated(_) => 1,
            DriftHandle::OnTheFly(o) => o.system.n(),
        }
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) {
        match self {
            DriftHandle::ClosedForm(f) => f.eval(x, out),
            DriftHandle::Tabulated(t) => out[0] = t.value(x[0]),
            DriftHandle::OnTheFly(o) => match averaged_drift(&o.system, x, &o.settings, EstimatorMode::Ensemble) {
                Ok(e) => out.copy_from_slice(&e.value),
                Err(_) => out.fill(f64::NAN),
            },
        }
    }

    fn lipschitz(&self) -> f64 {
        match self {
            DriftHandle::ClosedForm(f) => f.lipschitz(),
            DriftHandle::Tabulated(t) => {
                let n = t.values.len();
                let h = (t.hi - t.lo) / (n - 1) as f64;
                t.values.windows(2).map(|w| (w[1] - w[0]).abs() / h).fold(0.0, f64::max)
            }
            DriftHandle::OnTheFly(o) => {
                o.system.parts().c_f * (1.0 + o.system.l_g() / o.system.gap())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_interpolates_linearly() {
        let t = TabulatedDrift::new(0.0, 2.0, vec![0.0, 1.0, 4.0], vec![0.0; 3]).unwrap();
        assert_eq!(t.value(0.5), 0.5);
        assert_eq!(t.value(1.5), 2.5);
        assert_eq!(t.value(2.0), 4.0);
        assert_eq!(t.value(3.0), 7.0);
        assert_eq!(t.value(-1.0), -1.0);
        assert!(TabulatedDrift::new(1.0, 1.0, vec![0.0, 1.0], vec![0.0; 2]).is_err());
        let h = DriftHandle::Tabulated(t);
        assert_eq!(h.range(), Some((0.0, 2.0)));
        assert_eq!(h.lipschitz(), 3.0);
    }
}
