//! A quick invariant suite over every layer, used by the `verify` command.

use rayon::prelude::*;

use crate::controlled::{compose_smooth, rough_integral, Affine, ControlledPath, Sine};
use crate::error::Result;
use crate::experiment::{run_convergence_study, ExperimentConfig, Scenario};
use crate::fastslow::drift::{averaged_drift_probes, sample_fast_noise, DriftSettings, EstimatorMode};
use crate::fastslow::fixed_point::pullback_fixed_point;
use crate::fastslow::ou::{ou_identity_residual, ou_stationary_path};
use crate::fbm::sample_fbm;
use crate::lift::lift_piecewise_linear;
use crate::path::{GridPath, HurstIndex};
use crate::rde::{integrate_nodes, FnDrift, Scheme};
use crate::rng::RngSeed;
use crate::variation::{check_partition_inequality, variation_pow, IncrementTwoIndex};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn to_csv(&self) -> String {
        format!("{},{},\"{}\"", self.name, self.pass, self.detail.replace('"', "'"))
    }
}

fn check(name: &'static str, pass: bool, detail: String) -> Check {
    Check { name, pass, detail }
}

fn lift_identities() -> Result<Check> {
    let mut chen: f64 = 0.0;
    let mut geo: f64 = 0.0;
    for (k, h) in [0.35, 0.45, 0.5].into_iter().enumerate() {
        let x = sample_fbm(HurstIndex::new(h)?, 2, 0.0, 1.0 / 256.0, 256, RngSeed::new(k as u64))?;
        let lift = lift_piecewise_linear(&x);
        for (s, u, t) in [(0, 100, 256), (17, 18, 200), (3, 128, 129)] {
            let scale = lift.base().increment_norm(s, u) * lift.base().increment_norm(u, t) + 1e-300;
            chen = chen.max(lift.chen_residual(s, u, t) / scale.max(1e-12));
            let sq = lift.base().increment_norm(s, t).powi(2);
            geo = geo.max(lift.geometric_residual(s, t) / sq.max(1e-12));
        }
    }
    Ok(check("lift_identities", chen <= 1e-9 && geo <= 1e-9, format!("chen {chen:.1e} geometric {geo:.1e}")))
}

fn brute(x: &GridPath, p: f64) -> f64 {
    let n = x.n_nodes();
    let mut best = f64::NEG_INFINITY;
    for mask in 0u32..(1 << (n - 2)) {
        let mut prev = 0;
        let mut s = 0.0;
        for k in 1..n {
            if k == n - 1 || mask >> (k - 1) & 1 == 1 {
                s += x.increment_norm(prev, k).powf(p);
                prev = k;
            }
        }
        best = best.max(s);
    }
    best
}

fn variation_dp() -> Result<Check> {
    let mut bad = 0;
    for k in 0..20u64 {
        let nodes = 3 + (k as usize % 8);
        let x = sample_fbm(HurstIndex::new(0.4)?, 2, 0.0, 0.1, nodes - 1, RngSeed::new(k))?;
        let p = 1.0 + 0.15 * k as f64;
        if variation_pow(&IncrementTwoIndex(&x), p, 0, nodes - 1) != brute(&x, p) {
            bad += 1;
        }
    }
    let x = GridPath::new(0.0, 1.0, 1, vec![0.0, 1.0, 0.0, 1.0])?;
    let part = check_partition_inequality(&x, 2.0, &[0.0, 1.0, 3.0])?;
    Ok(check(
        "variation_dp",
        bad == 0 && part.pass,
        format!("{bad}/20 mismatches with enumeration; partition {:.3} <= {:.3} <= {:.3}", part.pieces, part.whole, part.upper),
    ))
}

fn integral_identity() -> Result<Check> {
    let x = sample_fbm(HurstIndex::new(0.4)?, 1, 0.0, 1.0 / 512.0, 512, RngSeed::new(9))?;
    let lift = lift_piecewise_linear(&x);
    let v = rough_integral(&ControlledPath::identity(&lift), &lift, 0.0, 1.0)?[0];
    let xt = x.node(512)[0];
    let id_err = (v - 0.5 * xt * xt).abs();
    let y = compose_smooth(&Sine(1), &ControlledPath::identity(&lift))?;
    let s = rough_integral(&y, &lift, 0.0, 1.0)?[0];
    let exact = 1.0 - xt.cos();
    let err = (s - exact).abs();
    Ok(check(
        "rough_integral",
        id_err <= 1e-10 && err <= 1e-2,
        format!("int x dx error {id_err:.1e}, int sin x dx error {err:.1e}"),
    ))
}

fn rde_linear() -> Result<Check> {
    let x = GridPath::from_fn(0.0, 1e-3, 1000, 1, |t, o| o[0] = (4.0 * t).sin())?;
    let lift = lift_piecewise_linear(&x);
    let y = integrate_nodes(&FnDrift::zero(1), &Affine::identity(1), Scheme::default(), &[1.0], &lift, 0, 1000)?;
    let exact = (4.0f64).sin().exp();
    let rel = (y.node(1000)[0] - exact).abs() / exact;
    Ok(check("rde_linear", rel <= 1e-4, format!("relative error {rel:.1e}")))
}

fn ou_identity(cfg: &ExperimentConfig) -> Result<Check> {
    let setup = cfg.setup()?;
    let sys = &setup.system;
    let settings = cfg.estimator.settings();
    let w = sample_fast_noise(sys, settings.own_dt, settings.history_steps(sys), 500, RngSeed::new(11))?;
    let z = ou_stationary_path(sys.a(), settings.z_tol, &w)?;
    let r = ou_identity_residual(sys.a(), &z, &w, 50)?;
    Ok(check(
        "ou_identity",
        r.pass(),
        format!(
            "step {:.1e} <= {:.1e}, window {:.1e} <= {:.1e}",
            r.max_step_residual, r.step_bound, r.max_window_residual, r.window_bound
        ),
    ))
}

fn fixed_point(cfg: &ExperimentConfig) -> Result<Check> {
    let setup = cfg.setup()?;
    let sys = &setup.system;
    let settings = cfg.estimator.settings();
    let w = sample_fast_noise(sys, settings.own_dt, settings.history_steps(sys), 1, RngSeed::new(12))?;
    let z = ou_stationary_path(sys.a(), settings.z_tol, &w)?;
    let origin = z.index_of(0.0)?;
    let x = &setup.x0;
    let a = pullback_fixed_point(sys, x, &z, origin, settings.tol, None)?;
    let far = vec![10.0; sys.m()];
    let b = pullback_fixed_point(sys, x, &z, origin, settings.tol, Some(&far))?;
    let gap = a.value.iter().zip(&b.value).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
    Ok(check(
        "fixed_point_unique",
        gap <= settings.tol,
        format!("two starts differ by {gap:.1e} after {} doublings", a.doublings.max(b.doublings)),
    ))
}

fn drift_consistency(cfg: &ExperimentConfig) -> Result<Check> {
    let setup = cfg.setup()?;
    let settings = DriftSettings {
        samples: cfg.estimator.samples.min(200),
        horizon: cfg.estimator.horizon.min(200.0),
        ..cfg.estimator.settings()
    };
    let xs: Vec<Vec<f64>> = [-1.0, 0.0, 1.5].iter().map(|&v| vec![v]).collect();
    let ens = averaged_drift_probes(&setup.system, &xs, &settings, EstimatorMode::Ensemble)?;
    let erg = averaged_drift_probes(&setup.system, &xs, &settings, EstimatorMode::Ergodic)?;
    let worst = ens
        .iter()
        .zip(&erg)
        .map(|(a, b)| (a.value[0] - b.value[0]).abs() / (a.stderr[0].hypot(b.stderr[0])))
        .fold(0.0, f64::max);
    Ok(check(
        "drift_estimators_agree",
        worst <= 3.0,
        format!("largest gap {worst:.2} combined standard errors"),
    ))
}

fn small_study(scenario: Scenario) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::for_scenario(scenario);
    cfg.study.seeds = 2;
    cfg.study.eps = vec![0.5, 0.25];
    cfg.study.delta = vec![0.25, 0.125];
    cfg.grid.fast_resolution = 0.0625;
    cfg
}

fn degenerate_study() -> Result<Check> {
    let res = run_convergence_study(&small_study(Scenario::Degenerate))?;
    let worst = res
        .rows
        .iter()
        .map(|r| r.outcome.as_ref().map_or(f64::INFINITY, |c| c.distance.total()))
        .fold(0.0, f64::max);
    Ok(check("degenerate_study", worst <= 1e-12, format!("largest distance {worst:.1e}")))
}

fn deterministic_study() -> Result<Check> {
    let cfg = small_study(Scenario::Acceptance);
    let a = run_convergence_study(&cfg)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| crate::Error::InvalidParameter(e.to_string()))?;
    let b = pool.install(|| run_convergence_study(&cfg))?;
    let same = a.study_csv() == b.study_csv() && a.aux_csv() == b.aux_csv();
    Ok(check("deterministic_study", same && a.failures() == 0, format!("identical output: {same}")))
}

/// Runs every check; an error inside a check is reported as a failure.
pub fn run_suite(cfg: &ExperimentConfig) -> Vec<Check> {
    type Job<'a> = (&'static str, Box<dyn Fn() -> Result<Check> + Send + Sync + 'a>);
    let jobs: Vec<Job> = vec![
        ("lift_identities", Box::new(lift_identities)),
        ("variation_dp", Box::new(variation_dp)),
        ("rough_integral", Box::new(integral_identity)),
        ("rde_linear", Box::new(rde_linear)),
        ("ou_identity", Box::new(|| ou_identity(cfg))),
        ("fixed_point_unique", Box::new(|| fixed_point(cfg))),
        ("drift_estimators_agree", Box::new(|| drift_consistency(cfg))),
        ("degenerate_study", Box::new(degenerate_study)),
        ("deterministic_study", Box::new(deterministic_study)),
    ];
    jobs.par_iter()
        .map(|(name, f)| f().unwrap_or_else(|e| check(name, false, e.to_string())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes_on_the_acceptance_scenario() {
        let checks = run_suite(&ExperimentConfig::for_scenario(Scenario::Acceptance));
        assert_eq!(checks.len(), 9);
        for c in &checks {
            assert!(c.pass, "{}: {}", c.name, c.detail);
        }
    }

    #[test]
    fn csv_quotes_detail() {
        let c = check("x", false, "a \"b\", c".into());
        assert_eq!(c.to_csv(), "x,false,\"a 'b', c\"");
    }
}
