//! Rough differential equations `dy = F(y) dt + G(y) dx`.

use std::sync::Arc;

use crate::controlled::{make_controlled, ControlledPath, SmoothCoefficient};
use crate::error::{Error, Result};
use crate::lift::{tensor_norm, RoughLift};
use crate::path::GridPath;
use crate::variation::{greedy_stopping_times, variation_pow, IncrementTwoIndex, RoughnessParams};

/// A drift vector field `R^e -> R^e`.
pub trait Drift: Send + Sync {
    fn dim(&self) -> usize;
    fn eval(&self, y: &[f64], out: &mut [f64]);
    /// Reported global Lipschitz constant.
    fn lipschitz(&self) -> f64 {
        f64::NAN
    }
}

type DriftFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;

#[derive(Clone)]
pub struct FnDrift {
    dim: usize,
    f: Arc<DriftFn>,
    lipschitz: f64,
}

impl FnDrift {
    pub fn new(dim: usize, lipschitz: f64, f: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        Self {
            dim,
            f: Arc::new(f),
            lipschitz,
        }
    }

    pub fn zero(dim: usize) -> Self {
        Self::new(dim, 0.0, |_, o| o.fill(0.0))
    }

    /// `F(y) = M y`.
    pub fn linear(dim: usize, matrix: Vec<f64>) -> Self {
        let lip = tensor_norm(&matrix);
        Self::new(dim, lip, move |y, o| {
            for (i, oi) in o.iter_mut().enumerate() {
                *oi = (0..y.len()).map(|j| matrix[i * y.len() + j] * y[j]).sum();
            }
        })
    }
}

impl std::fmt::Debug for FnDrift {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FnDrift")
            .field("dim", &self.dim)
            .field("lipschitz", &self.lipschitz)
            .finish()
    }
}

impl Drift for FnDrift {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, y: &[f64], out: &mut [f64]) {
        (self.f)(y, out)
    }
    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }
}

/// Treatment of the drift within one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Deserialize, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// `y + F(y) dt + G(y) x + DG(y) G(y) XX`.
    Davie,
    /// The Davie step with the drift replaced by its trapezoidal
    /// predictor-corrector average.
    #[default]
    Heun,
}

/// Scratch buffers for repeated steps of one system.
#[derive(Debug, Clone)]
pub struct Stepper {
    e: usize,
    d: usize,
    fy: Vec<f64>,
    gy: Vec<f64>,
    dg: Vec<f64>,
    dgg: Vec<f64>,
    pred: Vec<f64>,
    fp: Vec<f64>,
}

impl Stepper {
    pub fn new(e: usize, d: usize) -> Self {
        Self {
            e,
            d,
            fy: vec![0.0; e],
            gy: vec![0.0; e * d],
            dg: vec![0.0; e * d * e],
            dgg: vec![0.0; e * d * d],
            pred: vec![0.0; e],
            fp: vec![0.0; e],
        }
    }

    /// Writes the Davie step into `out` and leaves `F(y)` in `self.fy`.
    fn davie_into(
        &mut self,
        drift: &dyn Drift,
        diffusion: &dyn SmoothCoefficient,
        y: &[f64],
        x_inc: &[f64],
        area: &[f64],
        dt: f64,
        out: &mut [f64],
    ) {
        let (e, d) = (self.e, self.d);
        drift.eval(y, &mut self.fy);
        diffusion.eval(y, &mut self.gy);
        diffusion.jacobian(y, &mut self.dg);
        // (DG G)_{(i,l),k} = sum_j d_j G^i_l G^j_k
        for il in 0..e * d {
            for k in 0..d {
                let mut s = 0.0;
                for j in 0..e {
                    s += self.dg[il * e + j] * self.gy[j * d + k];
                }
                self.dgg[il * d + k] = s;
            }
        }
        for i in 0..e {
            let mut noise = 0.0;
            for l in 0..d {
                noise += self.gy[i * d + l] * x_inc[l];
            }
            let mut second = 0.0;
            for l in 0..d {
                for k in 0..d {
                    second += self.dgg[(i * d + l) * d + k] * area[k * d + l];
                }
            }
            out[i] = y[i] + self.fy[i] * dt + noise + second;
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn step(
        &mut self,
        scheme: Scheme,
        drift: &dyn Drift,
        diffusion: &dyn SmoothCoefficient,
        y: &[f64],
        x_inc: &[f64],
        area: &[f64],
        dt: f64,
        out: &mut [f64],
    ) {
        match scheme {
            Scheme::Davie => self.davie_into(drift, diffusion, y, x_inc, area, dt, out),
            Scheme::Heun => {
                let mut pred = std::mem::take(&mut self.pred);
                self.davie_into(drift, diffusion, y, x_inc, area, dt, &mut pred);
                drift.eval(&pred, &mut self.fp);
                for i in 0..self.e {
                    out[i] = pred[i] + 0.5 * dt * (self.fp[i] - self.fy[i]);
                }
                self.pred = pred;
            }
        }
    }
}

/// One explicit step `y + F(y) dt + G(y) x_inc + (DG(y) G(y)) XX_inc`.
pub fn davie_step(
    y: &[f64],
    drift: &dyn Drift,
    diffusion: &dyn SmoothCoefficient,
    x_inc: &[f64],
    levy_inc: &[f64],
    dt: f64,
) -> Vec<f64> {
    let mut out = vec![0.0; y.len()];
    Stepper::new(y.len(), x_inc.len()).step(Scheme::Davie, drift, diffusion, y, x_inc, levy_inc, dt, &mut out);
    out
}

#[derive(Clone)]
pub struct RdeProblem {
    pub drift: Arc<dyn Drift>,
    pub diffusion: Arc<dyn SmoothCoefficient>,
    pub y0: Vec<f64>,
    pub params: RoughnessParams,
    pub scheme: Scheme,
}

impl RdeProblem {
    pub fn new(
        drift: Arc<dyn Drift>,
        diffusion: Arc<dyn SmoothCoefficient>,
        y0: Vec<f64>,
        params: RoughnessParams,
    ) -> Self {
        Self {
            drift,
            diffusion,
            y0,
            params,
            scheme: Scheme::default(),
        }
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    fn check(&self, driver: &RoughLift) -> Result<()> {
        let (e, d) = (self.y0.len(), driver.dim());
        if self.drift.dim() != e
            || self.diffusion.in_dim() != e
            || self.diffusion.out_dim() != e * d
        {
            return Err(Error::DimensionMismatch(format!(
                "state {e}, driver {d}: drift {}, diffusion {} -> {}",
                self.drift.dim(),
                self.diffusion.in_dim(),
                self.diffusion.out_dim()
            )));
        }
        Ok(())
    }
}

impl std::fmt::Debug for RdeProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RdeProblem")
            .field("y0", &self.y0)
            .field("params", &self.params)
            .field("scheme", &self.scheme)
            .finish()
    }
}

/// Steps the equation over driver nodes `i..=j` from `y0`.
pub fn integrate_nodes(
    drift: &dyn Drift,
    diffusion: &dyn SmoothCoefficient,
    scheme: Scheme,
    y0: &[f64],
    driver: &RoughLift,
    i: usize,
    j: usize,
) -> Result<GridPath> {
    let (e, d) = (y0.len(), driver.dim());
    let base = driver.base();
    if i >= j || j > base.n_steps() {
        return Err(Error::IntervalOutsideGrid {
            s: base.time(i),
            t: base.time(j),
        });
    }
    let mut stepper = Stepper::new(e, d);
    let mut values = vec![0.0; (j - i + 1) * e];
    values[..e].copy_from_slice(y0);
    let mut x_inc = vec![0.0; d];
    let mut area = vec![0.0; d * d];
    let dt = base.dt();
    for u in i..j {
        base.increment_into(u, u + 1, &mut x_inc);
        area.copy_from_slice(driver.step_area(u));
        let k = u - i;
        let (done, next) = values.split_at_mut((k + 1) * e);
        let next = &mut next[..e];
        stepper.step(scheme, drift, diffusion, &done[k * e..], &x_inc, &area, dt, next);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp {
                step: u,
                t: base.time(u + 1),
            });
        }
    }
    GridPath::new(base.time(i), dt, e, values)
}

#[derive(Debug, Clone)]
pub struct RdeSolution {
    pub path: GridPath,
    /// `G(y_t)` per node, the Gubinelli derivative.
    pub deriv: GridPath,
}

impl RdeSolution {
    /// The solution as a path controlled by the matching window of `driver`.
    pub fn controlled(&self, driver: &RoughLift) -> Result<(ControlledPath, RoughLift)> {
        let (i, j) = driver.base().index_range(self.path.t0(), self.path.t_end())?;
        let window = driver.window(i, j)?;
        let y = make_controlled(self.path.clone(), self.deriv.clone(), &window)?;
        Ok((y, window))
    }
}

pub fn solve_rde(problem: &RdeProblem, driver: &RoughLift, s: f64, t: f64) -> Result<RdeSolution> {
    problem.check(driver)?;
    let (i, j) = driver.base().index_range(s, t)?;
    let path = integrate_nodes(
        problem.drift.as_ref(),
        problem.diffusion.as_ref(),
        problem.scheme,
        &problem.y0,
        driver,
        i,
        j,
    )?;
    let deriv = diffusion_path(problem.diffusion.as_ref(), &path)?;
    Ok(RdeSolution { path, deriv })
}

/// `G(y_t)` at every node of `path`.
pub fn diffusion_path(g: &dyn SmoothCoefficient, path: &GridPath) -> Result<GridPath> {
    let m = g.out_dim();
    let mut values = vec![0.0; path.n_nodes() * m];
    for (i, out) in values.chunks_exact_mut(m).enumerate() {
        g.eval(path.node(i), out);
    }
    GridPath::new(path.t0(), path.dt(), m, values)
}

/// Norms of a solution next to the a-priori bounds they are compared with.
/// The bounds depend on a trial sewing constant and are diagnostics only.
#[derive(Debug, Clone, PartialEq)]
pub struct NormReport {
    pub sup: f64,
    pub pvar: f64,
    pub rem_qvar: f64,
    pub nu: f64,
    pub n_nu: usize,
    pub sup_bound: f64,
    pub pvar_bound: f64,
    pub c_p_hat: f64,
}

impl NormReport {
    pub const CSV_HEADER: &'static str = "sup,pvar,rem_qvar,nu,n_nu,sup_bound,pvar_bound,c_p_hat";

    pub fn to_csv(&self) -> String {
        format!(
            "{:e},{:e},{:e},{:e},{},{:e},{:e},{}",
            self.sup, self.pvar, self.rem_qvar, self.nu, self.n_nu, self.sup_bound, self.pvar_bound, self.c_p_hat
        )
    }

    pub fn within_bounds(&self) -> bool {
        self.sup <= self.sup_bound && self.pvar + self.rem_qvar <= self.pvar_bound
    }
}

pub fn solution_norm_report(
    sol: &RdeSolution,
    problem: &RdeProblem,
    driver: &RoughLift,
    c_p_hat: f64,
) -> Result<NormReport> {
    let params = &problem.params;
    let (y, window) = sol.controlled(driver)?;
    let n = sol.path.n_steps();
    let sup = sol.path.sup_norm();
    let pvar = variation_pow(&IncrementTwoIndex(&sol.path), params.p, 0, n).powf(1.0 / params.p);
    let rem_qvar = variation_pow(&y.remainder_fn(&window), params.q, 0, n).powf(1.0 / params.q);

    let c_g = problem.diffusion.bound();
    let nu = 1.0 / (4.0 * c_p_hat * c_g);
    let n_nu = if nu.is_finite() && nu > 0.0 {
        greedy_stopping_times(&window, params, nu, window.base().t0(), window.base().t_end())?.count
    } else {
        0
    };
    let c_f = problem.drift.lipschitz();
    let mut f0 = vec![0.0; problem.y0.len()];
    problem.drift.eval(&vec![0.0; problem.y0.len()], &mut f0);
    let f0 = tensor_norm(&f0);
    let drift_term = if f0 == 0.0 { 0.0 } else { f0 / c_f };
    let y0 = tensor_norm(&problem.y0);
    let len = sol.path.t_end() - sol.path.t0();
    let nn = n_nu as f64;
    let growth = (4.0 * c_f.max(0.0) * len).exp();
    let sup_bound = (y0 + (drift_term + 1.0 / c_p_hat) * nn) * growth;
    let pvar_bound = sup_bound * nn.powf((params.p - 1.0) / params.p) - y0;
    Ok(NormReport {
        sup,
        pvar,
        rem_qvar,
        nu,
        n_nu,
        sup_bound,
        pvar_bound,
        c_p_hat,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controlled::{Affine, FnCoefficient};
    use crate::lift::lift_piecewise_linear;

    fn params() -> RoughnessParams {
        RoughnessParams::new(2.5, 0.4).unwrap()
    }

    #[test]
    fn step_examples() {
        let decay = FnDrift::linear(1, vec![-2.0]);
        let y = davie_step(&[1.5], &decay, &Affine::zero(1, 1), &[0.3], &[0.045], 0.01);
        assert!((y[0] - 1.5 * (1.0 - 0.02)).abs() < 1e-15);
        let y = davie_step(
            &[1.0, -1.0],
            &FnDrift::zero(2),
            &Affine::constant(2, vec![1.0, 0.0, 0.0, 1.0]),
            &[0.2, 0.3],
            &[0.02, 0.1, -0.04, 0.045],
            0.01,
        );
        assert!((y[0] - 1.2).abs() < 1e-15 && (y[1] + 0.7).abs() < 1e-15);
    }

    #[test]
    fn additive_noise_is_exact() {
        let p = GridPath::from_fn(0.0, 0.01, 100, 1, |t, o| o[0] = (7.0 * t).sin()).unwrap();
        let x = lift_piecewise_linear(&p);
        let prob = RdeProblem::new(
            Arc::new(FnDrift::zero(1)),
            Arc::new(Affine::constant(1, vec![1.0])),
            vec![0.5],
            params(),
        );
        let sol = solve_rde(&prob, &x, 0.0, 1.0).unwrap();
        for i in 0..=100 {
            assert!((sol.path.node(i)[0] - 0.5 - p.increment(0, i)[0]).abs() < 1e-14);
        }
    }

    #[test]
    fn flow_property() {
        let p = GridPath::from_fn(0.0, 0.01, 100, 1, |t, o| o[0] = (5.0 * t).cos()).unwrap();
        let x = lift_piecewise_linear(&p);
        let g = FnCoefficient::new(1, 1, |y, o| o[0] = y[0].sin(), |y, j| j[0] = y[0].cos());
        let prob = RdeProblem::new(Arc::new(FnDrift::linear(1, vec![-1.0])), Arc::new(g), vec![0.3], params());
        let whole = solve_rde(&prob, &x, 0.0, 1.0).unwrap();
        let first = solve_rde(&prob, &x, 0.0, 0.4).unwrap();
        let mut second = prob.clone();
        second.y0 = first.path.node(40).to_vec();
        let second = solve_rde(&second, &x, 0.4, 1.0).unwrap();
        assert_eq!(whole.path.node(100), second.path.node(60));
    }

    #[test]
    fn blow_up_is_reported() {
        let p = GridPath::zeros(0.0, 0.1, 50, 1).unwrap();
        let x = lift_piecewise_linear(&p);
        let prob = RdeProblem::new(
            Arc::new(FnDrift::new(1, f64::NAN, |y, o| o[0] = y[0] * y[0] * 1e3)),
            Arc::new(Affine::zero(1, 1)),
            vec![1.0],
            params(),
        );
        assert!(matches!(solve_rde(&prob, &x, 0.0, 5.0), Err(Error::BlowUp { .. })));
    }

    #[test]
    fn rejects_mismatched_dimensions() {
        let x = lift_piecewise_linear(&GridPath::zeros(0.0, 0.1, 5, 2).unwrap());
        let prob = RdeProblem::new(Arc::new(FnDrift::zero(1)), Arc::new(Affine::identity(1)), vec![0.0], params());
        assert!(solve_rde(&prob, &x, 0.0, 0.5).is_err());
    }

    #[test]
    fn zero_problem_report() {
        let x = lift_piecewise_linear(&GridPath::zeros(0.0, 0.1, 10, 1).unwrap());
        let prob = RdeProblem::new(Arc::new(FnDrift::zero(1)), Arc::new(Affine::zero(1, 1)), vec![0.0], params());
        let sol = solve_rde(&prob, &x, 0.0, 1.0).unwrap();
        let rep = solution_norm_report(&sol, &prob, &x, 1.0).unwrap();
        assert_eq!((rep.sup, rep.pvar, rep.rem_qvar, rep.n_nu), (0.0, 0.0, 0.0, 0));
        assert!(rep.within_bounds());
    }
}
