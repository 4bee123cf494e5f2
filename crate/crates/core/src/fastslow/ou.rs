//! The stationary Ornstein-Uhlenbeck process `dZ = -A Z dt + dw`.
//!
//! `Z(theta_t w) = int_{-inf}^0 e^{A r} d(theta_t w)(r)` with the shift
//! `theta_t w(r) = w(r + t) - w(t)`. Two independent evaluations are
//! provided: trapezoid quadrature of the integrated-by-parts form at a single
//! time, and an exact exponential recursion for the piecewise-linear
//! interpolant along a whole grid.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::path::GridPath;

use super::system::coercivity;

/// Truncation horizon `M = max(1, ln(1 / z_tol) / lambda_A)`.
pub fn ou_horizon(lambda_a: f64, z_tol: f64) -> f64 {
    (z_tol.recip().ln() / lambda_a).max(1.0)
}

fn check_square(a: &DMatrix<f64>, path: &GridPath) -> Result<()> {
    if !a.is_square() || a.nrows() != path.dim() {
        return Err(Error::DimensionMismatch(format!(
            "A is {}x{}, path has dimension {}",
            a.nrows(),
            a.ncols(),
            path.dim()
        )));
    }
    Ok(())
}

/// `Z(theta_t w)` by trapezoid quadrature of
/// `-A int_{-M}^0 e^{A r} theta_t w(r) dr - e^{-A M} theta_t w(-M)`.
///
/// The boundary term makes the truncated expression equal
/// `int_{-M}^0 e^{A r} d(theta_t w)(r)`.
pub fn ou_stationary(a: &DMatrix<f64>, z_tol: f64, omega: &GridPath, t: f64) -> Result<Vec<f64>> {
    check_square(a, omega)?;
    let lambda = coercivity(a);
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter(format!("A is not coercive (lambda = {lambda})")));
    }
    let h = omega.dt();
    let horizon = ou_horizon(lambda, z_tol);
    let k = (horizon / h - 1e-9).ceil() as usize;
    let it = omega.index_of(t)?;
    if it < k {
        return Err(Error::InvalidParameter(format!(
            "horizon too short: need {horizon} before t = {t}, have {}",
            t - omega.t0()
        )));
    }
    let m = omega.dim();
    let e = (-a * h).exp();
    let wt = DVector::from_column_slice(omega.node(it));
    let mut power = DMatrix::<f64>::identity(m, m);
    let mut sum = DVector::<f64>::zeros(m);
    for j in 0..=k {
        let shifted = DVector::from_column_slice(omega.node(it - j)) - &wt;
        let w = if j == 0 || j == k { 0.5 * h } else { h };
        sum += &power * shifted * w;
        if j < k {
            power = &power * &e;
        }
    }
    let tail = DVector::from_column_slice(omega.node(it - k)) - &wt;
    let z = -(a * sum) - power * tail;
    Ok(z.as_slice().to_vec())
}

/// One step of the exponential recursion
/// `Z_{n+1} = E Z_n + A^{-1} (I - E) dw_n / h`, `E = e^{-A h}`, exact for a
/// piecewise-linear driver.
#[derive(Debug, Clone)]
pub struct OuStep {
    e: DMatrix<f64>,
    q: DMatrix<f64>,
    h: f64,
}

impl OuStep {
    pub fn new(a: &DMatrix<f64>, h: f64) -> Result<Self> {
        let m = a.nrows();
        let e = (-a * h).exp();
        let rhs = DMatrix::<f64>::identity(m, m) - &e;
        let q = a
            .clone()
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Factorisation("A is singular".into()))?;
        Ok(Self { e, q, h })
    }

    /// `e^{-A h}`.
    pub fn decay(&self) -> &DMatrix<f64> {
        &self.e
    }

    /// `A^{-1} (I - e^{-A h})`.
    pub fn gain(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn apply(&self, z: &[f64], dw: &[f64], out: &mut [f64]) {
        let m = z.len();
        for i in 0..m {
            let mut s = 0.0;
            for j in 0..m {
                s += self.e[(i, j)] * z[j] + self.q[(i, j)] * dw[j] / self.h;
            }
            out[i] = s;
        }
    }
}

/// The stationary process along the grid of `omega`, started from zero at
/// the first node and returned from the first node at least one horizon
/// later.
pub fn ou_stationary_path(a: &DMatrix<f64>, z_tol: f64, omega: &GridPath) -> Result<GridPath> {
    check_square(a, omega)?;
    let lambda = coercivity(a);
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter(format!("A is not coercive (lambda = {lambda})")));
    }
    let h = omega.dt();
    let burn = (ou_horizon(lambda, z_tol) / h - 1e-9).ceil() as usize;
    if burn >= omega.n_steps() {
        return Err(Error::InvalidParameter(format!(
            "horizon too short: path spans {} but burn-in needs {}",
            omega.t_end() - omega.t0(),
            burn as f64 * h
        )));
    }
    let m = omega.dim();
    let step = OuStep::new(a, h)?;
    let mut z = vec![0.0; m];
    let mut next = vec![0.0; m];
    let mut dw = vec![0.0; m];
    for i in 0..burn {
        omega.increment_into(i, i + 1, &mut dw);
        step.apply(&z, &dw, &mut next);
        std::mem::swap(&mut z, &mut next);
    }
    let mut values = Vec::with_capacity((omega.n_nodes() - burn) * m);
    values.extend_from_slice(&z);
    for i in burn..omega.n_steps() {
        omega.increment_into(i, i + 1, &mut dw);
        step.apply(&z, &dw, &mut next);
        std::mem::swap(&mut z, &mut next);
        values.extend_from_slice(&z);
    }
    GridPath::new(omega.time(burn), h, m, values)
}

/// Largest per-step residual of the integral identity
/// `Z(t) - Z(r) + int_r^t A Z - (w(t) - w(r))` with trapezoid quadrature,
/// next to the trapezoid error bound `h^3 / 12 |A|^2 max |Z'|` summed over
/// the same steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuResidual {
    pub max_step_residual: f64,
    pub step_bound: f64,
    pub max_window_residual: f64,
    pub window_bound: f64,
}

impl OuResidual {
    pub fn pass(&self) -> bool {
        self.max_step_residual <= self.step_bound && self.max_window_residual <= self.window_bound
    }
}

/// Checks the integral identity over every step and every window of
/// `window` steps of `z` (which must lie on the grid of `omega`).
pub fn ou_identity_residual(a: &DMatrix<f64>, z: &GridPath, omega: &GridPath, window: usize) -> Result<OuResidual> {
    let offset = omega.index_of(z.t0())?;
    if (z.dt() - omega.dt()).abs() > 1e-12 * z.dt() || offset + z.n_steps() > omega.n_steps() {
        return Err(Error::DimensionMismatch("Z is not on the grid of omega".into()));
    }
    let m = z.dim();
    let h = z.dt();
    let a_norm = a.norm();
    let slack = 64.0 * f64::EPSILON;
    let az = |i: usize| a * DVector::from_column_slice(z.node(i));
    let n = z.n_steps();
    let mut step_res = vec![0.0; n];
    let mut step_vec = Vec::with_capacity(n);
    let mut step_bnd = vec![0.0; n];
    for i in 0..n {
        let (z0, z1) = (DVector::from_column_slice(z.node(i)), DVector::from_column_slice(z.node(i + 1)));
        let dw = DVector::from_column_slice(&omega.increment(offset + i, offset + i + 1));
        let (a0, a1) = (az(i), az(i + 1));
        let r = &z1 - &z0 + (&a0 + &a1) * (0.5 * h) - &dw;
        step_res[i] = r.norm();
        // Z' = -A Z + dw / h on the step; |Z''| <= |A| |Z'|
        let dz = (&dw / h - &a0).norm().max((&dw / h - &a1).norm());
        step_bnd[i] = h.powi(3) / 12.0 * a_norm * a_norm * dz * (1.0 + 1e-9)
            + slack * (z0.norm() + z1.norm() + dw.norm() + h * (a0.norm() + a1.norm()));
        step_vec.push(r);
    }
    let mut out = OuResidual {
        max_step_residual: 0.0,
        step_bound: f64::INFINITY,
        max_window_residual: 0.0,
        window_bound: f64::INFINITY,
    };
    // a pass needs every residual under its own bound; report the tightest
    // ratio's pair
    let mut worst_ratio: f64 = 0.0;
    for i in 0..n {
        let ratio = step_res[i] / step_bnd[i];
        if ratio >= worst_ratio {
            worst_ratio = ratio;
            out.max_step_residual = step_res[i];
            out.step_bound = step_bnd[i];
        }
    }
    let window = window.max(1).min(n);
    let mut worst_ratio: f64 = 0.0;
    for start in (0..=n - window).step_by(window) {
        let mut acc = DVector::<f64>::zeros(m);
        let mut bnd = 0.0;
        for i in start..start + window {
            acc += &step_vec[i];
            bnd += step_bnd[i];
        }
        let ratio = acc.norm() / bnd;
        if ratio >= worst_ratio {
            worst_ratio = ratio;
            out.max_window_residual = acc.norm();
            out.window_bound = bnd;
        }
    }
    Ok(out)
}

/// Both sides of `Z^eps(theta_t w) = Z(theta_{t/eps} w)`, where `Z^eps` is
/// the stationary solution for `A / eps` driven by `w(. / eps)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingReport {
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
    pub discrepancy: f64,
    /// The two sides truncate at different horizons; each truncation moves
    /// the value by at most `2 osc (1 + |A| / lambda) e^{-lambda M}` with `osc`
    /// the oscillation of `theta w` over the longer horizon.
    pub tolerance: f64,
}

impl ScalingReport {
    pub fn pass(&self) -> bool {
        self.discrepancy <= self.tolerance
    }
}

pub fn ou_scaling_check(a: &DMatrix<f64>, z_tol: f64, omega: &GridPath, eps: f64, t: f64) -> Result<ScalingReport> {
    let rescaled = crate::fbm::rescale_time(omega, eps)?;
    let lhs = ou_stationary(&(a / eps), z_tol, &rescaled, t)?;
    let rhs = ou_stationary(a, z_tol, omega, t / eps)?;
    let discrepancy = lhs
        .iter()
        .zip(&rhs)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let lambda = coercivity(a);
    let horizon = ou_horizon(lambda, z_tol).max(ou_horizon(lambda / eps, z_tol) / eps);
    let it = omega.index_of(t / eps)?;
    let from = it.saturating_sub((horizon / omega.dt()).ceil() as usize + 1);
    let osc = (from..=it).map(|i| omega.increment_norm(i, it)).fold(0.0, f64::max);
    let tolerance = 2.0 * osc * (1.0 + a.norm() / lambda) * z_tol + 1e-12 * (1.0 + osc);
    Ok(ScalingReport {
        lhs,
        rhs,
        discrepancy,
        tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn zero_driver_gives_zero() {
        let w = GridPath::zeros(-30.0, 0.01, 3500, 1).unwrap();
        assert_eq!(ou_stationary(&scalar(1.0), 1e-8, &w, 0.0).unwrap(), vec![0.0]);
        let z = ou_stationary_path(&scalar(1.0), 1e-8, &w).unwrap();
        assert_eq!(z.sup_norm(), 0.0);
    }

    #[test]
    fn linear_driver_closed_form() {
        // w(r) = r: Z = int_{-M}^0 e^{r} dr = 1 - e^{-M}
        let w = GridPath::from_fn(-40.0, 0.01, 5000, 1, |t, o| o[0] = t).unwrap();
        let m = ou_horizon(1.0, 1e-8);
        let exact = 1.0 - (-(m / 0.01).ceil() * 0.01f64).exp();
        let q = ou_stationary(&scalar(1.0), 1e-8, &w, 5.0).unwrap()[0];
        assert!((q - exact).abs() < 1e-5, "{q} {exact}");
        let z = ou_stationary_path(&scalar(1.0), 1e-8, &w).unwrap();
        // recursion started at -40 and run to 5: 1 - e^{-45}
        assert!((z.node(z.n_steps())[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn horizon_too_short_is_rejected() {
        let w = GridPath::zeros(-1.0, 0.01, 200, 1).unwrap();
        assert!(ou_stationary(&scalar(1.0), 1e-8, &w, 0.0).is_err());
        assert!(ou_stationary_path(&scalar(1.0), 1e-8, &w).is_err());
    }

    #[test]
    fn recursion_satisfies_identity() {
        let w = GridPath::from_fn(-20.0, 0.01, 3000, 2, |t, o| {
            o[0] = (3.0 * t).sin();
            o[1] = (t * 0.7).cos() * t;
        })
        .unwrap();
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, -0.5, 1.5]);
        let z = ou_stationary_path(&a, 1e-8, &w).unwrap();
        let res = ou_identity_residual(&a, &z, &w, 50).unwrap();
        assert!(res.pass(), "{res:?}");
    }

    #[test]
    fn scaling_identity_on_smooth_path() {
        let w = GridPath::from_fn(-40.0, 0.01, 8000, 1, |t, o| o[0] = (1.3 * t).sin() + 0.1 * t).unwrap();
        let r = ou_scaling_check(&scalar(2.0), 1e-8, &w, 0.5, 0.5).unwrap();
        assert!(r.discrepancy < 1e-8, "{r:?}");
        let r = ou_scaling_check(&scalar(2.0), 1e-8, &w, 1.0, 0.5).unwrap();
        assert_eq!(r.lhs, r.rhs);
    }
}
