//! Solving the coupled system, the averaged equation, the block-frozen
//! auxiliary fast process, and the distance between slow solutions.

use crate::controlled::{make_controlled, Affine};
use crate::error::{Error, Result};
use crate::lift::{lift_piecewise_linear, RoughLift};
use crate::path::GridPath;
use crate::rde::{diffusion_path, integrate_nodes, RdeSolution, Scheme};
use crate::variation::{variation_pow, IncrementTwoIndex, RoughnessParams};

use super::drift::DriftHandle;
use super::fixed_point::{pullback_fixed_point, ConjugatedFlow};
use super::system::FastSlowSystem;

#[derive(Debug, Clone)]
pub struct FastSlowPaths {
    /// Slow component, controlled by `w1` with derivative `h(X)`.
    pub x: RdeSolution,
    pub y: GridPath,
}

/// The joint lift of `(w1, w2_eps)`: the given areas of `w1` and the
/// piecewise-linear areas for every other pair of components.
fn joint_lift(omega1: &RoughLift, omega2_eps: &GridPath) -> Result<RoughLift> {
    let joint = GridPath::concat(&[omega1.base(), omega2_eps])?;
    let pl = lift_piecewise_linear(&joint);
    let (d1, d) = (omega1.dim(), joint.dim());
    let mut areas = Vec::with_capacity(joint.n_steps() * d * d);
    for i in 0..joint.n_steps() {
        let own = omega1.step_area(i);
        let mut a = pl.step_area(i).to_vec();
        for k in 0..d1 {
            for l in 0..d1 {
                a[k * d + l] = own[k * d1 + l];
            }
        }
        areas.extend_from_slice(&a);
    }
    RoughLift::from_step_areas(joint, areas)
}

/// Steps the joint equation `d(X, Y) = (f, g / eps) dt + diag(h(X), Id) d(w1, w2_eps)`
/// over the whole grid of `omega1`; `omega2_eps` must share that grid.
pub fn solve_fastslow(
    system: &FastSlowSystem,
    x0: &[f64],
    y0: &[f64],
    omega1: &RoughLift,
    omega2_eps: &GridPath,
    fast_resolution: f64,
    scheme: Scheme,
) -> Result<FastSlowPaths> {
    let (n, m) = (system.n(), system.m());
    if x0.len() != n || y0.len() != m || omega1.dim() != system.d1() || omega2_eps.dim() != m {
        return Err(Error::DimensionMismatch("initial states or drivers do not fit the system".into()));
    }
    let dt = omega1.base().dt();
    if dt > fast_resolution * system.eps() * (1.0 + 1e-9) {
        return Err(Error::InvalidGrid(format!(
            "dt = {dt} does not resolve the fast scale eps = {} (need dt <= {} eps)",
            system.eps(),
            fast_resolution
        )));
    }
    let lift = joint_lift(omega1, omega2_eps)?;
    let z0: Vec<f64> = x0.iter().chain(y0).copied().collect();
    let joint = integrate_nodes(
        &system.joint_drift(),
        &system.joint_diffusion(),
        scheme,
        &z0,
        &lift,
        0,
        lift.n_steps(),
    )?;
    let (t0, nn) = (joint.t0(), joint.n_nodes());
    let mut xs = Vec::with_capacity(nn * n);
    let mut ys = Vec::with_capacity(nn * m);
    for i in 0..nn {
        let z = joint.node(i);
        xs.extend_from_slice(&z[..n]);
        ys.extend_from_slice(&z[n..]);
    }
    let path = GridPath::new(t0, dt, n, xs)?;
    let deriv = diffusion_path(system.h().as_ref(), &path)?;
    Ok(FastSlowPaths {
        x: RdeSolution { path, deriv },
        y: GridPath::new(t0, dt, m, ys)?,
    })
}

/// `dXbar = fbar(Xbar) dt + h(Xbar) dw1` on the grid of `omega1`.
pub fn solve_averaged(
    system: &FastSlowSystem,
    fbar: &DriftHandle,
    x0: &[f64],
    omega1: &RoughLift,
    scheme: Scheme,
) -> Result<RdeSolution> {
    let path = integrate_nodes(fbar, system.h().as_ref(), scheme, x0, omega1, 0, omega1.n_steps())?;
    if let Some((lo, hi)) = fbar.range() {
        for i in 0..path.n_nodes() {
            let v = path.node(i)[0];
            if v < lo || v > hi {
                return Err(Error::RangeExcursion(format!(
                    "averaged solution reached {v} at t = {}, table covers [{lo}, {hi}]",
                    path.time(i)
                )));
            }
        }
    }
    let deriv = diffusion_path(system.h().as_ref(), &path)?;
    Ok(RdeSolution { path, deriv })
}

fn block_steps(dt: f64, delta: f64) -> Result<usize> {
    let ratio = delta / dt;
    let k = ratio.round();
    if !(delta > 0.0 && delta < 1.0) || k < 1.0 || (ratio - k).abs() > 1e-6 * k {
        return Err(Error::InvalidGrid(format!("delta = {delta} is not a multiple of dt = {dt}")));
    }
    Ok(k as usize)
}

/// The fast process with the slow state frozen at the start of each
/// `delta`-block, stepped by the same integrator as the coupled system and
/// continuous across blocks.
pub fn khasminskii_aux(
    system: &FastSlowSystem,
    x: &GridPath,
    y0: &[f64],
    omega2_eps: &GridPath,
    delta: f64,
    scheme: Scheme,
) -> Result<GridPath> {
    x.check_same_grid(omega2_eps)?;
    let m = system.m();
    let block = block_steps(x.dt(), delta)?;
    let lift = lift_piecewise_linear(omega2_eps);
    let mut id = vec![0.0; m * m];
    for k in 0..m {
        id[k * m + k] = 1.0;
    }
    let diffusion = Affine::constant(m, id);
    let n = x.n_steps();
    let mut values = Vec::with_capacity((n + 1) * m);
    values.extend_from_slice(y0);
    let mut start = 0;
    while start < n {
        let end = (start + block).min(n);
        let drift = system.frozen_fast_drift(x.node(start));
        let from = values[start * m..(start + 1) * m].to_vec();
        let piece = integrate_nodes(&drift, &diffusion, scheme, &from, &lift, start, end)?;
        values.extend_from_slice(&piece.values()[m..]);
        start = end;
    }
    GridPath::new(x.t0(), x.dt(), m, values)
}

/// `Y_F(theta_r w, X_{r_delta})` at the nodes of the slow grid on `[0, T]`:
/// a pullback at each block start, continued by the frozen-state flow.
///
/// `z` is the stationary OU path in own time; slow node `i` sits at own node
/// `z_origin + i * stride`.
pub fn fixed_point_along(
    system: &FastSlowSystem,
    x: &GridPath,
    z: &GridPath,
    z_origin: usize,
    stride: usize,
    delta: f64,
    tol: f64,
) -> Result<GridPath> {
    let m = system.m();
    let block = block_steps(x.dt(), delta)?;
    let n = x.n_steps();
    if z_origin + n * stride > z.n_steps() {
        return Err(Error::InvalidGrid("OU path does not cover the slow horizon".into()));
    }
    let mut flow = ConjugatedFlow::new(system, z)?;
    let mut values = vec![0.0; (n + 1) * m];
    let mut start = 0;
    while start <= n {
        let end = (start + block).min(n);
        let xk = x.node(start);
        let own = z_origin + start * stride;
        let fp = pullback_fixed_point(system, xk, z, own, tol, None)?;
        let mut u = fp.conjugated;
        for i in start..=end {
            let zi = z.node(z_origin + i * stride);
            for k in 0..m {
                values[i * m + k] = u[k] + zi[k];
            }
            if i < end {
                let o = z_origin + i * stride;
                flow.run(xk, o, o + stride, &mut u);
            }
        }
        if end == n {
            break;
        }
        start = end;
    }
    GridPath::new(x.t0(), x.dt(), m, values)
}

/// `int ||a - b|| dr` over each `delta`-block (trapezoid on the grid).
pub fn block_integrals(a: &GridPath, b: &GridPath, delta: f64) -> Result<Vec<f64>> {
    let diff = a.difference(b)?;
    let block = block_steps(a.dt(), delta)?;
    let norms: Vec<f64> = (0..diff.n_nodes())
        .map(|i| diff.node(i).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let n = diff.n_steps();
    let mut out = Vec::new();
    let mut start = 0;
    while start < n {
        let end = (start + block).min(n);
        let s: f64 = (start..end).map(|i| 0.5 * (norms[i] + norms[i + 1])).sum();
        out.push(s * a.dt());
        start = end;
    }
    Ok(out)
}

/// `(|X - Xbar|_inf, |||X - Xbar|||_p, |||R^X - R^Xbar|||_q)` with remainders
/// against `w1` and derivatives `h(X)`, `h(Xbar)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Distance {
    pub sup: f64,
    pub pvar: f64,
    pub rem: f64,
}

impl Distance {
    pub fn total(&self) -> f64 {
        self.sup + self.pvar + self.rem
    }
}

pub fn averaging_distance(
    x_eps: &RdeSolution,
    x_bar: &RdeSolution,
    omega1: &RoughLift,
    params: &RoughnessParams,
) -> Result<Distance> {
    let value = x_eps.path.difference(&x_bar.path)?;
    let deriv = x_eps.deriv.difference(&x_bar.deriv)?;
    let diff = make_controlled(value, deriv, omega1)?;
    let n = diff.value().n_steps();
    let sup = diff.value().sup_norm();
    let pvar = variation_pow(&IncrementTwoIndex(diff.value()), params.p, 0, n).powf(1.0 / params.p);
    let rem = variation_pow(&diff.remainder_fn(omega1), params.q, 0, n).powf(1.0 / params.q);
    Ok(Distance { sup, pvar, rem })
}

/// `fbar` for slow drifts of the form `f(x, y) = f1(x) + f2(y)` with
/// `E f2(Y_F) = 0`.
pub fn closed_form_drift(n: usize, lipschitz: f64, f: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static) -> DriftHandle {
    DriftHandle::ClosedForm(crate::rde::FnDrift::new(n, lipschitz, f))
}
