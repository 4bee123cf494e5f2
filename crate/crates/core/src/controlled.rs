//! Controlled paths, smooth coefficients and the compensated rough integral.
//!
//! Index conventions for a reference path in `R^d`:
//! - a controlled path with values in `R^m` has a derivative in
//!   `L(R^d, R^m)`, stored per node at `a * d + k`;
//! - an integrand with values in `L(R^d, R^w)` is stored as `m = w * d`
//!   values at `i * d + l`, so its derivative entry for `((i, l), k)` sits at
//!   `(i * d + l) * d + k`;
//! - the second-order term is `(y' XX)^i = sum_{k,l} y'[(i,l),k] XX^{k,l}`
//!   with `XX^{k,l} = int x^k dx^l`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::lift::{tensor_norm, RoughLift};
use crate::path::GridPath;
use crate::variation::{variation_pow, IncrementTwoIndex, RoughnessParams, TwoIndex};

/// A smooth map `R^in -> R^out` with its derivatives.
pub trait SmoothCoefficient: Send + Sync {
    fn in_dim(&self) -> usize;
    fn out_dim(&self) -> usize;
    fn eval(&self, y: &[f64], out: &mut [f64]);
    /// Row-major `out x in` Jacobian.
    fn jacobian(&self, y: &[f64], out: &mut [f64]);

    /// `out[(o * in + a) * in + b] = d_b d_a G^o`. Defaults to central
    /// differences of the Jacobian.
    fn second_derivative(&self, y: &[f64], out: &mut [f64]) {
        let (n, m) = (self.in_dim(), self.out_dim());
        let mut yp = y.to_vec();
        let mut jp = vec![0.0; m * n];
        let mut jm = vec![0.0; m * n];
        for b in 0..n {
            let h = 1e-5 * (1.0 + y[b].abs());
            yp[b] = y[b] + h;
            self.jacobian(&yp, &mut jp);
            yp[b] = y[b] - h;
            self.jacobian(&yp, &mut jm);
            yp[b] = y[b];
            for o in 0..m {
                for a in 0..n {
                    out[(o * n + a) * n + b] = (jp[o * n + a] - jm[o * n + a]) / (2.0 * h);
                }
            }
        }
    }

    /// Reported bound on the function and its derivatives (`C_G`), or the
    /// Lipschitz constant when used as a drift.
    fn bound(&self) -> f64 {
        f64::NAN
    }

    /// Radius of the ball on which the coefficient may be evaluated.
    fn validity_radius(&self) -> f64 {
        f64::INFINITY
    }
}

/// `y -> M y + c`.
#[derive(Debug, Clone)]
pub struct Affine {
    in_dim: usize,
    out_dim: usize,
    matrix: Vec<f64>,
    offset: Vec<f64>,
}

impl Affine {
    pub fn new(out_dim: usize, in_dim: usize, matrix: Vec<f64>, offset: Vec<f64>) -> Result<Self> {
        if matrix.len() != out_dim * in_dim || offset.len() != out_dim {
            return Err(Error::DimensionMismatch(format!(
                "affine map {out_dim}x{in_dim} with {} matrix entries and {} offsets",
                matrix.len(),
                offset.len()
            )));
        }
        Ok(Self {
            in_dim,
            out_dim,
            matrix,
            offset,
        })
    }

    pub fn linear(out_dim: usize, in_dim: usize, matrix: Vec<f64>) -> Result<Self> {
        Self::new(out_dim, in_dim, matrix, vec![0.0; out_dim])
    }

    pub fn identity(n: usize) -> Self {
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            m[i * n + i] = 1.0;
        }
        Self::linear(n, n, m).expect("square")
    }

    pub fn constant(in_dim: usize, value: Vec<f64>) -> Self {
        let out = value.len();
        Self::new(out, in_dim, vec![0.0; out * in_dim], value).expect("sized")
    }

    pub fn zero(out_dim: usize, in_dim: usize) -> Self {
        Self::constant(in_dim, vec![0.0; out_dim])
    }
}

impl SmoothCoefficient for Affine {
    fn in_dim(&self) -> usize {
        self.in_dim
    }
    fn out_dim(&self) -> usize {
        self.out_dim
    }
    fn eval(&self, y: &[f64], out: &mut [f64]) {
        for (o, row) in self.matrix.chunks_exact(self.in_dim.max(1)).enumerate().take(self.out_dim) {
            out[o] = self.offset[o] + row.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    fn jacobian(&self, _y: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.matrix);
    }
    fn second_derivative(&self, _y: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn bound(&self) -> f64 {
        let m = tensor_norm(&self.matrix);
        if tensor_norm(&self.offset) == 0.0 && m == 0.0 {
            0.0
        } else {
            m.max(tensor_norm(&self.offset))
        }
    }
}

type EvalFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;

/// A coefficient given by closures for the value and the Jacobian.
#[derive(Clone)]
pub struct FnCoefficient {
    in_dim: usize,
    out_dim: usize,
    value: Arc<EvalFn>,
    jacobian: Arc<EvalFn>,
    bound: f64,
    radius: f64,
}

impl FnCoefficient {
    pub fn new(
        in_dim: usize,
        out_dim: usize,
        value: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
        jacobian: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        Self {
            in_dim,
            out_dim,
            value: Arc::new(value),
            jacobian: Arc::new(jacobian),
            bound: f64::NAN,
            radius: f64::INFINITY,
        }
    }

    pub fn with_bound(mut self, bound: f64) -> Self {
        self.bound = bound;
        self
    }

    pub fn with_validity_radius(mut self, radius: f64) -> Self {
        self.radius = radius;
        self
    }
}

impl std::fmt::Debug for FnCoefficient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FnCoefficient")
            .field("in_dim", &self.in_dim)
            .field("out_dim", &self.out_dim)
            .field("bound", &self.bound)
            .finish()
    }
}

impl SmoothCoefficient for FnCoefficient {
    fn in_dim(&self) -> usize {
        self.in_dim
    }
    fn out_dim(&self) -> usize {
        self.out_dim
    }
    fn eval(&self, y: &[f64], out: &mut [f64]) {
        (self.value)(y, out)
    }
    fn jacobian(&self, y: &[f64], out: &mut [f64]) {
        (self.jacobian)(y, out)
    }
    fn bound(&self) -> f64 {
        self.bound
    }
    fn validity_radius(&self) -> f64 {
        self.radius
    }
}

/// Componentwise `sin`, `R^n -> R^n`.
#[derive(Debug, Clone, Copy)]
pub struct Sine(pub usize);

impl SmoothCoefficient for Sine {
    fn in_dim(&self) -> usize {
        self.0
    }
    fn out_dim(&self) -> usize {
        self.0
    }
    fn eval(&self, y: &[f64], out: &mut [f64]) {
        for (o, v) in out.iter_mut().zip(y) {
            *o = v.sin();
        }
    }
    fn jacobian(&self, y: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (i, v) in y.iter().enumerate() {
            out[i * self.0 + i] = v.cos();
        }
    }
    fn second_derivative(&self, y: &[f64], out: &mut [f64]) {
        let n = self.0;
        out.fill(0.0);
        for (i, v) in y.iter().enumerate() {
            out[(i * n + i) * n + i] = -v.sin();
        }
    }
    fn bound(&self) -> f64 {
        1.0
    }
}

/// Largest relative mismatch between the Jacobian (and second derivative)
/// and central differences at the given points.
pub fn derivative_mismatch(g: &dyn SmoothCoefficient, points: &[Vec<f64>]) -> (f64, f64) {
    let (n, m) = (g.in_dim(), g.out_dim());
    let mut worst_j: f64 = 0.0;
    let mut worst_h: f64 = 0.0;
    let (mut fp, mut fm) = (vec![0.0; m], vec![0.0; m]);
    let (mut jac, mut jp, mut jm) = (vec![0.0; m * n], vec![0.0; m * n], vec![0.0; m * n]);
    let mut hess = vec![0.0; m * n * n];
    let rel = |a: f64, b: f64, scale: f64| (a - b).abs() / (scale + 1e-8);
    for y in points {
        g.jacobian(y, &mut jac);
        g.second_derivative(y, &mut hess);
        let jscale = tensor_norm(&jac);
        let hscale = tensor_norm(&hess);
        let mut yp = y.clone();
        for b in 0..n {
            let h = 1e-5 * (1.0 + y[b].abs());
            yp[b] = y[b] + h;
            g.eval(&yp, &mut fp);
            g.jacobian(&yp, &mut jp);
            yp[b] = y[b] - h;
            g.eval(&yp, &mut fm);
            g.jacobian(&yp, &mut jm);
            yp[b] = y[b];
            for o in 0..m {
                let fd = (fp[o] - fm[o]) / (2.0 * h);
                worst_j = worst_j.max(rel(jac[o * n + b], fd, jscale));
                for a in 0..n {
                    let fd2 = (jp[o * n + a] - jm[o * n + a]) / (2.0 * h);
                    worst_h = worst_h.max(rel(hess[(o * n + a) * n + b], fd2, hscale));
                }
            }
        }
    }
    (worst_j, worst_h)
}

/// A path `y` controlled by a reference lift, with derivative `y'`.
#[derive(Debug, Clone)]
pub struct ControlledPath {
    value: GridPath,
    deriv: GridPath,
    ref_dim: usize,
}

impl ControlledPath {
    pub fn value(&self) -> &GridPath {
        &self.value
    }

    pub fn deriv(&self) -> &GridPath {
        &self.deriv
    }

    pub fn ref_dim(&self) -> usize {
        self.ref_dim
    }

    pub fn dim(&self) -> usize {
        self.value.dim()
    }

    /// The reference path itself with `y' = Id`.
    pub fn identity(reference: &RoughLift) -> Self {
        let d = reference.dim();
        let base = reference.base().clone();
        let mut id = vec![0.0; d * d];
        for k in 0..d {
            id[k * d + k] = 1.0;
        }
        let deriv = GridPath::constant(base.t0(), base.dt(), base.n_steps(), &id).expect("valid grid");
        Self {
            value: base,
            deriv,
            ref_dim: d,
        }
    }

    /// `R^y_{t_i,t_j} = y_{t_i,t_j} - y'_{t_i} x_{t_i,t_j}`.
    pub fn remainder_into(&self, reference: &RoughLift, i: usize, j: usize, out: &mut [f64]) {
        let d = self.ref_dim;
        let base = reference.base();
        let (yi, yj) = (self.value.node(i), self.value.node(j));
        let dy = self.deriv.node(i);
        let (xi, xj) = (base.node(i), base.node(j));
        for (a, o) in out.iter_mut().enumerate() {
            let mut acc = yj[a] - yi[a];
            for k in 0..d {
                acc -= dy[a * d + k] * (xj[k] - xi[k]);
            }
            *o = acc;
        }
    }

    pub fn remainder(&self, reference: &RoughLift, i: usize, j: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.remainder_into(reference, i, j, &mut out);
        out
    }

    /// The remainder as a two-index function, evaluated on demand.
    pub fn remainder_fn<'a>(&'a self, reference: &'a RoughLift) -> Remainder<'a> {
        Remainder { y: self, x: reference }
    }
}

/// `R^y` of a controlled path viewed as a two-index function.
pub struct Remainder<'a> {
    y: &'a ControlledPath,
    x: &'a RoughLift,
}

impl TwoIndex for Remainder<'_> {
    fn n_nodes(&self) -> usize {
        self.y.value.n_nodes()
    }
    fn dim(&self) -> usize {
        self.y.dim()
    }
    fn eval_into(&self, i: usize, j: usize, out: &mut [f64]) {
        self.y.remainder_into(self.x, i, j, out)
    }
}

pub fn make_controlled(value: GridPath, deriv: GridPath, reference: &RoughLift) -> Result<ControlledPath> {
    value.check_same_grid(reference.base())?;
    deriv.check_same_grid(reference.base())?;
    let d = reference.dim();
    if deriv.dim() != value.dim() * d {
        return Err(Error::DimensionMismatch(format!(
            "derivative has {} components, expected {} x {d}",
            deriv.dim(),
            value.dim()
        )));
    }
    Ok(ControlledPath {
        value,
        deriv,
        ref_dim: d,
    })
}

/// `(G(y), DG(y) y')`.
pub fn compose_smooth(g: &dyn SmoothCoefficient, y: &ControlledPath) -> Result<ControlledPath> {
    let (w, m, d) = (y.dim(), g.out_dim(), y.ref_dim);
    if g.in_dim() != w {
        return Err(Error::DimensionMismatch(format!(
            "coefficient takes {} inputs, path has dimension {w}",
            g.in_dim()
        )));
    }
    let radius = g.validity_radius();
    let n = y.value.n_nodes();
    let mut value = vec![0.0; n * m];
    let mut deriv = vec![0.0; n * m * d];
    let mut jac = vec![0.0; m * w];
    for i in 0..n {
        let yi = y.value.node(i);
        let norm = tensor_norm(yi);
        if norm > radius {
            return Err(Error::RangeExcursion(format!(
                "|y| = {norm} at t = {} exceeds {radius}",
                y.value.time(i)
            )));
        }
        g.eval(yi, &mut value[i * m..(i + 1) * m]);
        g.jacobian(yi, &mut jac);
        let dy = y.deriv.node(i);
        let out = &mut deriv[i * m * d..(i + 1) * m * d];
        for o in 0..m {
            for k in 0..d {
                out[o * d + k] = (0..w).map(|a| jac[o * w + a] * dy[a * d + k]).sum();
            }
        }
    }
    let grid = &y.value;
    Ok(ControlledPath {
        value: GridPath::new(grid.t0(), grid.dt(), m, value)?,
        deriv: GridPath::new(grid.t0(), grid.dt(), m * d, deriv)?,
        ref_dim: d,
    })
}

fn integrand_dims(y: &ControlledPath, x: &RoughLift) -> Result<usize> {
    let d = x.dim();
    if y.ref_dim != d || !y.dim().is_multiple_of(d) {
        return Err(Error::DimensionMismatch(format!(
            "integrand of dimension {} against a {d}-dimensional path",
            y.dim()
        )));
    }
    y.value.check_same_grid(x.base())?;
    Ok(y.dim() / d)
}

/// Adds `y_u x_{u,v} + y'_u XX_{u,v}` for one grid step to `acc`.
#[inline]
fn add_step(y: &ControlledPath, x: &RoughLift, u: usize, v: usize, area: &mut [f64], acc: &mut [f64]) {
    let d = x.dim();
    let base = x.base();
    let (xu, xv) = (base.node(u), base.node(v));
    let (yu, dyu) = (y.value.node(u), y.deriv.node(u));
    x.area_into(u, v, area);
    for (i, a) in acc.iter_mut().enumerate() {
        let mut s = 0.0;
        for l in 0..d {
            s += yu[i * d + l] * (xv[l] - xu[l]);
            for k in 0..d {
                s += dyu[(i * d + l) * d + k] * area[k * d + l];
            }
        }
        *a += s;
    }
}

/// Compensated Riemann sum over the grid steps of `[s, t]`.
pub fn rough_integral(y: &ControlledPath, x: &RoughLift, s: f64, t: f64) -> Result<Vec<f64>> {
    let w = integrand_dims(y, x)?;
    let (i, j) = x.base().index_range(s, t)?;
    Ok(rough_integral_indices(y, x, i, j, w))
}

fn rough_integral_indices(y: &ControlledPath, x: &RoughLift, i: usize, j: usize, w: usize) -> Vec<f64> {
    let mut acc = vec![0.0; w];
    let mut area = vec![0.0; x.dim() * x.dim()];
    for u in i..j {
        add_step(y, x, u, u + 1, &mut area, &mut acc);
    }
    acc
}

/// The running integral `t -> int_{t0}^t y dx` on the grid.
pub fn rough_integral_path(y: &ControlledPath, x: &RoughLift) -> Result<GridPath> {
    let w = integrand_dims(y, x)?;
    let n = x.base().n_nodes();
    let mut values = vec![0.0; n * w];
    let mut acc = vec![0.0; w];
    let mut area = vec![0.0; x.dim() * x.dim()];
    for u in 0..n - 1 {
        add_step(y, x, u, u + 1, &mut area, &mut acc);
        values[(u + 1) * w..(u + 2) * w].copy_from_slice(&acc);
    }
    GridPath::new(x.base().t0(), x.base().dt(), w, values)
}

/// Local defect of the integral against its two-term germ, with the
/// variation bound it is compared to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Certificate {
    pub s: f64,
    pub t: f64,
    pub defect: f64,
    pub bound_term: f64,
    pub ratio: f64,
}

impl Certificate {
    pub const CSV_HEADER: &'static str = "s,t,defect,bound_term,ratio";

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{:e},{:e},{:e}",
            self.s, self.t, self.defect, self.bound_term, self.ratio
        )
    }
}

pub fn local_error_certificate(
    y: &ControlledPath,
    x: &RoughLift,
    params: &RoughnessParams,
    s: f64,
    t: f64,
) -> Result<Certificate> {
    let w = integrand_dims(y, x)?;
    let (i, j) = x.base().index_range(s, t)?;
    let integral = rough_integral_indices(y, x, i, j, w);
    let mut germ = vec![0.0; w];
    let mut area = vec![0.0; x.dim() * x.dim()];
    if j > i {
        add_step(y, x, i, j, &mut area, &mut germ);
    }
    let defect = integral
        .iter()
        .zip(&germ)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let (p, q) = (params.p, params.q);
    let xp = variation_pow(&IncrementTwoIndex(x.base()), p, i, j).powf(1.0 / p);
    let rq = variation_pow(&y.remainder_fn(x), q, i, j).powf(1.0 / q);
    let dp = variation_pow(&IncrementTwoIndex(&y.deriv), p, i, j).powf(1.0 / p);
    let aq = variation_pow(&crate::variation::AreaTwoIndex(x), q, i, j).powf(1.0 / q);
    let bound_term = xp * rq + dp * aq;
    let ratio = if bound_term > 0.0 { defect / bound_term } else { 0.0 };
    Ok(Certificate {
        s: x.base().time(i),
        t: x.base().time(j),
        defect,
        bound_term,
        ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lift::lift_piecewise_linear;

    fn smooth_lift(n: usize) -> RoughLift {
        let p = GridPath::from_fn(0.0, 1.0 / n as f64, n, 2, |t, o| {
            o[0] = (3.0 * t).sin();
            o[1] = t * t - 0.5 * t;
        })
        .unwrap();
        lift_piecewise_linear(&p)
    }

    #[test]
    fn identity_and_constant_have_zero_remainder() {
        let x = smooth_lift(20);
        let id = ControlledPath::identity(&x);
        let c = make_controlled(
            GridPath::constant(0.0, 0.05, 20, &[1.0, 2.0]).unwrap(),
            GridPath::zeros(0.0, 0.05, 20, 4).unwrap(),
            &x,
        )
        .unwrap();
        for (i, j) in [(0, 20), (3, 7), (5, 5)] {
            assert!(tensor_norm(&id.remainder(&x, i, j)) < 1e-15);
            assert_eq!(tensor_norm(&c.remainder(&x, i, j)), 0.0);
        }
    }

    #[test]
    fn time_path_remainder_is_elapsed_time() {
        let x = smooth_lift(10);
        let y = make_controlled(
            GridPath::from_fn(0.0, 0.1, 10, 1, |t, o| o[0] = t).unwrap(),
            GridPath::zeros(0.0, 0.1, 10, 2).unwrap(),
            &x,
        )
        .unwrap();
        assert!((y.remainder(&x, 2, 9)[0] - 0.7).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_dimensions() {
        let x = smooth_lift(10);
        let v = GridPath::zeros(0.0, 0.1, 10, 1).unwrap();
        assert!(make_controlled(v.clone(), v.clone(), &x).is_err());
        let off = GridPath::zeros(0.0, 0.2, 10, 2).unwrap();
        assert!(make_controlled(v, off, &x).is_err());
    }

    #[test]
    fn compose_identity_and_linear() {
        let x = smooth_lift(16);
        let id = ControlledPath::identity(&x);
        let same = compose_smooth(&Affine::identity(2), &id).unwrap();
        assert_eq!(same.value(), id.value());
        assert_eq!(same.deriv(), id.deriv());

        let a = Affine::linear(2, 2, vec![1.0, 2.0, -0.5, 3.0]).unwrap();
        let ay = compose_smooth(&a, &id).unwrap();
        for (i, j) in [(0, 16), (4, 9)] {
            let r = id.remainder(&x, i, j);
            let ar = [r[0] + 2.0 * r[1], -0.5 * r[0] + 3.0 * r[1]];
            let got = ay.remainder(&x, i, j);
            assert!((got[0] - ar[0]).abs() < 1e-13 && (got[1] - ar[1]).abs() < 1e-13);
        }
    }

    #[test]
    fn compose_checks_validity_range() {
        let x = smooth_lift(8);
        let g = FnCoefficient::new(2, 1, |y, o| o[0] = y[0], |_, j| j.copy_from_slice(&[1.0, 0.0]))
            .with_validity_radius(0.1);
        assert!(matches!(
            compose_smooth(&g, &ControlledPath::identity(&x)),
            Err(Error::RangeExcursion(_))
        ));
    }

    #[test]
    fn sine_remainder_matches_taylor() {
        // 1-D path x_t = t: R^{sin x}_{s,t} = sin t - sin s - cos s (t - s)
        let p = GridPath::from_fn(0.0, 0.01, 100, 1, |t, o| o[0] = t).unwrap();
        let x = lift_piecewise_linear(&p);
        let y = compose_smooth(&Sine(1), &ControlledPath::identity(&x)).unwrap();
        for (i, j) in [(0, 100), (10, 30), (50, 51)] {
            let (s, t) = (p.time(i), p.time(j));
            let oracle = t.sin() - s.sin() - s.cos() * (t - s);
            assert!((y.remainder(&x, i, j)[0] - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn integral_of_constant_and_of_path() {
        let x = smooth_lift(32);
        let c = make_controlled(
            GridPath::constant(0.0, 1.0 / 32.0, 32, &[2.0, -1.0]).unwrap(),
            GridPath::zeros(0.0, 1.0 / 32.0, 32, 4).unwrap(),
            &x,
        )
        .unwrap();
        let inc = x.base().increment(0, 32);
        let got = rough_integral(&c, &x, 0.0, 1.0).unwrap();
        assert!((got[0] - (2.0 * inc[0] - inc[1])).abs() < 1e-14);

        let p = x.base().component(0);
        let x1 = lift_piecewise_linear(&p);
        let id = ControlledPath::identity(&x1);
        let v = rough_integral(&id, &x1, 0.25, 0.75).unwrap()[0];
        let (a, b) = (p.value_at(0.25).unwrap()[0], p.value_at(0.75).unwrap()[0]);
        assert!((v - 0.5 * (b * b - a * a)).abs() < 1e-14);
    }

    #[test]
    fn integral_is_additive() {
        let x = smooth_lift(40);
        let y = compose_smooth(&Sine(2), &ControlledPath::identity(&x)).unwrap();
        let y = make_controlled(
            GridPath::concat(&[y.value(), y.value()]).unwrap(),
            GridPath::concat(&[y.deriv(), y.deriv()]).unwrap(),
            &x,
        )
        .unwrap();
        let whole = rough_integral(&y, &x, 0.0, 1.0).unwrap();
        let a = rough_integral(&y, &x, 0.0, 0.4).unwrap();
        let b = rough_integral(&y, &x, 0.4, 1.0).unwrap();
        for k in 0..2 {
            assert!((whole[k] - a[k] - b[k]).abs() < 1e-14);
        }
        let running = rough_integral_path(&y, &x).unwrap();
        assert!((running.node(40)[0] - whole[0]).abs() < 1e-15);
    }

    #[test]
    fn certificate_of_constant_is_zero() {
        let x = smooth_lift(16);
        let c = make_controlled(
            GridPath::constant(0.0, 1.0 / 16.0, 16, &[1.0, 1.0]).unwrap(),
            GridPath::zeros(0.0, 1.0 / 16.0, 16, 4).unwrap(),
            &x,
        )
        .unwrap();
        let params = RoughnessParams::new(2.5, 0.4).unwrap();
        let cert = local_error_certificate(&c, &x, &params, 0.0, 1.0).unwrap();
        assert!(cert.defect < 1e-15);
        assert_eq!(cert.to_csv().split(',').count(), 5);
    }

    #[test]
    fn analytic_derivatives_match_differences() {
        let pts: Vec<Vec<f64>> = (0..20).map(|i| vec![0.3 * i as f64 - 3.0, 0.1 * i as f64]).collect();
        let (j, h) = derivative_mismatch(&Sine(2), &pts);
        assert!(j < 1e-5 && h < 1e-5, "{j} {h}");
    }
}
