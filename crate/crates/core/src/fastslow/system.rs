//! The coupled system
//!
//! ```text
//! dX = f(X, Y) dt + h(X) dw1,          X(0) = X0 in R^n
//! dY = (-A Y + g~(X, Y)) / eps dt + dw2(. / eps),  Y(0) = Y0 in R^m
//! ```
//!
//! driven by a rough path `w1` in `R^d1` and a two-sided path `w2` in `R^m`.

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::controlled::SmoothCoefficient;
use crate::error::{Error, Result};
use crate::path::HurstIndex;
use crate::rde::FnDrift;

/// `(x, y, out)` callback for `f` or `g~`.
pub type PairFn = dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync;

/// Everything needed to assemble a [`FastSlowSystem`].
#[derive(Clone)]
pub struct SystemParts {
    pub n: usize,
    pub m: usize,
    pub d1: usize,
    pub f: Arc<PairFn>,
    /// Lipschitz constant of `f`.
    pub c_f: f64,
    pub h: Arc<dyn SmoothCoefficient>,
    /// Row-major `m x m`.
    pub a: Vec<f64>,
    pub g_tilde: Arc<PairFn>,
    /// Lipschitz constant of `g~` in `(x, y)`.
    pub l_g: f64,
    pub eps: f64,
    pub hurst: HurstIndex,
    pub hurst_fast: HurstIndex,
}

#[derive(Clone)]
pub struct FastSlowSystem {
    parts: SystemParts,
    a: DMatrix<f64>,
    lambda_a: f64,
}

impl std::fmt::Debug for FastSlowSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FastSlowSystem")
            .field("n", &self.parts.n)
            .field("m", &self.parts.m)
            .field("d1", &self.parts.d1)
            .field("lambda_a", &self.lambda_a)
            .field("l_g", &self.parts.l_g)
            .field("eps", &self.parts.eps)
            .finish()
    }
}

/// Smallest eigenvalue of the symmetric part of `a`, i.e. the best
/// `lambda` with `(A y, y) >= lambda |y|^2`.
pub fn coercivity(a: &DMatrix<f64>) -> f64 {
    let sym = (a + a.transpose()) * 0.5;
    SymmetricEigen::new(sym).eigenvalues.min()
}

impl FastSlowSystem {
    pub fn new(parts: SystemParts) -> Result<Self> {
        let SystemParts { n, m, d1, .. } = parts;
        if n == 0 || m == 0 || d1 == 0 {
            return Err(Error::InvalidParameter("dimensions must be positive".into()));
        }
        if parts.a.len() != m * m {
            return Err(Error::DimensionMismatch(format!("A has {} entries, expected {m}x{m}", parts.a.len())));
        }
        if parts.h.in_dim() != n || parts.h.out_dim() != n * d1 {
            return Err(Error::DimensionMismatch(format!(
                "h maps {} -> {}, expected {n} -> {n}x{d1}",
                parts.h.in_dim(),
                parts.h.out_dim()
            )));
        }
        if !(parts.eps > 0.0 && parts.eps <= 1.0) {
            return Err(Error::InvalidParameter(format!("eps = {} outside (0, 1]", parts.eps)));
        }
        let a = DMatrix::from_row_slice(m, m, &parts.a);
        let lambda_a = coercivity(&a);
        if !(lambda_a > parts.l_g) || parts.l_g < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "need lambda_A > L_g >= 0, got lambda_A = {lambda_a}, L_g = {}",
                parts.l_g
            )));
        }
        Ok(Self { parts, a, lambda_a })
    }

    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        let mut parts = self.parts.clone();
        parts.eps = eps;
        Self::new(parts)
    }

    pub fn parts(&self) -> &SystemParts {
        &self.parts
    }

    pub fn n(&self) -> usize {
        self.parts.n
    }

    pub fn m(&self) -> usize {
        self.parts.m
    }

    pub fn d1(&self) -> usize {
        self.parts.d1
    }

    pub fn eps(&self) -> f64 {
        self.parts.eps
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn lambda_a(&self) -> f64 {
        self.lambda_a
    }

    pub fn l_g(&self) -> f64 {
        self.parts.l_g
    }

    /// `lambda_A - L_g`, the contraction rate of the fast dynamics in its
    /// own time.
    pub fn gap(&self) -> f64 {
        self.lambda_a - self.parts.l_g
    }

    pub fn hurst(&self) -> HurstIndex {
        self.parts.hurst
    }

    pub fn hurst_fast(&self) -> HurstIndex {
        self.parts.hurst_fast
    }

    pub fn h(&self) -> &Arc<dyn SmoothCoefficient> {
        &self.parts.h
    }

    pub fn slow_drift(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        (self.parts.f)(x, y, out)
    }

    pub fn coupling(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        (self.parts.g_tilde)(x, y, out)
    }

    /// `(-A y + g~(x, y)) / eps`.
    pub fn fast_drift(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        (self.parts.g_tilde)(x, y, out);
        let m = self.parts.m;
        for i in 0..m {
            let mut ay = 0.0;
            for j in 0..m {
                ay += self.a[(i, j)] * y[j];
            }
            out[i] = (out[i] - ay) / self.parts.eps;
        }
    }

    /// Sup of `|f|` over a sampled box `[-r, r]^(n+m)`.
    pub fn f_sup_on_box(&self, r: f64, points_per_axis: usize) -> f64 {
        let (n, m) = (self.parts.n, self.parts.m);
        let dim = n + m;
        let k = points_per_axis.max(2);
        let total = k.pow(dim as u32);
        let mut z = vec![0.0; dim];
        let mut out = vec![0.0; n];
        let mut best: f64 = 0.0;
        for idx in 0..total {
            let mut rest = idx;
            for v in z.iter_mut() {
                *v = -r + 2.0 * r * (rest % k) as f64 / (k - 1) as f64;
                rest /= k;
            }
            self.slow_drift(&z[..n], &z[n..], &mut out);
            best = best.max(out.iter().map(|v| v * v).sum::<f64>().sqrt());
        }
        best
    }

    /// Drift `(f(x, y), (-A y + g~(x, y)) / eps)` of the joint state.
    pub fn joint_drift(&self) -> FnDrift {
        let (n, m) = (self.parts.n, self.parts.m);
        let sys = self.clone();
        let lip = self.parts.c_f + (self.a.norm() + self.parts.l_g) / self.parts.eps;
        FnDrift::new(n + m, lip, move |z, out| {
            let (x, y) = z.split_at(n);
            let (of, og) = out.split_at_mut(n);
            sys.slow_drift(x, y, of);
            sys.fast_drift(x, y, &mut og[..m]);
        })
    }

    /// Diffusion `diag(h(x), Id)` of the joint state against `(w1, w2)`.
    pub fn joint_diffusion(&self) -> JointDiffusion {
        JointDiffusion {
            n: self.parts.n,
            m: self.parts.m,
            d1: self.parts.d1,
            h: self.parts.h.clone(),
        }
    }

    /// Drift of the fast equation with the slow variable frozen at `x`.
    pub fn frozen_fast_drift(&self, x: &[f64]) -> FnDrift {
        let sys = self.clone();
        let x = x.to_vec();
        let lip = (self.a.norm() + self.parts.l_g) / self.parts.eps;
        FnDrift::new(self.parts.m, lip, move |y, out| sys.fast_drift(&x, y, out))
    }

    pub fn slow_drift_fn(&self) -> Arc<PairFn> {
        self.parts.f.clone()
    }
}

/// `G(x, y) = diag(h(x), Id)`, mapping `R^(n+m)` to `L(R^(d1+m), R^(n+m))`.
#[derive(Clone)]
pub struct JointDiffusion {
    n: usize,
    m: usize,
    d1: usize,
    h: Arc<dyn SmoothCoefficient>,
}

impl SmoothCoefficient for JointDiffusion {
    fn in_dim(&self) -> usize {
        self.n + self.m
    }
    fn out_dim(&self) -> usize {
        (self.n + self.m) * (self.d1 + self.m)
    }
    fn eval(&self, z: &[f64], out: &mut [f64]) {
        let (n, m, d1) = (self.n, self.m, self.d1);
        let d = d1 + m;
        out.fill(0.0);
        let mut hx = vec![0.0; n * d1];
        self.h.eval(&z[..n], &mut hx);
        for i in 0..n {
            out[i * d..i * d + d1].copy_from_slice(&hx[i * d1..(i + 1) * d1]);
        }
        for a in 0..m {
            out[(n + a) * d + d1 + a] = 1.0;
        }
    }
    fn jacobian(&self, z: &[f64], out: &mut [f64]) {
        let (n, m, d1) = (self.n, self.m, self.d1);
        let (d, e) = (d1 + m, n + m);
        out.fill(0.0);
        let mut dh = vec![0.0; n * d1 * n];
        self.h.jacobian(&z[..n], &mut dh);
        for i in 0..n {
            for l in 0..d1 {
                for j in 0..n {
                    out[(i * d + l) * e + j] = dh[(i * d1 + l) * n + j];
                }
            }
        }
    }
    fn bound(&self) -> f64 {
        self.h.bound().max(1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controlled::{derivative_mismatch, FnCoefficient};
    use crate::rde::Drift;

    pub(crate) fn scalar_system(l_g: f64, a: f64) -> Result<FastSlowSystem> {
        let h = FnCoefficient::new(
            1,
            1,
            |x, o| o[0] = 0.5 + 0.25 * x[0].sin(),
            |x, j| j[0] = 0.25 * x[0].cos(),
        )
        .with_bound(0.75);
        FastSlowSystem::new(SystemParts {
            n: 1,
            m: 1,
            d1: 1,
            f: Arc::new(|x, y, o| o[0] = x[0].sin() + y[0].sin()),
            c_f: 1.0,
            h: Arc::new(h),
            a: vec![a],
            g_tilde: Arc::new(move |x, y, o| o[0] = l_g * (x[0].sin() + 0.0 * y[0])),
            l_g,
            eps: 0.1,
            hurst: HurstIndex::brownian(),
            hurst_fast: HurstIndex::brownian(),
        })
    }

    #[test]
    fn rejects_weak_dissipation() {
        assert!(scalar_system(1.0, 2.0).is_ok());
        assert!(scalar_system(2.0, 2.0).is_err());
        assert!(scalar_system(0.0, -1.0).is_err());
    }

    #[test]
    fn coercivity_of_nonsymmetric_matrix() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, -1.0, 3.0]);
        assert!((coercivity(&a) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn joint_pieces() {
        let sys = scalar_system(0.5, 2.0).unwrap();
        let mut g = vec![0.0; 4];
        let jd = sys.joint_diffusion();
        jd.eval(&[0.3, -1.0], &mut g);
        assert_eq!(g, vec![0.5 + 0.25 * 0.3f64.sin(), 0.0, 0.0, 1.0]);
        let pts: Vec<Vec<f64>> = (0..10).map(|i| vec![0.4 * i as f64 - 2.0, 0.1 * i as f64]).collect();
        assert!(derivative_mismatch(&jd, &pts).0 < 1e-6);

        let mut out = vec![0.0; 2];
        sys.joint_drift().eval(&[0.3, -1.0], &mut out);
        let expect_fast = (0.5 * 0.3f64.sin() + 2.0) / 0.1;
        assert!((out[1] - expect_fast).abs() < 1e-12);
        assert!((sys.f_sup_on_box(3.0, 7) - 2.0 * 2f64.sin()).abs() < 1e-12);
    }
}
