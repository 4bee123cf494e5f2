//! Second-order lifts `(x, XX)` of grid paths.
//!
//! Only the per-step areas are supplied; the area over any pair of nodes is
//! recovered from prefix sums with Chen's relation
//! `XX_{s,t} = XX_{s,u} + XX_{u,t} + x_{s,u} (x) x_{u,t}`.

use crate::error::{Error, Result};
use crate::path::GridPath;

/// Frobenius norm of a flattened `d x d` tensor.
#[inline]
pub fn tensor_norm(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[derive(Debug, Clone)]
pub struct RoughLift {
    base: GridPath,
    /// `XX_{t_i, t_{i+1}}`, `d * d` entries per step, index `k * d + l`.
    step_areas: Vec<f64>,
    /// `XX_{t_0, t_i}` per node.
    prefix: Vec<f64>,
}

impl RoughLift {
    /// Builds a lift from explicit per-step areas.
    pub fn from_step_areas(base: GridPath, step_areas: Vec<f64>) -> Result<Self> {
        let d = base.dim();
        if step_areas.len() != base.n_steps() * d * d {
            return Err(Error::DimensionMismatch(format!(
                "{} step areas for {} steps of dimension {d}",
                step_areas.len(),
                base.n_steps()
            )));
        }
        let dd = d * d;
        let mut prefix = vec![0.0; base.n_nodes() * dd];
        let mut x0i = vec![0.0; d];
        let mut step = vec![0.0; d];
        for i in 0..base.n_steps() {
            base.increment_into(0, i, &mut x0i);
            base.increment_into(i, i + 1, &mut step);
            let (prev, next) = prefix.split_at_mut((i + 1) * dd);
            let prev = &prev[i * dd..];
            let next = &mut next[..dd];
            let area = &step_areas[i * dd..(i + 1) * dd];
            for k in 0..d {
                for l in 0..d {
                    next[k * d + l] = prev[k * d + l] + area[k * d + l] + x0i[k] * step[l];
                }
            }
        }
        Ok(Self {
            base,
            step_areas,
            prefix,
        })
    }

    pub fn base(&self) -> &GridPath {
        &self.base
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn n_steps(&self) -> usize {
        self.base.n_steps()
    }

    pub fn step_area(&self, i: usize) -> &[f64] {
        let dd = self.dim() * self.dim();
        &self.step_areas[i * dd..(i + 1) * dd]
    }

    /// `XX_{t_i, t_j}` by Chen reconstruction from the prefix areas.
    #[inline]
    pub fn area_into(&self, i: usize, j: usize, out: &mut [f64]) {
        let d = self.dim();
        let dd = d * d;
        let (pi, pj) = (&self.prefix[i * dd..(i + 1) * dd], &self.prefix[j * dd..(j + 1) * dd]);
        let (x0, xi, xj) = (self.base.node(0), self.base.node(i), self.base.node(j));
        for k in 0..d {
            let a = xi[k] - x0[k];
            for l in 0..d {
                out[k * d + l] = pj[k * d + l] - pi[k * d + l] - a * (xj[l] - xi[l]);
            }
        }
    }

    pub fn area(&self, i: usize, j: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim() * self.dim()];
        self.area_into(i, j, &mut out);
        out
    }

    /// `XX_{t_i, t_j}` accumulated step by step from `t_i` (no prefix sums).
    pub fn area_by_steps(&self, i: usize, j: usize) -> Vec<f64> {
        let d = self.dim();
        let mut acc = vec![0.0; d * d];
        let mut run = vec![0.0; d];
        let mut step = vec![0.0; d];
        for m in i..j {
            self.base.increment_into(i, m, &mut run);
            self.base.increment_into(m, m + 1, &mut step);
            let a = self.step_area(m);
            for k in 0..d {
                for l in 0..d {
                    acc[k * d + l] += a[k * d + l] + run[k] * step[l];
                }
            }
        }
        acc
    }

    /// The lift restricted to nodes `i..=j`.
    pub fn window(&self, i: usize, j: usize) -> Result<Self> {
        let base = self.base.window(i, j)?;
        let dd = self.dim() * self.dim();
        Self::from_step_areas(base, self.step_areas[i * dd..j * dd].to_vec())
    }

    #[inline]
    pub fn area_norm(&self, i: usize, j: usize, scratch: &mut [f64]) -> f64 {
        self.area_into(i, j, scratch);
        tensor_norm(scratch)
    }

    /// `||XX_{s,t} - XX_{s,u} - XX_{u,t} - x_{s,u} (x) x_{u,t}||` using
    /// step-accumulated areas on all three pairs.
    pub fn chen_residual(&self, s: usize, u: usize, t: usize) -> f64 {
        let d = self.dim();
        let (st, su, ut) = (
            self.area_by_steps(s, t),
            self.area_by_steps(s, u),
            self.area_by_steps(u, t),
        );
        let (xsu, xut) = (self.base.increment(s, u), self.base.increment(u, t));
        let mut r = vec![0.0; d * d];
        for k in 0..d {
            for l in 0..d {
                r[k * d + l] = st[k * d + l] - su[k * d + l] - ut[k * d + l] - xsu[k] * xut[l];
            }
        }
        tensor_norm(&r)
    }

    /// `||Sym(XX_{s,t}) - x_{s,t} (x) x_{s,t} / 2||`.
    pub fn geometric_residual(&self, i: usize, j: usize) -> f64 {
        let d = self.dim();
        let a = self.area(i, j);
        let x = self.base.increment(i, j);
        let mut r = 0.0;
        for k in 0..d {
            for l in 0..d {
                let sym = 0.5 * (a[k * d + l] + a[l * d + k]);
                let e = sym - 0.5 * x[k] * x[l];
                r += e * e;
            }
        }
        r.sqrt()
    }
}

/// The canonical lift of the piecewise-linear interpolant: on each step the
/// iterated integral is `XX^{kl} = dx^k dx^l / 2`.
pub fn lift_piecewise_linear(path: &GridPath) -> RoughLift {
    let d = path.dim();
    let mut areas = vec![0.0; path.n_steps() * d * d];
    let mut inc = vec![0.0; d];
    for i in 0..path.n_steps() {
        path.increment_into(i, i + 1, &mut inc);
        let a = &mut areas[i * d * d..(i + 1) * d * d];
        for k in 0..d {
            for l in 0..d {
                a[k * d + l] = 0.5 * inc[k] * inc[l];
            }
        }
    }
    RoughLift::from_step_areas(path.clone(), areas).expect("step areas sized from the path")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_path_area_is_exact() {
        let p = GridPath::from_fn(0.0, 0.1, 10, 2, |t, o| {
            o[0] = t;
            o[1] = 2.0 * t;
        })
        .unwrap();
        let lift = lift_piecewise_linear(&p);
        let a = lift.area(0, 10);
        assert!((a[1] - 1.0).abs() < 1e-14);
        assert!((a[2] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn one_dimensional_area_is_half_square() {
        let p = GridPath::new(0.0, 0.25, 1, vec![0.0, 0.7, -0.2, 1.3, 0.4]).unwrap();
        let lift = lift_piecewise_linear(&p);
        for (i, j) in [(0, 4), (1, 3), (2, 4)] {
            let x = p.increment(i, j)[0];
            assert!((lift.area(i, j)[0] - 0.5 * x * x).abs() < 1e-14);
        }
    }

    /// Trapezoid rule on a 10x refinement of the interpolant.
    fn area_by_refined_quadrature(p: &GridPath, k: usize, l: usize) -> f64 {
        let refine = 10;
        let mut acc = 0.0;
        let start = p.node(0)[k];
        for i in 0..p.n_steps() {
            let (a, b) = (p.node(i), p.node(i + 1));
            for r in 0..refine {
                let u0 = r as f64 / refine as f64;
                let u1 = (r + 1) as f64 / refine as f64;
                let xk0 = a[k] + u0 * (b[k] - a[k]) - start;
                let xk1 = a[k] + u1 * (b[k] - a[k]) - start;
                let dxl = (b[l] - a[l]) / refine as f64;
                acc += 0.5 * (xk0 + xk1) * dxl;
            }
        }
        acc
    }

    #[test]
    fn zigzag_area_matches_quadrature() {
        let p = GridPath::new(0.0, 0.5, 2, vec![0.0, 0.0, 1.0, 0.0, 1.0, 1.0]).unwrap();
        let lift = lift_piecewise_linear(&p);
        let a = lift.area(0, 2);
        assert!((a[1] - area_by_refined_quadrature(&p, 0, 1)).abs() < 1e-13);
        assert!((a[2] - area_by_refined_quadrature(&p, 1, 0)).abs() < 1e-13);
        assert!((a[1] - 1.0).abs() < 1e-14);
        assert!(a[2].abs() < 1e-14);
    }

    #[test]
    fn refinement_consistency_on_smooth_path() {
        // x = (cos 2 pi t, sin 2 pi t): XX^{12}_{0,1} = pi exactly
        let fine = GridPath::from_fn(0.0, 1.0 / 2048.0, 2048, 2, |t, o| {
            let a = 2.0 * std::f64::consts::PI * t;
            o[0] = a.cos();
            o[1] = a.sin();
        })
        .unwrap();
        let coarse = fine.subsample(2).unwrap();
        let (lf, lc) = (lift_piecewise_linear(&fine), lift_piecewise_linear(&coarse));
        let af = lf.area(0, 2048);
        let ac = lc.area(0, 1024);
        let anti_f = 0.5 * (af[1] - af[2]);
        let anti_c = 0.5 * (ac[1] - ac[2]);
        // a chord-polygon with n sides encloses n sin(2 pi / n) / 2
        let polygon = |n: f64| 0.5 * n * (2.0 * std::f64::consts::PI / n).sin();
        assert!((anti_f - polygon(2048.0)).abs() < 1e-10);
        assert!((anti_c - polygon(1024.0)).abs() < 1e-10);
        assert!((anti_f - std::f64::consts::PI).abs() < (anti_c - std::f64::consts::PI).abs());
    }
}
