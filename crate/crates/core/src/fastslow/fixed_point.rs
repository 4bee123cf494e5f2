//! The random fixed point of the fast equation with a frozen slow state.
//!
//! Everything here runs in the fast variable's own time, where the equation
//! reads `dy = (-A y + g~(x, y)) ds + dw(s)`; the `eps`-dependent fixed point
//! at time `t` is the own-time one at `t / eps`. With `y = u + Z(theta_s w)`
//! the equation becomes the random ODE `u' = -A u + g~(x, u + Z(theta_s w))`,
//! stepped by exponential Euler.

use crate::error::{Error, Result};
use crate::path::GridPath;

use super::ou::OuStep;
use super::system::FastSlowSystem;

/// Largest number of pullback-horizon doublings.
pub const MAX_DOUBLINGS: usize = 8;

/// `T_0 = ln(1 / tol) / (lambda_A - L_g)` in own time.
pub fn base_pullback_time(system: &FastSlowSystem, tol: f64) -> f64 {
    tol.recip().ln() / system.gap()
}

/// Exponential Euler for `u' = -A u + g~(x, u + Z)` on the grid of `z`.
#[derive(Debug, Clone)]
pub struct ConjugatedFlow<'a> {
    system: &'a FastSlowSystem,
    z: &'a GridPath,
    step: OuStep,
    buf: Vec<f64>,
    g: Vec<f64>,
}

impl<'a> ConjugatedFlow<'a> {
    pub fn new(system: &'a FastSlowSystem, z: &'a GridPath) -> Result<Self> {
        if z.dim() != system.m() {
            return Err(Error::DimensionMismatch(format!(
                "Z has dimension {}, fast variable {}",
                z.dim(),
                system.m()
            )));
        }
        let m = system.m();
        Ok(Self {
            system,
            z,
            step: OuStep::new(system.a(), z.dt())?,
            buf: vec![0.0; m],
            g: vec![0.0; m],
        })
    }

    pub fn z(&self) -> &GridPath {
        self.z
    }

    /// Advances `u` from node `i` to node `i + 1`.
    pub fn step(&mut self, x: &[f64], i: usize, u: &mut [f64]) {
        let m = u.len();
        let zi = self.z.node(i);
        for k in 0..m {
            self.buf[k] = u[k] + zi[k];
        }
        self.system.coupling(x, &self.buf, &mut self.g);
        let (e, q) = (self.step.decay(), self.step.gain());
        for k in 0..m {
            let mut s = 0.0;
            for j in 0..m {
                s += e[(k, j)] * u[j] + q[(k, j)] * self.g[j];
            }
            self.buf[k] = s;
        }
        u.copy_from_slice(&self.buf);
    }

    /// Runs from node `i` to node `j >= i`.
    pub fn run(&mut self, x: &[f64], i: usize, j: usize, u: &mut [f64]) {
        for k in i..j {
            self.step(x, k, u);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPoint {
    /// `Y_F = u + Z` at the requested node.
    pub value: Vec<f64>,
    /// The conjugated part `u`.
    pub conjugated: Vec<f64>,
    pub doublings: usize,
    pub last_change: f64,
}

/// Pullback iteration at node `index` of `z`: solve from `index - K_k` for
/// `K_k = 2^k T_0 / h` with the start state `start` (default `Z`, i.e.
/// `u = 0`) until two successive results differ by less than `tol`.
pub fn pullback_fixed_point(
    system: &FastSlowSystem,
    x: &[f64],
    z: &GridPath,
    index: usize,
    tol: f64,
    start: Option<&[f64]>,
) -> Result<FixedPoint> {
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::InvalidParameter(format!("tol = {tol} outside (0, 1)")));
    }
    let mut flow = ConjugatedFlow::new(system, z)?;
    let m = system.m();
    let t0 = base_pullback_time(system, tol);
    let base_steps = (t0 / z.dt()).ceil().max(1.0) as usize;
    let mut previous: Option<Vec<f64>> = None;
    let mut last_change = f64::INFINITY;
    for k in 0..=MAX_DOUBLINGS {
        let back = base_steps << k;
        if back > index {
            break;
        }
        let from = index - back;
        let mut u = vec![0.0; m];
        if let Some(y0) = start {
            let zf = z.node(from);
            for j in 0..m {
                u[j] = y0[j] - zf[j];
            }
        }
        flow.run(x, from, index, &mut u);
        if let Some(prev) = &previous {
            last_change = prev
                .iter()
                .zip(&u)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if last_change < tol {
                let zi = z.node(index);
                let value = u.iter().zip(zi).map(|(a, b)| a + b).collect();
                return Ok(FixedPoint {
                    value,
                    conjugated: u,
                    doublings: k,
                    last_change,
                });
            }
        }
        previous = Some(u);
    }
    Err(Error::NoConvergence {
        iterations: MAX_DOUBLINGS,
        last_change,
        tol,
    })
}

/// Own-time steps of history a pullback at one node needs when it converges
/// after `doublings` doublings.
pub fn pullback_steps(system: &FastSlowSystem, tol: f64, h: f64, doublings: usize) -> usize {
    let t0 = base_pullback_time(system, tol);
    ((t0 / h).ceil().max(1.0) as usize) << doublings
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controlled::Affine;
    use crate::fastslow::system::SystemParts;
    use crate::path::HurstIndex;
    use std::sync::Arc;

    fn system(c: f64, l_g: f64, coupled_in_y: bool) -> FastSlowSystem {
        FastSlowSystem::new(SystemParts {
            n: 1,
            m: 1,
            d1: 1,
            f: Arc::new(|x, y, o| o[0] = x[0] + y[0]),
            c_f: 1.0,
            h: Arc::new(Affine::zero(1, 1)),
            a: vec![2.0],
            g_tilde: Arc::new(move |x, y, o| {
                o[0] = c * x[0] + if coupled_in_y { l_g * y[0].sin() } else { 0.0 }
            }),
            l_g,
            eps: 1.0,
            hurst: HurstIndex::brownian(),
            hurst_fast: HurstIndex::brownian(),
        })
        .unwrap()
    }

    fn z_path() -> GridPath {
        GridPath::from_fn(-60.0, 0.01, 6500, 1, |t, o| o[0] = (2.0 * t).sin() + 0.3 * (0.37 * t).cos()).unwrap()
    }

    #[test]
    fn no_coupling_returns_ou() {
        let z = z_path();
        let sys = system(0.0, 0.0, false);
        let fp = pullback_fixed_point(&sys, &[1.0], &z, 6000, 1e-6, None).unwrap();
        assert_eq!(fp.value, z.node(6000).to_vec());
    }

    #[test]
    fn affine_coupling_closed_form() {
        let z = z_path();
        let sys = system(0.7, 0.0, false);
        let fp = pullback_fixed_point(&sys, &[1.5], &z, 6000, 1e-6, None).unwrap();
        let expect = 0.7 * 1.5 / 2.0 + z.node(6000)[0];
        assert!((fp.value[0] - expect).abs() < 1e-6, "{fp:?}");
    }

    #[test]
    fn start_state_does_not_matter() {
        let z = z_path();
        let sys = system(0.3, 1.0, true);
        let a = pullback_fixed_point(&sys, &[0.5], &z, 6000, 1e-7, None).unwrap();
        let b = pullback_fixed_point(&sys, &[0.5], &z, 6000, 1e-7, Some(&[25.0])).unwrap();
        assert!((a.value[0] - b.value[0]).abs() < 1e-6);
    }

    #[test]
    fn short_history_fails_to_converge() {
        let z = z_path();
        let sys = system(0.3, 1.0, true);
        assert!(matches!(
            pullback_fixed_point(&sys, &[0.5], &z, 500, 1e-6, None),
            Err(Error::NoConvergence { .. })
        ));
    }
}
