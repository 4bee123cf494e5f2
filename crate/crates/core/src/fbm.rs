//! Fractional Brownian motion: covariance, exact grid sampling, time rescaling.
//!
//! Sampling uses the Davies–Harte circulant embedding of the fractional
//! Gaussian noise covariance, falling back to a dense Cholesky factor when the
//! embedding is not non-negative definite.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::path::{GridPath, HurstIndex};
use crate::rng::RngSeed;

/// `R(s, t) = (|t|^{2H} + |s|^{2H} - |t - s|^{2H}) / 2`, per component.
pub fn fbm_covariance(h: HurstIndex, s: f64, t: f64) -> f64 {
    let two_h = 2.0 * h.value();
    0.5 * (t.abs().powf(two_h) + s.abs().powf(two_h) - (t - s).abs().powf(two_h))
}

/// Autocovariance of the increments `B((i+1)dt) - B(i dt)` at lag `k`.
fn fgn_autocovariance(h: f64, dt: f64, k: usize) -> f64 {
    let two_h = 2.0 * h;
    let k = k as f64;
    let scale = dt.powf(two_h);
    0.5 * scale * ((k + 1.0).powf(two_h) - 2.0 * k.powf(two_h) + (k - 1.0).abs().powf(two_h))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FbmMethod {
    /// Circulant embedding, Cholesky if the embedding fails.
    Auto,
    DaviesHarte,
    Cholesky,
}

enum Factor {
    Circulant {
        sqrt_eigen: Vec<f64>,
        fft: Arc<dyn Fft<f64>>,
    },
    Dense(DMatrix<f64>),
}

/// A reusable sampler for FBM on a fixed uniform grid.
pub struct FbmSampler {
    hurst: HurstIndex,
    dt: f64,
    n_steps: usize,
    factor: Factor,
}

impl std::fmt::Debug for FbmSampler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FbmSampler")
            .field("hurst", &self.hurst)
            .field("dt", &self.dt)
            .field("n_steps", &self.n_steps)
            .field("method", &self.method())
            .finish()
    }
}

impl FbmSampler {
    pub fn new(hurst: HurstIndex, dt: f64, n_steps: usize, method: FbmMethod) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidGrid(format!("dt = {dt}")));
        }
        if n_steps == 0 {
            return Err(Error::InvalidGrid("n_steps must be >= 1".into()));
        }
        let factor = match method {
            FbmMethod::Cholesky => Self::dense(hurst, dt, n_steps)?,
            FbmMethod::DaviesHarte => Self::circulant(hurst, dt, n_steps)?,
            FbmMethod::Auto => match Self::circulant(hurst, dt, n_steps) {
                Ok(f) => f,
                Err(_) => Self::dense(hurst, dt, n_steps)?,
            },
        };
        Ok(Self {
            hurst,
            dt,
            n_steps,
            factor,
        })
    }

    fn circulant(hurst: HurstIndex, dt: f64, n_steps: usize) -> Result<Factor> {
        let half = n_steps.next_power_of_two();
        let size = 2 * half;
        let mut row: Vec<Complex64> = Vec::with_capacity(size);
        for k in 0..=half {
            row.push(Complex64::new(fgn_autocovariance(hurst.value(), dt, k), 0.0));
        }
        for k in (1..half).rev() {
            row.push(Complex64::new(fgn_autocovariance(hurst.value(), dt, k), 0.0));
        }
        let fft = FftPlanner::<f64>::new().plan_fft_forward(size);
        fft.process(&mut row);
        let max = row.iter().map(|c| c.re).fold(0.0, f64::max);
        let mut sqrt_eigen = Vec::with_capacity(size);
        for c in &row {
            // rounding can leave eigenvalues a hair below zero
            if c.re < -1e-10 * max {
                return Err(Error::Factorisation(format!(
                    "circulant embedding has eigenvalue {:e}",
                    c.re
                )));
            }
            sqrt_eigen.push((c.re.max(0.0) / size as f64).sqrt());
        }
        Ok(Factor::Circulant { sqrt_eigen, fft })
    }

    fn dense(hurst: HurstIndex, dt: f64, n_steps: usize) -> Result<Factor> {
        let gamma: Vec<f64> = (0..n_steps)
            .map(|k| fgn_autocovariance(hurst.value(), dt, k))
            .collect();
        let cov = DMatrix::from_fn(n_steps, n_steps, |i, j| gamma[i.abs_diff(j)]);
        let chol = cov
            .cholesky()
            .ok_or_else(|| Error::Factorisation("increment covariance is not positive definite".into()))?;
        Ok(Factor::Dense(chol.l()))
    }

    pub fn method(&self) -> FbmMethod {
        match self.factor {
            Factor::Circulant { .. } => FbmMethod::DaviesHarte,
            Factor::Dense(_) => FbmMethod::Cholesky,
        }
    }

    pub fn hurst(&self) -> HurstIndex {
        self.hurst
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Fractional Gaussian noise increments for one component.
    fn increments(&self, seed: RngSeed, component: u64, out: &mut [f64]) {
        let mut rng = seed.stream(component);
        match &self.factor {
            Factor::Circulant { sqrt_eigen, fft } => {
                let mut buf: Vec<Complex64> = sqrt_eigen
                    .iter()
                    .map(|&s| {
                        let a: f64 = StandardNormal.sample(&mut rng);
                        let b: f64 = StandardNormal.sample(&mut rng);
                        Complex64::new(s * a, s * b)
                    })
                    .collect();
                fft.process(&mut buf);
                for (o, c) in out.iter_mut().zip(&buf) {
                    *o = c.re;
                }
            }
            Factor::Dense(l) => {
                let z = DVector::from_fn(self.n_steps, |_, _| StandardNormal.sample(&mut rng));
                let x = l * z;
                out.copy_from_slice(x.as_slice());
            }
        }
    }

    /// A `dim`-dimensional path with independent components, zero at `t0`.
    pub fn sample(&self, dim: usize, t0: f64, seed: RngSeed) -> Result<GridPath> {
        if dim == 0 {
            return Err(Error::InvalidGrid("dim must be >= 1".into()));
        }
        let n = self.n_steps;
        let mut values = vec![0.0; (n + 1) * dim];
        let mut inc = vec![0.0; n];
        for k in 0..dim {
            self.increments(seed, k as u64, &mut inc);
            let mut acc = 0.0;
            for (i, d) in inc.iter().enumerate() {
                acc += d;
                values[(i + 1) * dim + k] = acc;
            }
        }
        GridPath::new(t0, self.dt, dim, values)
    }

    /// A two-sided path on `[-n_back dt, n_forward dt]` with value zero at
    /// time zero, built from one sample by re-basing at node `n_back`.
    pub fn sample_two_sided(&self, dim: usize, n_back: usize, seed: RngSeed) -> Result<GridPath> {
        if n_back > self.n_steps {
            return Err(Error::InvalidGrid(format!(
                "n_back = {n_back} exceeds {} steps",
                self.n_steps
            )));
        }
        let raw = self.sample(dim, 0.0, seed)?;
        let origin = raw.node(n_back).to_vec();
        let mut values = raw.into_values();
        for node in values.chunks_exact_mut(dim) {
            for (v, o) in node.iter_mut().zip(&origin) {
                *v -= o;
            }
        }
        GridPath::new(-(n_back as f64) * self.dt, self.dt, dim, values)
    }
}

/// One FBM path on `t0 + i dt`, `i = 0..=n_steps`, zero at `t0`.
pub fn sample_fbm(
    h: HurstIndex,
    dim: usize,
    t0: f64,
    dt: f64,
    n_steps: usize,
    seed: RngSeed,
) -> Result<GridPath> {
    FbmSampler::new(h, dt, n_steps, FbmMethod::Auto)?.sample(dim, t0, seed)
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("eps = {eps} outside (0, 1]")))
    }
}

/// `t -> path(t / eps)` on the natural grid `eps * t0 + i * eps * dt`.
pub fn rescale_time(path: &GridPath, eps: f64) -> Result<GridPath> {
    check_eps(eps)?;
    path.retimed(eps * path.t0(), eps * path.dt())
}

/// `t -> path(t / eps)` sampled on a grid with step `dt_out`; every output
/// node must land on an input node.
pub fn rescale_time_onto(path: &GridPath, eps: f64, dt_out: f64) -> Result<GridPath> {
    check_eps(eps)?;
    let ratio = dt_out / (eps * path.dt());
    let stride = ratio.round();
    if stride < 1.0 || (ratio - stride).abs() > 1e-6 * stride {
        return Err(Error::InvalidGrid(format!(
            "output step {dt_out} maps to {ratio} input steps at eps = {eps}"
        )));
    }
    let stride = stride as usize;
    let n_out = path.n_steps() / stride;
    if n_out == 0 {
        return Err(Error::InvalidGrid("rescaled grid has no steps".into()));
    }
    let dim = path.dim();
    let mut values = Vec::with_capacity((n_out + 1) * dim);
    for j in 0..=n_out {
        values.extend_from_slice(path.node(j * stride));
    }
    GridPath::new(eps * path.t0(), dt_out, dim, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h(v: f64) -> HurstIndex {
        HurstIndex::new(v).unwrap()
    }

    #[test]
    fn covariance_examples() {
        assert_eq!(fbm_covariance(h(0.5), 1.0, 2.0), 1.0);
        let t: f64 = 1.7;
        assert!((fbm_covariance(h(0.4), t, t) - t.powf(0.8)).abs() < 1e-15);
        // closed form evaluated independently
        let expected = 0.5 * (3f64.powf(0.8) + 1.0 - 2f64.powf(0.8));
        assert!((fbm_covariance(h(0.4), 1.0, 3.0) - expected).abs() < 1e-15);
    }

    #[test]
    fn deterministic_given_seed() {
        let a = sample_fbm(h(0.4), 2, 0.0, 0.01, 100, RngSeed::new(3)).unwrap();
        let b = sample_fbm(h(0.4), 2, 0.0, 0.01, 100, RngSeed::new(3)).unwrap();
        let c = sample_fbm(h(0.4), 2, 0.0, 0.01, 100, RngSeed::new(4)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.node(0), &[0.0, 0.0]);
    }

    #[test]
    fn circulant_is_used_in_rough_regime() {
        for hv in [0.34, 0.4, 0.45, 0.5] {
            let s = FbmSampler::new(h(hv), 0.01, 300, FbmMethod::Auto).unwrap();
            assert_eq!(s.method(), FbmMethod::DaviesHarte);
        }
    }

    #[test]
    fn cholesky_and_circulant_agree_in_law() {
        // both factors reproduce the increment covariance exactly
        let (hv, dt, n) = (0.4, 0.1, 6);
        let dense = FbmSampler::new(h(hv), dt, n, FbmMethod::Cholesky).unwrap();
        if let Factor::Dense(l) = &dense.factor {
            let cov = l * l.transpose();
            for i in 0..n {
                for j in 0..n {
                    let g = fgn_autocovariance(hv, dt, i.abs_diff(j));
                    assert!((cov[(i, j)] - g).abs() < 1e-14);
                }
            }
        } else {
            panic!("expected dense factor");
        }
        let circ = FbmSampler::new(h(hv), dt, n, FbmMethod::DaviesHarte).unwrap();
        if let Factor::Circulant { sqrt_eigen, .. } = &circ.factor {
            // inverse DFT of the eigenvalues returns the first circulant row
            let size = sqrt_eigen.len();
            for k in 0..n {
                let c: f64 = sqrt_eigen
                    .iter()
                    .enumerate()
                    .map(|(j, s)| {
                        s * s * (2.0 * std::f64::consts::PI * (j * k) as f64 / size as f64).cos()
                    })
                    .sum();
                assert!((c - fgn_autocovariance(hv, dt, k)).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn two_sided_is_zero_at_origin() {
        let s = FbmSampler::new(h(0.45), 0.05, 60, FbmMethod::Auto).unwrap();
        let p = s.sample_two_sided(2, 20, RngSeed::new(1)).unwrap();
        assert_eq!(p.t0(), -1.0);
        assert_eq!(p.value_at(0.0).unwrap(), &[0.0, 0.0]);
        assert!((p.t_end() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rescale_examples() {
        let p = GridPath::from_fn(0.0, 0.001, 100, 1, |t, o| o[0] = (7.0 * t).sin()).unwrap();
        assert_eq!(rescale_time(&p, 1.0).unwrap(), p);
        let r = rescale_time(&p, 0.5).unwrap();
        assert_eq!(r.value_at(0.01).unwrap(), p.value_at(0.02).unwrap());
        let r2 = rescale_time_onto(&p, 0.5, 0.001).unwrap();
        assert_eq!(r2.value_at(0.01).unwrap(), p.value_at(0.02).unwrap());
        assert!(matches!(
            rescale_time_onto(&p, 0.5, 0.00075),
            Err(Error::InvalidGrid(_))
        ));
        assert!(rescale_time(&p, 0.0).is_err());
        assert!(rescale_time(&p, 1.5).is_err());
    }
}
