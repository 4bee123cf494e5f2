//! Sampled paths on uniform time grids.

use crate::error::{Error, Result};

/// Relative slack (in units of `dt`) when matching a time onto a grid node.
const NODE_SNAP: f64 = 1e-6;

/// Hurst index of a fractional Brownian motion, restricted to the rough
/// regime `1/3 < H <= 1/2`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct HurstIndex(f64);

impl HurstIndex {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() && value > 1.0 / 3.0 && value <= 0.5 {
            Ok(Self(value))
        } else {
            Err(Error::InvalidHurst(value))
        }
    }

    /// Brownian motion, `H = 1/2`.
    pub fn brownian() -> Self {
        Self(0.5)
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// A path sampled at the nodes `t0 + i * dt`, `i = 0..=n_steps`.
///
/// Values are stored row-major: node `i`, component `k` lives at
/// `values[i * dim + k]`. Increments are always recomputed from node values.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPath {
    t0: f64,
    dt: f64,
    dim: usize,
    values: Vec<f64>,
}

impl GridPath {
    pub fn new(t0: f64, dt: f64, dim: usize, values: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() || !t0.is_finite() {
            return Err(Error::InvalidGrid(format!("t0 = {t0}, dt = {dt}")));
        }
        if dim == 0 {
            return Err(Error::InvalidGrid("dim must be >= 1".into()));
        }
        if !values.len().is_multiple_of(dim) || values.len() / dim < 2 {
            return Err(Error::InvalidGrid(format!(
                "{} values do not form at least two nodes of dimension {dim}",
                values.len()
            )));
        }
        Ok(Self {
            t0,
            dt,
            dim,
            values,
        })
    }

    /// Builds a path by evaluating `f(t, out)` at every node.
    pub fn from_fn(
        t0: f64,
        dt: f64,
        n_steps: usize,
        dim: usize,
        mut f: impl FnMut(f64, &mut [f64]),
    ) -> Result<Self> {
        let mut values = vec![0.0; (n_steps + 1) * dim];
        for (i, node) in values.chunks_exact_mut(dim.max(1)).enumerate() {
            f(t0 + i as f64 * dt, node);
        }
        Self::new(t0, dt, dim, values)
    }

    pub fn constant(t0: f64, dt: f64, n_steps: usize, value: &[f64]) -> Result<Self> {
        Self::from_fn(t0, dt, n_steps, value.len(), |_, out| {
            out.copy_from_slice(value)
        })
    }

    pub fn zeros(t0: f64, dt: f64, n_steps: usize, dim: usize) -> Result<Self> {
        Self::new(t0, dt, dim, vec![0.0; (n_steps + 1) * dim])
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_nodes(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn n_steps(&self) -> usize {
        self.n_nodes() - 1
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.n_steps())
    }

    #[inline]
    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    #[inline]
    pub fn node(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn node_mut(&mut self, i: usize) -> &mut [f64] {
        let d = self.dim;
        &mut self.values[i * d..(i + 1) * d]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// `out = x_j - x_i`.
    #[inline]
    pub fn increment_into(&self, i: usize, j: usize, out: &mut [f64]) {
        let (a, b) = (self.node(i), self.node(j));
        for k in 0..self.dim {
            out[k] = b[k] - a[k];
        }
    }

    pub fn increment(&self, i: usize, j: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.increment_into(i, j, &mut out);
        out
    }

    /// Euclidean norm of `x_j - x_i`.
    #[inline]
    pub fn increment_norm(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.node(i), self.node(j));
        a.iter()
            .zip(b)
            .map(|(u, v)| (v - u) * (v - u))
            .sum::<f64>()
            .sqrt()
    }

    /// Index of the node at time `t`.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let k = (t - self.t0) / self.dt;
        let r = k.round();
        if (k - r).abs() > NODE_SNAP * r.abs().max(1.0) {
            return Err(Error::NotOnGrid {
                t,
                t0: self.t0,
                dt: self.dt,
            });
        }
        if r < 0.0 || r as usize > self.n_steps() {
            return Err(Error::IntervalOutsideGrid { s: t, t });
        }
        Ok(r as usize)
    }

    /// Node indices of an interval `[s, t]` with `s <= t`.
    pub fn index_range(&self, s: f64, t: f64) -> Result<(usize, usize)> {
        if s > t {
            return Err(Error::IntervalOutsideGrid { s, t });
        }
        let i = self
            .index_of(s)
            .map_err(|_| Error::IntervalOutsideGrid { s, t })?;
        let j = self
            .index_of(t)
            .map_err(|_| Error::IntervalOutsideGrid { s, t })?;
        Ok((i, j))
    }

    /// Value at node time `t`.
    pub fn value_at(&self, t: f64) -> Result<&[f64]> {
        Ok(self.node(self.index_of(t)?))
    }

    /// Nodes `i..=j` as a new path starting at `time(i)`.
    pub fn window(&self, i: usize, j: usize) -> Result<Self> {
        if i >= j || j > self.n_steps() {
            return Err(Error::InvalidGrid(format!(
                "window [{i}, {j}] of a path with {} steps",
                self.n_steps()
            )));
        }
        Self::new(
            self.time(i),
            self.dt,
            self.dim,
            self.values[i * self.dim..(j + 1) * self.dim].to_vec(),
        )
    }

    /// Every `stride`-th node (the last node must be kept).
    pub fn subsample(&self, stride: usize) -> Result<Self> {
        if stride == 0 || !self.n_steps().is_multiple_of(stride) {
            return Err(Error::InvalidGrid(format!(
                "stride {stride} does not divide {} steps",
                self.n_steps()
            )));
        }
        let mut values = Vec::with_capacity((self.n_steps() / stride + 1) * self.dim);
        for i in (0..self.n_nodes()).step_by(stride) {
            values.extend_from_slice(self.node(i));
        }
        Self::new(self.t0, self.dt * stride as f64, self.dim, values)
    }

    /// Component `k` as a scalar path.
    pub fn component(&self, k: usize) -> Self {
        let values = (0..self.n_nodes()).map(|i| self.node(i)[k]).collect();
        Self {
            t0: self.t0,
            dt: self.dt,
            dim: 1,
            values,
        }
    }

    /// Stacks the components of paths sharing one grid.
    pub fn concat(parts: &[&GridPath]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::DimensionMismatch("nothing to concatenate".into()))?;
        for p in parts {
            first.check_same_grid(p)?;
        }
        let dim: usize = parts.iter().map(|p| p.dim).sum();
        let mut values = Vec::with_capacity(first.n_nodes() * dim);
        for i in 0..first.n_nodes() {
            for p in parts {
                values.extend_from_slice(p.node(i));
            }
        }
        Self::new(first.t0, first.dt, dim, values)
    }

    pub fn check_same_grid(&self, other: &GridPath) -> Result<()> {
        let same = self.n_nodes() == other.n_nodes()
            && (self.t0 - other.t0).abs() <= NODE_SNAP * self.dt
            && (self.dt - other.dt).abs() <= NODE_SNAP * self.dt;
        if same {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!(
                "grids differ: ({}, {}, {}) vs ({}, {}, {})",
                self.t0,
                self.dt,
                self.n_steps(),
                other.t0,
                other.dt,
                other.n_steps()
            )))
        }
    }

    /// Pointwise `self - other`.
    pub fn difference(&self, other: &GridPath) -> Result<Self> {
        self.check_same_grid(other)?;
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch(format!(
                "dim {} vs {}",
                self.dim, other.dim
            )));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect();
        Self::new(self.t0, self.dt, self.dim, values)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }

    /// `sup_i ||x_i||` over the whole grid.
    pub fn sup_norm(&self) -> f64 {
        self.values
            .chunks_exact(self.dim)
            .map(|n| n.iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    /// Same values on a new time axis.
    pub fn retimed(&self, t0: f64, dt: f64) -> Result<Self> {
        Self::new(t0, dt, self.dim, self.values.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hurst_bounds() {
        assert!(HurstIndex::new(0.5).is_ok());
        assert!(HurstIndex::new(0.34).is_ok());
        assert!(HurstIndex::new(1.0 / 3.0).is_err());
        assert!(HurstIndex::new(0.51).is_err());
        assert!(HurstIndex::new(f64::NAN).is_err());
    }

    #[test]
    fn rejects_degenerate_grids() {
        assert!(GridPath::new(0.0, 0.0, 1, vec![0.0, 1.0]).is_err());
        assert!(GridPath::new(0.0, 0.1, 1, vec![0.0]).is_err());
        assert!(GridPath::new(0.0, 0.1, 0, vec![]).is_err());
        assert!(GridPath::new(0.0, 0.1, 2, vec![0.0, 1.0, 2.0]).is_err());
    }

    #[test]
    fn index_lookup() {
        let p = GridPath::zeros(-1.0, 0.001, 3000, 1).unwrap();
        assert_eq!(p.index_of(-1.0).unwrap(), 0);
        assert_eq!(p.index_of(0.0).unwrap(), 1000);
        assert_eq!(p.index_of(2.0).unwrap(), 3000);
        assert!(matches!(
            p.index_of(0.0005),
            Err(Error::NotOnGrid { .. })
        ));
        assert!(p.index_of(2.001).is_err());
        assert!(p.index_range(1.0, 0.5).is_err());
    }

    #[test]
    fn increments_are_node_differences() {
        let p = GridPath::from_fn(0.0, 0.1, 10, 2, |t, o| {
            o[0] = t * t;
            o[1] = -t;
        })
        .unwrap();
        let inc = p.increment(3, 7);
        assert_eq!(inc[0], p.node(7)[0] - p.node(3)[0]);
        assert_eq!(inc[1], p.node(7)[1] - p.node(3)[1]);
    }

    #[test]
    fn subsample_and_window() {
        let p = GridPath::from_fn(0.0, 0.25, 8, 1, |t, o| o[0] = t).unwrap();
        let s = p.subsample(2).unwrap();
        assert_eq!(s.n_steps(), 4);
        assert_eq!(s.dt(), 0.5);
        assert_eq!(s.node(3)[0], 1.5);
        assert!(p.subsample(3).is_err());
        let w = p.window(2, 6).unwrap();
        assert_eq!(w.t0(), 0.5);
        assert_eq!(w.node(0)[0], 0.5);
        assert_eq!(w.t_end(), 1.5);
    }
}
