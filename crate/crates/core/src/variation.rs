//! Variation and Hölder norms, controls, and greedy stopping times.
//!
//! All suprema over partitions range over partitions whose breakpoints are
//! grid nodes. They are computed exactly by the dynamic program
//! `best[j] = max_{k < j} best[k] + ||x_{k,j}||^p`.

use crate::error::{Error, Result};
use crate::lift::{tensor_norm, RoughLift};
use crate::path::GridPath;

/// Variation exponents `p`, `q = p / 2`, Hölder exponent `alpha = 1 / p`,
/// and a target Hölder exponent `gamma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoughnessParams {
    pub p: f64,
    pub q: f64,
    pub alpha: f64,
    pub gamma: f64,
}

impl RoughnessParams {
    pub fn new(p: f64, gamma: f64) -> Result<Self> {
        if !(2.0..3.0).contains(&p) {
            return Err(Error::InvalidParameter(format!("p = {p} outside [2, 3)")));
        }
        if !(gamma > 1.0 / 3.0 && gamma < 0.5 + 1e-12) {
            return Err(Error::InvalidParameter(format!(
                "gamma = {gamma} outside (1/3, 1/2]"
            )));
        }
        Ok(Self {
            p,
            q: p / 2.0,
            alpha: 1.0 / p,
            gamma,
        })
    }
}

/// A function of two grid nodes `(i, j)`, `i <= j`, vanishing on the diagonal.
pub trait TwoIndex {
    fn n_nodes(&self) -> usize;
    fn dim(&self) -> usize;
    fn eval_into(&self, i: usize, j: usize, out: &mut [f64]);

    fn norm(&self, i: usize, j: usize, scratch: &mut [f64]) -> f64 {
        self.eval_into(i, j, scratch);
        tensor_norm(scratch)
    }
}

/// Dense storage of a two-index function on all node pairs.
#[derive(Debug, Clone)]
pub struct DenseTwoIndex {
    n: usize,
    dim: usize,
    data: Vec<f64>,
}

impl DenseTwoIndex {
    pub fn from_fn(n: usize, dim: usize, mut f: impl FnMut(usize, usize, &mut [f64])) -> Self {
        let mut data = vec![0.0; n * n * dim];
        for i in 0..n {
            for j in i..n {
                let at = (i * n + j) * dim;
                f(i, j, &mut data[at..at + dim]);
            }
        }
        Self { n, dim, data }
    }

    pub fn get(&self, i: usize, j: usize) -> &[f64] {
        let at = (i * self.n + j) * self.dim;
        &self.data[at..at + self.dim]
    }
}

impl TwoIndex for DenseTwoIndex {
    fn n_nodes(&self) -> usize {
        self.n
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval_into(&self, i: usize, j: usize, out: &mut [f64]) {
        out.copy_from_slice(self.get(i, j));
    }
}

/// Two-index function generated on demand by a closure.
pub struct FnTwoIndex<F> {
    n: usize,
    dim: usize,
    f: F,
}

impl<F: Fn(usize, usize, &mut [f64])> FnTwoIndex<F> {
    pub fn new(n: usize, dim: usize, f: F) -> Self {
        Self { n, dim, f }
    }
}

impl<F: Fn(usize, usize, &mut [f64])> TwoIndex for FnTwoIndex<F> {
    fn n_nodes(&self) -> usize {
        self.n
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval_into(&self, i: usize, j: usize, out: &mut [f64]) {
        (self.f)(i, j, out)
    }
}

/// The area component of a lift viewed as a two-index function.
pub struct AreaTwoIndex<'a>(pub &'a RoughLift);

impl TwoIndex for AreaTwoIndex<'_> {
    fn n_nodes(&self) -> usize {
        self.0.n_steps() + 1
    }
    fn dim(&self) -> usize {
        self.0.dim() * self.0.dim()
    }
    fn eval_into(&self, i: usize, j: usize, out: &mut [f64]) {
        self.0.area_into(i, j, out)
    }
}

/// Increments of a path viewed as a two-index function.
pub struct IncrementTwoIndex<'a>(pub &'a GridPath);

impl TwoIndex for IncrementTwoIndex<'_> {
    fn n_nodes(&self) -> usize {
        self.0.n_nodes()
    }
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn eval_into(&self, i: usize, j: usize, out: &mut [f64]) {
        self.0.increment_into(i, j, out)
    }
    fn norm(&self, i: usize, j: usize, _scratch: &mut [f64]) -> f64 {
        self.0.increment_norm(i, j)
    }
}

/// `best[j - start] = sup_P sum ||R_{u,v}||^p` over node partitions of
/// `[start, j]`, for every `j` in `start..=end`.
pub fn running_variation_pow<T: TwoIndex + ?Sized>(f: &T, p: f64, start: usize, end: usize) -> Vec<f64> {
    let mut scratch = vec![0.0; f.dim()];
    let len = end - start + 1;
    let mut best = vec![0.0; len];
    for j in 1..len {
        let mut m = f64::NEG_INFINITY;
        for k in 0..j {
            let v = best[k] + f.norm(start + k, start + j, &mut scratch).powf(p);
            if v > m {
                m = v;
            }
        }
        best[j] = m;
    }
    best
}

/// `sup_P sum ||R_{u,v}||^p` over node partitions of `[i, j]`.
pub fn variation_pow<T: TwoIndex + ?Sized>(f: &T, p: f64, i: usize, j: usize) -> f64 {
    if j <= i {
        return 0.0;
    }
    *running_variation_pow(f, p, i, j).last().expect("non-empty")
}

fn check_p(p: f64) -> Result<()> {
    if p >= 1.0 && p.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("variation exponent {p} < 1")))
    }
}

/// p-variation of a path over the node range `[i, j]`.
pub fn p_var_indices(path: &GridPath, p: f64, i: usize, j: usize) -> Result<f64> {
    check_p(p)?;
    if i > j || j > path.n_steps() {
        return Err(Error::IntervalOutsideGrid {
            s: path.time(i),
            t: path.time(j),
        });
    }
    Ok(variation_pow(&IncrementTwoIndex(path), p, i, j).powf(1.0 / p))
}

/// p-variation of a path on `[s, t]`.
pub fn p_var_norm(path: &GridPath, p: f64, s: f64, t: f64) -> Result<f64> {
    let (i, j) = path.index_range(s, t)?;
    p_var_indices(path, p, i, j)
}

/// q-variation of a two-index function over the node range `[i, j]`.
pub fn two_index_var<T: TwoIndex + ?Sized>(f: &T, q: f64, i: usize, j: usize) -> Result<f64> {
    check_p(q)?;
    if i > j || j >= f.n_nodes() {
        return Err(Error::InvalidParameter(format!(
            "node range [{i}, {j}] outside 0..{}",
            f.n_nodes()
        )));
    }
    Ok(variation_pow(f, q, i, j).powf(1.0 / q))
}

/// `sup_{u < v} ||x_{u,v}|| / (v - u)^alpha` over grid pairs in `[s, t]`.
pub fn holder_norm(path: &GridPath, alpha: f64, s: f64, t: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("alpha = {alpha} outside (0, 1)")));
    }
    let (i, j) = path.index_range(s, t)?;
    let mut best: f64 = 0.0;
    for u in i..j {
        for v in u + 1..=j {
            let lag = (v - u) as f64 * path.dt();
            best = best.max(path.increment_norm(u, v) / lag.powf(alpha));
        }
    }
    Ok(best)
}

/// `(|||x|||_p^p + |||XX|||_q^q)^{1/p}` on `[s, t]`.
pub fn homogeneous_rough_norm(lift: &RoughLift, params: &RoughnessParams, s: f64, t: f64) -> Result<f64> {
    let (i, j) = lift.base().index_range(s, t)?;
    Ok(rough_norm_indices(lift, params, i, j))
}

pub fn rough_norm_indices(lift: &RoughLift, params: &RoughnessParams, i: usize, j: usize) -> f64 {
    let px = variation_pow(&IncrementTwoIndex(lift.base()), params.p, i, j);
    let pa = variation_pow(&AreaTwoIndex(lift), params.q, i, j);
    (px + pa).powf(1.0 / params.p)
}

/// The Hölder rough-path norm `|||x|||_alpha + |||XX|||_{2 alpha}^{1/2}`.
pub fn homogeneous_holder_norm(lift: &RoughLift, alpha: f64, s: f64, t: f64) -> Result<f64> {
    let base = lift.base();
    let (i, j) = base.index_range(s, t)?;
    let hx = holder_norm(base, alpha, s, t)?;
    let mut scratch = vec![0.0; lift.dim() * lift.dim()];
    let mut ha: f64 = 0.0;
    for u in i..j {
        for v in u + 1..=j {
            let lag = (v - u) as f64 * base.dt();
            ha = ha.max(lift.area_norm(u, v, &mut scratch) / lag.powf(2.0 * alpha));
        }
    }
    Ok(hx + ha.sqrt())
}

/// One row of a norm/bound check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    pub operation: String,
    pub s: f64,
    pub t: f64,
    pub p: f64,
    pub value: f64,
    pub bound: f64,
    pub pass: bool,
}

impl CheckRow {
    pub const CSV_HEADER: &'static str = "operation,s,t,p,value,bound,pass";

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{:e},{:e},{}",
            self.operation, self.s, self.t, self.p, self.value, self.bound, self.pass
        )
    }
}

/// Both sides of the partition inequality
/// `sum_i |||x|||^p_[u_i,u_{i+1}] <= |||x|||^p_[s,t] <= (n-1)^{p-1} sum_i |||x|||^p_[u_i,u_{i+1}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionReport {
    pub pieces: f64,
    pub whole: f64,
    pub upper: f64,
    pub pass: bool,
}

pub fn check_partition_inequality(path: &GridPath, p: f64, breakpoints: &[f64]) -> Result<PartitionReport> {
    check_p(p)?;
    if breakpoints.len() < 2 {
        return Err(Error::InvalidParameter("need at least two breakpoints".into()));
    }
    let idx = breakpoints
        .iter()
        .map(|&b| path.index_of(b))
        .collect::<Result<Vec<_>>>()?;
    if idx.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter("breakpoints must be strictly increasing".into()));
    }
    let inc = IncrementTwoIndex(path);
    let pieces: f64 = idx.windows(2).map(|w| variation_pow(&inc, p, w[0], w[1])).sum();
    let whole = variation_pow(&inc, p, idx[0], *idx.last().expect("len >= 2"));
    let n = idx.len() as f64;
    let upper = (n - 1.0).powf(p - 1.0) * pieces;
    let slack = 1e-12 * whole.max(1.0);
    Ok(PartitionReport {
        pieces,
        whole,
        upper,
        pass: pieces <= whole + slack && whole <= upper + slack,
    })
}

/// Whether a scalar two-index function vanishes on the diagonal, is
/// non-negative and super-additive at every node triple, within `tol`
/// (scaled by `max(1, l_{s,u})`).
pub fn is_control<T: TwoIndex + ?Sized>(f: &T, tol: f64) -> bool {
    let n = f.n_nodes();
    let mut buf = vec![0.0; f.dim()];
    let mut val = |i: usize, j: usize| {
        f.eval_into(i, j, &mut buf);
        buf[0]
    };
    let table: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if j >= i { val(i, j) } else { 0.0 }).collect()).collect();
    for s in 0..n {
        if table[s][s].abs() > tol {
            return false;
        }
        for u in s..n {
            let whole = table[s][u];
            if whole < -tol {
                return false;
            }
            for t in s..=u {
                if table[s][t] + table[t][u] > whole + tol * whole.abs().max(1.0) {
                    return false;
                }
            }
        }
    }
    true
}

/// `(s, t) -> |||x|||^p_{p-var,[s,t]}` for all node pairs.
pub fn p_var_control(path: &GridPath, p: f64) -> DenseTwoIndex {
    let n = path.n_nodes();
    let inc = IncrementTwoIndex(path);
    let rows: Vec<Vec<f64>> = (0..n).map(|i| running_variation_pow(&inc, p, i, n - 1)).collect();
    DenseTwoIndex::from_fn(n, 1, |i, j, out| out[0] = rows[i][j - i])
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoppingTimes {
    pub times: Vec<f64>,
    /// Number of `tau_i`, `i >= 1`, strictly before the right end point.
    pub count: usize,
    /// `1 + nu^{-p} |||x|||^p` on the whole interval.
    pub bound: f64,
}

/// Greedy stopping times: `tau_{i+1}` is the first node after `tau_i` where
/// the rough-path norm on `[tau_i, .]` reaches `nu`, capped at `t`.
pub fn greedy_stopping_times(
    lift: &RoughLift,
    params: &RoughnessParams,
    nu: f64,
    s: f64,
    t: f64,
) -> Result<StoppingTimes> {
    if !(nu > 0.0) {
        return Err(Error::InvalidParameter(format!("nu = {nu} must be positive")));
    }
    let base = lift.base();
    let (i0, i1) = base.index_range(s, t)?;
    let inc = IncrementTwoIndex(base);
    let area = AreaTwoIndex(lift);
    let nu_p = nu.powf(params.p);
    let mut scratch_x = vec![0.0; base.dim()];
    let mut scratch_a = vec![0.0; lift.dim() * lift.dim()];

    let mut times = vec![base.time(i0)];
    let mut tau = i0;
    let mut count = 0;
    while tau < i1 {
        let mut bx = vec![0.0];
        let mut ba = vec![0.0];
        let mut next = i1;
        for j in tau + 1..=i1 {
            let mut mx = f64::NEG_INFINITY;
            let mut ma = f64::NEG_INFINITY;
            for k in tau..j {
                mx = mx.max(bx[k - tau] + inc.norm(k, j, &mut scratch_x).powf(params.p));
                ma = ma.max(ba[k - tau] + area.norm(k, j, &mut scratch_a).powf(params.q));
            }
            bx.push(mx);
            ba.push(ma);
            if mx + ma >= nu_p {
                next = j;
                break;
            }
        }
        times.push(base.time(next));
        if next < i1 {
            count += 1;
        }
        tau = next;
    }
    if times.len() == 1 {
        times.push(base.time(i1));
    }
    let whole = rough_norm_indices(lift, params, i0, i1);
    Ok(StoppingTimes {
        times,
        count,
        bound: 1.0 + whole.powf(params.p) / nu_p,
    })
}

/// Slope of `ln sup_i ||x_{i, i+l}||` against `ln(l dt)` over the dyadic lags
/// `l = 1, 2, 4, ..` up to a sixteenth of the path.
pub fn holder_exponent_estimate(path: &GridPath) -> Result<f64> {
    let n = path.n_steps();
    if n < 64 {
        return Err(Error::InvalidGrid(format!("{n} steps are too few for a Hoelder fit")));
    }
    let mut lags = Vec::new();
    let mut sups = Vec::new();
    let mut lag = 1;
    while lag <= n / 16 {
        let sup = (0..=n - lag).map(|i| path.increment_norm(i, i + lag)).fold(0.0, f64::max);
        if sup > 0.0 {
            lags.push(lag as f64 * path.dt());
            sups.push(sup);
        }
        lag *= 2;
    }
    if lags.len() < 2 {
        return Err(Error::InvalidParameter("path has no increments to fit".into()));
    }
    Ok(crate::stats::log_log_slope(&lags, &sups))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lift::lift_piecewise_linear;

    fn scalar(values: &[f64]) -> GridPath {
        GridPath::new(0.0, 1.0, 1, values.to_vec()).unwrap()
    }

    #[test]
    fn p_var_examples() {
        let mono = scalar(&[0.0, 1.0, 2.0, 3.0]);
        assert!((p_var_norm(&mono, 2.0, 0.0, 3.0).unwrap() - 3.0).abs() < 1e-15);
        let zig = scalar(&[0.0, 1.0, 0.0, 1.0]);
        assert!((p_var_norm(&zig, 2.0, 0.0, 3.0).unwrap() - 3f64.sqrt()).abs() < 1e-15);
        let flat = scalar(&[2.0; 6]);
        for p in [1.0, 2.0, 2.5] {
            assert_eq!(p_var_norm(&flat, p, 0.0, 5.0).unwrap(), 0.0);
        }
        assert!(p_var_norm(&flat, 0.5, 0.0, 5.0).is_err());
        assert!(p_var_norm(&flat, 2.0, 0.0, 6.0).is_err());
    }

    #[test]
    fn holder_examples() {
        let lin = GridPath::from_fn(0.0, 0.01, 100, 1, |t, o| o[0] = -3.0 * t).unwrap();
        assert!((holder_norm(&lin, 0.5, 0.0, 1.0).unwrap() - 3.0).abs() < 1e-12);
        let flat = GridPath::constant(0.0, 0.1, 10, &[1.0]).unwrap();
        assert_eq!(holder_norm(&flat, 0.4, 0.0, 1.0).unwrap(), 0.0);
        assert!(holder_norm(&lin, 1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn rough_norm_of_linear_path() {
        let lin = GridPath::from_fn(0.0, 0.25, 4, 1, |t, o| o[0] = t).unwrap();
        let lift = lift_piecewise_linear(&lin);
        let params = RoughnessParams::new(2.0, 0.45).unwrap();
        let n = homogeneous_rough_norm(&lift, &params, 0.0, 1.0).unwrap();
        assert!((n - 1.5f64.sqrt()).abs() < 1e-14);
        let zero = lift_piecewise_linear(&GridPath::zeros(0.0, 0.1, 5, 2).unwrap());
        assert_eq!(homogeneous_rough_norm(&zero, &params, 0.0, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn partition_inequality_on_zigzag() {
        let zig = scalar(&[0.0, 1.0, 0.0, 1.0]);
        let whole = check_partition_inequality(&zig, 2.0, &[0.0, 3.0]).unwrap();
        assert_eq!(whole.pieces, whole.whole);
        assert_eq!(whole.upper, whole.whole);
        // split at node 1: pieces 1 + 2, whole 3, upper 2 * 3
        let split = check_partition_inequality(&zig, 2.0, &[0.0, 1.0, 3.0]).unwrap();
        assert!((split.pieces - 3.0).abs() < 1e-15);
        assert!((split.whole - 3.0).abs() < 1e-15);
        assert!((split.upper - 6.0).abs() < 1e-15);
        assert!(split.pass);
        assert!(check_partition_inequality(&zig, 2.0, &[1.0, 0.0]).is_err());
        assert!(check_partition_inequality(&zig, 2.0, &[0.0, 0.5]).is_err());
    }

    #[test]
    fn control_examples() {
        let n = 12;
        let pow = |theta: f64| {
            DenseTwoIndex::from_fn(n, 1, move |i, j, o| o[0] = ((j - i) as f64 * 0.1).powf(theta))
        };
        assert!(is_control(&pow(1.5), 1e-12));
        assert!(is_control(&pow(1.0), 1e-12));
        assert!(!is_control(&pow(0.5), 1e-12));
    }

    #[test]
    fn greedy_on_linear_path() {
        let lin = GridPath::from_fn(0.0, 0.01, 100, 1, |t, o| o[0] = t).unwrap();
        let lift = lift_piecewise_linear(&lin);
        let params = RoughnessParams::new(2.0, 0.45).unwrap();
        // norm on [a, b] is sqrt(1.5) (b - a)
        let nu = 0.295 * 1.5f64.sqrt();
        let st = greedy_stopping_times(&lift, &params, nu, 0.0, 1.0).unwrap();
        let expect = [0.0, 0.3, 0.6, 0.9, 1.0];
        assert_eq!(st.times.len(), expect.len());
        for (a, b) in st.times.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12, "{:?}", st.times);
        }
        assert_eq!(st.count, 3);
        assert!(st.bound >= 3.0);

        let flat = lift_piecewise_linear(&GridPath::constant(0.0, 0.1, 10, &[1.0]).unwrap());
        let st = greedy_stopping_times(&flat, &params, 0.1, 0.0, 1.0).unwrap();
        assert_eq!(st.times, vec![0.0, 1.0]);
        assert_eq!(st.count, 0);
        assert!(greedy_stopping_times(&flat, &params, 0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn holder_fit_of_power_path() {
        let x = GridPath::from_fn(0.0, 1.0 / 1024.0, 1024, 1, |t, o| o[0] = t.powf(0.3)).unwrap();
        let est = holder_exponent_estimate(&x).unwrap();
        assert!((est - 0.3).abs() < 1e-9, "{est}");
        let lin = GridPath::from_fn(0.0, 0.01, 200, 1, |t, o| o[0] = 2.0 * t).unwrap();
        assert!((holder_exponent_estimate(&lin).unwrap() - 1.0).abs() < 1e-9);
    }
}
