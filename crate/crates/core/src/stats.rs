//! Closed-form transition probabilities, geometric-sum oracles and the
//! small estimators shared by the experiments.

use rand::distr::Open01;
use rand::Rng;
use serde::Serialize;

use crate::error::{usage, Result};

/// Numerator and denominator of `i(2n-i-1) / (n(n-1))`, the probability that
/// a uniform interaction touches at least one of `i` marked agents.
pub fn p_leave_ratio(i: usize, n: usize) -> Result<(u64, u64)> {
    if n < 2 || i > n {
        return Err(usage(format!(
            "p_leave needs 0 <= i <= n, n >= 2; got i = {i}, n = {n}"
        )));
    }
    let (i, n) = (i as u64, n as u64);
    Ok((i * (2 * n - i - 1), n * (n - 1)))
}

pub fn p_leave(i: usize, n: usize) -> Result<f64> {
    let (num, den) = p_leave_ratio(i, n)?;
    Ok(num as f64 / den as f64)
}

/// Numerator and denominator of `2k(n-k) / (n(n-1))`, the probability that a
/// uniform interaction pairs one of `k` marked agents with an unmarked one.
pub fn p_epidemic_ratio(k: usize, n: usize) -> Result<(u64, u64)> {
    if n < 2 || k < 1 || k > n {
        return Err(usage(format!(
            "p_epidemic needs 1 <= k <= n, n >= 2; got k = {k}, n = {n}"
        )));
    }
    let (k, n) = (k as u64, n as u64);
    Ok((2 * k * (n - k), n * (n - 1)))
}

pub fn p_epidemic(k: usize, n: usize) -> Result<f64> {
    let (num, den) = p_epidemic_ratio(k, n)?;
    Ok(num as f64 / den as f64)
}

/// `⌊x^{1/q}⌋` for integer `x`, computed exactly.
pub fn floor_root(x: u128, q: u32) -> u128 {
    if q == 1 || x < 2 {
        return x;
    }
    let mut r = (x as f64).powf(1.0 / q as f64).round() as u128;
    let pow = |r: u128| r.checked_pow(q);
    while pow(r).is_none_or(|v| v > x) {
        r -= 1;
    }
    while pow(r + 1).is_some_and(|v| v <= x) {
        r += 1;
    }
    r
}

/// `⌊n^{p/q}⌋` and whether the power is an exact integer. Falls back to
/// floating point when `n^p` overflows `u128`.
pub fn floor_pow_ratio(n: u64, p: u32, q: u32) -> (u64, bool) {
    assert!(q > 0, "zero denominator");
    match (n as u128).checked_pow(p) {
        Some(x) => {
            let r = floor_root(x, q);
            (r as u64, r.pow(q) == x)
        }
        None => {
            let v = (n as f64).powf(p as f64 / q as f64);
            (v.floor() as u64, v.fract() == 0.0)
        }
    }
}

/// `⌈n^{p/q}⌉`, exact for perfect powers.
pub fn ceil_pow_ratio(n: u64, p: u32, q: u32) -> u64 {
    let (r, exact) = floor_pow_ratio(n, p, q);
    if exact {
        r
    } else {
        r + 1
    }
}

/// `n^{p/q}` as a real; an exact integer whenever the power is one.
pub fn pow_ratio(n: u64, p: u32, q: u32) -> f64 {
    let (r, exact) = floor_pow_ratio(n, p, q);
    if exact {
        r as f64
    } else {
        (n as f64).powf(p as f64 / q as f64)
    }
}

/// `⌈n^{2/3}⌉`.
pub fn ceil_two_thirds(n: u64) -> u64 {
    ceil_pow_ratio(n, 2, 3)
}

/// Independent geometric variables with support `{1, 2, …}`, given by their
/// success probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometricSumSpec {
    probs: Vec<f64>,
}

impl GeometricSumSpec {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if let Some(p) = probs.iter().find(|&&p| !(p > 0.0 && p <= 1.0)) {
            return Err(usage(format!("success probability {p} not in (0, 1]")));
        }
        Ok(GeometricSumSpec { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn mean(&self) -> f64 {
        expected_coupon_sum(self)
    }

    pub fn variance(&self) -> f64 {
        variance_coupon_sum(self)
    }
}

/// Indices `f*, f*+2, …` up to `n` with `f* = 2⌈f/2⌉`.
///
/// When `n - f*` is odd the largest index is `n - 1`; since
/// `p_{n-1} = p_n = 1` this changes the expectation by at most one step.
pub fn coupon_indices(n: usize, f: f64) -> Result<Vec<usize>> {
    if !(f >= 1.0 && f <= n as f64) {
        return Err(usage(format!(
            "coupon threshold needs 1 <= f <= n, got f = {f}, n = {n}"
        )));
    }
    let f_star = 2 * (f / 2.0).ceil() as usize;
    Ok((f_star..=n).step_by(2).collect())
}

/// The geometric sum bounding the steps until fewer than `f` agents remain
/// in the initial state.
pub fn coupon_spec(n: usize, f: f64) -> Result<GeometricSumSpec> {
    let probs = coupon_indices(n, f)?
        .into_iter()
        .map(|i| p_leave(i, n))
        .collect::<Result<Vec<_>>>()?;
    GeometricSumSpec::new(probs)
}

/// Geometric sum over `p_epidemic(k, n)` for `k` in `from..=to`: the steps
/// for a marked set to grow from `from` to `to + 1` agents.
pub fn epidemic_spec(n: usize, from: usize, to: usize) -> Result<GeometricSumSpec> {
    if to >= n {
        return Err(usage(format!(
            "epidemic growth past k = {to} needs n > {to}, got n = {n}"
        )));
    }
    let probs = (from..=to)
        .map(|k| p_epidemic(k, n))
        .collect::<Result<Vec<_>>>()?;
    GeometricSumSpec::new(probs)
}

pub fn expected_coupon_sum(spec: &GeometricSumSpec) -> f64 {
    spec.probs.iter().map(|p| 1.0 / p).sum()
}

pub fn variance_coupon_sum(spec: &GeometricSumSpec) -> f64 {
    spec.probs.iter().map(|p| (1.0 - p) / (p * p)).sum()
}

/// Inverse-transform draw `⌈ln U / ln(1-p)⌉`, `U` uniform on `(0, 1)`.
pub fn sample_geometric<R: Rng + ?Sized>(rng: &mut R, p: f64) -> u64 {
    if p >= 1.0 {
        return 1;
    }
    let u: f64 = rng.sample(Open01);
    let x = (u.ln() / (-p).ln_1p()).ceil();
    if x < 1.0 {
        1
    } else {
        x as u64
    }
}

pub fn simulate_geometric_sum<R: Rng + ?Sized>(rng: &mut R, spec: &GeometricSumSpec) -> u64 {
    spec.probs.iter().map(|&p| sample_geometric(rng, p)).sum()
}

/// Block decomposition of the influencer-growth sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BlockParams {
    pub n: usize,
    /// `⌊√n⌋`
    pub r: usize,
    /// `⌊⌈n^{2/3}⌉ / r⌋`
    pub kappa: usize,
    /// `⌈n^{2/3}⌉`
    pub m: usize,
}

pub fn block_params(n: usize) -> Result<BlockParams> {
    if n < 1 {
        return Err(usage("block_params needs n >= 1"));
    }
    let r = floor_root(n as u128, 2) as usize;
    let m = ceil_two_thirds(n as u64) as usize;
    Ok(BlockParams {
        n,
        r,
        kappa: m / r,
        m,
    })
}

impl BlockParams {
    /// Index ranges `[(i r + 1, (i+1) r)]` for `i < κ`.
    pub fn groups(&self) -> Vec<(usize, usize)> {
        (0..self.kappa)
            .map(|i| (i * self.r + 1, (i + 1) * self.r))
            .collect()
    }

    /// `X_1 + … + X_m` over `p_epidemic`: the steps for one backward set to
    /// grow past `⌈n^{2/3}⌉` agents.
    pub fn full_spec(&self) -> Result<GeometricSumSpec> {
        epidemic_spec(self.n, 1, self.m)
    }

    /// The block sums only, dropping the tail `κr+1 ..= m`.
    pub fn truncated_spec(&self) -> Result<GeometricSumSpec> {
        epidemic_spec(self.n, 1, self.kappa * self.r)
    }

    /// `Σ_{i<κ} ⌊(r/2) · E[X_{(i+1)r}]⌋`.
    pub fn block_lower_sum(&self) -> Result<f64> {
        let mut total = 0.0;
        for i in 0..self.kappa {
            let p = p_epidemic((i + 1) * self.r, self.n)?;
            if p == 0.0 {
                return Err(usage(format!("block {i} reaches k = n = {}", self.n)));
            }
            total += (self.r as f64 / 2.0 / p).floor();
        }
        Ok(total)
    }
}

pub const PERCENTILES: [u8; 7] = [1, 5, 25, 50, 75, 95, 99];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateRecord {
    pub count: usize,
    pub mean: f64,
    /// Unbiased; 0 for a single sample.
    pub variance: f64,
    pub std_error: f64,
    /// `(percent, value)` for each of [`PERCENTILES`].
    pub percentiles: Vec<(u8, f64)>,
}

impl EstimateRecord {
    pub fn percentile(&self, pct: u8) -> Option<f64> {
        self.percentiles
            .iter()
            .find(|(p, _)| *p == pct)
            .map(|&(_, v)| v)
    }
}

/// Linear-interpolation quantile of sorted data, `q` in `[0, 1]`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(samples: &[f64]) -> Result<EstimateRecord> {
    if samples.is_empty() {
        return Err(usage("summarize needs at least one sample"));
    }
    let count = samples.len();
    let mean = samples.iter().sum::<f64>() / count as f64;
    let variance = if count > 1 {
        samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (count - 1) as f64
    } else {
        0.0
    };
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let percentiles = PERCENTILES
        .iter()
        .map(|&p| (p, quantile_sorted(&sorted, p as f64 / 100.0)))
        .collect();
    Ok(EstimateRecord {
        count,
        mean,
        variance,
        std_error: (variance / count as f64).sqrt(),
        percentiles,
    })
}

/// Two-sample Kolmogorov–Smirnov statistic `sup |F_a - F_b|`.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic critical value of the two-sample KS statistic at level `alpha`:
/// `sqrt(-ln(alpha/2)/2) · sqrt((n_a + n_b) / (n_a n_b))`.
pub fn ks_critical(alpha: f64, na: usize, nb: usize) -> f64 {
    let c = (-(alpha / 2.0).ln() / 2.0).sqrt();
    let (na, nb) = (na as f64, nb as f64);
    c * ((na + nb) / (na * nb)).sqrt()
}
