//! Slowly increasing weights `c_n` that push a convergent series to divergence
//! at its abscissa without changing the abscissa.
//!
//! Anchors `N_r` are chosen sparsely with exponents `d(r) = log(1/D_{N_r}) / N_r`,
//! and `log c_n` is interpolated linearly between anchors with weights
//! `alpha_r(n) = (N_{r+1} - n)/(N_{r+1} - N_r)`, so that `c_{N_r} = 1/D_{N_r}`.
//! Interpolating `log c_n` (rather than `log c_n / n`) keeps `log c` concave,
//! hence `c` non-decreasing and submultiplicative.

use serde::Serialize;

use crate::error::{arg, Result};
use crate::gdensity::estimate_gamma;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SlowFunction {
    pub id: String,
    pub anchors: Vec<u64>,
    pub exponents: Vec<f64>,
    /// `log c` at the anchors.
    log_c: Vec<f64>,
}

impl SlowFunction {
    /// `c = 1`.
    pub fn unit() -> Self {
        SlowFunction { id: "unit".into(), anchors: vec![], exponents: vec![], log_c: vec![] }
    }

    pub fn is_unit(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn log_c(&self, n: u64) -> f64 {
        if self.anchors.is_empty() || n == 0 {
            return 0.0;
        }
        let r = self.anchors.partition_point(|&a| a <= n);
        if r == 0 {
            return n as f64 * self.exponents[0];
        }
        if r == self.anchors.len() {
            return *self.log_c.last().unwrap();
        }
        let (lo, hi) = (self.anchors[r - 1], self.anchors[r]);
        let alpha = (hi - n) as f64 / (hi - lo) as f64;
        alpha * self.log_c[r - 1] + (1.0 - alpha) * self.log_c[r]
    }

    pub fn c(&self, n: u64) -> f64 {
        self.log_c(n).exp()
    }

    /// `c_0 .. c_n_max`.
    pub fn values(&self, n_max: usize) -> Vec<f64> {
        (0..=n_max as u64).map(|n| self.c(n)).collect()
    }
}

/// Builds `c` from an oracle for `D_n = gamma^{-n} B_n` (given as `log D_n`),
/// searching anchors up to `horizon`.
pub fn construct_slow_from_log_d(log_d: &dyn Fn(u64) -> f64, horizon: u64, id: &str) -> Result<SlowFunction> {
    let f = |n: u64| -log_d(n);
    let mut n1 = None;
    for n in 1..=horizon.min(1 << 20) {
        if f(n) > 1e-12 {
            n1 = Some(n);
            break;
        }
    }
    let Some(n1) = n1 else {
        return Ok(SlowFunction { id: id.into(), ..SlowFunction::unit() });
    };
    let mut anchors = vec![n1];
    let mut log_c = vec![f(n1)];
    let mut exps = vec![f(n1) / n1 as f64];
    let mut slope = exps[0];
    loop {
        let last = *anchors.last().unwrap();
        let d_last = *exps.last().unwrap();
        let f_last = *log_c.last().unwrap();
        let mut cand = last.saturating_mul(last).max(last + 1);
        let mut accepted = None;
        while cand <= horizon {
            let fc = f(cand);
            let d = fc / cand as f64;
            let s = (fc - f_last) / (cand - last) as f64;
            if fc >= f_last && d <= d_last / 2.0 && s <= slope {
                accepted = Some((cand, fc, d, s));
                break;
            }
            cand = cand.saturating_mul(2);
        }
        match accepted {
            Some((n, fc, d, s)) => {
                anchors.push(n);
                log_c.push(fc);
                exps.push(d);
                slope = s;
            }
            None => break,
        }
    }
    Ok(SlowFunction { id: id.into(), anchors, exponents: exps, log_c })
}

/// Builds `c` from coefficients `B_1..B_N` (`coeffs[n-1] = B_n`); `gamma_hint`
/// overrides the estimated exponential rate.
pub fn construct_slow(coeffs: &[f64], gamma_hint: Option<f64>) -> Result<SlowFunction> {
    if coeffs.iter().any(|&b| b < 0.0 || !b.is_finite()) {
        return arg("coefficients must be finite and non-negative");
    }
    if coeffs.iter().all(|&b| b == 0.0) {
        return arg("coefficients are all zero");
    }
    let gamma = match gamma_hint {
        Some(g) => g,
        None => {
            let mut a = vec![0.0];
            a.extend_from_slice(coeffs);
            estimate_gamma(&a, 1.0 / 3.0)?.value
        }
    };
    let lg = gamma.ln();
    // D_n is only defined where B_n > 0; zeros are skipped by carrying the last
    // positive value forward.
    let mut log_d = Vec::with_capacity(coeffs.len());
    let mut prev = 0.0;
    for (i, &b) in coeffs.iter().enumerate() {
        let v = if b > 0.0 { b.ln() - (i + 1) as f64 * lg } else { prev };
        log_d.push(v);
        prev = v;
    }
    let ld = move |n: u64| log_d[(n as usize - 1).min(log_d.len() - 1)];
    construct_slow_from_log_d(&ld, coeffs.len() as u64, "interpolated")
}

#[derive(Clone, Debug, Serialize)]
pub struct SlowReport {
    pub submultiplicative: bool,
    pub max_submult_excess: f64,
    pub monotone: bool,
    pub max_ratio_beyond_1000: f64,
    pub final_ratio: f64,
    /// `(1/n) log c_n` at the largest grid point.
    pub growth_rate: f64,
    pub subexponential: bool,
    pub enhancement: Option<f64>,
}

/// Log-spaced integer grid in `1..=n_max` with about `points` entries.
pub fn log_grid(n_max: u64, points: usize) -> Vec<u64> {
    let mut g: Vec<u64> = (0..points)
        .map(|i| ((n_max as f64).powf(i as f64 / (points - 1) as f64)).round() as u64)
        .collect();
    g.extend(1..=(points as u64).min(n_max) / 10);
    g.sort_unstable();
    g.dedup();
    g
}

/// Checks the defining properties of `c` on `grid`; with `log_d` also the
/// enhancement factor `sum c_n D_n / sum D_n` over `n <= max(grid)`.
pub fn slow_properties_check(c: &SlowFunction, grid: &[u64], log_d: Option<&dyn Fn(u64) -> f64>) -> SlowReport {
    let lc: Vec<f64> = grid.iter().map(|&n| c.log_c(n)).collect();
    let mut excess: f64 = f64::NEG_INFINITY;
    for (i, &n) in grid.iter().enumerate() {
        for (j, &k) in grid.iter().enumerate().skip(i) {
            let e = c.log_c(n + k) - lc[i] - lc[j];
            excess = excess.max(e);
        }
    }
    let n_max = *grid.iter().max().unwrap_or(&1);
    let mut monotone = true;
    let mut max_ratio: f64 = 1.0;
    let mut prev = 0.0;
    let mut final_ratio = 1.0;
    for n in 1..=n_max {
        let l = c.log_c(n);
        if l < prev - 1e-12 {
            monotone = false;
        }
        let r = (l - prev).exp();
        if n >= 1000 {
            max_ratio = max_ratio.max(r);
        }
        final_ratio = r;
        prev = l;
    }
    let growth_rate = c.log_c(n_max) / n_max as f64;
    let half = c.log_c(n_max / 2) / (n_max / 2).max(1) as f64;
    let enhancement = log_d.map(|ld| {
        let (mut num, mut den) = (0.0, 0.0);
        for n in 1..=n_max {
            let d = ld(n).exp();
            num += c.c(n) * d;
            den += d;
        }
        num / den
    });
    SlowReport {
        submultiplicative: excess <= 1e-9,
        max_submult_excess: excess,
        monotone,
        max_ratio_beyond_1000: max_ratio,
        final_ratio,
        growth_rate,
        subexponential: growth_rate <= half + 1e-15 && growth_rate < 1e-2,
        enhancement,
    }
}
