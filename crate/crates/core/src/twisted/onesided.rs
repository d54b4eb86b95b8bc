//! One-sided approximating measures built from weighted Dirac masses at the
//! points `v x`, for any system the word engine can handle.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use super::{all_words, CylKey, CylinderMeasure, Mode};
use crate::engine::{Engine, EngineOptions};
use crate::error::{Error, Result};
use crate::gdensity::{build_density, for_each_layer, Scope};
use crate::repspace::{self, ConeVector};
use crate::shiftspace::Letter;
use crate::slowvar::SlowFunction;
use crate::system::System;
use crate::thermo::TransferData;

/// `Q_{<=N}[t]`, `phi_{<=N}[t] * f` and `F(Q)[t]` for one `(t, N, c)`.
pub struct Prepared {
    pub p: ConeVector,
    pub q: ConeVector,
    pub normalizer: f64,
    pub tail_mass: f64,
    pub pruned_mass: f64,
    pub beta: Vec<f64>,
}

impl Prepared {
    /// `<rho(g) f, Q>`.
    pub fn coefficient(&self, sys: &System, f: &ConeVector, g: &crate::Elem) -> Result<f64> {
        repspace::matrix_coefficient(&sys.group, g, f, &self.q)
    }
}

#[allow(clippy::too_many_arguments)]
pub fn prepare(
    sys: &System,
    mode: Mode,
    f: &ConeVector,
    t: f64,
    n_max: usize,
    c: &SlowFunction,
    opts: EngineOptions,
    gamma_floor: Option<f64>,
) -> Result<Prepared> {
    if let Some(g) = gamma_floor {
        if t <= g {
            return Err(Error::Guard(format!("t = {t} is not above the convergence parameter estimate {g}")));
        }
    }
    let d = build_density(sys, t, n_max, c, false, opts)?;
    let g = &sys.group;
    let p = repspace::convolve(g, &d.aggregate, f)?;
    let q = match mode {
        Mode::Plain => p.clone(),
        Mode::Star => repspace::convolve(g, &repspace::star(g, &d.aggregate), f)?,
        Mode::TwoSided => return Err(Error::Argument("two-sided measures are built by two_sided_measure".into())),
    };
    let normalizer = repspace::inner(&p, &q)?;
    if !(normalizer > 0.0) || !normalizer.is_finite() {
        return Err(Error::Guard(format!("normalizer F(Q)[{t}] = {normalizer} is not positive and finite")));
    }
    let beta: Vec<f64> = (0..=n_max).map(|n| (c.log_c(n as u64) - n as f64 * t.ln()).exp()).collect();
    let tail_mass = beta[n_max] * d.layer_mass[n_max - 1] / d.zeta;
    Ok(Prepared { p, q, normalizer, tail_mass, pruned_mass: d.pruned_mass, beta })
}

/// Unnormalized mass of the cylinder `[u]`.
fn cylinder_mass(sys: &System, prep: &Prepared, f: &ConeVector, u: &[Letter], n_max: usize, opts: EngineOptions) -> Result<f64> {
    let spec = &sys.spec;
    let a = spec.letter_a;
    let l = u.len();
    let tail = sys.tail_letters();
    let mut total = 0.0;
    // v = u y with |v| >= |u|
    if l <= n_max && spec.is_admissible(u) {
        let engine = Engine::new(spec, Some((&sys.group, &sys.marking)), EngineOptions { sequential: true, ..opts });
        let mut state = engine.initial(u)?;
        for n in l..=n_max {
            let layer = engine.project_end(&state, a, &tail);
            let mut s = 0.0;
            for (g, w) in &layer {
                s += w * prep.coefficient(sys, f, g)?;
            }
            total += prep.beta[n] * s;
            if n < n_max {
                state = engine.step(&state)?;
            }
        }
    }
    // v a proper prefix of u, the rest of u read from the base tail
    for n in 1..l.min(n_max + 1) {
        let v = &u[..n];
        if v[n - 1] != a || spec.base_tail.prefix(l - n) != u[n..] || !spec.is_admissible(v) {
            continue;
        }
        let r = spec.birkhoff_weight(v, &spec.base_tail)?;
        total += prep.beta[n] * r * prep.coefficient(sys, f, &sys.marking.product(&sys.group, v))?;
    }
    Ok(total)
}

/// One-sided approximating measure on all cylinders of length `1..=depth`.
#[allow(clippy::too_many_arguments)]
pub fn approx_measure(
    sys: &System,
    mode: Mode,
    f: &ConeVector,
    t: f64,
    n_max: usize,
    c: &SlowFunction,
    depth: usize,
    opts: EngineOptions,
    gamma_floor: Option<f64>,
) -> Result<CylinderMeasure> {
    if depth == 0 {
        return Err(Error::Argument("cylinder depth must be positive".into()));
    }
    let prep = prepare(sys, mode, f, t, n_max, c, opts, gamma_floor)?;
    let words = all_words(&sys.spec, depth);
    let leaf: Vec<f64> = words
        .par_iter()
        .map(|u| cylinder_mass(sys, &prep, f, u, n_max, opts).map(|m| m / prep.normalizer))
        .collect::<Result<_>>()?;
    let mut masses = BTreeMap::new();
    for (u, m) in words.iter().zip(&leaf) {
        for k in 1..=depth {
            *masses.entry(CylKey::one_sided(&u[..k])).or_insert(0.0) += m;
        }
    }
    Ok(CylinderMeasure {
        mode,
        t,
        n_max,
        c_id: c.id.clone(),
        f_id: describe(f),
        depth,
        masses,
        normalizer: prep.normalizer,
        tail_mass: prep.tail_mass,
        pruned_mass: prep.pruned_mass,
    })
}

pub(crate) fn describe(f: &ConeVector) -> String {
    let s = f.sorted();
    if s.len() == 1 {
        let (g, w) = s.iter().next().unwrap();
        format!("{w}*delta{:?}", g.as_slice())
    } else {
        format!("vector[{}]", s.len())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MainEqualityReport {
    pub direct: f64,
    pub regrouped: f64,
    pub abs_error: f64,
}

/// Evaluates `nu(t^r R_r^{-1} 1_[wB])` once from the Dirac atoms and once as
/// the shifted-density sum plus the short-word remainder. Memory-1 potentials.
#[allow(clippy::too_many_arguments)]
pub fn main_equality_check(
    sys: &System,
    mode: Mode,
    f: &ConeVector,
    t: f64,
    n_max: usize,
    c: &SlowFunction,
    w: &[Letter],
    b: Letter,
) -> Result<MainEqualityReport> {
    let spec = &sys.spec;
    if spec.memory != 1 {
        return Err(Error::Domain("the regrouping check assumes a memory-1 potential".into()));
    }
    let r = w.len();
    if r == 0 || r >= n_max {
        return Err(Error::Argument("need 1 <= |w| < N".into()));
    }
    let prep = prepare(sys, mode, f, t, n_max, c, EngineOptions::exact(), None)?;
    let a = spec.letter_a;
    let mut target = w.to_vec();
    target.push(b);
    let k = spec.alphabet_size as Letter;
    let atom = |v: &[Letter]| -> Result<f64> {
        let n = v.len();
        let mut vx = v.to_vec();
        vx.extend(spec.base_tail.prefix(r + 1));
        if vx[..r + 1] != target[..] {
            return Ok(0.0);
        }
        let rn = spec.birkhoff_weight(v, &spec.base_tail)?;
        let rr = spec.birkhoff_weight_with(&vx[..r], &vx[r..])?;
        let g = prep.coefficient(sys, f, &sys.marking.product(&sys.group, v))?;
        Ok(prep.beta[n] * rn * g * t.powi(r as i32) / rr)
    };
    let mut direct = 0.0;
    for n in 1..=n_max {
        for b0 in 0..k {
            for v in spec.enumerate_words(b0, a, n)? {
                direct += atom(&v)?;
            }
        }
    }
    let mut regrouped = 0.0;
    for n in 1..=r {
        for b0 in 0..k {
            for v in spec.enumerate_words(b0, a, n)? {
                regrouped += atom(&v)?;
            }
        }
    }
    let sw = sys.marking.product(&sys.group, w);
    let lt = t.ln();
    if spec.is_admissible(&target) {
        for_each_layer(sys, Scope::Pair(b, a), n_max - r, EngineOptions::exact(), |n, layer| {
            let weight = (c.log_c((n + r) as u64) - n as f64 * lt).exp();
            for (h, x) in layer {
                regrouped += weight * x * prep.coefficient(sys, f, &sys.group.compose(&sw, h))?;
            }
            Ok(())
        })?;
    }
    let (direct, regrouped) = (direct / prep.normalizer, regrouped / prep.normalizer);
    Ok(MainEqualityReport { direct, regrouped, abs_error: (direct - regrouped).abs() })
}

/// `max nu([wA]) gamma^r / R_r(w x)` over `|w| = r <= depth - 1`.
pub fn rhs_gibbs_check(measure: &CylinderMeasure, sys: &System, gamma: f64, depth: usize) -> Result<f64> {
    if depth > measure.depth {
        return Err(Error::Argument("measure was not computed to that depth".into()));
    }
    let spec = &sys.spec;
    let big_a = spec.letter_A;
    let mut best: f64 = 0.0;
    for r in 0..depth {
        let words = if r == 0 { vec![vec![]] } else { all_words(spec, r) };
        for w in words {
            let mut wa = w.clone();
            wa.push(big_a);
            if !spec.is_admissible(&wa) {
                continue;
            }
            let m = measure.mass(&wa);
            if m == 0.0 {
                continue;
            }
            let rr = if r == 0 { 1.0 } else { spec.birkhoff_weight(&w, &spec.base_tail)? };
            best = best.max(m * gamma.powi(r as i32) / rr);
        }
    }
    Ok(best)
}

#[derive(Clone, Debug, Serialize)]
pub struct CocycleReport {
    /// Estimate of `h(s(w'), w' z)`.
    pub h_inverse: f64,
    /// Estimate of `h(s(w), w w' z)`.
    pub h_forward: f64,
    /// `|h(e, .) - h(g^{-1}, .) h(g, tau .)|` with `h(e, .) = 1`.
    pub defect: f64,
}

/// `h(s(w), w z) ~ gamma^{-n} R_n(w z) m([z]) / m([w z])` at cylinder resolution.
pub fn h_estimate(measure: &CylinderMeasure, sys: &System, gamma: f64, w: &[Letter], z: &[Letter]) -> Result<f64> {
    let spec = &sys.spec;
    let mut wz = w.to_vec();
    wz.extend_from_slice(z);
    if wz.len() > measure.depth {
        return Err(Error::Argument("cylinder deeper than the computed measure".into()));
    }
    let (num, den) = (measure.mass(z), measure.mass(&wz));
    if num <= 0.0 || den <= 0.0 {
        return Err(Error::Domain(format!("zero-mass cylinder in cocycle estimate for {wz:?}")));
    }
    let rn = spec.birkhoff_weight_with(w, z)?;
    Ok(gamma.powi(-(w.len() as i32)) * rn * num / den)
}

/// Chain-rule check for `g = s(w)` and `s(w') = g^{-1}` at the point `w' z`.
pub fn cocycle_check(
    measure: &CylinderMeasure,
    sys: &System,
    gamma: f64,
    w: &[Letter],
    w_inv: &[Letter],
    z: &[Letter],
) -> Result<CocycleReport> {
    let g = &sys.group;
    let prod = g.compose(&sys.marking.product(g, w), &sys.marking.product(g, w_inv));
    if prod != g.identity() {
        return Err(Error::Argument("s(w) s(w') must be the identity".into()));
    }
    let mut wz = w_inv.to_vec();
    wz.extend_from_slice(z);
    let h_inverse = h_estimate(measure, sys, gamma, w_inv, z)?;
    let h_forward = h_estimate(measure, sys, gamma, w, &wz)?;
    Ok(CocycleReport { h_inverse, h_forward, defect: (1.0 - h_inverse * h_forward).abs() })
}

/// `sum_w m([w]) |s(w)| / (n sum_w m([w]))` over cylinders of length `n`.
pub fn drift_profile(measure: &CylinderMeasure, sys: &System, n: usize) -> Result<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for (w, m) in measure.level(n) {
        num += m * sys.group.length(&sys.marking.product(&sys.group, w)) as f64;
        den += m;
    }
    if den <= 0.0 {
        return Err(Error::Argument(format!("no mass at depth {n}")));
    }
    Ok(num / (n as f64 * den))
}

/// Range of `nu^Q([w]) / nu([w])` against the conformal measure, depth `1..=depth`.
pub fn absolute_continuity_ratios(measure: &CylinderMeasure, td: &TransferData, depth: usize) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for n in 1..=depth.min(measure.depth) {
        for (w, m) in measure.level(n) {
            let c = td.nu_cylinder(w);
            if c > 0.0 && m > 0.0 {
                lo = lo.min(m / c);
                hi = hi.max(m / c);
            }
        }
    }
    (lo, hi)
}
