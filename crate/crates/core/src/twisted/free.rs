//! Radial formulas for the simple random walk on `F_r` with `f = delta_e`.
//!
//! Every density involved is a sum of shifted convolution powers of the step
//! law, so cylinder masses and matrix coefficients reduce to a handful of
//! radial profiles `q_K(l) = t^{-K} p^{*K}(l)` summed against coefficient
//! sequences built from `c`.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use super::{all_words, extrapolate, CylKey, CylinderMeasure, Mode, Model};
use crate::engine::EngineOptions;
use crate::error::{Error, Result};
use crate::gdensity::{for_each_layer, Scope};
use crate::groups::Elem;
use crate::repspace::{self, radial::RadialWalk, ConeVector, Density};
use crate::shiftspace::Letter;
use crate::slowvar::SlowFunction;
use crate::system::System;

/// `sqrt(2r - 1) / r`.
pub fn kesten_radius(rank: usize) -> f64 {
    ((2 * rank - 1) as f64).sqrt() / rank as f64
}

/// Plain twisted data at one `(t, N, c)` on `F_r`.
pub struct FreeTwisted {
    pub sys: System,
    pub rank: usize,
    pub t: f64,
    pub n_max: usize,
    pub depth: usize,
    pub radii: usize,
    c: Vec<f64>,
    p: f64,
    qr: Vec<f64>,
    s4: Vec<f64>,
    /// `s_level[L-1]`, `t_level[L-1]`.
    s_level: Vec<Vec<f64>>,
    t_level: Vec<Vec<f64>>,
    pub normalizer: f64,
}

fn correlate(c: &[f64], lo_a: usize, hi_a: usize, lo_b: usize, hi_b: usize, sum: usize) -> f64 {
    // sum of c_i c_j over i in [lo_a, hi_a], j in [lo_b, hi_b], i + j = sum
    let lo = lo_a.max(sum.saturating_sub(hi_b));
    let hi = hi_a.min(sum.saturating_sub(lo_b));
    if lo > hi || sum < lo_b {
        return 0.0;
    }
    (lo..=hi).map(|i| c[i] * c[sum - i]).sum()
}

impl FreeTwisted {
    /// Builds the profiles for cylinders of length up to `depth` and radii
    /// below `radii`.
    #[allow(non_snake_case)]
    pub fn new(rank: usize, A: Letter, a: Letter, t: f64, n_max: usize, c: &SlowFunction, depth: usize, radii: usize) -> Result<Self> {
        let gamma = kesten_radius(rank);
        if t <= gamma {
            return Err(Error::Guard(format!("t = {t} is not above the Kesten radius {gamma}")));
        }
        if n_max < 3 || depth == 0 || depth >= n_max {
            return Err(Error::Argument("need N >= 3 and 1 <= depth < N".into()));
        }
        let sys = System::free_simple(rank).with_twisted_letters(A, a)?;
        let radii = radii.max(depth + 3);
        let cv: Vec<f64> = (0..=n_max).map(|n| c.c(n as u64)).collect();
        let n = n_max;
        let qr: Vec<f64> = (0..=n - 2).map(|k| cv[k + 2]).collect();
        // m, n in [2, N], m + n = K + 4
        let s4: Vec<f64> = (0..=2 * n - 4).into_par_iter().map(|k| correlate(&cv, 2, n, 2, n, k + 4)).collect();
        let mut s_level = Vec::with_capacity(depth);
        let mut t_level = Vec::with_capacity(depth);
        for l in 1..=depth {
            // i = L + j with j in [1, N - L], m in [2, N], i + m = K + 3 + L
            let k_max = (n - l) + n - 3;
            s_level.push((0..=k_max).into_par_iter().map(|k| correlate(&cv, l + 1, n, 2, n, k + 3 + l)).collect::<Vec<_>>());
            t_level.push((1..=n - l).map(|j| cv[l + j]).collect::<Vec<_>>());
        }
        let mut coeffs = vec![qr, s4];
        coeffs.extend(s_level);
        coeffs.extend(t_level);
        let mut prof = RadialWalk::new(rank).series(&coeffs, t, radii).into_iter();
        let qr = prof.next().unwrap();
        let s4 = prof.next().unwrap();
        let s_level: Vec<Vec<f64>> = prof.by_ref().take(depth).collect();
        let t_level: Vec<Vec<f64>> = prof.collect();
        let p = 1.0 / (2 * rank) as f64;
        let mut ft = FreeTwisted { sys, rank, t, n_max, depth, radii, c: cv, p, qr, s4, s_level, t_level, normalizer: 1.0 };
        let e = ft.sys.group.identity();
        ft.normalizer = ft.coefficient(&e)?;
        if !(ft.normalizer > 0.0) || !ft.normalizer.is_finite() {
            return Err(Error::Guard(format!("normalizer {} is not positive and finite", ft.normalizer)));
        }
        Ok(ft)
    }

    fn beta(&self, n: usize) -> f64 {
        self.c[n] * self.t.powi(-(n as i32))
    }

    fn len(&self, g: &Elem) -> Result<usize> {
        let l = self.sys.group.length(g);
        if l >= self.radii {
            return Err(Error::Argument(format!("radius {l} beyond the computed profile ({})", self.radii)));
        }
        Ok(l)
    }

    fn label(&self, b: Letter) -> &Elem {
        self.sys.label(b)
    }

    /// Radial part of `Q`, as a function of `|A^{-1} h a^{-1}|`.
    fn q_radial(&self, l: usize) -> f64 {
        self.p * self.p * self.t.powi(-2) * self.qr[l]
    }

    fn twisted(&self) -> (Letter, Letter) {
        (self.sys.spec.letter_A, self.sys.spec.letter_a)
    }

    /// `Q(h) = (phi[t] * delta_e)(h)`.
    pub fn q(&self, h: &Elem) -> Result<f64> {
        let g = &self.sys.group;
        let (big_a, a) = self.twisted();
        let ai = g.inverse(self.label(big_a));
        let x = g.compose(&g.compose(&ai, h), &g.inverse(self.label(a)));
        let mut v = self.q_radial(self.len(&x)?);
        if big_a == a && h == self.label(big_a) {
            v += self.p * self.beta(1);
        }
        Ok(v)
    }

    /// `<rho(h) Q, Q>`, unnormalized.
    pub fn coefficient(&self, h: &Elem) -> Result<f64> {
        let g = &self.sys.group;
        let (big_a, a) = self.twisted();
        let la = self.label(big_a);
        let ai = g.inverse(la);
        let hi = g.inverse(h);
        let conj = g.compose(&g.compose(&ai, &hi), la);
        let p = self.p;
        let mut v = p.powi(4) * self.t.powi(-4) * self.s4[self.len(&conj)?];
        if big_a == a {
            let b1 = p * self.beta(1);
            v += b1 * self.q_radial(self.len(&g.compose(&ai, h))?);
            v += b1 * self.q_radial(self.len(&g.compose(&ai, &hi))?);
            if *h == g.identity() {
                v += b1 * b1;
            }
        }
        Ok(v)
    }

    /// `Upsilon_t(h)`; exactly 1 at the identity.
    pub fn upsilon(&self, h: &Elem) -> Result<f64> {
        if *h == self.sys.group.identity() {
            return Ok(1.0);
        }
        Ok(self.coefficient(h)? / self.normalizer)
    }

    /// Normalized mass of the cylinder `[u]`, `1 <= |u| <= depth`.
    pub fn mass(&self, u: &[Letter]) -> Result<f64> {
        let l = u.len();
        if l == 0 || l > self.depth {
            return Err(Error::Argument(format!("cylinder length {l} outside 1..={}", self.depth)));
        }
        let g = &self.sys.group;
        let (big_a, a) = self.twisted();
        let (p, t) = (self.p, self.t);
        let h = self.sys.marking.product(g, u);
        let ai = g.inverse(self.label(big_a));
        let lead = p.powi(l as i32 + 1);
        let mut m = lead * p * p * t.powi(-(l as i32 + 3)) * self.s_level[l - 1][self.len(&g.compose(&ai, &h))?];
        if big_a == a {
            m += lead * p * self.beta(1) * t.powi(-(l as i32 + 1)) * self.t_level[l - 1][self.len(&h)?];
        }
        if u[l - 1] == a {
            m += p.powi(l as i32) * self.beta(l) * self.q(&h)?;
        }
        let tail = &self.sys.spec.base_tail;
        for n in 1..l {
            if u[n - 1] == a && tail.prefix(l - n) == u[n..] {
                let hv = self.sys.marking.product(g, &u[..n]);
                m += p.powi(n as i32) * self.beta(n) * self.q(&hv)?;
            }
        }
        Ok(m / self.normalizer)
    }

    /// All cylinders of length `1..=depth` as a [`CylinderMeasure`].
    pub fn measure(&self, depth: usize) -> Result<CylinderMeasure> {
        if depth > self.depth {
            return Err(Error::Argument("depth beyond the computed levels".into()));
        }
        let mut masses = BTreeMap::new();
        for l in 1..=depth {
            let words = all_words(&self.sys.spec, l);
            let ms: Vec<f64> = words.par_iter().map(|u| self.mass(u)).collect::<Result<_>>()?;
            for (u, m) in words.iter().zip(ms) {
                masses.insert(CylKey::one_sided(u), m);
            }
        }
        Ok(CylinderMeasure {
            mode: Mode::Plain,
            t: self.t,
            n_max: self.n_max,
            c_id: String::new(),
            f_id: "delta_e".into(),
            depth,
            masses,
            normalizer: self.normalizer,
            tail_mass: self.beta(self.n_max) * self.q_radial(0),
            pruned_mass: 0.0,
        })
    }

    /// `sum_{|u|=n} m([u]) |s(u)| / (n sum m([u]))`, streamed over all words.
    pub fn drift(&self, n: usize) -> Result<f64> {
        let k = self.sys.spec.alphabet_size as Letter;
        let (num, den) = (0..k)
            .into_par_iter()
            .map(|b| {
                let (mut num, mut den) = (0.0, 0.0);
                for u in self.sys.spec.words_from(b, n) {
                    let m = self.mass(&u)?;
                    num += m * self.sys.group.length(&self.sys.marking.product(&self.sys.group, &u)) as f64;
                    den += m;
                }
                Ok((num, den))
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold((0.0, 0.0), |x, y| (x.0 + y.0, x.1 + y.1));
        Ok(num / (n as f64 * den))
    }

    /// Signed relative error `(t^r R_r^{-1} nu([w A]) - Upsilon_t(s(w))) / Upsilon_t(s(w))`
    /// for `word = w A`.
    pub fn identity_error(&self, word: &[Letter]) -> Result<f64> {
        let (big_a, _) = self.twisted();
        if word.last() != Some(&big_a) {
            return Err(Error::Argument("word must end with the letter A".into()));
        }
        let r = word.len() - 1;
        let w = &word[..r];
        let lhs = (self.t / self.p).powi(r as i32) * self.mass(word)?;
        let rhs = self.upsilon(&self.sys.marking.product(&self.sys.group, w))?;
        if rhs <= 0.0 {
            return Err(Error::Domain("Upsilon vanishes at s(w)".into()));
        }
        Ok((lhs - rhs) / rhs)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct IdentityReport {
    pub word: Vec<Letter>,
    pub grid: Vec<f64>,
    pub errors: Vec<f64>,
    /// Signed error extrapolated to `t = gamma`.
    pub extrapolated: f64,
}

/// Coefficient identity along a descending grid, one report per word
/// (each ending with `A`).
#[allow(clippy::too_many_arguments, non_snake_case)]
pub fn coefficient_identity_check(
    words: &[Vec<Letter>],
    rank: usize,
    A: Letter,
    a: Letter,
    grid: &[f64],
    n_max: usize,
    c: &SlowFunction,
) -> Result<Vec<IdentityReport>> {
    let depth = words.iter().map(|w| w.len()).max().unwrap_or(1);
    let per_t: Vec<Vec<f64>> = grid
        .par_iter()
        .map(|&t| {
            let ft = FreeTwisted::new(rank, A, a, t, n_max, c, depth, depth + 3)?;
            words.iter().map(|w| ft.identity_error(w)).collect()
        })
        .collect::<Result<_>>()?;
    let gamma = kesten_radius(rank);
    let eps: Vec<f64> = grid.iter().map(|t| t / gamma - 1.0).collect();
    words
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let errors: Vec<f64> = per_t.iter().map(|e| e[i]).collect();
            let extrapolated = if errors.len() >= 3 { extrapolate(&eps, &errors, Model::Sqrt)? } else { *errors.last().unwrap() };
            Ok(IdentityReport { word: w.clone(), grid: grid.to_vec(), errors, extrapolated })
        })
        .collect()
}

/// `min` and `max` of `t^r R_r^{-1} nu([B w' A]) / Upsilon_t(s(B w'))` over words of
/// length `2..=depth` starting with `B`.
#[allow(non_snake_case)]
pub fn letter_change_ratios(ft: &FreeTwisted, B: Letter, depth: usize) -> Result<(f64, f64)> {
    let (big_a, _) = ft.twisted();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for l in 2..=depth {
        for mut w in ft.sys.spec.words_from(B, l - 1) {
            w.push(big_a);
            let r = 1.0 + ft.identity_error(&w)?;
            lo = lo.min(r);
            hi = hi.max(r);
        }
    }
    Ok((lo, hi))
}

/// Spherical profile `Ubar` at one grid point.
#[derive(Clone, Debug, Serialize)]
pub struct SphericalProfile {
    pub rank: usize,
    pub t: f64,
    pub n_max: usize,
    /// `Ubar(l) / Ubar(0)`, `l = 0..=radius_max`.
    pub values: Vec<f64>,
    /// `(1 + l (q-1)/(q+1)) q^{-l/2}`, `q = 2r - 1`.
    pub closed_form: Vec<f64>,
    /// `||p * Ubar - gamma Ubar|| / ||Ubar||` on radii `< radius_max`.
    pub eigen_defect: f64,
}

pub fn spherical_closed_form(rank: usize, l: usize) -> f64 {
    let q = (2 * rank - 1) as f64;
    (1.0 + l as f64 * (q - 1.0) / (q + 1.0)) * q.powf(-(l as f64) / 2.0)
}

/// `Ubar = sum_{A,a} <rho(.) phi^{A,a} * delta_e, sum_{B,b} phi^{B,b} * delta_e>`,
/// normalized at the identity, at each point of `grid`.
pub fn spherical_profile(rank: usize, radius_max: usize, grid: &[f64], n_max: usize, c: &SlowFunction) -> Result<Vec<SphericalProfile>> {
    let gamma = kesten_radius(rank);
    let rw = RadialWalk::new(rank);
    let cv: Vec<f64> = (0..=n_max).map(|n| c.c(n as u64)).collect();
    // m, n in [1, N], m + n = K
    let conv: Vec<f64> = (0..=2 * n_max).into_par_iter().map(|k| correlate(&cv, 1, n_max, 1, n_max, k)).collect();
    grid.par_iter()
        .map(|&t| {
            if t <= gamma {
                return Err(Error::Guard(format!("t = {t} is not above the Kesten radius {gamma}")));
            }
            let prof = rw.series(std::slice::from_ref(&conv), t, radius_max + 2).remove(0);
            let u0 = prof[0];
            let values: Vec<f64> = prof.iter().take(radius_max + 1).map(|x| x / u0).collect();
            let (mut num, mut den) = (0.0, 0.0);
            for l in 0..radius_max {
                let pu = if l == 0 { prof[1] } else { rw.back() * prof[l - 1] + rw.forward() * prof[l + 1] };
                num += (pu - gamma * prof[l]).powi(2);
                den += prof[l].powi(2);
            }
            Ok(SphericalProfile {
                rank,
                t,
                n_max,
                values,
                closed_form: (0..=radius_max).map(|l| spherical_closed_form(rank, l)).collect(),
                eigen_defect: (num / den).sqrt(),
            })
        })
        .collect()
}

/// Largest relative spread of `Ubar` over each sphere of radius `<= radius`,
/// computed from explicit word layers (no radial formulas), plus the largest
/// deviation from the radial profile at the same `(t, N)`.
pub fn radial_constancy(rank: usize, t: f64, n_max: usize, radius: usize) -> Result<(f64, f64)> {
    let sys = System::free_simple(rank);
    let g = &sys.group;
    let lt = t.ln();
    let mut agg = crate::engine::ElemMap::default();
    for_each_layer(&sys, Scope::All, n_max, EngineOptions::exact(), |n, layer| {
        let w = (-(n as f64) * lt).exp();
        for (h, x) in layer {
            *agg.entry(h.clone()).or_insert(0.0) += w * x;
        }
        Ok(())
    })?;
    let e = ConeVector::delta_e(g);
    let p = repspace::convolve(g, &Density::from_map(agg), &e)?;
    let base = repspace::matrix_coefficient(g, &g.identity(), &p, &p)?;
    let radial = spherical_profile(rank, radius, &[t], n_max, &SlowFunction::unit())?.remove(0);
    let mut spheres: Vec<(f64, f64)> = vec![(f64::INFINITY, 0.0); radius + 1];
    for l in 0..=radius {
        for b in 0..2 * rank as Letter {
            for w in sys.spec.words_from(b, l.max(1)) {
                let h = if l == 0 { g.identity() } else { sys.marking.product(g, &w) };
                if g.length(&h) != l {
                    continue;
                }
                let v = repspace::matrix_coefficient(g, &h, &p, &p)? / base;
                spheres[l].0 = spheres[l].0.min(v);
                spheres[l].1 = spheres[l].1.max(v);
            }
        }
    }
    let spread = spheres.iter().map(|(lo, hi)| (hi - lo) / hi).fold(0.0, f64::max);
    let dev = spheres.iter().zip(&radial.values).map(|((_, hi), r)| (hi - r).abs() / r).fold(0.0, f64::max);
    Ok((spread, dev))
}

/// Drift of the Bernoulli measure, `E|s(x_1..x_n)| / n`.
pub fn equilibrium_drift(rank: usize, n: usize) -> f64 {
    RadialWalk::new(rank).mean_length(n) / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::twisted::onesided::{approx_measure, drift_profile};

    #[test]
    fn matches_generic_engine() {
        // same cylinder masses as the word-by-word construction
        let c = SlowFunction::unit();
        for (big_a, a) in [(0u8, 0u8), (0, 2), (1, 3)] {
            let ft = FreeTwisted::new(2, big_a, a, 1.1, 9, &c, 3, 8).unwrap();
            let sys = System::free_simple(2).with_twisted_letters(big_a, a).unwrap();
            let f = ConeVector::delta_e(&sys.group);
            let m = approx_measure(&sys, Mode::Plain, &f, 1.1, 9, &c, 3, EngineOptions::exact(), None).unwrap();
            assert!((m.normalizer / ft.normalizer - 1.0).abs() < 1e-12);
            for l in 1..=3 {
                for (u, x) in m.level(l) {
                    let y = ft.mass(u).unwrap();
                    assert!((x - y).abs() < 1e-12 * (1.0 + x.abs()), "{u:?}: {x} vs {y}");
                }
            }
            assert!((drift_profile(&m, &sys, 3).unwrap() - ft.drift(3).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn upsilon_matches_generic() {
        let c = SlowFunction::unit();
        let ft = FreeTwisted::new(2, 0, 0, 1.2, 8, &c, 1, 8).unwrap();
        let sys = System::free_simple(2).with_twisted_letters(0, 0).unwrap();
        let f = ConeVector::delta_e(&sys.group);
        let targets: Vec<Elem> = [vec![], vec![1], vec![1, 2], vec![-2, 1, 1]].iter().map(|v| Elem::from_slice(v)).collect();
        let tab = super::super::upsilon(super::super::UpsilonKind::Plain, &targets, &sys, &f, &[1.2], 0.9, 8, &c, Model::Linear).unwrap();
        for (g, v) in targets.iter().zip(&tab.values) {
            assert!((ft.upsilon(g).unwrap() - v[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn closed_form_and_drift() {
        assert!((spherical_closed_form(2, 1) - 3f64.sqrt() / 2.0).abs() < 1e-15);
        assert!((spherical_closed_form(2, 2) - 2.0 / 3.0).abs() < 1e-15);
        assert!((equilibrium_drift(2, 2000) - 0.5).abs() < 0.01);
        let (spread, dev) = radial_constancy(2, 1.0, 6, 3).unwrap();
        assert!(spread < 1e-12 && dev < 1e-12, "{spread} {dev}");
    }
}
