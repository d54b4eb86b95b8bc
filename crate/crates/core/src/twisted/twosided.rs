//! Two-sided approximating measures on full shifts with memory-1 potentials.
//!
//! Atoms sit at `X u . v x` where `u` starts with `A`, `v` ends with `a`,
//! `X = ... b b a` is the reference past and `x` the base tail; the atom
//! carries `beta_|u| beta_|v| R(u) R(v) <rho(s(u v)) f, f>`.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use super::{CylKey, CylinderMeasure, Mode};
use crate::engine::{ElemMap, EngineOptions};
use crate::error::{Error, Result};
use crate::gdensity::{for_each_layer, Scope};
use crate::groups::Elem;
use crate::repspace::{self, ConeVector, Density};
use crate::shiftspace::Letter;
use crate::slowvar::SlowFunction;
use crate::system::System;

struct Sides {
    /// `past[p](h) = sum_{i >= 1, i + p <= N} beta_{i+p} L_i^{from A}(h)`.
    past: Vec<ElemMap>,
    /// `future[q](h) = sum_{j >= 1, j + q <= N} beta_{j+q} L_j^{to a}(h)`.
    future: Vec<ElemMap>,
    beta: Vec<f64>,
}

/// `out[k][p]`: the aggregate for `betas[k]` at offset `p`.
fn aggregates(sys: &System, scope: Scope, betas: &[Vec<f64>], n_max: usize, depth: usize) -> Result<Vec<Vec<ElemMap>>> {
    // one hash lookup per (layer, element); the (t, p)-weights live in a small vector
    let d = depth + 1;
    let mut acc: rustc_hash::FxHashMap<Elem, Vec<f64>> = Default::default();
    for_each_layer(sys, scope, n_max, EngineOptions::exact(), |i, layer| {
        let ps = d.min(n_max + 1 - i);
        for (h, x) in layer {
            let slot = acc.entry(h.clone()).or_insert_with(|| vec![0.0; d * betas.len()]);
            for (k, beta) in betas.iter().enumerate() {
                for p in 0..ps {
                    slot[k * d + p] += beta[i + p] * x;
                }
            }
        }
        Ok(())
    })?;
    let mut out = vec![vec![ElemMap::default(); d]; betas.len()];
    for (h, v) in acc {
        for (j, x) in v.into_iter().enumerate() {
            if x != 0.0 {
                out[j / d][j % d].insert(h.clone(), x);
            }
        }
    }
    Ok(out)
}

fn shifted(g: &crate::groups::GroupBackend, m: &ElemMap, left: Option<&Elem>, right: Option<&Elem>, scale: f64, out: &mut ElemMap) {
    for (h, x) in m {
        let mut k = h.clone();
        if let Some(l) = left {
            k = g.compose(l, &k);
        }
        if let Some(r) = right {
            k = g.compose(&k, r);
        }
        *out.entry(k).or_insert(0.0) += scale * x;
    }
}

/// The letter repeated in the reference past.
fn past_filler(sys: &System) -> Letter {
    let a = sys.spec.letter_a;
    (0..sys.spec.alphabet_size as Letter).find(|&b| b != a).unwrap_or(a)
}

fn past_density(sys: &System, sides: &Sides, u: &[Letter], n_max: usize) -> Result<ElemMap> {
    let spec = &sys.spec;
    let g = &sys.group;
    let big_a = spec.letter_A;
    let p = u.len();
    let mut out = ElemMap::default();
    if p > n_max {
        return Ok(out);
    }
    let su = sys.marking.product(g, u);
    let r = spec.birkhoff_weight_with(u, &[])?;
    // u' = y U with |y| >= 1
    shifted(g, &sides.past[p], None, Some(&su), r, &mut out);
    if p >= 1 && u[0] == big_a {
        *out.entry(su.clone()).or_insert(0.0) += r * sides.beta[p];
    }
    // u' a proper suffix of U, the rest of U read from the reference past
    let b = past_filler(sys);
    for m in 1..p {
        let (head, tail) = u.split_at(p - m);
        let reference = head.iter().rev().enumerate().all(|(k, &x)| x == if k == 0 { spec.letter_a } else { b });
        if tail[0] == big_a && reference {
            let w = spec.birkhoff_weight_with(tail, &[])?;
            *out.entry(sys.marking.product(g, tail)).or_insert(0.0) += w * sides.beta[m];
        }
    }
    Ok(out)
}

fn future_density(sys: &System, sides: &Sides, v: &[Letter], n_max: usize) -> Result<ElemMap> {
    let spec = &sys.spec;
    let g = &sys.group;
    let a = spec.letter_a;
    let q = v.len();
    let mut out = ElemMap::default();
    if q > n_max {
        return Ok(out);
    }
    let sv = sys.marking.product(g, v);
    let r = spec.birkhoff_weight_with(v, &[])?;
    shifted(g, &sides.future[q], Some(&sv), None, r, &mut out);
    if q >= 1 && v[q - 1] == a {
        *out.entry(sv.clone()).or_insert(0.0) += r * sides.beta[q];
    }
    for n in 1..q {
        if v[n - 1] == a && spec.base_tail.prefix(q - n) == v[n..] {
            let w = spec.birkhoff_weight_with(&v[..n], &[])?;
            *out.entry(sys.marking.product(g, &v[..n])).or_insert(0.0) += w * sides.beta[n];
        }
    }
    Ok(out)
}

fn pair_mass(sys: &System, f: &ConeVector, past: ElemMap, future: ElemMap) -> Result<f64> {
    let g = &sys.group;
    let fut = repspace::convolve(g, &Density::from_map(future), f)?;
    let pst = repspace::convolve(g, &repspace::star(g, &Density::from_map(past)), f)?;
    repspace::inner(&fut, &pst)
}

/// Masses of all cylinders `[U . V]` with `1 <= |U| + |V| <= depth`, normalized
/// by the `[a . A]` mass.
pub fn two_sided_measure(sys: &System, f: &ConeVector, t: f64, n_max: usize, c: &SlowFunction, depth: usize) -> Result<CylinderMeasure> {
    Ok(two_sided_measures(sys, f, &[t], n_max, c, depth)?.remove(0))
}

/// [`two_sided_measure`] at every point of `grid`, sharing one pass over the
/// word layers.
pub fn two_sided_measures(sys: &System, f: &ConeVector, grid: &[f64], n_max: usize, c: &SlowFunction, depth: usize) -> Result<Vec<CylinderMeasure>> {
    let spec = &sys.spec;
    if spec.memory != 1 || !spec.is_full_shift() {
        return Err(Error::Domain("two-sided measures are built for full shifts with memory-1 potentials".into()));
    }
    if grid.iter().any(|&t| !(t > 0.0)) || depth == 0 || depth >= n_max {
        return Err(Error::Argument("need t > 0 and 1 <= depth < N".into()));
    }
    let betas: Vec<Vec<f64>> = grid.iter().map(|t| (0..=n_max).map(|n| (c.log_c(n as u64) - n as f64 * t.ln()).exp()).collect()).collect();
    let past = aggregates(sys, Scope::From(spec.letter_A), &betas, n_max, depth)?;
    let future = aggregates(sys, Scope::To(spec.letter_a), &betas, n_max, depth)?;
    let k = spec.alphabet_size as Letter;
    let words = |n: usize| -> Vec<Vec<Letter>> {
        if n == 0 {
            vec![vec![]]
        } else {
            (0..k).flat_map(|b| spec.words_from(b, n)).collect()
        }
    };
    let mut keys = Vec::new();
    for total in 1..=depth {
        for p in 0..=total {
            for u in words(p) {
                for v in words(total - p) {
                    keys.push((u.clone(), v));
                }
            }
        }
    }
    past.into_iter()
        .zip(future)
        .zip(betas)
        .zip(grid)
        .map(|(((past, future), beta), &t)| {
            let sides = Sides { past, future, beta };
            let mass = |u: &[Letter], v: &[Letter]| -> Result<f64> {
                pair_mass(sys, f, past_density(sys, &sides, u, n_max)?, future_density(sys, &sides, v, n_max)?)
            };
            let normalizer = mass(&[spec.letter_a], &[spec.letter_A])?;
            if !(normalizer > 0.0) || !normalizer.is_finite() {
                return Err(Error::Guard(format!("[a.A] mass {normalizer} is not positive and finite")));
            }
            let ms: Vec<f64> = keys.par_iter().map(|(u, v)| mass(u, v).map(|m| m / normalizer)).collect::<Result<_>>()?;
            let masses: BTreeMap<CylKey, f64> = keys.iter().zip(ms).map(|((u, v), m)| (CylKey::two_sided(u, v), m)).collect();
            Ok(CylinderMeasure {
                mode: Mode::TwoSided,
                t,
                n_max,
                c_id: c.id.clone(),
                f_id: super::onesided::describe(f),
                depth,
                masses,
                normalizer,
                tail_mass: sides.beta[n_max],
                pruned_mass: 0.0,
            })
        })
        .collect()
}

/// `sum_b m([. b])`.
pub fn total_mass(measure: &CylinderMeasure, alphabet_size: usize) -> f64 {
    (0..alphabet_size as Letter).map(|b| measure.mass2(&[], &[b])).sum()
}

#[derive(Clone, Debug, Serialize)]
pub struct InvarianceReport {
    pub max_abs: f64,
    /// `max |m(E) - m(sigma^{-1} E)| / m(E)` over cylinders of positive mass.
    pub max_rel: f64,
}

/// Compares `m([U . V])` with `m(sigma^{-1} [U . V])` for all `|U| + |V| <= depth`
/// over the full shift on `alphabet_size` letters; `m` must be known on
/// cylinders of total length `depth + 1`.
pub fn shift_invariance_defect(m: &dyn Fn(&[Letter], &[Letter]) -> f64, alphabet_size: usize, depth: usize) -> InvarianceReport {
    let k = alphabet_size as Letter;
    let mut words: Vec<Vec<Vec<Letter>>> = vec![vec![vec![]]];
    for n in 1..=depth {
        let next = words[n - 1].iter().flat_map(|w| (0..k).map(move |b| [w.as_slice(), &[b]].concat())).collect();
        words.push(next);
    }
    let (mut max_abs, mut max_rel) = (0.0f64, 0.0f64);
    for total in 1..=depth {
        for p in 0..=total {
            for u in &words[p] {
                for v in &words[total - p] {
                    let here = m(u, v);
                    let pre = if p == 0 {
                        (0..k).map(|b| m(&[], &[[b].as_slice(), v].concat())).sum()
                    } else {
                        m(&u[..p - 1], &[&u[p - 1..], v.as_slice()].concat())
                    };
                    let d = (here - pre).abs();
                    max_abs = max_abs.max(d);
                    if here > 0.0 {
                        max_rel = max_rel.max(d / here);
                    }
                }
            }
        }
    }
    InvarianceReport { max_abs, max_rel }
}

/// Largest relative deviation of the total-mass-normalized cylinders from the
/// Bernoulli product of the letter weights.
pub fn bernoulli_deviation(measure: &CylinderMeasure, sys: &System) -> f64 {
    let total = total_mass(measure, sys.spec.alphabet_size);
    measure
        .masses
        .iter()
        .map(|(key, m)| {
            let prod: f64 = key.past.iter().chain(&key.future).map(|&b| sys.spec.weight(&[b])).product();
            (m / total - prod).abs() / prod
        })
        .fold(0.0, f64::max)
}
