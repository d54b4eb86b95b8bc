//! Truncated thermodynamic G-densities, Gram sequences and convergence parameters.

use serde::Serialize;

use crate::engine::{ElemMap, Engine, EngineOptions, StateMap};
use crate::error::{Error, Result};
use crate::groups::Elem;
use crate::repspace::{self, radial::RadialWalk, ConeVector, Density};
use crate::shiftspace::Letter;
use crate::slowvar::SlowFunction;
use crate::system::System;

/// Which first/last letters the word sums range over.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Scope {
    /// Words from the first letter to the second.
    Pair(Letter, Letter),
    /// Words starting with the letter, any last letter.
    From(Letter),
    /// Words ending with the letter, any first letter.
    To(Letter),
    /// All admissible words.
    All,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GramKind {
    /// `sum_w R_n <rho(s(w)) f, f>`.
    F,
    /// Order-`n` part of `<phi * f, phi^* * f>`.
    Star,
    /// Order-`n` part of `<phi * f, phi * f>`.
    Full,
}

/// Streams the word layers `n = 1..=n_max`: `visit(n, layer)` receives the map
/// `g -> sum R_n(w x)` over words in scope with marking product `g`.
pub fn for_each_layer(
    sys: &System,
    scope: Scope,
    n_max: usize,
    opts: EngineOptions,
    mut visit: impl FnMut(usize, &ElemMap) -> Result<()>,
) -> Result<f64> {
    let grp = Some((&sys.group, &sys.marking));
    let tail = sys.tail_letters();
    let collapsed = crate::engine::Contexts::collapsed(&sys.spec).is_some();
    let engine = if collapsed {
        Engine::new_collapsed(&sys.spec, grp, opts)
    } else {
        Engine::new(&sys.spec, grp, opts)
    };
    match scope {
        Scope::Pair(b0, b1) => {
            let mut state = engine.initial(&[b0])?;
            for n in 1..=n_max {
                let layer = if collapsed {
                    if n == 1 {
                        if b0 == b1 {
                            Engine::marginal(&state)
                        } else {
                            ElemMap::default()
                        }
                    } else {
                        let l = engine.project_end_collapsed(&state, b1);
                        state = engine.step(&state)?;
                        l
                    }
                } else {
                    let l = engine.project_end(&state, b1, &tail);
                    if n < n_max {
                        state = engine.step(&state)?;
                    }
                    l
                };
                visit(n, &layer)?;
            }
        }
        Scope::From(b0) => {
            let mut state = engine.initial(&[b0])?;
            for n in 1..=n_max {
                if n > 1 {
                    state = engine.step(&state)?;
                }
                let layer = if collapsed { Engine::marginal(&state) } else { project_any(&engine, &state, &tail) };
                visit(n, &layer)?;
            }
        }
        Scope::To(b1) => {
            let mut state = engine.initial(&[])?;
            for n in 1..=n_max {
                let layer = if collapsed {
                    engine.project_end_collapsed(&state, b1)
                } else {
                    state = engine.step(&state)?;
                    engine.project_end(&state, b1, &tail)
                };
                if collapsed {
                    state = engine.step(&state)?;
                }
                visit(n, &layer)?;
            }
        }
        Scope::All => {
            let mut state = engine.initial(&[])?;
            for n in 1..=n_max {
                state = engine.step(&state)?;
                let layer = if collapsed { Engine::marginal(&state) } else { project_any(&engine, &state, &tail) };
                visit(n, &layer)?;
            }
        }
    }
    Ok(engine.pruned_mass())
}

fn project_any(engine: &Engine, state: &StateMap, tail: &[Letter]) -> ElemMap {
    let mut out = ElemMap::default();
    for ((c, g), w) in state {
        if let Some(f) = engine.ctx.tail_factor(engine.spec, *c, tail) {
            *out.entry(g.clone()).or_insert(0.0) += w * f;
        }
    }
    out
}

#[derive(Clone, Debug, Serialize)]
#[allow(non_snake_case)]
pub struct DensityParams {
    pub A: Letter,
    pub a: Letter,
    pub t: f64,
    pub n_max: usize,
    pub c_id: String,
}

/// `phi^{A,a}_{c;<=N}[t]` with its per-length layers.
#[derive(Clone, Debug)]
pub struct GDensity {
    pub params: DensityParams,
    /// `layers[n-1]`, kept only on request.
    pub layers: Vec<Density>,
    /// Total mass of each layer, `sum_w R_n(w x)`.
    pub layer_mass: Vec<f64>,
    pub aggregate: Density,
    /// `zeta_{c;<=N}[t] = sum_n t^{-n} c_n sum_w R_n(w x)`.
    pub zeta: f64,
    pub pruned_mass: f64,
}

/// Builds `phi^{B,b}_{c;<=N}[t]` for an arbitrary letter pair.
#[allow(clippy::too_many_arguments)]
pub fn build_density_pair(
    sys: &System,
    b0: Letter,
    b1: Letter,
    t: f64,
    n_max: usize,
    c: &SlowFunction,
    keep_layers: bool,
    opts: EngineOptions,
) -> Result<GDensity> {
    if !(t > 0.0) || n_max == 0 {
        return Err(Error::Argument("need t > 0 and N >= 1".into()));
    }
    let mut layers = Vec::new();
    let mut layer_mass = Vec::with_capacity(n_max);
    let mut agg = ElemMap::default();
    let mut zeta = 0.0;
    let lt = t.ln();
    let pruned = for_each_layer(sys, Scope::Pair(b0, b1), n_max, opts, |n, layer| {
        let w = (c.log_c(n as u64) - n as f64 * lt).exp();
        let mass = layer.values().sum::<f64>() + 0.0;
        layer_mass.push(mass);
        zeta += w * mass;
        for (g, x) in layer {
            *agg.entry(g.clone()).or_insert(0.0) += w * x;
        }
        if keep_layers {
            layers.push(Density::from_map(layer.clone()));
        }
        Ok(())
    })?;
    Ok(GDensity {
        params: DensityParams { A: b0, a: b1, t, n_max, c_id: c.id.clone() },
        layers,
        layer_mass,
        aggregate: Density::from_map(agg),
        zeta,
        pruned_mass: pruned,
    })
}

/// Builds `phi^{A,a}_{c;<=N}[t]` for the distinguished letters of the system.
pub fn build_density(sys: &System, t: f64, n_max: usize, c: &SlowFunction, keep_layers: bool, opts: EngineOptions) -> Result<GDensity> {
    build_density_pair(sys, sys.spec.letter_A, sys.spec.letter_a, t, n_max, c, keep_layers, opts)
}

/// `a_n` for `n = 0..=n_max` (`a_0 = 0`).
pub fn gram_sequence(kind: GramKind, f: &ConeVector, sys: &System, scope: Scope, n_max: usize, opts: EngineOptions) -> Result<Vec<f64>> {
    if n_max < 2 {
        return Err(Error::Argument("need N_max >= 2".into()));
    }
    let is_delta_e = f.support.len() == 1 && f.get(&sys.group.base_point()) > 0.0;
    let radial_scope = matches!(scope, Scope::All | Scope::Pair(..));
    if let (Some(rank), true, false, true) = (sys.radial_rank(), is_delta_e, kind == GramKind::Star, radial_scope) {
        let s = f.get(&sys.group.base_point());
        return Ok(radial_gram(sys, rank, kind, scope, n_max).into_iter().map(|x| x * s * s).collect());
    }
    let g = &sys.group;
    let mut a = vec![0.0; n_max + 1];
    match kind {
        GramKind::F => {
            for_each_layer(sys, scope, n_max, opts, |n, layer| {
                let mut s = 0.0;
                for (h, w) in layer {
                    s += w * repspace::matrix_coefficient(g, h, f, f)?;
                }
                a[n] = s;
                Ok(())
            })?;
        }
        GramKind::Star | GramKind::Full => {
            let mut plain = Vec::with_capacity(n_max);
            let mut other = Vec::with_capacity(n_max);
            for_each_layer(sys, scope, n_max, opts, |_, layer| {
                let d = Density::from_map(layer.clone());
                plain.push(repspace::convolve(g, &d, f)?);
                if kind == GramKind::Star {
                    other.push(repspace::convolve(g, &repspace::star(g, &d), f)?);
                }
                Ok(())
            })?;
            let other = if kind == GramKind::Star { &other } else { &plain };
            for n in 2..=n_max {
                let mut s = 0.0;
                for m in 1..n {
                    s += repspace::inner(&plain[m - 1], &other[n - m - 1])?;
                }
                a[n] = s;
            }
        }
    }
    Ok(a)
}

/// Radial evaluation for the simple walk on `F_r` with `f = delta_e`.
fn radial_gram(sys: &System, rank: usize, kind: GramKind, scope: Scope, n_max: usize) -> Vec<f64> {
    let walk = RadialWalk::new(rank);
    let p = 1.0 / (2 * rank) as f64;
    let mut u = vec![1.0];
    let mut prof: Vec<Vec<f64>> = Vec::with_capacity(n_max + 1);
    // per-element profiles up to radius 2 suffice for every case below
    for k in 0..=n_max {
        if k > 0 {
            u = walk.apply(&u);
        }
        prof.push(u.iter().take(3).cloned().chain(std::iter::repeat(0.0)).take(3).collect());
    }
    let mut a = vec![0.0; n_max + 1];
    match scope {
        Scope::All => {
            for n in 1..=n_max {
                a[n] = match kind {
                    GramKind::F => prof[n][0],
                    _ => (n - 1) as f64 * prof[n][0],
                };
            }
        }
        Scope::From(_) | Scope::To(_) => unreachable!("radial path only covers pair and full scopes"),
        Scope::Pair(b0, b1) => {
            let g = &sys.group;
            let k = g.compose(&g.inverse(sys.label(b0)), &g.inverse(sys.label(b1)));
            let l = g.length(&k);
            let same = b0 == b1;
            for n in 1..=n_max {
                a[n] = match kind {
                    GramKind::F => {
                        if n >= 2 {
                            p * p * prof[n - 2][l]
                        } else {
                            0.0
                        }
                    }
                    _ => {
                        let mut s = 0.0;
                        for m in 1..n {
                            let j = n - m;
                            s += match (m, j) {
                                (1, 1) => if same { p * p } else { 0.0 },
                                (1, j) | (j, 1) => if same { p * p * p * prof[j - 2][1] } else { 0.0 },
                                _ => p.powi(4) * prof[n - 4][0],
                            };
                        }
                        s
                    }
                };
            }
        }
    }
    a
}

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GammaMethod {
    RootTest,
    TSweep,
}

/// Estimated radius-of-convergence reciprocal of `sum a_n t^{-n}`.
#[derive(Clone, Debug, Serialize)]
pub struct GammaEstimate {
    /// `exp` of the slope of the fit `log a_n = C + n log(gamma) - beta log n`.
    pub value: f64,
    pub method: GammaMethod,
    /// Plain Cauchy–Hadamard value `max a_n^{1/n}` over the window.
    pub root_test: f64,
    pub beta: f64,
    pub window: (usize, usize),
    pub points: usize,
    pub residual: f64,
    #[serde(skip)]
    pub coefficients: Vec<f64>,
}

/// Fits the tail window of `a` (index = order, `a[0]` ignored). Zero terms,
/// such as odd orders of bipartite walks, are skipped.
pub fn estimate_gamma(a: &[f64], window_frac: f64) -> Result<GammaEstimate> {
    let n_max = a.len().saturating_sub(1);
    let lo = (n_max as f64 * (1.0 - window_frac)).floor().max(1.0) as usize;
    let pts: Vec<(f64, f64)> = (lo..=n_max).filter(|&n| a[n] > 0.0).map(|n| (n as f64, a[n].ln())).collect();
    if pts.len() < 5 {
        return Err(Error::Estimation(format!("only {} non-zero coefficients in the fit window", pts.len())));
    }
    let root_test = pts.iter().map(|(n, l)| (l / n).exp()).fold(0.0, f64::max);
    let scale = n_max as f64;
    // columns 1, n/N, ln(n/N)
    let rows: Vec<[f64; 3]> = pts.iter().map(|(n, _)| [1.0, n / scale, (n / scale).ln()]).collect();
    let mut ata = [[0.0; 3]; 3];
    let mut atb = [0.0; 3];
    for (r, (_, y)) in rows.iter().zip(&pts) {
        for i in 0..3 {
            atb[i] += r[i] * y;
            for j in 0..3 {
                ata[i][j] += r[i] * r[j];
            }
        }
    }
    let (value, beta, coef) = match solve3(ata, atb) {
        Some(c) => ((c[1] / scale).exp(), -c[2], c),
        None => (root_test, 0.0, [0.0; 3]),
    };
    let residual = (rows
        .iter()
        .zip(&pts)
        .map(|(r, (_, y))| (coef[0] * r[0] + coef[1] * r[1] + coef[2] * r[2] - y).powi(2))
        .sum::<f64>()
        / pts.len() as f64)
        .sqrt();
    Ok(GammaEstimate {
        value,
        method: GammaMethod::RootTest,
        root_test,
        beta,
        window: (lo, n_max),
        points: pts.len(),
        residual,
        coefficients: a.to_vec(),
    })
}

pub(crate) fn solve3(mut m: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[piv][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, piv);
        b.swap(col, piv);
        for r in 0..3 {
            if r != col {
                let f = m[r][col] / m[col][col];
                for c in 0..3 {
                    m[r][c] -= f * m[col][c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    Some([b[0] / m[0][0], b[1] / m[1][1], b[2] / m[2][2]])
}

/// Gram sequence weighted by `c_n`, then [`estimate_gamma`].
pub fn gamma_estimate(
    kind: GramKind,
    f: &ConeVector,
    sys: &System,
    scope: Scope,
    n_max: usize,
    c: &SlowFunction,
    opts: EngineOptions,
) -> Result<GammaEstimate> {
    let mut a = gram_sequence(kind, f, sys, scope, n_max, opts)?;
    if !c.is_unit() {
        for (n, x) in a.iter_mut().enumerate() {
            *x *= c.c(n as u64);
        }
    }
    estimate_gamma(&a, 1.0 / 3.0)
}

/// Identity element helper for callers that only hold a system.
pub fn identity(sys: &System) -> Elem {
    sys.group.identity()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groups::Elem;

    fn e(v: &[i32]) -> Elem {
        Elem::from_slice(v)
    }

    #[test]
    fn single_term_density() {
        let sys = System::lattice_walk(1, &[0.75, 0.25]).unwrap();
        let d = build_density_pair(&sys, 0, 0, 2.0, 1, &SlowFunction::unit(), true, EngineOptions::exact()).unwrap();
        assert!((d.aggregate.get(&e(&[1])) - 0.75 / 2.0).abs() < 1e-15);
    }

    #[test]
    fn two_step_masses() {
        let f2 = System::free_simple(2);
        let mut mass_e = 0.0;
        for b0 in 0..4 {
            for b1 in 0..4 {
                let d = build_density_pair(&f2, b0, b1, 1.0, 2, &SlowFunction::unit(), true, EngineOptions::exact()).unwrap();
                mass_e += d.layers[1].get(&Elem::default());
            }
        }
        assert!((mass_e - 0.25).abs() < 1e-15);
        let z = System::lattice_simple(1);
        let t: f64 = 1.3;
        let mut at0 = 0.0;
        for b0 in 0..2 {
            for b1 in 0..2 {
                let d = build_density_pair(&z, b0, b1, t, 2, &SlowFunction::unit(), false, EngineOptions::exact()).unwrap();
                at0 += d.aggregate.get(&e(&[0]));
            }
        }
        assert!((at0 - 2.0 * 0.25 / (t * t)).abs() < 1e-15);
    }

    #[test]
    fn zeta_is_l1_norm() {
        let sys = System::lattice_walk(2, &[0.4, 0.1, 0.3, 0.2]).unwrap();
        let c = crate::slowvar::construct_slow_from_log_d(&|n| -2.0 * (n as f64).ln(), 1 << 30, "t").unwrap();
        let d = build_density_pair(&sys, 1, 2, 0.9, 12, &c, false, EngineOptions::exact()).unwrap();
        assert!((d.aggregate.total() - d.zeta).abs() <= 1e-10 * d.zeta);
    }

    #[test]
    fn radial_gram_matches_generic() {
        let sys = System::free_simple(2);
        let f = ConeVector::delta_e(&sys.group);
        for scope in [Scope::All, Scope::Pair(0, 0), Scope::Pair(0, 2), Scope::Pair(1, 0)] {
            for kind in [GramKind::F, GramKind::Full] {
                let fast = gram_sequence(kind, &f, &sys, scope, 9, EngineOptions::exact()).unwrap();
                let g = &sys.group;
                let mut slow = vec![0.0; 10];
                let mut vs = Vec::new();
                for_each_layer(&sys, scope, 9, EngineOptions::exact(), |n, layer| {
                    slow[n] = layer.get(&g.identity()).copied().unwrap_or(0.0);
                    vs.push(ConeVector { space: f.space.clone(), support: layer.clone() });
                    Ok(())
                })
                .unwrap();
                if kind == GramKind::Full {
                    for n in 2..=9 {
                        slow[n] = (1..n).map(|m| repspace::inner(&vs[m - 1], &vs[n - m - 1]).unwrap()).sum();
                    }
                    slow[1] = 0.0;
                }
                for n in 1..=9 {
                    assert!((fast[n] - slow[n]).abs() < 1e-15, "{scope:?} {kind:?} n={n}: {} vs {}", fast[n], slow[n]);
                }
            }
        }
    }

    #[test]
    fn from_and_to_scopes_sum_pairs() {
        let sys = System::lattice_walk(1, &[0.6, 0.4]).unwrap();
        for (scope, pairs) in [(Scope::From(1), [(1, 0), (1, 1)]), (Scope::To(0), [(0, 0), (1, 0)])] {
            let mut whole = Vec::new();
            for_each_layer(&sys, scope, 6, EngineOptions::exact(), |_, l| {
                whole.push(l.clone());
                Ok(())
            })
            .unwrap();
            for n in 1..=6 {
                let mut sum = ElemMap::default();
                for (b0, b1) in pairs {
                    for_each_layer(&sys, Scope::Pair(b0, b1), n, EngineOptions::exact(), |k, l| {
                        if k == n {
                            for (g, x) in l {
                                *sum.entry(g.clone()).or_insert(0.0) += x;
                            }
                        }
                        Ok(())
                    })
                    .unwrap();
                }
                for (g, x) in &sum {
                    assert!((whole[n - 1].get(g).copied().unwrap_or(0.0) - x).abs() < 1e-15);
                }
                assert_eq!(sum.len(), whole[n - 1].len());
            }
        }
    }

    #[test]
    fn parity_and_two_step_return() {
        let z = System::lattice_simple(1);
        let f = ConeVector::delta_e(&z.group);
        let a = gram_sequence(GramKind::F, &f, &z, Scope::All, 9, EngineOptions::exact()).unwrap();
        assert!(a.iter().skip(1).step_by(2).all(|&x| x == 0.0));
        let f2 = System::free_simple(2);
        let a = gram_sequence(GramKind::F, &ConeVector::delta_e(&f2.group), &f2, Scope::All, 4, EngineOptions::exact()).unwrap();
        assert!((a[2] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn biased_walk_gamma() {
        let z = System::lattice_walk(1, &[0.75, 0.25]).unwrap();
        let f = ConeVector::delta_e(&z.group);
        let est = gamma_estimate(GramKind::F, &f, &z, Scope::All, 400, &SlowFunction::unit(), EngineOptions::default()).unwrap();
        assert!((est.value - 3f64.sqrt() / 2.0).abs() < 5e-3, "{est:?}");
    }

    #[test]
    fn estimator_rejects_empty_window() {
        assert!(matches!(estimate_gamma(&[0.0; 20], 1.0 / 3.0), Err(Error::Estimation(_))));
    }
}
