//! Transfer matrices, Gurevič pressure, the SPR parameter, equilibrium chains
//! and abelianization tilts.

use rustc_hash::FxHashMap;
use serde::Serialize;

use crate::engine::{Engine, EngineOptions};
use crate::error::{Error, Result};
use crate::gdensity::estimate_gamma;
use crate::groups::{Elem, GroupKind};
use crate::repspace::radial::RadialWalk;
use crate::shiftspace::{Letter, ShiftSpec};
use crate::system::System;

const POWER_TOL: f64 = 1e-13;
const POWER_CAP: usize = 1_000_000;

/// Admissible words of length `m` with their shift-successors.
#[derive(Clone, Debug)]
pub struct BlockGraph {
    pub blocks: Vec<Vec<Letter>>,
    pub index: FxHashMap<Vec<Letter>, usize>,
    pub succ: Vec<Vec<usize>>,
}

impl BlockGraph {
    pub fn new(spec: &ShiftSpec) -> Self {
        let m = spec.memory.max(1);
        let mut blocks = Vec::new();
        for b in 0..spec.alphabet_size as Letter {
            blocks.extend(spec.words_from(b, m));
        }
        let index: FxHashMap<_, _> = blocks.iter().cloned().enumerate().map(|(i, w)| (w, i)).collect();
        let succ = blocks
            .iter()
            .map(|c| {
                (0..spec.alphabet_size as Letter)
                    .filter(|&b| spec.allowed(c[m - 1], b))
                    .filter_map(|b| {
                        let mut n = c[1..].to_vec();
                        n.push(b);
                        index.get(&n).copied()
                    })
                    .collect()
            })
            .collect();
        BlockGraph { blocks, index, succ }
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }
}

/// Perron data of the (tilted) transfer matrix on length-`m` blocks.
///
/// `matrix[c][c'] = R(c) exp<xi, psi(c_0)>` when `c'` follows `c`. `nu` is the
/// right eigenvector, which gives the conformal cylinder weights; `h` is the
/// left eigenvector, the eigenfunction of the transfer operator as a function
/// of the first block. `nu` sums to 1 and `<h, nu> = 1`.
#[derive(Clone, Debug, Serialize)]
pub struct TransferData {
    #[serde(skip)]
    pub graph: BlockGraph,
    pub matrix: Vec<Vec<f64>>,
    pub spectral_radius: f64,
    pub h: Vec<f64>,
    pub nu: Vec<f64>,
    pub pressure: f64,
    pub residual: f64,
    pub memory: usize,
}

/// Abelianized marking: one real vector per letter.
pub fn abelianized_marking(sys: &System) -> Result<Vec<Vec<f64>>> {
    let labels = &sys.marking.labels;
    match sys.group.kind() {
        GroupKind::Free { rank } => Ok(labels
            .iter()
            .map(|g| {
                let mut v = vec![0.0; *rank];
                for &x in g.as_slice() {
                    v[x.unsigned_abs() as usize - 1] += x.signum() as f64;
                }
                v
            })
            .collect()),
        GroupKind::FreeAbelian { .. } | GroupKind::AbelianQuotient { .. } => {
            Ok(labels.iter().map(|g| g.as_slice().iter().map(|&x| x as f64).collect()).collect())
        }
        GroupKind::Permutation { .. } => {
            Err(Error::Domain("abelianization is only available for free and abelian groups".into()))
        }
    }
}

fn tilted_matrix(spec: &ShiftSpec, graph: &BlockGraph, tilt: &[f64], psi: Option<&[Vec<f64>]>) -> Vec<Vec<f64>> {
    let k = graph.len();
    let mut m = vec![vec![0.0; k]; k];
    for (i, c) in graph.blocks.iter().enumerate() {
        let mut w = spec.weight(c);
        if let Some(psi) = psi {
            let s: f64 = tilt.iter().zip(&psi[c[0] as usize]).map(|(x, y)| x * y).sum();
            w *= s.exp();
        }
        for &j in &graph.succ[i] {
            m[i][j] = w;
        }
    }
    m
}

fn power(m: &[Vec<f64>], transpose: bool) -> Result<(f64, Vec<f64>, f64)> {
    let k = m.len();
    let apply = |v: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; k];
        for i in 0..k {
            for j in 0..k {
                let x = if transpose { m[j][i] } else { m[i][j] };
                out[i] += x * v[j];
            }
        }
        out
    };
    let mut v = vec![1.0 / k as f64; k];
    for _ in 0..POWER_CAP {
        let mv = apply(&v);
        let lambda: f64 = mv.iter().sum();
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::Convergence("transfer matrix has no positive Perron root".into()));
        }
        let nv: Vec<f64> = mv.iter().map(|x| x / lambda).collect();
        let diff = nv.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = nv;
        if diff <= POWER_TOL * v.iter().cloned().fold(0.0, f64::max) {
            let mv = apply(&v);
            let lambda: f64 = mv.iter().sum();
            let res = mv.iter().zip(&v).map(|(a, b)| (a - lambda * b).abs()).sum::<f64>() / v.iter().sum::<f64>();
            return Ok((lambda, v, res / lambda));
        }
    }
    Err(Error::Convergence(format!("power iteration did not converge in {POWER_CAP} steps")))
}

/// Perron data of the transfer matrix tilted by `exp<tilt, psi>`; `psi` is
/// the abelianized marking (ignored when `tilt` is empty).
pub fn transfer_spectrum(spec: &ShiftSpec, tilt: &[f64], psi: Option<&[Vec<f64>]>) -> Result<TransferData> {
    let graph = BlockGraph::new(spec);
    if let Some(p) = psi {
        if p.iter().any(|v| v.len() != tilt.len()) {
            return Err(Error::Argument("tilt dimension does not match the abelianized marking".into()));
        }
    }
    let matrix = tilted_matrix(spec, &graph, tilt, psi.filter(|_| !tilt.is_empty()));
    let (lambda, nu, res) = power(&matrix, false)?;
    let (_, mut h, _) = power(&matrix, true)?;
    let norm: f64 = h.iter().zip(&nu).map(|(a, b)| a * b).sum();
    h.iter_mut().for_each(|x| *x /= norm);
    Ok(TransferData { graph, matrix, spectral_radius: lambda, h, nu, pressure: lambda.ln(), residual: res, memory: spec.memory.max(1) })
}

/// Rescales the potential by `exp(-P)` so that the pressure vanishes.
pub fn normalize(spec: &ShiftSpec) -> Result<ShiftSpec> {
    let td = transfer_spectrum(spec, &[], None)?;
    Ok(spec.shifted(td.pressure))
}

impl TransferData {
    /// Conformal measure of a cylinder.
    pub fn nu_cylinder(&self, w: &[Letter]) -> f64 {
        let m = self.memory;
        if w.len() < m {
            return self.extensions(w).map(|c| self.nu[c]).sum();
        }
        let mut ctx = Vec::with_capacity(w.len() - m + 1);
        for i in 0..=w.len() - m {
            match self.graph.index.get(&w[i..i + m]) {
                Some(&c) => ctx.push(c),
                None => return 0.0,
            }
        }
        let mut x = self.nu[*ctx.last().unwrap()];
        for p in ctx.windows(2) {
            x *= self.matrix[p[0]][p[1]] / self.spectral_radius;
        }
        x
    }

    /// Equilibrium measure of a cylinder.
    pub fn mu_cylinder(&self, w: &[Letter]) -> f64 {
        let m = self.memory;
        if w.len() < m {
            return self.extensions(w).map(|c| self.h[c] * self.nu[c]).sum();
        }
        match self.graph.index.get(&w[..m]) {
            Some(&c) => self.h[c] * self.nu_cylinder(w),
            None => 0.0,
        }
    }

    fn extensions<'a>(&'a self, w: &'a [Letter]) -> impl Iterator<Item = usize> + 'a {
        self.graph.blocks.iter().enumerate().filter(move |(_, b)| b.starts_with(w)).map(|(i, _)| i)
    }
}

/// Stationary Markov chain on blocks realizing the equilibrium state.
#[derive(Clone, Debug, Serialize)]
pub struct MarkovChain {
    pub blocks: Vec<Vec<Letter>>,
    pub rows: Vec<Vec<f64>>,
    pub stationary: Vec<f64>,
}

impl MarkovChain {
    /// Emitted letter of a block state.
    pub fn letter(&self, state: usize) -> Letter {
        self.blocks[state][0]
    }

    pub fn max_row_defect(&self) -> f64 {
        self.rows.iter().map(|r| (r.iter().sum::<f64>() - 1.0).abs()).fold(0.0, f64::max)
    }
}

/// `P(i, j) = M(i, j) nu(j) / (lambda nu(i))` with stationary law `h nu`.
pub fn equilibrium_chain(td: &TransferData) -> MarkovChain {
    let k = td.graph.len();
    let rows = (0..k)
        .map(|i| (0..k).map(|j| td.matrix[i][j] * td.nu[j] / (td.spectral_radius * td.nu[i])).collect())
        .collect();
    let stationary = (0..k).map(|i| td.h[i] * td.nu[i]).collect();
    MarkovChain { blocks: td.graph.blocks.clone(), rows, stationary }
}

#[derive(Clone, Debug, Serialize)]
pub struct GibbsCheck {
    pub conformal_defect: f64,
    pub gibbs_min: f64,
    pub gibbs_max: f64,
    pub cylinders: usize,
}

/// Conformal defect `|nu(L 1_[w]) / lambda - nu([w])| / nu([w])` and the range of
/// `mu([w]) e^{nP} / R_n(w y)` over all cylinders of length `1..=depth`.
pub fn conformal_and_gibbs_check(spec: &ShiftSpec, td: &TransferData, depth: usize) -> Result<GibbsCheck> {
    if depth == 0 || depth > 10 {
        return Err(Error::Argument("depth must be in 1..=10".into()));
    }
    let m = td.memory;
    let k = spec.alphabet_size as Letter;
    let (mut defect, mut lo, mut hi, mut count) = (0.0f64, f64::INFINITY, 0.0f64, 0);
    for n in 1..=depth {
        for b in 0..k {
            for w in spec.words_from(b, n) {
                let nu_w = td.nu_cylinder(&w);
                if nu_w <= 0.0 {
                    continue;
                }
                // nu(L 1_[w]): the first block's weight times the image cylinder
                let lw: f64 = if n >= m {
                    spec.weight(&w[..m]) * img(td, spec, w[0], &w[1..])
                } else {
                    td.extensions(&w).map(|c| spec.weight(&td.graph.blocks[c]) * img(td, spec, td.graph.blocks[c][0], &td.graph.blocks[c][1..])).sum()
                };
                defect = defect.max((lw / td.spectral_radius - nu_w).abs() / nu_w);
                let y = first_continuation(spec, &w, m.saturating_sub(1));
                let r = spec.birkhoff_weight_with(&w, &y)?;
                let g = td.mu_cylinder(&w) * (n as f64 * td.pressure).exp() / r;
                lo = lo.min(g);
                hi = hi.max(g);
                count += 1;
            }
        }
    }
    Ok(GibbsCheck { conformal_defect: defect, gibbs_min: lo, gibbs_max: hi, cylinders: count })
}

// nu of the cylinder `v` following `prev`; the empty word means every block
// that may follow `prev`.
fn img(td: &TransferData, spec: &ShiftSpec, prev: Letter, v: &[Letter]) -> f64 {
    if v.is_empty() {
        td.graph.blocks.iter().zip(&td.nu).filter(|(b, _)| spec.allowed(prev, b[0])).map(|(_, x)| x).sum()
    } else {
        td.nu_cylinder(v)
    }
}

/// Lexicographically least admissible continuation of `w` of length `len`.
pub fn first_continuation(spec: &ShiftSpec, w: &[Letter], len: usize) -> Vec<Letter> {
    let mut y = Vec::with_capacity(len);
    let mut last = *w.last().expect("non-empty word");
    for _ in 0..len {
        let b = (0..spec.alphabet_size as Letter).find(|&b| spec.allowed(last, b)).expect("irreducible shift");
        y.push(b);
        last = b;
    }
    y
}

/// Periodic sums `Z_n` through `[B]` (`B` = the distinguished letter `A`),
/// `n = 0..=n_max` with `Z_0 = 0`; `constrained` keeps only periodic words with
/// trivial marking product.
pub fn periodic_sums(sys: &System, n_max: usize, constrained: bool) -> Result<Vec<f64>> {
    let spec = &sys.spec;
    let b = spec.letter_A;
    if constrained {
        if let Some(rank) = sys.radial_rank() {
            // words B w with s(B w) = e: one step away from e, then a return
            let walk = RadialWalk::new(rank);
            let p = 1.0 / (2 * rank) as f64;
            let mut u = vec![1.0];
            let mut z = vec![0.0; n_max + 1];
            for n in 1..=n_max {
                z[n] = p * u.get(1).copied().unwrap_or(0.0);
                u = walk.apply(&u);
            }
            return Ok(z);
        }
    }
    let graph = BlockGraph::new(spec);
    let starts: Vec<usize> = (0..graph.len()).filter(|&c| graph.blocks[c][0] == b).collect();
    let weights: Vec<f64> = graph.blocks.iter().map(|c| spec.weight(c)).collect();
    let mut z = vec![0.0; n_max + 1];
    if !constrained {
        for &s in &starts {
            let mut v = vec![0.0; graph.len()];
            v[s] = 1.0;
            for zn in z.iter_mut().skip(1) {
                let mut nv = vec![0.0; graph.len()];
                for (i, &x) in v.iter().enumerate() {
                    if x != 0.0 {
                        for &j in &graph.succ[i] {
                            nv[j] += x * weights[i];
                        }
                    }
                }
                v = nv;
                *zn += v[s];
            }
        }
        return Ok(z);
    }
    let (grp, mk) = (&sys.group, &sys.marking);
    let base = grp.base_point();
    for &s in &starts {
        let mut states: FxHashMap<(usize, Elem), f64> = FxHashMap::default();
        states.insert((s, grp.identity()), 1.0);
        for zn in z.iter_mut().skip(1) {
            let mut next: FxHashMap<(usize, Elem), f64> = FxHashMap::default();
            for ((i, g), x) in &states {
                let ng = grp.compose(g, mk.label(graph.blocks[*i][0]));
                for &j in &graph.succ[*i] {
                    *next.entry((j, ng.clone())).or_insert(0.0) += x * weights[*i];
                }
            }
            grp.check_budget(next.len())?;
            states = next;
            *zn += states.iter().filter(|((i, g), _)| *i == s && grp.shift_point(g, &base) == base).map(|(_, x)| x).sum::<f64>();
        }
    }
    Ok(z)
}

/// Gurevič pressure from periodic sums, fitted as `log Z_n = C + nP - beta log n`
/// over the last half of `1..=n_max`.
pub fn gurevic_pressure(sys: &System, n_max: usize, constrained: bool) -> Result<f64> {
    if n_max < 8 {
        return Err(Error::Argument("gurevic_pressure needs n_max >= 8".into()));
    }
    let z = periodic_sums(sys, n_max, constrained)?;
    if z.iter().all(|&x| x == 0.0) {
        return Err(Error::Estimation("all periodic sums vanish".into()));
    }
    Ok(estimate_gamma(&z, 0.5)?.value.ln())
}

/// First-return coefficients `f_n`, `n = 0..=n_max` (`f_0 = f_1 = 0`).
pub fn first_return_coefficients(spec: &ShiftSpec, n_max: usize) -> Result<Vec<f64>> {
    let (a_big, a) = (spec.letter_A, spec.letter_a);
    let mut f = vec![0.0; n_max + 1];
    if a_big == a {
        let graph = BlockGraph::new(spec);
        let weights: Vec<f64> = graph.blocks.iter().map(|c| spec.weight(c)).collect();
        for s in (0..graph.len()).filter(|&c| graph.blocks[c][0] == a) {
            let mut v = vec![0.0; graph.len()];
            v[s] = 1.0;
            for (n, fnn) in f.iter_mut().enumerate().skip(1) {
                let mut nv = vec![0.0; graph.len()];
                for (i, &x) in v.iter().enumerate() {
                    if x != 0.0 {
                        for &j in &graph.succ[i] {
                            nv[j] += x * weights[i];
                        }
                    }
                }
                if n >= 2 {
                    *fnn += nv[s];
                }
                // paths may not pass through a block starting with A
                for (j, x) in nv.iter_mut().enumerate() {
                    if graph.blocks[j][0] == a {
                        *x = 0.0;
                    }
                }
                v = nv;
            }
        }
        return Ok(f);
    }
    if !spec.allowed(a, a_big) {
        return Ok(f);
    }
    let engine = Engine::new(spec, None, EngineOptions::exact());
    let tail = spec.base_tail.prefix(spec.memory.saturating_sub(1).max(1));
    let mut state = engine.initial(&[a_big])?;
    let allow = move |l: Option<Letter>, b: Letter| !(l == Some(a) && b == a_big);
    for (n, fnn) in f.iter_mut().enumerate().skip(1) {
        if n >= 2 {
            *fnn = engine.project_end(&state, a, &tail).values().sum();
        }
        if n < n_max {
            state = engine.step_with(&state, &allow)?;
        }
    }
    Ok(f)
}

/// Root-test estimate of the first-return series; 0 when the coefficients die out.
pub fn spr_gamma(spec: &ShiftSpec, n_max: usize) -> Result<f64> {
    let f = first_return_coefficients(spec, n_max)?;
    if f[n_max / 2..].iter().all(|&x| x == 0.0) {
        return Ok(0.0);
    }
    Ok(estimate_gamma(&f, 0.5)?.value)
}

#[derive(Clone, Debug, Serialize)]
pub struct PressureReport {
    pub gurevic: f64,
    pub extension: f64,
    pub spr_gamma: f64,
    pub spectral: f64,
    /// Truncated `sum_n e^{-nP} Z_n` of the constrained sums.
    pub zeta: f64,
    /// Truncated first-return series `sum_n e^{-nP} f_n`.
    pub eta: f64,
}

pub fn pressure_report(sys: &System, n_max: usize) -> Result<PressureReport> {
    let gurevic = gurevic_pressure(sys, n_max, false)?;
    let extension = gurevic_pressure(sys, n_max, true)?;
    let spectral = transfer_spectrum(&sys.spec, &[], None)?.pressure;
    let spr = spr_gamma(&sys.spec, n_max)?;
    let z = periodic_sums(sys, n_max, true)?;
    let f = first_return_coefficients(&sys.spec, n_max)?;
    let series = |a: &[f64]| a.iter().enumerate().map(|(n, x)| x * (-(n as f64) * spectral).exp()).sum();
    Ok(PressureReport { gurevic, extension, spr_gamma: spr, spectral, zeta: series(&z), eta: series(&f) })
}

#[derive(Clone, Debug, Serialize)]
pub struct TiltResult {
    pub xi: Vec<f64>,
    pub pressure: f64,
    /// `<xi, psi_ab(b)>` per letter.
    pub psi: Vec<f64>,
    pub gradient_norm: f64,
}

fn tilted_pressure(spec: &ShiftSpec, psi: &[Vec<f64>], xi: &[f64]) -> Result<(f64, Vec<f64>)> {
    let td = transfer_spectrum(spec, xi, Some(psi))?;
    // dP/dxi_j is the equilibrium mean of psi_j
    let mut grad = vec![0.0; xi.len()];
    for (c, blk) in td.graph.blocks.iter().enumerate() {
        let w = td.h[c] * td.nu[c];
        for (j, g) in grad.iter_mut().enumerate() {
            *g += w * psi[blk[0] as usize][j];
        }
    }
    Ok((td.pressure, grad))
}

/// Minimizes the convex map `xi -> log spectral_radius(tilt xi)`.
pub fn tilt_minimize(sys: &System) -> Result<TiltResult> {
    let psi = abelianized_marking(sys)?;
    let d = psi.first().map_or(0, |v| v.len());
    if d == 0 || d > 4 {
        return Err(Error::Argument(format!("tilt dimension {d} outside 1..=4")));
    }
    let spec = &sys.spec;
    let f = |x: &[f64]| tilted_pressure(spec, &psi, x).map(|r| r.0);
    let mut xi = vec![0.0; d];
    let (lo, hi) = (-10.0, 10.0);
    for _sweep in 0..50 {
        let before = xi.clone();
        for j in 0..d {
            let (mut a, mut b) = (lo, hi);
            while b - a > 1e-10 {
                let m1 = a + (b - a) / 3.0;
                let m2 = b - (b - a) / 3.0;
                let mut x1 = xi.clone();
                x1[j] = m1;
                let mut x2 = xi.clone();
                x2[j] = m2;
                if f(&x1)? <= f(&x2)? {
                    b = m2;
                } else {
                    a = m1;
                }
            }
            xi[j] = 0.5 * (a + b);
            if (xi[j] - lo).abs() < 1e-6 || (xi[j] - hi).abs() < 1e-6 {
                return Err(Error::Convergence("tilt search ran into the bracket edge".into()));
            }
        }
        if xi.iter().zip(&before).all(|(a, b)| (a - b).abs() < 1e-11) {
            break;
        }
    }
    // Newton polish with a finite-difference Hessian of the exact gradient
    let eps = 1e-6;
    for _ in 0..20 {
        let (_, g) = tilted_pressure(spec, &psi, &xi)?;
        if norm(&g) < 1e-13 {
            break;
        }
        let mut hess = vec![vec![0.0; d]; d];
        for j in 0..d {
            let mut xp = xi.clone();
            xp[j] += eps;
            let mut xm = xi.clone();
            xm[j] -= eps;
            let (_, gp) = tilted_pressure(spec, &psi, &xp)?;
            let (_, gm) = tilted_pressure(spec, &psi, &xm)?;
            for i in 0..d {
                hess[i][j] = (gp[i] - gm[i]) / (2.0 * eps);
            }
        }
        let Some(step) = solve(hess, g.clone()) else { break };
        let cand: Vec<f64> = xi.iter().zip(&step).map(|(x, s)| x - s).collect();
        let (_, gc) = tilted_pressure(spec, &psi, &cand)?;
        if norm(&gc) >= norm(&g) {
            break;
        }
        xi = cand;
    }
    let (pressure, g) = tilted_pressure(spec, &psi, &xi)?;
    let psi_letters = psi.iter().map(|v| v.iter().zip(&xi).map(|(a, b)| a * b).sum()).collect();
    Ok(TiltResult { xi, pressure, psi: psi_letters, gradient_norm: norm(&g) })
}

/// Tilted pressure at an arbitrary `xi`.
pub fn tilted_pressure_at(sys: &System, xi: &[f64]) -> Result<f64> {
    let psi = abelianized_marking(sys)?;
    Ok(tilted_pressure(&sys.spec, &psi, xi)?.0)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-14 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in 0..n {
                    a[r][c] -= f * a[col][c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}
