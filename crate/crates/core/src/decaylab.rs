//! Monte-Carlo checks of eventual decay of matrix coefficients along typical
//! paths, and the Markov-inequality majorant for the exceedance events.

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::engine::{ElemMap, EngineOptions};
use crate::error::{Error, Result};
use crate::gdensity::{for_each_layer, Scope};
use crate::groups::{Elem, GroupBackend, Marking};
use crate::repspace::{self, radial::RadialWalk, ConeVector, Density};
use crate::shiftspace::Letter;
use crate::system::System;
use crate::thermo::{self, MarkovChain};

/// Name and version of the path generator, echoed in reports.
pub const RNG_NAME: &str = "rand_chacha::ChaCha8Rng 0.3 (seed_from_u64, stream = path index)";

#[derive(Clone, Debug, Serialize)]
pub struct PathSample {
    pub seed: u64,
    pub stream: u64,
    pub letters: Vec<Letter>,
    /// `products[k] = s(x_1 ... x_{k+1})`; empty when no group was given.
    pub products: Vec<Elem>,
}

/// Paths of the stationary chain; path `i` uses stream `i` of the seeded
/// generator, so the result does not depend on the thread count.
pub fn sample_paths(
    chain: &MarkovChain,
    group: Option<(&GroupBackend, &Marking)>,
    count: usize,
    length: usize,
    seed: u64,
) -> Result<Vec<PathSample>> {
    let start = WeightedIndex::new(&chain.stationary).map_err(|e| Error::Argument(format!("stationary law: {e}")))?;
    let rows: Vec<WeightedIndex<f64>> = chain
        .rows
        .iter()
        .map(|r| WeightedIndex::new(r).map_err(|e| Error::Argument(format!("transition row: {e}"))))
        .collect::<Result<_>>()?;
    Ok((0..count as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i);
            let mut letters = Vec::with_capacity(length);
            let mut products = Vec::new();
            let mut state = start.sample(&mut rng);
            let mut g = group.map(|(grp, _)| grp.identity());
            for k in 0..length {
                if k > 0 {
                    state = rows[state].sample(&mut rng);
                }
                let b = chain.letter(state);
                letters.push(b);
                if let (Some((grp, m)), Some(h)) = (group, g.as_mut()) {
                    *h = grp.compose(h, m.label(b));
                    products.push(h.clone());
                }
            }
            PathSample { seed, stream: i, letters, products }
        })
        .collect())
}

/// Equilibrium chain of the system's potential.
pub fn chain_of(sys: &System) -> Result<MarkovChain> {
    Ok(thermo::equilibrium_chain(&thermo::transfer_spectrum(&sys.spec, &[], None)?))
}

#[derive(Clone, Debug, Serialize)]
pub struct DecayReport {
    pub gamma: f64,
    pub n0: usize,
    pub paths: usize,
    pub length: usize,
    /// Number of `(path, n)` with `n >= n0` and `<rho(s(x_1..x_n)) f, v> > gamma^n`.
    pub exceedances: usize,
    pub paths_with_exceedance: usize,
    pub max_exceedance_n: Option<usize>,
    /// `exceedances / (paths (length - n0 + 1))`.
    pub rate: f64,
    /// Exceedance counts per path (`n >= n0`).
    pub per_path: Vec<usize>,
    /// `sum_{n >= 1}` of the empirical frequency of the exceedance event at `n`.
    pub empirical_bc_sum: f64,
}

pub fn decay_report(group: &GroupBackend, f: &ConeVector, v: &ConeVector, gamma: f64, paths: &[PathSample], n0: usize) -> Result<DecayReport> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Argument("gamma must lie in (0, 1)".into()));
    }
    let length = paths.first().map(|p| p.products.len()).unwrap_or(0);
    if paths.iter().any(|p| p.products.len() != length) {
        return Err(Error::Argument("paths need group products of equal length".into()));
    }
    if n0 == 0 || n0 > length {
        return Err(Error::Argument("burn-in must lie in 1..=length".into()));
    }
    let per: Vec<Vec<usize>> = paths
        .par_iter()
        .map(|p| {
            let mut hits = Vec::new();
            for (k, g) in p.products.iter().enumerate() {
                let n = k + 1;
                if repspace::matrix_coefficient(group, g, f, v)? > gamma.powi(n as i32) {
                    hits.push(n);
                }
            }
            Ok(hits)
        })
        .collect::<Result<_>>()?;
    let mut freq = vec![0usize; length + 1];
    for hits in &per {
        for &n in hits {
            freq[n] += 1;
        }
    }
    let per_path: Vec<usize> = per.iter().map(|h| h.iter().filter(|&&n| n >= n0).count()).collect();
    let exceedances: usize = per_path.iter().sum();
    let count = paths.len().max(1) as f64;
    Ok(DecayReport {
        gamma,
        n0,
        paths: paths.len(),
        length,
        exceedances,
        paths_with_exceedance: per_path.iter().filter(|&&c| c > 0).count(),
        max_exceedance_n: per.iter().flat_map(|h| h.iter().copied()).filter(|&n| n >= n0).max(),
        rate: exceedances as f64 / (count * (length - n0 + 1) as f64),
        per_path,
        empirical_bc_sum: freq.iter().map(|&c| c as f64 / count).sum(),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct BorelCantelliBound {
    pub bound: f64,
    /// Empirical `max mu([w]) / R_n(w y)` over cylinders of length `<= 8`.
    pub gibbs_constant: f64,
    /// Last summand, a truncation diagnostic.
    pub last_term: f64,
    pub n_max: usize,
}

/// `C sum_{n <= N} gamma^{-n} sum_{|w| = n} R_n(w) <rho(s(w)) f, v>` for the
/// normalized potential, i.e. `C sum_{A,a} <phi^{A,a}_{<=N}[gamma] * f, v>`.
pub fn borel_cantelli_bound(sys: &System, f: &ConeVector, v: &ConeVector, gamma: f64, gamma_floor: f64, n_max: usize) -> Result<BorelCantelliBound> {
    if gamma <= gamma_floor {
        return Err(Error::Guard(format!("gamma = {gamma} is not above the convergence parameter estimate {gamma_floor}")));
    }
    let spec = thermo::normalize(&sys.spec)?;
    let td = thermo::transfer_spectrum(&spec, &[], None)?;
    // cylinders up to length 8, or fewer when the alphabet is large
    let k = spec.alphabet_size.max(2) as f64;
    let depth = ((1e5f64.ln() / k.ln()) as usize).clamp(1, 8);
    let gibbs = thermo::conformal_and_gibbs_check(&spec, &td, depth)?;
    let sys = System::new(spec, sys.group.clone(), sys.marking.clone())?;
    let e = sys.group.identity();
    let delta = f.support.len() == 1 && v.support.len() == 1 && f.get(&e) > 0.0 && v.get(&e) > 0.0;
    let terms: Vec<f64> = match sys.radial_rank() {
        Some(rank) if delta => {
            let r = RadialWalk::new(rank).return_probabilities(n_max);
            (1..=n_max).map(|n| r[n] * f.get(&e) * v.get(&e)).collect()
        }
        _ => {
            let mut out = Vec::with_capacity(n_max);
            for_each_layer(&sys, Scope::All, n_max, EngineOptions::exact(), |_, layer: &ElemMap| {
                let d = Density::from_map(layer.clone());
                out.push(repspace::inner(&repspace::convolve(&sys.group, &d, f)?, v)?);
                Ok(())
            })?;
            out
        }
    };
    let mut sum = 0.0;
    let mut last = 0.0;
    for (k, x) in terms.iter().enumerate() {
        last = x * gamma.powi(-(k as i32 + 1));
        sum += last;
    }
    if !sum.is_finite() {
        return Err(Error::Guard("majorant overflowed".into()));
    }
    Ok(BorelCantelliBound { bound: gibbs.gibbs_max * sum, gibbs_constant: gibbs.gibbs_max, last_term: last, n_max })
}

/// `v(k) = |k|_1^{-t}`, `v(0) = 1`, on `|k|_1 <= radius` in `Z^d`.
pub fn heavy_tail_vector(group: &GroupBackend, t: f64, radius: i32) -> Result<ConeVector> {
    let dim = match group.kind() {
        crate::groups::GroupKind::FreeAbelian { dim } => *dim,
        _ => return Err(Error::Domain("heavy-tail vectors are defined on Z^d".into())),
    };
    let mut pts: Vec<Vec<i32>> = vec![vec![]];
    for _ in 0..dim {
        pts = pts.into_iter().flat_map(|p| (-radius..=radius).map(move |x| [p.as_slice(), &[x]].concat())).collect();
    }
    let pairs = pts.into_iter().filter_map(|p| {
        let l: i32 = p.iter().map(|x| x.abs()).sum();
        (l <= radius).then(|| (Elem::from_slice(&p), if l == 0 { 1.0 } else { (l as f64).powf(-t) }))
    });
    ConeVector::from_pairs(group, pairs)
}

/// `sum_q eta^q phi[t_q] * delta_e / ||phi[t_q] * delta_e||`, normalized to unit
/// norm, with `phi[t]` summed over all letter pairs and truncated at `N`.
pub fn adversarial_vector(sys: &System, eta: f64, grid: &[f64], n_max: usize) -> Result<ConeVector> {
    if !sys.group.is_amenable() {
        return Err(Error::Domain("the almost-invariant construction needs an amenable group".into()));
    }
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::Argument("eta must lie in (0, 1)".into()));
    }
    let g = &sys.group;
    let logs: Vec<f64> = grid.iter().map(|t| t.ln()).collect();
    let mut aggs = vec![ElemMap::default(); grid.len()];
    for_each_layer(sys, Scope::All, n_max, EngineOptions::exact(), |n, layer| {
        for (agg, lt) in aggs.iter_mut().zip(&logs) {
            let w = (-(n as f64) * lt).exp();
            for (h, x) in layer {
                *agg.entry(h.clone()).or_insert(0.0) += w * x;
            }
        }
        Ok(())
    })?;
    let e = ConeVector::delta_e(g);
    let mut v = ConeVector::zero(g);
    for (q, agg) in aggs.into_iter().enumerate() {
        let p = repspace::convolve(g, &Density::from_map(agg), &e)?;
        let norm = repspace::inner(&p, &p)?.sqrt();
        v.add_assign(&p.scaled(eta.powi(q as i32 + 1) / norm))?;
    }
    let norm = repspace::inner(&v, &v)?.sqrt();
    Ok(v.scaled(1.0 / norm))
}

/// `min_{|g| = l} <rho(g) v, v>` for `l = 0..=depth`, over marking products of
/// length `l` words.
pub fn adversarial_check(sys: &System, v: &ConeVector, depth: usize) -> Result<Vec<f64>> {
    let g = &sys.group;
    let mut layer: Vec<Elem> = vec![g.identity()];
    let mut out = Vec::with_capacity(depth + 1);
    let mut seen = std::collections::BTreeSet::new();
    seen.insert(g.identity());
    for l in 0..=depth {
        let at_l: Vec<&Elem> = layer.iter().filter(|h| g.length(h) == l).collect();
        let m = at_l.iter().map(|h| repspace::matrix_coefficient(g, h, v, v)).collect::<Result<Vec<_>>>()?;
        out.push(m.into_iter().fold(f64::INFINITY, f64::min));
        let mut next = Vec::new();
        for h in &layer {
            for b in 0..sys.spec.alphabet_size as Letter {
                let k = g.compose(h, sys.label(b));
                if seen.insert(k.clone()) {
                    next.push(k);
                }
            }
        }
        layer = next;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_consistent() {
        let sys = System::free_simple(2);
        let chain = chain_of(&sys).unwrap();
        let a = sample_paths(&chain, Some((&sys.group, &sys.marking)), 20, 30, 7).unwrap();
        let b = sample_paths(&chain, Some((&sys.group, &sys.marking)), 20, 30, 7).unwrap();
        assert_eq!(a.iter().map(|p| &p.letters).collect::<Vec<_>>(), b.iter().map(|p| &p.letters).collect::<Vec<_>>());
        for p in &a {
            for k in 0..30 {
                assert_eq!(p.products[k], sys.marking.product(&sys.group, &p.letters[..=k]));
            }
        }
    }

    #[test]
    fn exceedances_shrink_with_gamma() {
        let sys = System::lattice_simple(1);
        let chain = chain_of(&sys).unwrap();
        let paths = sample_paths(&chain, Some((&sys.group, &sys.marking)), 200, 100, 3).unwrap();
        let e = ConeVector::delta_e(&sys.group);
        let v = heavy_tail_vector(&sys.group, 1.0, 200).unwrap();
        let mut last = usize::MAX;
        for gamma in [0.9, 0.95, 0.99] {
            let r = decay_report(&sys.group, &e, &v, gamma, &paths, 10).unwrap();
            assert!(r.exceedances <= last);
            last = r.exceedances;
        }
    }

    #[test]
    fn orthogonal_vectors_give_zero() {
        let sys = System::lattice_simple(1);
        let e = ConeVector::delta_e(&sys.group);
        // walks of length n sit at the parity of n; odd shift by 1 in all orders
        let v = ConeVector::delta(&sys.group, Elem::from_slice(&[1_000_000])).unwrap();
        let b = borel_cantelli_bound(&sys, &e, &v, 1.5, 1.0, 50).unwrap();
        assert_eq!(b.bound, 0.0);
        assert!(matches!(borel_cantelli_bound(&sys, &e, &v, 0.9, 1.0, 50), Err(Error::Guard(_))));
    }

    #[test]
    fn adversarial_rejects_free_groups() {
        assert!(adversarial_vector(&System::free_simple(2), 0.9, &[1.1], 5).is_err());
    }
}
