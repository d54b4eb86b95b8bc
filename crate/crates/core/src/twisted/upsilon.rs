//! Normalized matrix coefficients of `phi[t] * f` along a descending `t`-grid.

use rayon::prelude::*;
use serde::Serialize;

use super::{extrapolate, Model};
use crate::engine::{ElemMap, EngineOptions};
use crate::error::{Error, Result};
use crate::gdensity::{for_each_layer, Scope};
use crate::groups::Elem;
use crate::repspace::{self, ConeVector, Density};
use crate::slowvar::SlowFunction;
use crate::system::System;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum UpsilonKind {
    /// `Q = phi * f`.
    Plain,
    /// `Q = phi^* * f`.
    Star,
}

#[derive(Clone, Debug, Serialize)]
pub struct UpsilonTable {
    pub kind: UpsilonKind,
    pub gamma_hat: f64,
    /// Descending grid.
    pub grid: Vec<f64>,
    pub targets: Vec<Elem>,
    /// `values[i][k]`: ratio for `targets[i]` at `grid[k]`.
    pub values: Vec<Vec<f64>>,
    pub extrapolated: Vec<f64>,
    pub model: Model,
    /// `<phi * f, Q>` per grid point.
    pub normalizers: Vec<f64>,
}

impl UpsilonTable {
    pub fn get(&self, g: &Elem) -> Option<f64> {
        self.targets.iter().position(|x| x == g).map(|i| self.extrapolated[i])
    }
}

/// `<rho(g) phi[t] * f, Q[t]> / <phi[t] * f, Q[t]>` for every target and grid
/// point, extrapolated to `t = gamma_hat` with `model`.
#[allow(clippy::too_many_arguments)]
pub fn upsilon(
    kind: UpsilonKind,
    targets: &[Elem],
    sys: &System,
    f: &ConeVector,
    grid: &[f64],
    gamma_hat: f64,
    n_max: usize,
    c: &SlowFunction,
    model: Model,
) -> Result<UpsilonTable> {
    if grid.is_empty() || grid.iter().any(|&t| t <= gamma_hat) {
        return Err(Error::Guard("the t-grid must lie strictly above the convergence parameter estimate".into()));
    }
    if grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Argument("the t-grid must be strictly descending".into()));
    }
    let g = &sys.group;
    let logs: Vec<f64> = grid.iter().map(|t| t.ln()).collect();
    let mut aggs: Vec<ElemMap> = vec![ElemMap::default(); grid.len()];
    let spec = &sys.spec;
    for_each_layer(sys, Scope::Pair(spec.letter_A, spec.letter_a), n_max, EngineOptions::exact(), |n, layer| {
        let lc = c.log_c(n as u64);
        aggs.par_iter_mut().zip(logs.par_iter()).for_each(|(agg, lt)| {
            let lw = lc - n as f64 * lt;
            let w = lw.exp();
            for (h, x) in layer {
                let v = if w.is_finite() { w * x } else { (lw + x.ln()).exp() };
                *agg.entry(h.clone()).or_insert(0.0) += v;
            }
        });
        Ok(())
    })?;
    let e = g.identity();
    let per_t: Vec<(f64, Vec<f64>)> = aggs
        .into_par_iter()
        .map(|agg| {
            let phi = Density::from_map(agg);
            let p = repspace::convolve(g, &phi, f)?;
            let q = match kind {
                UpsilonKind::Plain => p.clone(),
                UpsilonKind::Star => repspace::convolve(g, &repspace::star(g, &phi), f)?,
            };
            let den = repspace::matrix_coefficient(g, &e, &p, &q)?;
            if !(den > f64::MIN_POSITIVE) || !den.is_finite() {
                return Err(Error::Guard(format!("denominator {den} underflowed or diverged")));
            }
            let vals = targets
                .iter()
                .map(|h| if *h == e { Ok(1.0) } else { repspace::matrix_coefficient(g, h, &p, &q).map(|x| x / den) })
                .collect::<Result<Vec<_>>>()?;
            Ok((den, vals))
        })
        .collect::<Result<_>>()?;
    let normalizers = per_t.iter().map(|x| x.0).collect();
    let values: Vec<Vec<f64>> = (0..targets.len()).map(|i| per_t.iter().map(|x| x.1[i]).collect()).collect();
    let eps: Vec<f64> = grid.iter().map(|t| t / gamma_hat - 1.0).collect();
    let extrapolated = targets
        .iter()
        .zip(&values)
        .map(|(h, v)| if *h == e { Ok(1.0) } else if v.len() >= 3 { extrapolate(&eps, v, model) } else { Ok(*v.last().unwrap()) })
        .collect::<Result<_>>()?;
    Ok(UpsilonTable { kind, gamma_hat, grid: grid.to_vec(), targets: targets.to_vec(), values, extrapolated, model, normalizers })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::twisted::t_grid;

    #[test]
    fn identity_is_one_and_symmetric_walk_is_flat() {
        let sys = System::lattice_simple(1).with_twisted_letters(0, 0).unwrap();
        let f = ConeVector::delta_e(&sys.group);
        let targets = vec![Elem::from_slice(&[0]), Elem::from_slice(&[2]), Elem::from_slice(&[-1])];
        let grid = t_grid(1.0, 0.5, 4);
        let star = upsilon(UpsilonKind::Star, &targets, &sys, &f, &grid, 1.0, 300, &SlowFunction::unit(), Model::Linear).unwrap();
        assert!(star.values[0].iter().all(|&v| v == 1.0));
        assert!(star.values.iter().flatten().all(|&v| v >= 0.0));
        let tab = upsilon(UpsilonKind::Plain, &targets, &sys, &f, &grid, 1.0, 300, &SlowFunction::unit(), Model::Linear).unwrap();
        for v in tab.values.iter().flatten() {
            assert!(*v >= 0.0 && *v <= 1.0 + 1e-12);
        }
        // values increase toward 1 as t decreases
        assert!(tab.values[1].windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn grid_must_be_above_gamma() {
        let sys = System::lattice_simple(1).with_twisted_letters(0, 0).unwrap();
        let f = ConeVector::delta_e(&sys.group);
        let r = upsilon(UpsilonKind::Plain, &[], &sys, &f, &[1.2, 0.9], 1.0, 10, &SlowFunction::unit(), Model::Linear);
        assert!(matches!(r, Err(Error::Guard(_))));
    }
}
