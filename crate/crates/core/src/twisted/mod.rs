//! Twisted approximating measures, limits of matrix coefficients and their
//! diagnostics.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::shiftspace::Letter;

pub mod boundary;
pub mod free;
pub mod onesided;
pub mod twosided;
pub mod upsilon;

pub use boundary::{boundary_coefficient, boundary_masses};
pub use free::{
    coefficient_identity_check, equilibrium_drift, kesten_radius, letter_change_ratios, radial_constancy, spherical_closed_form,
    spherical_profile, FreeTwisted, IdentityReport, SphericalProfile,
};
pub use onesided::{
    absolute_continuity_ratios, approx_measure, cocycle_check, drift_profile, h_estimate, main_equality_check, rhs_gibbs_check,
    CocycleReport, MainEqualityReport,
};
pub use twosided::{bernoulli_deviation, shift_invariance_defect, total_mass, two_sided_measure, two_sided_measures, InvarianceReport};
pub use upsilon::{upsilon, UpsilonKind, UpsilonTable};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// `Q = phi * f`.
    Plain,
    /// `Q = phi^* * f`.
    Star,
    TwoSided,
}

/// Cylinder `[past . future]`; one-sided cylinders have an empty past.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct CylKey {
    pub past: Vec<Letter>,
    pub future: Vec<Letter>,
}

impl CylKey {
    pub fn one_sided(w: &[Letter]) -> Self {
        CylKey { past: vec![], future: w.to_vec() }
    }

    pub fn two_sided(past: &[Letter], future: &[Letter]) -> Self {
        CylKey { past: past.to_vec(), future: future.to_vec() }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CylinderMeasure {
    pub mode: Mode,
    pub t: f64,
    pub n_max: usize,
    pub c_id: String,
    pub f_id: String,
    pub depth: usize,
    #[serde(serialize_with = "serialize_masses")]
    pub masses: BTreeMap<CylKey, f64>,
    /// `F(Q)[t]`.
    pub normalizer: f64,
    /// Share of the longest words in the normalizer, a truncation diagnostic.
    pub tail_mass: f64,
    pub pruned_mass: f64,
}

fn serialize_masses<S: serde::Serializer>(m: &BTreeMap<CylKey, f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(m.len()))?;
    for (k, v) in m {
        seq.serialize_element(&(k, v))?;
    }
    seq.end()
}

impl CylinderMeasure {
    /// Mass of a one-sided cylinder, 0 if it was not computed or is empty.
    pub fn mass(&self, w: &[Letter]) -> f64 {
        self.masses.get(&CylKey::one_sided(w)).copied().unwrap_or(0.0)
    }

    pub fn mass2(&self, past: &[Letter], future: &[Letter]) -> f64 {
        self.masses.get(&CylKey::two_sided(past, future)).copied().unwrap_or(0.0)
    }

    /// One-sided cylinders of length exactly `n`.
    pub fn level(&self, n: usize) -> impl Iterator<Item = (&[Letter], f64)> + '_ {
        self.masses.iter().filter(move |(k, _)| k.past.is_empty() && k.future.len() == n).map(|(k, v)| (k.future.as_slice(), *v))
    }
}

/// `t_k = gamma_hat (1 + delta 2^{-k})`, `k = 0..=k_max`, descending.
pub fn t_grid(gamma_hat: f64, delta: f64, k_max: usize) -> Vec<f64> {
    (0..=k_max).map(|k| gamma_hat * (1.0 + delta * 0.5f64.powi(k as i32))).collect()
}

/// Correction model for the approach of a `t`-dependent quantity to its limit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    /// `a + b e + c e^2`.
    Linear,
    /// `a + b sqrt(e) + c e`.
    Sqrt,
}

/// Least-squares fit of `model` through the points with the smallest
/// `eps` (at most four) and returns the value at `eps = 0`.
pub fn extrapolate(eps: &[f64], values: &[f64], model: Model) -> Result<f64> {
    if eps.len() != values.len() || eps.len() < 3 {
        return Err(Error::Argument("extrapolation needs at least three points".into()));
    }
    let mut idx: Vec<usize> = (0..eps.len()).collect();
    idx.sort_by(|&i, &j| eps[i].total_cmp(&eps[j]));
    idx.truncate(4);
    let basis = |e: f64| match model {
        Model::Linear => [1.0, e, e * e],
        Model::Sqrt => [1.0, e.sqrt(), e],
    };
    let mut ata = [[0.0; 3]; 3];
    let mut atb = [0.0; 3];
    for &i in &idx {
        let r = basis(eps[i]);
        for a in 0..3 {
            atb[a] += r[a] * values[i];
            for b in 0..3 {
                ata[a][b] += r[a] * r[b];
            }
        }
    }
    crate::gdensity::solve3(ata, atb).map(|c| c[0]).ok_or_else(|| Error::Estimation("singular extrapolation".into()))
}

/// All admissible words of length `n`.
pub(crate) fn all_words(spec: &crate::shiftspace::ShiftSpec, n: usize) -> Vec<Vec<Letter>> {
    (0..spec.alphabet_size as Letter).flat_map(|b| spec.words_from(b, n)).collect()
}
