//! Non-negative vectors in `l2(G/H)`, the quasi-regular action and convolution.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::engine::ElemMap;
use crate::error::{Error, Result};
use crate::groups::{Elem, GroupBackend, GroupKind};

/// Identifies the coset space a vector lives on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceTag(pub String);

impl SpaceTag {
    pub fn of(group: &GroupBackend) -> Self {
        let s = match group.kind() {
            GroupKind::Free { rank } => format!("free({rank})"),
            GroupKind::FreeAbelian { dim } => format!("free-abelian({dim})"),
            GroupKind::AbelianQuotient { dim, basis } => format!("abelian-quotient({dim};{basis:?})"),
            GroupKind::Permutation { points, generators } => format!("permutation({points};{generators:?})"),
        };
        SpaceTag(s)
    }
}

/// Finitely supported non-negative function on a coset space.
#[derive(Clone, Debug, PartialEq)]
pub struct ConeVector {
    pub space: SpaceTag,
    pub support: ElemMap,
}

impl ConeVector {
    pub fn zero(group: &GroupBackend) -> Self {
        ConeVector { space: SpaceTag::of(group), support: ElemMap::default() }
    }

    /// The unit vector at coset point `p`.
    pub fn delta(group: &GroupBackend, p: Elem) -> Result<Self> {
        group.validate_point(&p)?;
        let mut v = Self::zero(group);
        v.support.insert(p, 1.0);
        Ok(v)
    }

    /// `delta_{eH}`.
    pub fn delta_e(group: &GroupBackend) -> Self {
        Self::delta(group, group.base_point()).expect("base point is valid")
    }

    pub fn from_pairs(group: &GroupBackend, pairs: impl IntoIterator<Item = (Elem, f64)>) -> Result<Self> {
        let mut v = Self::zero(group);
        for (p, w) in pairs {
            group.validate_point(&p)?;
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::Domain(format!("weight {w} is not a finite non-negative number")));
            }
            if w > 0.0 {
                *v.support.entry(p).or_insert(0.0) += w;
            }
        }
        Ok(v)
    }

    pub fn get(&self, p: &Elem) -> f64 {
        self.support.get(p).copied().unwrap_or(0.0)
    }

    pub fn norm(&self) -> f64 {
        self.support.values().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Sorted copy for reporting.
    pub fn sorted(&self) -> BTreeMap<Elem, f64> {
        self.support.iter().map(|(k, v)| (k.clone(), *v)).collect()
    }

    pub fn scaled(&self, s: f64) -> Self {
        ConeVector { space: self.space.clone(), support: self.support.iter().map(|(k, v)| (k.clone(), v * s)).collect() }
    }

    pub fn add_assign(&mut self, other: &ConeVector) -> Result<()> {
        same_space(self, other)?;
        for (k, v) in &other.support {
            *self.support.entry(k.clone()).or_insert(0.0) += v;
        }
        Ok(())
    }
}

fn same_space(f: &ConeVector, v: &ConeVector) -> Result<()> {
    if f.space == v.space {
        Ok(())
    } else {
        Err(Error::SpaceMismatch(format!("{} vs {}", f.space.0, v.space.0)))
    }
}

/// `<f, v>`.
pub fn inner(f: &ConeVector, v: &ConeVector) -> Result<f64> {
    same_space(f, v)?;
    let (small, large) = if f.support.len() <= v.support.len() { (f, v) } else { (v, f) };
    Ok(small.support.iter().map(|(k, x)| x * large.get(k)).sum())
}

/// `rho(g) f`, i.e. `p -> f(g^{-1} p)`: the mass at `q` moves to `g q`.
pub fn translate(group: &GroupBackend, g: &Elem, f: &ConeVector) -> Result<ConeVector> {
    let mut out = ConeVector { space: f.space.clone(), support: ElemMap::default() };
    out.support.reserve(f.support.len());
    for (p, w) in &f.support {
        out.support.insert(group.shift_point(g, p), *w);
    }
    Ok(out)
}

/// `<rho(g) f, v>`.
pub fn matrix_coefficient(group: &GroupBackend, g: &Elem, f: &ConeVector, v: &ConeVector) -> Result<f64> {
    same_space(f, v)?;
    // <rho(g) f, v> = sum_q f(q) v(g q)
    Ok(f.support.iter().map(|(q, w)| w * v.get(&group.shift_point(g, q))).sum())
}

/// Finitely supported density on `G`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Density {
    pub mass: ElemMap,
}

impl Density {
    pub fn from_map(mass: ElemMap) -> Self {
        Density { mass }
    }

    pub fn total(&self) -> f64 {
        self.mass.values().sum()
    }

    pub fn get(&self, g: &Elem) -> f64 {
        self.mass.get(g).copied().unwrap_or(0.0)
    }
}

/// `phi^*(g) = phi(g^{-1})`.
pub fn star(group: &GroupBackend, phi: &Density) -> Density {
    Density { mass: phi.mass.iter().map(|(g, w)| (group.inverse(g), *w)).collect() }
}

/// `phi * f = sum_h phi(h) rho(h) f`.
pub fn convolve(group: &GroupBackend, phi: &Density, f: &ConeVector) -> Result<ConeVector> {
    let mut out = ConeVector { space: f.space.clone(), support: ElemMap::default() };
    for (h, a) in &phi.mass {
        if *a == 0.0 {
            continue;
        }
        for (q, w) in &f.support {
            *out.support.entry(group.shift_point(h, q)).or_insert(0.0) += a * w;
        }
        group.check_budget(out.support.len())?;
    }
    Ok(out)
}

/// Radial calculus for the simple random walk on the free group of rank `r`.
///
/// Profiles are indexed by word length and hold per-element values.
pub mod radial {
    /// Simple random walk on `F_r`, `p(s) = 1/(2r)` for each of the `2r` generators.
    #[derive(Clone, Copy, Debug, PartialEq)]
    pub struct RadialWalk {
        pub rank: usize,
    }

    impl RadialWalk {
        pub fn new(rank: usize) -> Self {
            assert!(rank >= 1);
            RadialWalk { rank }
        }

        pub fn back(&self) -> f64 {
            1.0 / (2 * self.rank) as f64
        }

        pub fn forward(&self) -> f64 {
            (2 * self.rank - 1) as f64 / (2 * self.rank) as f64
        }

        /// Number of elements of length `l`.
        pub fn sphere_size(&self, l: usize) -> f64 {
            if l == 0 {
                1.0
            } else {
                2.0 * self.rank as f64 * ((2 * self.rank - 1) as f64).powi(l as i32 - 1)
            }
        }

        /// `(p * u)` for a radial `u`, scaled by `scale`; the profile grows by one.
        pub fn apply_scaled(&self, u: &[f64], scale: f64) -> Vec<f64> {
            let (b, f) = (self.back() * scale, self.forward() * scale);
            let n = u.len();
            let mut out = vec![0.0; n + 1];
            let at = |i: usize| if i < n { u[i] } else { 0.0 };
            out[0] = scale * at(1);
            for (l, o) in out.iter_mut().enumerate().skip(1) {
                *o = b * u[l - 1] + f * at(l + 1);
            }
            out
        }

        pub fn apply(&self, u: &[f64]) -> Vec<f64> {
            self.apply_scaled(u, 1.0)
        }

        /// `p^{*n}(e)` for `n = 0..=n_max`.
        pub fn return_probabilities(&self, n_max: usize) -> Vec<f64> {
            let mut u = vec![1.0];
            let mut out = Vec::with_capacity(n_max + 1);
            out.push(1.0);
            for _ in 0..n_max {
                u = self.apply(&u);
                out.push(u[0]);
            }
            out
        }

        /// `sum_K coeffs[j][K] * scale^{-K} p^{*K}(l)` for every sequence `j` and
        /// every radius `l < radii`. Rescaling by `scale^{-K}` keeps the profile
        /// of order one when `scale` is near the spectral radius.
        pub fn series(&self, coeffs: &[Vec<f64>], scale: f64, radii: usize) -> Vec<Vec<f64>> {
            let k_max = coeffs.iter().map(|c| c.len()).max().unwrap_or(0);
            let mut acc = vec![vec![0.0; radii]; coeffs.len()];
            let mut u = vec![1.0];
            for k in 0..k_max {
                if k > 0 {
                    u = self.apply_scaled(&u, 1.0 / scale);
                }
                for (j, c) in coeffs.iter().enumerate() {
                    if k < c.len() && c[k] != 0.0 {
                        for (l, a) in acc[j].iter_mut().enumerate() {
                            if l < u.len() {
                                *a += c[k] * u[l];
                            }
                        }
                    }
                }
            }
            acc
        }

        /// Expected word length after `n` steps, from the sphere-mass chain.
        pub fn mean_length(&self, n: usize) -> f64 {
            let mut m = vec![1.0];
            for _ in 0..n {
                let mut next = vec![0.0; m.len() + 1];
                for (l, &x) in m.iter().enumerate() {
                    if l == 0 {
                        next[1] += x;
                    } else {
                        next[l - 1] += x * self.back();
                        next[l + 1] += x * self.forward();
                    }
                }
                m = next;
            }
            m.iter().enumerate().map(|(l, x)| l as f64 * x).sum()
        }
    }
}
