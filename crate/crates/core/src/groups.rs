//! Group backends, markings and coset-space actions.
//!
//! Elements are stored as canonical integer keys so they can be hashed:
//! reduced words for free groups (generator `i` is `i+1`, its inverse `-(i+1)`),
//! coordinate vectors for free abelian groups, Hermite-normal-form residues for
//! abelian quotients and image arrays for permutation groups.
//!
//! The coset space of the infinite backends is the group itself, so points and
//! elements share the key type. For permutation groups the points are
//! single-entry keys `[p]`.

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{arg, Error, Result};
use crate::shiftspace::Letter;

/// Canonical key of a group element or coset point.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Elem(pub SmallVec<[i32; 4]>);

impl Elem {
    pub fn from_slice(v: &[i32]) -> Self {
        Elem(SmallVec::from_slice(v))
    }

    pub fn as_slice(&self) -> &[i32] {
        &self.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GroupKind {
    Free { rank: usize },
    FreeAbelian { dim: usize },
    /// `Z^dim` modulo the lattice spanned by `basis`.
    AbelianQuotient { dim: usize, basis: Vec<Vec<i64>> },
    /// Permutations of `0..points` generated by `generators` (image arrays).
    Permutation { points: usize, generators: Vec<Vec<u32>> },
}

/// A group together with its canonical-key arithmetic.
#[derive(Clone, Debug)]
pub struct GroupBackend {
    kind: GroupKind,
    /// Echelon rows and pivot columns for abelian quotients.
    echelon: Vec<(usize, Vec<i64>)>,
    /// Upper bound on the number of coset points a support may touch.
    pub point_budget: usize,
}

pub const DEFAULT_POINT_BUDGET: usize = 20_000_000;

impl GroupBackend {
    pub fn new(kind: GroupKind) -> Result<Self> {
        let mut echelon = Vec::new();
        match &kind {
            GroupKind::Free { rank } if *rank == 0 => return arg("free group rank must be positive"),
            GroupKind::FreeAbelian { dim } if *dim == 0 => return arg("dimension must be positive"),
            GroupKind::AbelianQuotient { dim, basis } => {
                if *dim == 0 {
                    return arg("dimension must be positive");
                }
                if basis.iter().any(|r| r.len() != *dim) {
                    return arg("sublattice basis rows must have length dim");
                }
                echelon = echelon_form(basis.clone(), *dim);
            }
            GroupKind::Permutation { points, generators } => {
                for g in generators {
                    if g.len() != *points {
                        return arg("permutation generator has wrong length");
                    }
                    let mut seen = vec![false; *points];
                    for &i in g {
                        if i as usize >= *points || seen[i as usize] {
                            return arg("generator is not a permutation");
                        }
                        seen[i as usize] = true;
                    }
                }
            }
            _ => {}
        }
        Ok(GroupBackend { kind, echelon, point_budget: DEFAULT_POINT_BUDGET })
    }

    pub fn free(rank: usize) -> Self {
        Self::new(GroupKind::Free { rank }).expect("valid rank")
    }

    pub fn free_abelian(dim: usize) -> Self {
        Self::new(GroupKind::FreeAbelian { dim }).expect("valid dim")
    }

    pub fn cyclic(n: i64) -> Self {
        Self::new(GroupKind::AbelianQuotient { dim: 1, basis: vec![vec![n]] }).expect("valid modulus")
    }

    pub fn kind(&self) -> &GroupKind {
        &self.kind
    }

    pub fn is_free(&self) -> Option<usize> {
        match self.kind {
            GroupKind::Free { rank } => Some(rank),
            _ => None,
        }
    }

    /// Amenable backends: everything except non-abelian free groups.
    pub fn is_amenable(&self) -> bool {
        !matches!(self.kind, GroupKind::Free { rank } if rank >= 2)
    }

    pub fn identity(&self) -> Elem {
        match &self.kind {
            GroupKind::Free { .. } => Elem::default(),
            GroupKind::FreeAbelian { dim } | GroupKind::AbelianQuotient { dim, .. } => {
                Elem(SmallVec::from_elem(0, *dim))
            }
            GroupKind::Permutation { points, .. } => Elem((0..*points as i32).collect()),
        }
    }

    /// Checks that `g` is a canonical element of this backend.
    pub fn validate(&self, g: &Elem) -> Result<()> {
        let ok = match &self.kind {
            GroupKind::Free { rank } => {
                let r = *rank as i32;
                g.0.iter().all(|&x| x != 0 && x.abs() <= r) && g.0.windows(2).all(|w| w[0] != -w[1])
            }
            GroupKind::FreeAbelian { dim } => g.0.len() == *dim,
            GroupKind::AbelianQuotient { dim, .. } => g.0.len() == *dim && self.reduce_vec(g.clone()) == *g,
            GroupKind::Permutation { points, .. } => {
                let mut seen = vec![false; *points];
                g.0.len() == *points
                    && g.0.iter().all(|&i| {
                        let ok = i >= 0 && (i as usize) < *points && !seen[i as usize];
                        if ok {
                            seen[i as usize] = true;
                        }
                        ok
                    })
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("{:?} is not a canonical element", g.0)))
        }
    }

    /// Free-group generator `i` (0-based) or its inverse.
    pub fn generator(&self, i: usize, inverse: bool) -> Result<Elem> {
        match &self.kind {
            GroupKind::Free { rank } if i < *rank => {
                let x = i as i32 + 1;
                Ok(Elem::from_slice(&[if inverse { -x } else { x }]))
            }
            GroupKind::FreeAbelian { dim } | GroupKind::AbelianQuotient { dim, .. } if i < *dim => {
                let mut v = self.identity();
                v.0[i] = if inverse { -1 } else { 1 };
                Ok(self.reduce_vec(v))
            }
            GroupKind::Permutation { generators, .. } if i < generators.len() => {
                let g = Elem(generators[i].iter().map(|&x| x as i32).collect());
                Ok(if inverse { self.inverse(&g) } else { g })
            }
            _ => arg(format!("generator index {i} out of range")),
        }
    }

    fn reduce_vec(&self, mut v: Elem) -> Elem {
        for (c, row) in &self.echelon {
            let q = (v.0[*c] as i64).div_euclid(row[*c]);
            if q != 0 {
                for (x, r) in v.0.iter_mut().zip(row) {
                    *x = (*x as i64 - q * r) as i32;
                }
            }
        }
        v
    }

    pub fn compose(&self, g: &Elem, h: &Elem) -> Elem {
        match &self.kind {
            GroupKind::Free { .. } => {
                let mut out = g.clone();
                for &x in h.0.iter() {
                    if out.0.last() == Some(&-x) {
                        out.0.pop();
                    } else {
                        out.0.push(x);
                    }
                }
                out
            }
            GroupKind::FreeAbelian { .. } => Elem(g.0.iter().zip(h.0.iter()).map(|(a, b)| a + b).collect()),
            GroupKind::AbelianQuotient { .. } => {
                self.reduce_vec(Elem(g.0.iter().zip(h.0.iter()).map(|(a, b)| a + b).collect()))
            }
            GroupKind::Permutation { .. } => Elem(h.0.iter().map(|&i| g.0[i as usize]).collect()),
        }
    }

    pub fn inverse(&self, g: &Elem) -> Elem {
        match &self.kind {
            GroupKind::Free { .. } => Elem(g.0.iter().rev().map(|x| -x).collect()),
            GroupKind::FreeAbelian { .. } => Elem(g.0.iter().map(|x| -x).collect()),
            GroupKind::AbelianQuotient { .. } => self.reduce_vec(Elem(g.0.iter().map(|x| -x).collect())),
            GroupKind::Permutation { .. } => {
                let mut inv = SmallVec::from_elem(0, g.0.len());
                for (i, &x) in g.0.iter().enumerate() {
                    inv[x as usize] = i as i32;
                }
                Elem(inv)
            }
        }
    }

    /// Word length: reduced length for free groups, l1 norm for abelian keys,
    /// number of moved points for permutations.
    pub fn length(&self, g: &Elem) -> usize {
        match &self.kind {
            GroupKind::Free { .. } => g.0.len(),
            GroupKind::FreeAbelian { .. } | GroupKind::AbelianQuotient { .. } => {
                g.0.iter().map(|x| x.unsigned_abs() as usize).sum()
            }
            GroupKind::Permutation { .. } => g.0.iter().enumerate().filter(|(i, &x)| *i as i32 != x).count(),
        }
    }

    /// The coset point `eH`.
    pub fn base_point(&self) -> Elem {
        match &self.kind {
            GroupKind::Permutation { .. } => Elem::from_slice(&[0]),
            _ => self.identity(),
        }
    }

    /// Validates a coset point.
    pub fn validate_point(&self, p: &Elem) -> Result<()> {
        match &self.kind {
            GroupKind::Permutation { points, .. } => {
                if p.0.len() == 1 && p.0[0] >= 0 && (p.0[0] as usize) < *points {
                    Ok(())
                } else {
                    Err(Error::Domain(format!("unknown point {:?}", p.0)))
                }
            }
            _ => self.validate(p),
        }
    }

    /// `g . p` (left multiplication on cosets).
    pub fn shift_point(&self, g: &Elem, p: &Elem) -> Elem {
        match &self.kind {
            GroupKind::Permutation { .. } => Elem::from_slice(&[g.0[p.0[0] as usize]]),
            _ => self.compose(g, p),
        }
    }

    /// `g^{-1} . p`, the argument used by `(rho(g) f)(p) = f(g^{-1} p)`.
    /// With this convention `act(gh, p) = act(h, act(g, p))`.
    pub fn act(&self, g: &Elem, p: &Elem) -> Elem {
        self.shift_point(&self.inverse(g), p)
    }

    pub fn check_budget(&self, n: usize) -> Result<()> {
        if n > self.point_budget {
            Err(Error::Budget(format!("support of {n} points exceeds budget {}", self.point_budget)))
        } else {
            Ok(())
        }
    }
}

/// Integer row-echelon form with positive pivots.
fn echelon_form(mut rows: Vec<Vec<i64>>, dim: usize) -> Vec<(usize, Vec<i64>)> {
    let mut out = Vec::new();
    for col in 0..dim {
        loop {
            rows.retain(|r| r.iter().any(|&x| x != 0));
            let mut nz: Vec<usize> = (0..rows.len()).filter(|&i| rows[i][col] != 0).collect();
            if nz.len() <= 1 {
                break;
            }
            nz.sort_by_key(|&i| rows[i][col].abs());
            let p = nz[0];
            let pivot = rows[p].clone();
            for &i in &nz[1..] {
                let q = rows[i][col].div_euclid(pivot[col]);
                for (x, y) in rows[i].iter_mut().zip(&pivot) {
                    *x -= q * y;
                }
            }
        }
        if let Some(i) = rows.iter().position(|r| r[col] != 0) {
            let mut r = rows.remove(i);
            if r[col] < 0 {
                r.iter_mut().for_each(|x| *x = -*x);
            }
            out.push((col, r));
        }
    }
    out
}

/// Per-letter group labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Marking {
    pub labels: Vec<Elem>,
}

impl Marking {
    pub fn new(group: &GroupBackend, labels: Vec<Elem>) -> Result<Self> {
        for g in &labels {
            group.validate(g)?;
        }
        Ok(Marking { labels })
    }

    pub fn label(&self, b: Letter) -> &Elem {
        &self.labels[b as usize]
    }

    /// The product of the labels along `w`.
    pub fn product(&self, group: &GroupBackend, w: &[Letter]) -> Elem {
        w.iter().fold(group.identity(), |g, &b| group.compose(&g, self.label(b)))
    }
}
