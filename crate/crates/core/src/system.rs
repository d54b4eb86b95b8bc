//! A shift, a group and a marking bundled together, plus the standard
//! random-walk systems.

use crate::error::Result;
use crate::groups::{Elem, GroupBackend, Marking};
use crate::shiftspace::{BaseTail, Letter, ShiftSpec};

#[derive(Clone, Debug)]
pub struct System {
    pub spec: ShiftSpec,
    pub group: GroupBackend,
    pub marking: Marking,
}

impl System {
    pub fn new(spec: ShiftSpec, group: GroupBackend, marking: Marking) -> Result<Self> {
        if marking.labels.len() != spec.alphabet_size {
            return Err(crate::Error::Argument("marking needs one label per letter".into()));
        }
        Ok(System { spec, group, marking })
    }

    /// Random walk on `F_r` with step law `probs` over `a_1, a_1^{-1}, a_2, ...`.
    pub fn free_walk(rank: usize, probs: &[f64]) -> Result<Self> {
        let group = GroupBackend::free(rank);
        let labels = (0..2 * rank).map(|i| group.generator(i / 2, i % 2 == 1)).collect::<Result<Vec<_>>>()?;
        let spec = ShiftSpec::full_shift(probs)?;
        let marking = Marking::new(&group, labels)?;
        System::new(spec, group, marking)
    }

    /// Simple random walk on `F_r`.
    pub fn free_simple(rank: usize) -> Self {
        Self::free_walk(rank, &vec![1.0 / (2 * rank) as f64; 2 * rank]).expect("valid walk")
    }

    /// Nearest-neighbour walk on `Z^d`; `probs` lists `(+e_1, -e_1, +e_2, ...)`.
    pub fn lattice_walk(dim: usize, probs: &[f64]) -> Result<Self> {
        let group = GroupBackend::free_abelian(dim);
        let labels: Vec<Elem> = (0..2 * dim).map(|i| group.generator(i / 2, i % 2 == 1)).collect::<Result<_>>()?;
        let spec = ShiftSpec::full_shift(probs)?;
        let marking = Marking::new(&group, labels)?;
        System::new(spec, group, marking)
    }

    pub fn lattice_simple(dim: usize) -> Self {
        Self::lattice_walk(dim, &vec![1.0 / (2 * dim) as f64; 2 * dim]).expect("valid walk")
    }

    /// Twisted-measure conventions for a full shift: `x = A b b b ...` with `b`
    /// the first letter different from `A`.
    #[allow(non_snake_case)]
    pub fn with_twisted_letters(mut self, A: Letter, a: Letter) -> Result<Self> {
        let other = (0..self.spec.alphabet_size as Letter)
            .find(|&b| b != A && self.spec.allowed(A, b) && self.spec.allowed(b, b))
            .ok_or_else(|| crate::Error::Domain("no letter to build a tail avoiding A".into()))?;
        self.spec = self.spec.with_letters(A, a, BaseTail::new(vec![A], vec![other])?)?;
        self.spec.validate_twisted()?;
        Ok(self)
    }

    /// Rank `r` when this is the simple random walk on `F_r` with the standard
    /// generator marking (each generator and inverse exactly once).
    pub fn radial_rank(&self) -> Option<usize> {
        let r = self.group.is_free()?;
        let s = &self.spec;
        if s.alphabet_size != 2 * r || s.memory != 1 || !s.is_full_shift() {
            return None;
        }
        let p = 1.0 / (2 * r) as f64;
        if s.log_weights.iter().any(|w| (w.exp() - p).abs() > 1e-14) {
            return None;
        }
        let mut seen: Vec<Elem> = self.marking.labels.clone();
        seen.sort();
        seen.dedup();
        let gens = seen.len() == 2 * r && seen.iter().all(|g| g.0.len() == 1);
        gens.then_some(r)
    }

    /// The base-tail letters needed by the potential (at least one).
    pub fn tail_letters(&self) -> Vec<Letter> {
        self.spec.base_tail.prefix(self.spec.memory.saturating_sub(1).max(1))
    }

    pub fn label(&self, b: Letter) -> &Elem {
        self.marking.label(b)
    }
}
