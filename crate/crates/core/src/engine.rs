//! Forward dynamic programming over admissible words.
//!
//! A state is `(context, group element)`, where the context holds the last
//! `max(memory - 1, 1)` letters (or the whole word while it is shorter). Each
//! appended letter finalizes the one potential factor whose window it closes,
//! so the weight carried by a state is the product of all factors lying inside
//! the word; factors reaching into the tail are applied by [`Engine::project_end`].

use rayon::prelude::*;
use rustc_hash::{FxHashMap, FxHashSet};

use crate::error::{Error, Result};
use crate::groups::{Elem, GroupBackend, Marking};
use crate::shiftspace::{Letter, ShiftSpec};

pub type StateMap = FxHashMap<(u32, Elem), f64>;
pub type ElemMap = FxHashMap<Elem, f64>;
/// Letter filter `(last letter, next letter) -> keep`.
pub type Allow = dyn Fn(Option<Letter>, Letter) -> bool + Sync;

/// Tuning knobs shared by the word-layer computations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EngineOptions {
    /// Relative pruning threshold (against the largest weight of a layer); 0 disables.
    pub prune: f64,
    /// Split steps across the rayon pool once a layer has this many states.
    pub parallel_threshold: usize,
    pub sequential: bool,
}

impl Default for EngineOptions {
    fn default() -> Self {
        EngineOptions { prune: 0.0, parallel_threshold: 1 << 14, sequential: false }
    }
}

impl EngineOptions {
    pub fn exact() -> Self {
        EngineOptions { prune: 0.0, ..Self::default() }
    }

    /// Drops states lighter than `eps` times the heaviest one. Not suitable for
    /// return probabilities of drifting walks, which sit far below the peak.
    pub fn pruned(eps: f64) -> Self {
        EngineOptions { prune: eps, ..Self::default() }
    }
}

#[derive(Clone, Debug)]
struct Transition {
    next: u32,
    factor: f64,
}

/// Context automaton of a shift with a finite-memory potential.
#[derive(Clone, Debug)]
pub struct Contexts {
    pub words: Vec<Vec<Letter>>,
    steps: Vec<Vec<Option<Transition>>>,
    memory: usize,
    collapsed: bool,
}

impl Contexts {
    pub fn new(spec: &ShiftSpec) -> Self {
        Self::build(spec, spec.memory.saturating_sub(1).max(1))
    }

    /// Single-context automaton for full shifts with memory-1 potentials, where
    /// the last letter carries no information.
    pub fn collapsed(spec: &ShiftSpec) -> Option<Self> {
        (spec.is_full_shift() && spec.memory == 1).then(|| Self::build(spec, 0))
    }

    fn build(spec: &ShiftSpec, keep: usize) -> Self {
        let k = spec.alphabet_size;
        let m = spec.memory;
        let mut ids: FxHashMap<Vec<Letter>, u32> = FxHashMap::default();
        let mut words = vec![Vec::new()];
        ids.insert(Vec::new(), 0);
        let mut steps = Vec::new();
        let mut i = 0;
        while i < words.len() {
            let c = words[i].clone();
            let mut row = Vec::with_capacity(k);
            for b in 0..k as Letter {
                if let Some(&l) = c.last() {
                    if !spec.allowed(l, b) {
                        row.push(None);
                        continue;
                    }
                }
                let mut ext = c.clone();
                ext.push(b);
                let factor = if ext.len() >= m { spec.weight(&ext[ext.len() - m..]) } else { 1.0 };
                let nc = ext[ext.len().saturating_sub(keep)..].to_vec();
                let next = *ids.entry(nc.clone()).or_insert_with(|| {
                    words.push(nc);
                    (words.len() - 1) as u32
                });
                row.push(Some(Transition { next, factor }));
            }
            steps.push(row);
            i += 1;
        }
        Contexts { words, steps, memory: m, collapsed: keep == 0 }
    }

    pub fn is_collapsed(&self) -> bool {
        self.collapsed
    }

    /// Follows `word` from the empty context: (context, finalized weight).
    pub fn run(&self, word: &[Letter]) -> Option<(u32, f64)> {
        let mut c = 0u32;
        let mut w = 1.0;
        for &b in word {
            let t = self.steps[c as usize][b as usize].as_ref()?;
            w *= t.factor;
            c = t.next;
        }
        Some((c, w))
    }

    /// Product of the potential factors whose windows reach into `tail`, for a
    /// word ending in context `c`. `None` if the junction is inadmissible.
    pub fn tail_factor(&self, spec: &ShiftSpec, c: u32, tail: &[Letter]) -> Option<f64> {
        let cw = &self.words[c as usize];
        let m = self.memory;
        if let (Some(&l), Some(&x0)) = (cw.last(), tail.first()) {
            if !spec.allowed(l, x0) {
                return None;
            }
        }
        let mut s = cw.clone();
        s.extend_from_slice(&tail[..m - 1]);
        let start = cw.len() - cw.len().min(m - 1);
        Some((start..cw.len()).map(|j| spec.weight(&s[j..j + m])).product())
    }

    pub fn last_letter(&self, c: u32) -> Option<Letter> {
        self.words[c as usize].last().copied()
    }
}

/// Layered word sums with optional group tracking.
pub struct Engine<'a> {
    pub spec: &'a ShiftSpec,
    pub ctx: Contexts,
    pub group: Option<(&'a GroupBackend, &'a Marking)>,
    pub opts: EngineOptions,
    pruned: std::sync::Mutex<f64>,
}

impl<'a> Engine<'a> {
    pub fn new(spec: &'a ShiftSpec, group: Option<(&'a GroupBackend, &'a Marking)>, opts: EngineOptions) -> Self {
        Engine { spec, ctx: Contexts::new(spec), group, opts, pruned: std::sync::Mutex::new(0.0) }
    }

    /// Uses the single-context automaton when the shift allows it.
    pub fn new_collapsed(spec: &'a ShiftSpec, group: Option<(&'a GroupBackend, &'a Marking)>, opts: EngineOptions) -> Self {
        let ctx = Contexts::collapsed(spec).unwrap_or_else(|| Contexts::new(spec));
        Engine { spec, ctx, group, opts, pruned: std::sync::Mutex::new(0.0) }
    }

    /// Total weight dropped by pruning so far.
    pub fn pruned_mass(&self) -> f64 {
        *self.pruned.lock().unwrap()
    }

    pub fn identity(&self) -> Elem {
        self.group.map(|(g, _)| g.identity()).unwrap_or_default()
    }

    /// The single state reached by reading `prefix` from the empty word.
    pub fn initial(&self, prefix: &[Letter]) -> Result<StateMap> {
        let (c, w) = self
            .ctx
            .run(prefix)
            .ok_or_else(|| Error::Domain(format!("prefix {prefix:?} is not admissible")))?;
        let g = match self.group {
            Some((g, m)) => m.product(g, prefix),
            None => Elem::default(),
        };
        let mut s = StateMap::default();
        s.insert((c, g), w);
        Ok(s)
    }

    /// A state map seeded at context `c` with the identity element.
    pub fn from_context(&self, c: u32) -> StateMap {
        let mut s = StateMap::default();
        s.insert((c, self.identity()), 1.0);
        s
    }

    fn step_chunk(&self, chunk: &[(&(u32, Elem), &f64)], allow: &Allow) -> StateMap {
        let mut out = StateMap::default();
        out.reserve(chunk.len() * 2);
        for ((c, g), &w) in chunk {
            for (b, t) in self.ctx.steps[*c as usize].iter().enumerate() {
                if !allow(self.ctx.last_letter(*c), b as Letter) {
                    continue;
                }
                if let Some(t) = t {
                    let ng = match self.group {
                        Some((grp, m)) => grp.compose(g, m.label(b as Letter)),
                        None => Elem::default(),
                    };
                    *out.entry((t.next, ng)).or_insert(0.0) += w * t.factor;
                }
            }
        }
        out
    }

    /// Appends one letter in every admissible way.
    pub fn step(&self, states: &StateMap) -> Result<StateMap> {
        self.step_with(states, &|_, _| true)
    }

    /// Like [`Engine::step`], skipping letter `b` after last letter `l` when
    /// `allow(l, b)` is false. Needs a non-collapsed automaton to see `l`.
    pub fn step_with(&self, states: &StateMap, allow: &Allow) -> Result<StateMap> {
        let mut entries: Vec<_> = states.iter().collect();
        let parallel = !self.opts.sequential && entries.len() >= self.opts.parallel_threshold;
        let mut out = if parallel {
            entries.sort_unstable_by(|a, b| a.0.cmp(b.0));
            let chunk = entries.len().div_ceil(rayon::current_num_threads().max(1) * 4);
            let parts: Vec<StateMap> = entries.par_chunks(chunk).map(|c| self.step_chunk(c, allow)).collect();
            let mut it = parts.into_iter();
            let mut acc = it.next().unwrap_or_default();
            for p in it {
                for (k, v) in p {
                    *acc.entry(k).or_insert(0.0) += v;
                }
            }
            acc
        } else {
            self.step_chunk(&entries, allow)
        };
        if self.opts.prune > 0.0 {
            let max = out.values().cloned().fold(0.0, f64::max);
            let cut = max * self.opts.prune;
            let mut dropped = 0.0;
            out.retain(|_, v| {
                let keep = *v >= cut;
                if !keep {
                    dropped += *v;
                }
                keep
            });
            *self.pruned.lock().unwrap() += dropped;
        }
        if let Some((g, _)) = self.group {
            g.check_budget(out.len())?;
        }
        Ok(out)
    }

    /// Restricts to words ending in `a`, applies the tail factors and sums over
    /// contexts. Collapsed automata must use [`Engine::project_end_collapsed`].
    pub fn project_end(&self, states: &StateMap, a: Letter, tail: &[Letter]) -> ElemMap {
        assert!(!self.ctx.collapsed, "collapsed automaton does not record last letters");
        let mut factors: FxHashMap<u32, Option<f64>> = FxHashMap::default();
        let mut out = ElemMap::default();
        for ((c, g), &w) in states {
            if self.ctx.last_letter(*c) != Some(a) {
                continue;
            }
            let f = *factors.entry(*c).or_insert_with(|| self.ctx.tail_factor(self.spec, *c, tail));
            if let Some(f) = f {
                *out.entry(g.clone()).or_insert(0.0) += w * f;
            }
        }
        out
    }

    /// For collapsed automata: the words of the previous layer extended by `a`.
    pub fn project_end_collapsed(&self, prev: &StateMap, a: Letter) -> ElemMap {
        let f = self.spec.weight(&[a]);
        let mut out = ElemMap::default();
        for ((_, g), &w) in prev {
            let ng = match self.group {
                Some((grp, m)) => grp.compose(g, m.label(a)),
                None => Elem::default(),
            };
            *out.entry(ng).or_insert(0.0) += w * f;
        }
        out
    }

    /// Sums over contexts, keeping group elements.
    pub fn marginal(states: &StateMap) -> ElemMap {
        let mut out = ElemMap::default();
        for ((_, g), &w) in states {
            *out.entry(g.clone()).or_insert(0.0) += w;
        }
        out
    }

    /// Contexts whose word ends in `a`.
    pub fn contexts_ending(&self, a: Letter) -> FxHashSet<u32> {
        (0..self.ctx.words.len() as u32).filter(|&c| self.ctx.last_letter(c) == Some(a)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shiftspace::BaseTail;

    fn brute(spec: &ShiftSpec, b0: Letter, b1: Letter, n: usize, tail: &[Letter]) -> f64 {
        spec.enumerate_words(b0, b1, n)
            .unwrap()
            .filter_map(|w| spec.birkhoff_weight_with(&w, tail).ok())
            .sum()
    }

    #[test]
    fn layers_match_enumeration_memory_two() {
        let logw = vec![-0.3, -1.1, -0.7, -0.2, -0.5, -0.9, -1.4, -0.1, -0.6];
        let t = vec![vec![true, true, true], vec![true, false, true], vec![true, true, false]];
        let spec = ShiftSpec::new(t, 2, logw, 0, 2, BaseTail::new(vec![], vec![0]).unwrap()).unwrap();
        let e = Engine::new(&spec, None, EngineOptions::exact());
        let tail = [0u8];
        let mut s = e.initial(&[0]).unwrap();
        for n in 1..8 {
            for a in 0..3 {
                let got: f64 = e.project_end(&s, a, &tail).values().sum();
                let want = brute(&spec, 0, a, n, &tail);
                assert!((got - want).abs() <= 1e-13 * want.max(1.0), "n={n} a={a}: {got} vs {want}");
            }
            s = e.step(&s).unwrap();
        }
    }

    #[test]
    fn parallel_matches_sequential() {
        let spec = ShiftSpec::full_shift(&[0.25; 4]).unwrap();
        let g = GroupBackend::free(2);
        let m = Marking::new(&g, vec![Elem::from_slice(&[1]), Elem::from_slice(&[-1]), Elem::from_slice(&[2]), Elem::from_slice(&[-2])]).unwrap();
        let par = EngineOptions { parallel_threshold: 1, ..EngineOptions::exact() };
        let seq = EngineOptions { sequential: true, ..EngineOptions::exact() };
        let ep = Engine::new(&spec, Some((&g, &m)), par);
        let es = Engine::new(&spec, Some((&g, &m)), seq);
        let mut a = ep.initial(&[0]).unwrap();
        let mut b = es.initial(&[0]).unwrap();
        for _ in 0..6 {
            a = ep.step(&a).unwrap();
            b = es.step(&b).unwrap();
        }
        assert_eq!(a.len(), b.len());
        for (k, v) in &a {
            assert!((v - b[k]).abs() <= 1e-12 * v.abs());
        }
    }
}
