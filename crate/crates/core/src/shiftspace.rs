//! One-sided shifts of finite type with finite-memory potentials.

use serde::{Deserialize, Serialize};

use crate::error::{arg, Error, Result};
use crate::groups::{GroupBackend, Marking};

pub type Letter = u8;

/// Eventually periodic letter sequence `preperiod · period^∞`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaseTail {
    #[serde(default)]
    pub preperiod: Vec<Letter>,
    pub period: Vec<Letter>,
}

impl BaseTail {
    pub fn new(preperiod: Vec<Letter>, period: Vec<Letter>) -> Result<Self> {
        if period.is_empty() {
            return arg("base tail period must be non-empty");
        }
        Ok(BaseTail { preperiod, period })
    }

    pub fn letter(&self, i: usize) -> Letter {
        if i < self.preperiod.len() {
            self.preperiod[i]
        } else {
            self.period[(i - self.preperiod.len()) % self.period.len()]
        }
    }

    pub fn prefix(&self, k: usize) -> Vec<Letter> {
        (0..k).map(|i| self.letter(i)).collect()
    }
}

/// Shift space, potential and distinguished data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftSpec {
    pub alphabet_size: usize,
    pub transitions: Vec<Vec<bool>>,
    pub memory: usize,
    /// `log R` indexed by admissible words of length `memory`, base-`alphabet_size`
    /// with the first letter most significant. Inadmissible slots are ignored.
    pub log_weights: Vec<f64>,
    pub letter_A: Letter,
    pub letter_a: Letter,
    pub base_tail: BaseTail,
}

impl ShiftSpec {
    /// Validates and builds a spec.
    #[allow(non_snake_case)]
    pub fn new(
        transitions: Vec<Vec<bool>>,
        memory: usize,
        log_weights: Vec<f64>,
        letter_A: Letter,
        letter_a: Letter,
        base_tail: BaseTail,
    ) -> Result<Self> {
        let spec = ShiftSpec {
            alphabet_size: transitions.len(),
            transitions,
            memory,
            log_weights,
            letter_A,
            letter_a,
            base_tail,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.alphabet_size;
        if k == 0 || k > 255 {
            return arg("alphabet size must be in 1..=255");
        }
        if self.transitions.len() != k || self.transitions.iter().any(|r| r.len() != k) {
            return arg("transition matrix must be square of alphabet size");
        }
        if self.memory == 0 {
            return arg("potential memory must be positive");
        }
        let slots = k.checked_pow(self.memory as u32).filter(|&s| s <= 1 << 22);
        if slots != Some(self.log_weights.len()) {
            return arg(format!("expected {} log weights", k.pow(self.memory as u32)));
        }
        for l in [self.letter_A, self.letter_a] {
            self.check_letter(l)?;
        }
        if !is_irreducible(&self.transitions) {
            return Err(Error::Domain("transition matrix is not irreducible".into()));
        }
        if period(&self.transitions) != 1 {
            return Err(Error::Domain("transition matrix is not aperiodic".into()));
        }
        let mut w = vec![0; self.memory];
        for idx in 0..self.log_weights.len() {
            let mut r = idx;
            for j in (0..self.memory).rev() {
                w[j] = (r % k) as Letter;
                r /= k;
            }
            if self.is_admissible(&w) && !self.log_weights[idx].is_finite() {
                return Err(Error::Domain(format!("log weight of {w:?} is not finite")));
            }
        }
        let tail = &self.base_tail;
        if tail.period.is_empty() {
            return arg("base tail period must be non-empty");
        }
        for &l in tail.preperiod.iter().chain(&tail.period) {
            self.check_letter(l)?;
        }
        let span = tail.preperiod.len() + tail.period.len() + 1;
        if !self.is_admissible(&tail.prefix(span)) {
            return Err(Error::Domain("base tail is not admissible".into()));
        }
        if !self.allowed(self.letter_a, tail.letter(0)) {
            return Err(Error::Domain("letter a cannot precede the base tail".into()));
        }
        Ok(())
    }

    /// Additional check for twisted-measure mode: the tail starts with `A` and
    /// contains no other `A`.
    pub fn validate_twisted(&self) -> Result<()> {
        let t = &self.base_tail;
        let ok = t.letter(0) == self.letter_A
            && !t.preperiod.is_empty()
            && !t.preperiod[1..].contains(&self.letter_A)
            && !t.period.contains(&self.letter_A);
        if ok {
            Ok(())
        } else {
            Err(Error::Domain("base tail must contain letter A exactly once, at position 0".into()))
        }
    }

    fn check_letter(&self, l: Letter) -> Result<()> {
        if (l as usize) < self.alphabet_size {
            Ok(())
        } else {
            arg(format!("unknown letter {l}"))
        }
    }

    pub fn allowed(&self, i: Letter, j: Letter) -> bool {
        self.transitions[i as usize][j as usize]
    }

    pub fn is_admissible(&self, w: &[Letter]) -> bool {
        w.iter().all(|&l| (l as usize) < self.alphabet_size) && w.windows(2).all(|p| self.allowed(p[0], p[1]))
    }

    pub fn is_full_shift(&self) -> bool {
        self.transitions.iter().all(|r| r.iter().all(|&x| x))
    }

    fn block_index(&self, block: &[Letter]) -> usize {
        block.iter().fold(0, |acc, &l| acc * self.alphabet_size + l as usize)
    }

    /// `log R` of a point whose first `memory` letters are `block`.
    pub fn log_weight(&self, block: &[Letter]) -> f64 {
        debug_assert_eq!(block.len(), self.memory);
        self.log_weights[self.block_index(block)]
    }

    pub fn weight(&self, block: &[Letter]) -> f64 {
        self.log_weight(block).exp()
    }

    /// `R_n(w · tail)`, where `tail` supplies at least `memory - 1` letters.
    pub fn birkhoff_weight_with(&self, w: &[Letter], tail: &[Letter]) -> Result<f64> {
        let m = self.memory;
        if w.is_empty() {
            return Ok(1.0);
        }
        if tail.len() + 1 < m {
            return arg("tail too short for the potential memory");
        }
        let mut s = w.to_vec();
        s.extend_from_slice(&tail[..m - 1]);
        if !self.is_admissible(&s) {
            return Err(Error::Domain("word followed by the tail is not admissible".into()));
        }
        let r: f64 = (0..w.len()).map(|i| self.weight(&s[i..i + m])).product();
        Ok(r)
    }

    /// `R_n(w · x)` for an eventually periodic tail `x`.
    pub fn birkhoff_weight(&self, w: &[Letter], tail: &BaseTail) -> Result<f64> {
        let t = tail.prefix(self.memory.max(1));
        if !w.is_empty() && !self.allowed(*w.last().unwrap(), t[0]) {
            return Err(Error::Domain("w followed by the tail is not admissible".into()));
        }
        self.birkhoff_weight_with(w, &t[..self.memory - 1])
    }

    /// `R_n` of the periodic point `w^∞`.
    pub fn periodic_weight(&self, w: &[Letter]) -> f64 {
        let n = w.len();
        let m = self.memory;
        let mut block = vec![0; m];
        let mut log = 0.0;
        for i in 0..n {
            for (j, b) in block.iter_mut().enumerate() {
                *b = w[(i + j) % n];
            }
            log += self.log_weight(&block);
        }
        log.exp()
    }

    /// Admissible words of length `n` from `b_first` to `b_last`, streamed in
    /// lexicographic order.
    pub fn enumerate_words(&self, b_first: Letter, b_last: Letter, n: usize) -> Result<WordIter<'_>> {
        if n == 0 {
            return arg("word length must be positive");
        }
        self.check_letter(b_first)?;
        self.check_letter(b_last)?;
        Ok(WordIter::new(self, b_first, Some(b_last), n))
    }

    /// All admissible words of length `n` starting with `b_first`.
    pub fn words_from(&self, b_first: Letter, n: usize) -> WordIter<'_> {
        WordIter::new(self, b_first, None, n)
    }

    /// Periodic sum through `[b]` at period `n`, optionally restricted to
    /// periodic words with trivial marking product. Brute force; see
    /// `thermo` for the transfer-matrix route at large `n`.
    pub fn periodic_sum(&self, b: Letter, n: usize, constraint: Option<(&GroupBackend, &Marking)>) -> Result<f64> {
        if n == 0 {
            return arg("period must be positive");
        }
        self.check_letter(b)?;
        let mut total = 0.0;
        for w in self.words_from(b, n) {
            if !self.allowed(*w.last().unwrap(), b) {
                continue;
            }
            if let Some((g, m)) = constraint {
                let p = m.product(g, &w);
                if g.shift_point(&p, &g.base_point()) != g.base_point() {
                    continue;
                }
            }
            total += self.periodic_weight(&w);
        }
        Ok(total)
    }

    /// n-th first-return coefficient. For `A == a` this is the sum over periodic
    /// words `A w` of period `n` with no `A` inside `w`; for `A != a` it is the sum
    /// of `R_n(w x)` over `w` from `A` to `a` with no internal `aA` pattern.
    #[allow(non_snake_case)]
    pub fn first_return_sum(&self, A: Letter, a: Letter, n: usize) -> Result<f64> {
        if n < 2 {
            return arg("first-return coefficients need n >= 2");
        }
        self.check_letter(A)?;
        self.check_letter(a)?;
        let mut total = 0.0;
        if A == a {
            for w in self.words_from(A, n) {
                if w[1..].contains(&A) || !self.allowed(w[n - 1], A) {
                    continue;
                }
                total += self.periodic_weight(&w);
            }
        } else {
            if !self.allowed(a, A) {
                return Ok(0.0);
            }
            let tail = self.base_tail.prefix(self.memory.saturating_sub(1));
            for w in self.enumerate_words(A, a, n)? {
                if w.windows(2).any(|p| p[0] == a && p[1] == A) {
                    continue;
                }
                total += self.birkhoff_weight_with(&w, &tail)?;
            }
        }
        Ok(total)
    }

    /// Full shift on `weights.len()` letters with memory-1 potential `log p_i`.
    pub fn full_shift(weights: &[f64]) -> Result<Self> {
        let k = weights.len();
        ShiftSpec::new(
            vec![vec![true; k]; k],
            1,
            weights.iter().map(|w| w.ln()).collect(),
            0,
            0,
            BaseTail::new(vec![], vec![0])?,
        )
    }

    /// Replaces the distinguished letters and base tail.
    #[allow(non_snake_case)]
    pub fn with_letters(mut self, A: Letter, a: Letter, tail: BaseTail) -> Result<Self> {
        self.letter_A = A;
        self.letter_a = a;
        self.base_tail = tail;
        self.validate()?;
        Ok(self)
    }

    /// Multiplies every weight by `exp(-shift)`.
    pub fn shifted(&self, shift: f64) -> Self {
        let mut s = self.clone();
        s.log_weights.iter_mut().for_each(|x| *x -= shift);
        s
    }
}

/// Depth-first lexicographic word stream.
pub struct WordIter<'a> {
    spec: &'a ShiftSpec,
    last: Option<Letter>,
    n: usize,
    word: Vec<Letter>,
    started: bool,
    done: bool,
}

impl<'a> WordIter<'a> {
    fn new(spec: &'a ShiftSpec, first: Letter, last: Option<Letter>, n: usize) -> Self {
        WordIter { spec, last, n, word: vec![first], started: false, done: false }
    }

    /// Extends `word` with the smallest admissible letters; false if stuck.
    fn descend(&mut self) -> bool {
        while self.word.len() < self.n {
            let prev = *self.word.last().unwrap();
            match (0..self.spec.alphabet_size as Letter).find(|&b| self.spec.allowed(prev, b)) {
                Some(b) => self.word.push(b),
                None => return false,
            }
        }
        true
    }

    /// Moves to the lexicographic successor among prefixes of length `n`.
    fn advance(&mut self) -> bool {
        loop {
            if self.word.len() <= 1 {
                return false;
            }
            let cur = self.word.pop().unwrap();
            let prev = *self.word.last().unwrap();
            let next = (cur + 1..self.spec.alphabet_size as Letter).find(|&b| self.spec.allowed(prev, b));
            if let Some(b) = next {
                self.word.push(b);
                if self.descend() {
                    return true;
                }
            }
        }
    }
}

impl Iterator for WordIter<'_> {
    type Item = Vec<Letter>;

    fn next(&mut self) -> Option<Vec<Letter>> {
        loop {
            if self.done {
                return None;
            }
            let ok = if !self.started {
                self.started = true;
                self.descend() || self.advance()
            } else {
                self.advance()
            };
            if !ok {
                self.done = true;
                return None;
            }
            if self.last.map_or(true, |b| *self.word.last().unwrap() == b) {
                return Some(self.word.clone());
            }
        }
    }
}

fn reachable(t: &[Vec<bool>], from: usize) -> Vec<bool> {
    let mut seen = vec![false; t.len()];
    let mut stack = vec![from];
    seen[from] = true;
    while let Some(i) = stack.pop() {
        for j in 0..t.len() {
            if t[i][j] && !seen[j] {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    seen
}

pub fn is_irreducible(t: &[Vec<bool>]) -> bool {
    let fwd = reachable(t, 0);
    let tt: Vec<Vec<bool>> = (0..t.len()).map(|i| (0..t.len()).map(|j| t[j][i]).collect()).collect();
    let bwd = reachable(&tt, 0);
    fwd.iter().chain(&bwd).all(|&x| x)
}

/// Gcd of cycle lengths of an irreducible graph (BFS level differences).
pub fn period(t: &[Vec<bool>]) -> usize {
    let n = t.len();
    let mut level = vec![usize::MAX; n];
    level[0] = 0;
    let mut queue = std::collections::VecDeque::from([0]);
    let mut g = 0usize;
    while let Some(i) = queue.pop_front() {
        for j in 0..n {
            if !t[i][j] {
                continue;
            }
            if level[j] == usize::MAX {
                level[j] = level[i] + 1;
                queue.push_back(j);
            } else {
                g = gcd(g, (level[i] + 1).abs_diff(level[j]));
            }
        }
    }
    g
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groups::Elem;

    pub(crate) fn golden_mean() -> ShiftSpec {
        ShiftSpec::new(
            vec![vec![true, true], vec![true, false]],
            1,
            vec![0.0, 0.0],
            0,
            0,
            BaseTail::new(vec![], vec![0]).unwrap(),
        )
        .unwrap()
    }

    fn matpow_entry(t: &[Vec<bool>], n: usize, i: usize, j: usize) -> u64 {
        let k = t.len();
        let mut v = vec![0u64; k];
        v[i] = 1;
        for _ in 0..n {
            let mut w = vec![0u64; k];
            for a in 0..k {
                for b in 0..k {
                    if t[a][b] {
                        w[b] += v[a];
                    }
                }
            }
            v = w;
        }
        v[j]
    }

    #[test]
    fn golden_mean_words() {
        let s = golden_mean();
        let words: Vec<_> = s.enumerate_words(0, 0, 3).unwrap().collect();
        assert_eq!(words, vec![vec![0, 0, 0], vec![0, 1, 0]]);
        assert_eq!(s.enumerate_words(1, 1, 1).unwrap().count(), 1);
        assert!(s.enumerate_words(0, 0, 0).is_err());
        assert!(s.enumerate_words(0, 5, 2).is_err());
    }

    #[test]
    fn full_four_shift_count() {
        let s = ShiftSpec::full_shift(&[0.25; 4]).unwrap();
        assert_eq!(s.enumerate_words(0, 1, 3).unwrap().count(), 4);
    }

    #[test]
    fn weights() {
        let s = ShiftSpec::full_shift(&[0.25; 4]).unwrap();
        let tail = s.base_tail.clone();
        assert!((s.birkhoff_weight(&[0, 1, 2], &tail).unwrap() - 1.0 / 64.0).abs() < 1e-15);
        assert_eq!(s.birkhoff_weight(&[], &tail).unwrap(), 1.0);
        let h = ShiftSpec::full_shift(&[0.5, 0.5]).unwrap();
        assert!((h.birkhoff_weight(&[0, 1, 0], &h.base_tail).unwrap() - 0.125).abs() < 1e-15);
    }

    #[test]
    fn periodic_sums() {
        let h = ShiftSpec::full_shift(&[0.5, 0.5]).unwrap();
        assert!((h.periodic_sum(0, 3, None).unwrap() - 0.5).abs() < 1e-15);
        let g = golden_mean();
        assert_eq!(g.periodic_sum(1, 1, None).unwrap(), 0.0);
        let z = GroupBackend::free_abelian(1);
        let m = Marking::new(&z, vec![Elem::from_slice(&[1]), Elem::from_slice(&[-1])]).unwrap();
        assert!((h.periodic_sum(0, 2, Some((&z, &m))).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn first_returns() {
        let h = ShiftSpec::full_shift(&[0.5, 0.5]).unwrap();
        for n in 2..10 {
            assert!((h.first_return_sum(0, 0, n).unwrap() - 0.5f64.powi(n as i32)).abs() < 1e-15);
        }
        let g = golden_mean();
        assert_eq!(g.first_return_sum(0, 0, 2).unwrap(), 1.0);
        let two = ShiftSpec::full_shift(&[0.5, 0.5]).unwrap().with_letters(0, 1, BaseTail::new(vec![], vec![0]).unwrap()).unwrap();
        assert!(two.first_return_sum(0, 1, 2).unwrap() > 0.0);
    }

    #[test]
    fn mixing_checks() {
        assert!(ShiftSpec::new(vec![vec![false, true], vec![true, false]], 1, vec![0.0; 2], 0, 0, BaseTail::new(vec![], vec![0, 1]).unwrap()).is_err());
        assert!(ShiftSpec::new(vec![vec![true, false], vec![false, true]], 1, vec![0.0; 2], 0, 0, BaseTail::new(vec![], vec![0]).unwrap()).is_err());
        let t = vec![vec![true, true, false], vec![false, false, true], vec![true, false, true]];
        assert_eq!(period(&t), 1);
    }

    #[test]
    fn word_count_matches_matrix_power() {
        let g = golden_mean();
        for n in 1..12 {
            for (b0, b1) in [(0, 0), (0, 1), (1, 0)] {
                let c = g.enumerate_words(b0, b1, n).unwrap().count() as u64;
                assert_eq!(c, matpow_entry(&g.transitions, n - 1, b0 as usize, b1 as usize));
            }
        }
    }
}
