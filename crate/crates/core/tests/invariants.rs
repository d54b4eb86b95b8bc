//! Randomized checks of the structural invariants.

use proptest::prelude::*;

use skewtherm::decaylab::{chain_of, decay_report, sample_paths};
use skewtherm::engine::{ElemMap, EngineOptions};
use skewtherm::gdensity::build_density;
use skewtherm::repspace::{convolve, inner, star, translate};
use skewtherm::shiftspace::{is_irreducible, period};
use skewtherm::thermo::tilted_pressure_at;
use skewtherm::twisted::{upsilon, Model, UpsilonKind};
use skewtherm::{BaseTail, ConeVector, Density, Elem, GroupBackend, GroupKind, Letter, ShiftSpec, SlowFunction, System};

fn backends() -> Vec<GroupBackend> {
    vec![
        GroupBackend::free(2),
        GroupBackend::free_abelian(2),
        GroupBackend::new(GroupKind::AbelianQuotient { dim: 2, basis: vec![vec![3, 0], vec![1, 2]] }).unwrap(),
        GroupBackend::new(GroupKind::Permutation { points: 5, generators: vec![vec![1, 2, 3, 4, 0], vec![1, 0, 2, 3, 4]] }).unwrap(),
    ]
}

/// Product of generator letters `(i, inverse)`.
fn word_elem(g: &GroupBackend, w: &[(usize, bool)]) -> Elem {
    w.iter().fold(g.identity(), |acc, &(i, inv)| g.compose(&acc, &g.generator(i, inv).unwrap()))
}

fn gen_word() -> impl Strategy<Value = Vec<(usize, bool)>> {
    prop::collection::vec((0usize..2, any::<bool>()), 0..10)
}

fn cone(g: &GroupBackend, items: &[(Vec<(usize, bool)>, f64)]) -> ConeVector {
    ConeVector::from_pairs(g, items.iter().map(|(w, x)| (word_elem(g, w), *x))).unwrap()
}

fn cone_items() -> impl Strategy<Value = Vec<(Vec<(usize, bool)>, f64)>> {
    prop::collection::vec((gen_word(), 0.0f64..2.0), 1..6)
}

/// Irreducible aperiodic 4-letter SFT with a memory-`m` potential, or `None`
/// when no admissible periodic tail of period at most two exists.
fn sft(bits: &[bool], memory: usize, logs: &[f64]) -> Option<ShiftSpec> {
    let t: Vec<Vec<bool>> = (0..4).map(|i| bits[4 * i..4 * i + 4].to_vec()).collect();
    if !is_irreducible(&t) || period(&t) != 1 {
        return None;
    }
    let period_word: Vec<Letter> = if let Some(b) = (0..4).find(|&b| t[b][b]) {
        vec![b as Letter]
    } else {
        let (b, c) = (0..4).flat_map(|b| (0..4).map(move |c| (b, c))).find(|&(b, c)| t[b][c] && t[c][b])?;
        vec![b as Letter, c as Letter]
    };
    let a = (0..4).find(|&a| t[a][period_word[0] as usize])? as Letter;
    let n = 4usize.pow(memory as u32);
    ShiftSpec::new(t, memory, logs[..n].to_vec(), 0, a, BaseTail::new(vec![], period_word).unwrap()).ok()
}

fn mat_pow_entry(t: &[Vec<bool>], n: usize, i: usize, j: usize) -> u64 {
    let k = t.len();
    let mut v = vec![0u64; k];
    v[i] = 1;
    for _ in 0..n {
        let mut nv = vec![0u64; k];
        for a in 0..k {
            for b in 0..k {
                if t[a][b] {
                    nv[b] += v[a];
                }
            }
        }
        v = nv;
    }
    v[j]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn word_count_is_matrix_power(bits in prop::collection::vec(any::<bool>(), 16), logs in prop::collection::vec(-2.0f64..0.0, 4)) {
        let Some(spec) = sft(&bits, 1, &logs) else { return Ok(()) };
        for n in 1..=12usize {
            for b0 in 0..4u8 {
                for b1 in 0..4u8 {
                    let count = spec.enumerate_words(b0, b1, n).unwrap().count() as u64;
                    prop_assert_eq!(count, mat_pow_entry(&spec.transitions, n - 1, b0 as usize, b1 as usize));
                }
            }
        }
    }

    #[test]
    fn birkhoff_cocycle_and_locality(
        bits in prop::collection::vec(any::<bool>(), 16),
        logs in prop::collection::vec(-2.0f64..0.5, 16),
        memory in 1usize..=2,
        split in 1usize..6,
        seed in any::<u64>(),
    ) {
        let Some(spec) = sft(&bits, memory, &logs) else { return Ok(()) };
        let tail = spec.base_tail.prefix(4);
        // a random admissible word ending before the tail, built backwards
        let mut word = vec![tail[0]];
        let mut s = seed;
        while word.len() < 8 {
            let succ = word[0];
            let preds: Vec<Letter> = (0..4).filter(|&b| spec.allowed(b, succ)).collect();
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            word.insert(0, preds[(s >> 33) as usize % preds.len()]);
        }
        word.pop();
        let (w, u) = word.split_at(split);
        let ut: Vec<Letter> = u.iter().chain(&tail).copied().collect();
        let lhs = spec.birkhoff_weight_with(&word, &tail).unwrap();
        let rhs = spec.birkhoff_weight_with(w, &ut).unwrap() * spec.birkhoff_weight_with(u, &tail).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs());
        // the potential only sees memory - 1 letters of the tail
        let mut other = tail.clone();
        for x in other.iter_mut().skip(memory - 1) {
            *x = (*x + 1) % 4;
        }
        prop_assert_eq!(spec.birkhoff_weight_with(&word, &tail).unwrap(), spec.birkhoff_weight_with(&word, &other).unwrap());
    }

    #[test]
    fn first_returns_below_periodic(bits in prop::collection::vec(any::<bool>(), 16), logs in prop::collection::vec(-2.0f64..0.0, 4)) {
        let Some(spec) = sft(&bits, 1, &logs) else { return Ok(()) };
        for n in 2..=8 {
            let f = spec.first_return_sum(0, 0, n).unwrap();
            let p = spec.periodic_sum(0, n, None).unwrap();
            prop_assert!(f <= p * (1.0 + 1e-12));
        }
    }

    #[test]
    fn group_axioms_and_action(a in gen_word(), b in gen_word(), c in gen_word()) {
        for g in backends() {
            let (x, y, z) = (word_elem(&g, &a), word_elem(&g, &b), word_elem(&g, &c));
            let e = g.identity();
            prop_assert_eq!(g.compose(&g.compose(&x, &y), &z), g.compose(&x, &g.compose(&y, &z)));
            prop_assert_eq!(g.compose(&x, &g.inverse(&x)), e.clone());
            prop_assert_eq!(g.compose(&e, &x), x.clone());
            prop_assert_eq!(g.compose(&x, &e), x.clone());
            let p = g.act(&z, &g.base_point());
            prop_assert_eq!(g.act(&e, &p), p.clone());
            prop_assert_eq!(g.act(&g.compose(&x, &y), &p), g.act(&y, &g.act(&x, &p)));
            if g.is_free().is_some() {
                prop_assert!(g.length(&g.compose(&x, &y)) <= g.length(&x) + g.length(&y));
                prop_assert_eq!(g.compose(&g.compose(&x, &e), &e), x.clone());
            }
        }
    }

    #[test]
    fn marking_is_a_homomorphism(w in prop::collection::vec(0u8..4, 1..12), split in 0usize..12) {
        for sys in [System::free_simple(2), System::lattice_simple(2)] {
            let k = split.min(w.len());
            let (u, v) = w.split_at(k);
            let m = &sys.marking;
            prop_assert_eq!(m.product(&sys.group, &w), sys.group.compose(&m.product(&sys.group, u), &m.product(&sys.group, v)));
        }
    }

    #[test]
    fn representation_identities(fi in cone_items(), vi in cone_items(), phi_i in cone_items(), gw in gen_word()) {
        for g in [GroupBackend::free(2), GroupBackend::free_abelian(2)] {
            let (f, v) = (cone(&g, &fi), cone(&g, &vi));
            let h = word_elem(&g, &gw);
            let base = inner(&f, &v).unwrap();
            let moved = inner(&translate(&g, &h, &f).unwrap(), &translate(&g, &h, &v).unwrap()).unwrap();
            prop_assert!((base - moved).abs() <= 1e-12 * (1.0 + base));
            prop_assert!(base <= f.norm() * v.norm() * (1.0 + 1e-12));
            let mut map = ElemMap::default();
            for (w, x) in &phi_i {
                *map.entry(word_elem(&g, w)).or_insert(0.0) += x;
            }
            let phi = Density::from_map(map);
            let pf = convolve(&g, &phi, &f).unwrap();
            prop_assert!(pf.sorted().values().all(|&x| x >= 0.0));
            let lhs = inner(&pf, &v).unwrap();
            let rhs = inner(&f, &convolve(&g, &star(&g, &phi), &v).unwrap()).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
        }
    }

    #[test]
    fn density_l1_and_monotone(p in 0.05f64..0.95, t in 0.9f64..2.0, n in 1usize..7) {
        let unit = SlowFunction::unit();
        let z = System::lattice_walk(1, &[p, 1.0 - p]).unwrap().with_twisted_letters(0, 1).unwrap();
        let f2 = System::free_simple(2).with_twisted_letters(0, 2).unwrap();
        for sys in [z, f2] {
            let d = build_density(&sys, t, n, &unit, false, EngineOptions::exact()).unwrap();
            let d2 = build_density(&sys, t, n + 2, &unit, false, EngineOptions::exact()).unwrap();
            prop_assert!((d.aggregate.total() - d.zeta).abs() <= 1e-10 * d.zeta.max(1e-300));
            for (g, x) in &d.aggregate.mass {
                prop_assert!(d2.aggregate.get(g) >= *x);
            }
            for (a, b) in d.layer_mass.iter().zip(&d2.layer_mass) {
                prop_assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn tilted_pressure_is_convex(p in prop::collection::vec(0.05f64..1.0, 4), a in prop::collection::vec(-2.0f64..2.0, 2), b in prop::collection::vec(-2.0f64..2.0, 2)) {
        let s: f64 = p.iter().sum();
        let probs: Vec<f64> = p.iter().map(|x| x / s).collect();
        let sys = System::lattice_walk(2, &probs).unwrap();
        let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
        let (pa, pb, pm) = (tilted_pressure_at(&sys, &a).unwrap(), tilted_pressure_at(&sys, &b).unwrap(), tilted_pressure_at(&sys, &mid).unwrap());
        prop_assert!(pm <= 0.5 * (pa + pb) + 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn upsilon_identity_and_positivity(p in 0.55f64..0.9, targets in prop::collection::vec(-4i32..=4, 1..4)) {
        let sys = System::lattice_walk(1, &[p, 1.0 - p]).unwrap().with_twisted_letters(0, 0).unwrap();
        let gamma = 2.0 * (p * (1.0 - p)).sqrt();
        let mut els: Vec<Elem> = targets.iter().map(|&x| Elem::from_slice(&[x])).collect();
        els.push(Elem::from_slice(&[0]));
        let grid = [gamma * 1.5, gamma * 1.25, gamma * 1.1];
        for kind in [UpsilonKind::Plain, UpsilonKind::Star] {
            let tab = upsilon(kind, &els, &sys, &ConeVector::delta_e(&sys.group), &grid, gamma, 200, &SlowFunction::unit(), Model::Linear).unwrap();
            for (g, v) in els.iter().zip(&tab.values) {
                prop_assert!(v.iter().all(|&x| x > 0.0));
                if g.as_slice() == [0] {
                    prop_assert!(v.iter().all(|&x| x == 1.0));
                }
            }
        }
    }

    #[test]
    fn decay_counts_monotone_in_gamma(seed in any::<u64>(), g1 in 0.5f64..0.99, g2 in 0.5f64..0.99) {
        let sys = System::free_simple(2);
        let chain = chain_of(&sys).unwrap();
        let paths = sample_paths(&chain, Some((&sys.group, &sys.marking)), 60, 40, seed).unwrap();
        let again = sample_paths(&chain, Some((&sys.group, &sys.marking)), 60, 40, seed).unwrap();
        prop_assert!(paths.iter().zip(&again).all(|(a, b)| a.letters == b.letters));
        let e = ConeVector::delta_e(&sys.group);
        let (lo, hi) = if g1 <= g2 { (g1, g2) } else { (g2, g1) };
        let a = decay_report(&sys.group, &e, &e, lo, &paths, 1).unwrap();
        let b = decay_report(&sys.group, &e, &e, hi, &paths, 1).unwrap();
        prop_assert!(b.exceedances <= a.exceedances);
    }
}
