//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on failure.

use std::time::{Duration, Instant};

use skewtherm::decaylab::{borel_cantelli_bound, chain_of, decay_report, heavy_tail_vector, sample_paths};
use skewtherm::engine::EngineOptions;
use skewtherm::gdensity::{gamma_estimate, GramKind, Scope};
use skewtherm::groups::GroupBackend;
use skewtherm::shiftspace::BaseTail;
use skewtherm::slowvar::{construct_slow_from_log_d, log_grid, slow_properties_check};
use skewtherm::thermo::{conformal_and_gibbs_check, gurevic_pressure, spr_gamma, tilt_minimize, transfer_spectrum};
use skewtherm::twisted::*;
use skewtherm::{ConeVector, Elem, Letter, ShiftSpec, SlowFunction, System};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn kesten_free() -> Outcome {
    let sys = System::free_simple(2);
    let f = ConeVector::delta_e(&sys.group);
    let g = gamma_estimate(GramKind::F, &f, &sys, Scope::All, 2000, &SlowFunction::unit(), EngineOptions::exact()).unwrap();
    outcome((0.856..=0.876).contains(&g.value), format!("gamma = {:.6} (target {:.6}, window [0.856, 0.876])", g.value, 3f64.sqrt() / 2.0))
}

fn kesten_amenable() -> Outcome {
    let unit = SlowFunction::unit();
    let z = System::lattice_simple(1);
    let gz = gamma_estimate(GramKind::F, &ConeVector::delta_e(&z.group), &z, Scope::All, 2000, &unit, EngineOptions::exact()).unwrap();
    let z2 = System::lattice_simple(2);
    let gz2 = gamma_estimate(GramKind::F, &ConeVector::delta_e(&z2.group), &z2, Scope::All, 400, &unit, EngineOptions::exact()).unwrap();
    let pass = (0.98..=1.0).contains(&gz.value) && (0.97..=1.0).contains(&gz2.value);
    outcome(pass, format!("Z: {:.6} in [0.98, 1]; Z^2: {:.6} in [0.97, 1]", gz.value, gz2.value))
}

fn extension_pressure() -> Outcome {
    let sys = System::free_simple(2);
    let f = ConeVector::delta_e(&sys.group);
    let g = gamma_estimate(GramKind::F, &f, &sys, Scope::All, 2000, &SlowFunction::unit(), EngineOptions::exact()).unwrap();
    let p = gurevic_pressure(&sys, 2000, true).unwrap();
    let d = (p.exp() - g.value).abs();
    outcome(d <= 0.02, format!("exp(P) = {:.6}, gamma = {:.6}, |diff| = {d:.2e} (tol 0.02)", p.exp(), g.value))
}

fn tilt_identity() -> Outcome {
    let sys = System::lattice_walk(1, &[0.75, 0.25]).unwrap();
    let t = tilt_minimize(&sys).unwrap();
    let dp = (t.pressure - (3f64.sqrt() / 2.0).ln()).abs();
    let dx = (t.xi[0] + 0.5 * 3f64.ln()).abs();
    let tw = sys.with_twisted_letters(0, 0).unwrap();
    let gamma = t.pressure.exp();
    let grid = t_grid(gamma, 0.5, 6);
    let tab = upsilon(UpsilonKind::Star, &[Elem::from_slice(&[1])], &tw, &ConeVector::delta_e(&tw.group), &grid, gamma, 4000, &SlowFunction::unit(), Model::Linear)
        .unwrap();
    let want = 1.0 / 3f64.sqrt();
    let du = (tab.extrapolated[0] - want).abs() / want;
    outcome(
        dp <= 1e-6 && dx <= 1e-6 && du <= 0.05,
        format!("|dP| = {dp:.1e}, |dxi| = {dx:.1e} (tol 1e-6); Upsilon_*(+1) = {:.4} vs {want:.4}, rel {du:.2e} (tol 5%)", tab.extrapolated[0]),
    )
}

fn boundary_exact() -> Outcome {
    let group = GroupBackend::free(2);
    let mut words: Vec<Vec<i32>> = vec![vec![]];
    let mut worst: f64 = 0.0;
    let mut count = 0usize;
    for len in 0..=12usize {
        if len > 0 {
            words = words
                .into_iter()
                .flat_map(|w| {
                    let last = w.last().copied();
                    [1, -1, 2, -2].into_iter().filter(move |&s| last != Some(-s)).map(move |s| [w.as_slice(), &[s]].concat())
                })
                .collect();
        }
        let want = (1.0 + len as f64 / 2.0) * 3f64.sqrt().powi(-(len as i32));
        for w in &words {
            let v = boundary_coefficient(&group, &Elem::from_slice(w)).unwrap();
            worst = worst.max((v - want).abs());
            count += 1;
        }
    }
    outcome(worst <= 1e-12, format!("{count} elements with |g| <= 12, max |error| = {worst:.1e} (tol 1e-12)"))
}

fn spherical() -> Outcome {
    let gamma = kesten_radius(2);
    let grid = t_grid(gamma, 0.5, 8);
    let prof = spherical_profile(2, 5, &grid, 8000, &SlowFunction::unit()).unwrap();
    let finest = prof.last().unwrap();
    let (spread, dev) = radial_constancy(2, 1.05, 8, 3).unwrap();
    let eps: Vec<f64> = grid.iter().map(|t| t / gamma - 1.0).collect();
    let r2: Vec<f64> = prof.iter().map(|p| p.values[2]).collect();
    let r2x = extrapolate(&eps, &r2, Model::Sqrt).unwrap();
    let pass = spread <= 1e-9 && dev <= 1e-9 && finest.eigen_defect <= 0.05;
    outcome(
        pass,
        format!(
            "sphere spread {spread:.1e}, radial-formula deviation {dev:.1e} (tol 1e-9); eigen-defect {:.4} at t = {:.6} (tol 0.05); Ubar(2)/Ubar(0) -> {r2x:.4} (closed form 0.6667)",
            finest.eigen_defect, finest.t
        ),
    )
}

fn spr() -> Outcome {
    let two = ShiftSpec::full_shift(&[0.5, 0.5]).unwrap();
    let g = spr_gamma(&two, 200).unwrap();
    let p = transfer_spectrum(&two, &[], None).unwrap().pressure.exp();
    outcome((g - 0.5).abs() <= 1e-3 && g < p, format!("gamma(SPR) = {g:.6} (target 0.5, tol 1e-3), exp(P) = {p:.6}"))
}

fn conformal_gibbs() -> Outcome {
    let two = ShiftSpec::full_shift(&[0.3, 0.7]).unwrap();
    let td = transfer_spectrum(&two, &[], None).unwrap();
    let g = conformal_and_gibbs_check(&two, &td, 10).unwrap();
    let width = g.gibbs_max - g.gibbs_min;
    let m2 = ShiftSpec::new(
        vec![vec![true; 3]; 3],
        2,
        (0..9).map(|i| -0.2 * i as f64 - 0.3 + 0.05 * ((i * 7) % 5) as f64).collect(),
        0,
        1,
        BaseTail::new(vec![], vec![0]).unwrap(),
    )
    .unwrap();
    let td2 = transfer_spectrum(&m2, &[], None).unwrap();
    let g2 = conformal_and_gibbs_check(&m2, &td2, 7).unwrap();
    let pass = g.conformal_defect <= 1e-10 && width <= 1e-9 && g2.conformal_defect <= 1e-9;
    outcome(
        pass,
        format!(
            "2-shift defect {:.1e} (tol 1e-10), Gibbs width {width:.1e} (tol 1e-9); memory-2 defect {:.1e} (tol 1e-9)",
            g.conformal_defect, g2.conformal_defect
        ),
    )
}

fn twisted_internals() -> Outcome {
    let unit = SlowFunction::unit();
    let mut notes = Vec::new();
    let mut pass = true;
    // [A]-mass on the F_2 system and on a biased Z walk
    let f2 = System::free_simple(2).with_twisted_letters(0, 2).unwrap();
    let m = approx_measure(&f2, Mode::Plain, &ConeVector::delta_e(&f2.group), 1.0, 10, &unit, 1, EngineOptions::exact(), Some(kesten_radius(2))).unwrap();
    let zb = System::lattice_walk(1, &[0.7, 0.3]).unwrap().with_twisted_letters(0, 1).unwrap();
    let f = ConeVector::from_pairs(&zb.group, [(Elem::from_slice(&[0]), 1.0), (Elem::from_slice(&[2]), 0.5)]).unwrap();
    let mz = approx_measure(&zb, Mode::Star, &f, 1.0, 60, &unit, 1, EngineOptions::exact(), None).unwrap();
    let da = (m.mass(&[0]) - 1.0).abs().max((mz.mass(&[0]) - 1.0).abs());
    pass &= da <= 1e-6;
    notes.push(format!("[A]-mass error {da:.1e}"));
    // regrouping
    let mut reg: f64 = 0.0;
    for (w, b) in [(vec![0u8], 1u8), (vec![1, 0], 0), (vec![0, 1, 1], 0), (vec![1, 1, 0], 1)] {
        reg = reg.max(main_equality_check(&zb, Mode::Plain, &f, 1.05, 14, &unit, &w, b).unwrap().abs_error);
    }
    pass &= reg <= 1e-10;
    notes.push(format!("regrouping {reg:.1e}"));
    // coefficient identity on F_2 words ending in A
    let gamma = kesten_radius(2);
    let grid = t_grid(gamma, 0.5, 8);
    let words: Vec<Vec<Letter>> = vec![vec![0], vec![0, 0], vec![1, 0], vec![2, 3, 0], vec![0, 2, 0, 0], vec![3, 1, 1, 0], vec![0, 0, 0, 0], vec![2, 2, 0]];
    let reps = coefficient_identity_check(&words, 2, 0, 0, &grid, 8000, &unit).unwrap();
    let ci = reps.iter().map(|r| r.extrapolated.abs()).fold(0.0, f64::max);
    pass &= ci <= 0.02;
    notes.push(format!("coefficient identity {ci:.1e}"));
    // two-sided measure on the symmetric Z walk
    let zs = System::lattice_simple(1).with_twisted_letters(0, 0).unwrap();
    let e = ConeVector::delta_e(&zs.group);
    let ts = [1.2, 1.02, 1.01, 1.005, 1.0025];
    let ms = two_sided_measures(&zs, &e, &ts, 5000, &unit, 4).unwrap();
    let defect = |m: &CylinderMeasure| {
        let tot = total_mass(m, 2);
        shift_invariance_defect(&|u, v| m.mass2(u, v) / tot, 2, 3).max_abs
    };
    let (d_far, d_near) = (defect(&ms[0]), defect(&ms[1]));
    pass &= d_near < d_far;
    let eps: Vec<f64> = ts[1..].iter().map(|t| t - 1.0).collect();
    let mut bern: f64 = 0.0;
    for key in ms[1].masses.keys() {
        let vals: Vec<f64> = ms[1..].iter().map(|m| m.masses[key] / total_mass(m, 2)).collect();
        let x = extrapolate(&eps, &vals, Model::Linear).unwrap();
        let want = 0.5f64.powi((key.past.len() + key.future.len()) as i32);
        bern = bern.max((x - want).abs() / want);
    }
    pass &= bern <= 0.05;
    notes.push(format!(
        "shift defect {d_near:.2e} at t=1.02 < {d_far:.2e} at t=1.2; Bernoulli deviation {bern:.1e} extrapolated from t = 1.02..1.0025 ({:.1e} at t=1.02)",
        bernoulli_deviation(&ms[1], &zs)
    ));
    outcome(pass, notes.join("; "))
}

fn slow_function() -> Outcome {
    let ld = |n: u64| -2.0 * (n as f64).ln();
    let c = construct_slow_from_log_d(&ld, 1 << 40, "inverse-square").unwrap();
    let r = slow_properties_check(&c, &log_grid(1_000_000, 60), Some(&ld));
    let e = r.enhancement.unwrap_or(0.0);
    let pass = r.submultiplicative && r.monotone && (r.final_ratio - 1.0).abs() < 1e-3 && e >= 3.0;
    outcome(
        pass,
        format!(
            "submultiplicative {} (excess {:.1e}), c_n/c_(n-1) at 1e6 = {:.8}, enhancement {e:.3} (>= 3)",
            r.submultiplicative, r.max_submult_excess, r.final_ratio
        ),
    )
}

fn decay() -> Outcome {
    let sys = System::free_simple(2);
    let chain = chain_of(&sys).unwrap();
    let paths = sample_paths(&chain, Some((&sys.group, &sys.marking)), 1000, 200, 42).unwrap();
    let e = ConeVector::delta_e(&sys.group);
    let rep = decay_report(&sys.group, &e, &e, 0.95, &paths, 50).unwrap();
    let bc = borel_cantelli_bound(&sys, &e, &e, 0.95, kesten_radius(2), 2000).unwrap();
    let z = System::lattice_simple(1);
    let zc = chain_of(&z).unwrap();
    let zp = sample_paths(&zc, Some((&z.group, &z.marking)), 200, 400, 42).unwrap();
    let v = heavy_tail_vector(&z.group, 1.0, 400).unwrap();
    let heavy = decay_report(&z.group, &ConeVector::delta_e(&z.group), &v, 0.95, &zp, 50).unwrap();
    let persistent = heavy.paths_with_exceedance as f64 / heavy.paths as f64 >= 0.9 && heavy.max_exceedance_n == Some(400);
    let pass = rep.rate <= 1e-3 && rep.empirical_bc_sum <= bc.bound && persistent;
    outcome(
        pass,
        format!(
            "F2 exceedance rate {:.1e} (tol 1e-3), empirical BC sum {:.3} <= majorant {:.3}; Z heavy tail: {}/{} paths exceed, last at n = {:?}",
            rep.rate, rep.empirical_bc_sum, bc.bound, heavy.paths_with_exceedance, heavy.paths, heavy.max_exceedance_n
        ),
    )
}

fn drift() -> Outcome {
    let eq = equilibrium_drift(2, 4000);
    let gamma = kesten_radius(2);
    let ft = FreeTwisted::new(2, 0, 0, gamma * 1.01, 2000, &SlowFunction::unit(), 10, 14).unwrap();
    let d = ft.drift(10).unwrap();
    outcome((eq - 0.5).abs() <= 0.02 && d < 0.5, format!("equilibrium drift {eq:.4} (0.5 +- 0.02); twisted drift at n = 10: {d:.4} (< 0.5)"))
}

fn main() {
    let criteria: Vec<(&str, fn() -> Outcome)> = vec![
        ("1 kesten-free", kesten_free),
        ("2 kesten-amenable", kesten_amenable),
        ("3 extension-pressure", extension_pressure),
        ("4 tilt-identity", tilt_identity),
        ("5 boundary", boundary_exact),
        ("6 spherical", spherical),
        ("7 spr", spr),
        ("8 conformal-gibbs", conformal_gibbs),
        ("9 twisted-internals", twisted_internals),
        ("10 slow-function", slow_function),
        ("11 decay", decay),
        ("12 drift", drift),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    println!("\nacceptance criteria");
    for (name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let t0 = Instant::now();
        let o = run();
        let el: Duration = t0.elapsed();
        if !o.pass {
            failed += 1;
        }
        println!("{} {name} [{:.1}s]: {}", if o.pass { "PASS" } else { "FAIL" }, el.as_secs_f64(), o.detail);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
