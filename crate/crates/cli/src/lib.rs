//! Config schema and experiment dispatch for the `skewtherm` binary.

use std::time::Instant;

use anyhow::Context;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use skewtherm::decaylab::{self, RNG_NAME};
use skewtherm::engine::EngineOptions;
use skewtherm::gdensity::{build_density, gamma_estimate, GramKind, Scope};
use skewtherm::slowvar::{construct_slow_from_log_d, log_grid, slow_properties_check};
use skewtherm::thermo::{pressure_report, tilt_minimize};
use skewtherm::twisted::{self, Mode, Model, UpsilonKind};
use skewtherm::{ConeVector, Elem, GroupBackend, GroupKind, Letter, Marking, ShiftSpec, SlowFunction, System};

pub const SCHEMA: &str = "skewtherm/v1";

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: String,
    pub system: SystemConfig,
    /// Distinguished letters `(A, a)` for twisted experiments on walk presets.
    #[serde(default)]
    pub twist: Option<(Letter, Letter)>,
    pub experiment: Experiment,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub budgets: Budgets,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SystemConfig {
    /// Random walk on `F_rank`; uniform when `probs` is omitted.
    FreeWalk { rank: usize, probs: Option<Vec<f64>> },
    /// Nearest-neighbour walk on `Z^dim`.
    LatticeWalk { dim: usize, probs: Option<Vec<f64>> },
    Custom { spec: ShiftSpec, group: GroupKind, marking: Vec<Vec<i32>> },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Budgets {
    /// Largest admissible word length / series order.
    #[serde(default = "default_max_terms")]
    pub max_terms: usize,
    /// Largest `paths * length` for sampling experiments.
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    /// Coset-point budget handed to the group backend.
    #[serde(default)]
    pub max_points: Option<usize>,
}

fn default_max_terms() -> usize {
    100_000
}

fn default_max_steps() -> usize {
    100_000_000
}

impl Default for Budgets {
    fn default() -> Self {
        Budgets { max_terms: default_max_terms(), max_steps: default_max_steps(), max_points: None }
    }
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GramCfg {
    #[default]
    F,
    Star,
    Full,
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeCfg {
    #[default]
    Plain,
    Star,
    TwoSided,
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelCfg {
    #[default]
    Linear,
    Sqrt,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UpsilonCfg {
    pub targets: Vec<Vec<i32>>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    pub k_max: usize,
    pub n_max: usize,
    #[serde(default)]
    pub star: bool,
    #[serde(default)]
    pub model: ModelCfg,
}

fn default_delta() -> f64 {
    0.5
}

fn default_window() -> f64 {
    1.0 / 3.0
}

/// `log d_n = exponent ln n + log_exponent ln ln n`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogDCfg {
    pub exponent: f64,
    #[serde(default)]
    pub log_exponent: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Experiment {
    Kesten {
        n_max: usize,
        #[serde(default)]
        gram: GramCfg,
        /// `(element, weight)` pairs; `delta_e` when omitted.
        #[serde(default)]
        vector: Option<Vec<(Vec<i32>, f64)>>,
        #[serde(default)]
        prune: f64,
    },
    Pressure {
        n_max: usize,
    },
    Density {
        t: f64,
        n_max: usize,
        #[serde(default)]
        prune: f64,
    },
    Twisted {
        t: Vec<f64>,
        n_max: usize,
        depth: usize,
        #[serde(default)]
        mode: ModeCfg,
        #[serde(default)]
        gamma_floor: Option<f64>,
    },
    Spherical {
        radius_max: usize,
        #[serde(default = "default_delta")]
        delta: f64,
        k_max: usize,
        n_max: usize,
    },
    Boundary {
        elements: Vec<Vec<i32>>,
    },
    Tilt {
        #[serde(default)]
        upsilon: Option<UpsilonCfg>,
    },
    Decay {
        gamma: f64,
        paths: usize,
        length: usize,
        n0: usize,
        /// Truncation order of the Borel-Cantelli majorant; skipped when omitted.
        #[serde(default)]
        majorant_n_max: Option<usize>,
        #[serde(default)]
        gamma_floor: Option<f64>,
    },
    Slowvar {
        log_d: LogDCfg,
        #[serde(default = "default_horizon")]
        horizon: u64,
        n_max: u64,
        #[serde(default = "default_grid_points")]
        grid_points: usize,
        #[serde(default = "default_window")]
        window: f64,
    },
}

fn default_horizon() -> u64 {
    1 << 40
}

fn default_grid_points() -> usize {
    60
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Kesten { .. } => "kesten",
            Experiment::Pressure { .. } => "pressure",
            Experiment::Density { .. } => "density",
            Experiment::Twisted { .. } => "twisted",
            Experiment::Spherical { .. } => "spherical",
            Experiment::Boundary { .. } => "boundary",
            Experiment::Tilt { .. } => "tilt",
            Experiment::Decay { .. } => "decay",
            Experiment::Slowvar { .. } => "slowvar",
        }
    }
}

/// Error categories reported in error records; each maps to an exit code.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorKind {
    Schema,
    Budget,
    Numerical,
    Io,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Schema => 2,
            ErrorKind::Budget => 3,
            ErrorKind::Numerical => 4,
            ErrorKind::Io => 5,
        }
    }
}

/// An error tagged with its reporting category.
#[derive(Debug)]
pub struct Tagged(pub ErrorKind, pub String);

impl std::fmt::Display for Tagged {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.1)
    }
}

impl std::error::Error for Tagged {}

fn fail<T>(kind: ErrorKind, msg: impl Into<String>) -> anyhow::Result<T> {
    Err(Tagged(kind, msg.into()).into())
}

pub fn classify(e: &anyhow::Error) -> ErrorKind {
    for cause in e.chain() {
        if let Some(t) = cause.downcast_ref::<Tagged>() {
            return t.0;
        }
        if let Some(k) = cause.downcast_ref::<skewtherm::Error>() {
            return match k {
                skewtherm::Error::Budget(_) => ErrorKind::Budget,
                skewtherm::Error::Argument(_) | skewtherm::Error::Domain(_) | skewtherm::Error::SpaceMismatch(_) => ErrorKind::Schema,
                _ => ErrorKind::Numerical,
            };
        }
        if cause.downcast_ref::<serde_json::Error>().is_some() {
            return ErrorKind::Schema;
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return ErrorKind::Io;
        }
    }
    ErrorKind::Numerical
}

/// One JSON-lines report record.
#[derive(Clone, Debug, Serialize)]
pub struct Record {
    pub experiment: String,
    pub params: Value,
    pub values: Value,
    pub diagnostics: Value,
    pub versions: Value,
    pub seed: u64,
    pub wall_time: f64,
    pub config: Value,
}

pub fn versions() -> Value {
    json!({
        "skewtherm": env!("CARGO_PKG_VERSION"),
        "schema": SCHEMA,
        "rng": RNG_NAME,
    })
}

/// Error record for a failed run; `config` is `null` when parsing failed.
pub fn error_record(experiment: Option<&str>, kind: ErrorKind, message: &str, seed: Option<u64>, config: Option<&ExperimentConfig>) -> Value {
    json!({
        "experiment": experiment,
        "error": { "kind": kind, "message": message, "exit_code": kind.exit_code() },
        "versions": versions(),
        "seed": seed,
        "config": config.map(|c| serde_json::to_value(c).unwrap_or(Value::Null)),
    })
}

pub fn parse_config(text: &str) -> anyhow::Result<ExperimentConfig> {
    let cfg: ExperimentConfig = serde_json::from_str(text).context("config does not match the schema")?;
    if cfg.schema != SCHEMA {
        return fail(ErrorKind::Schema, format!("unsupported schema {:?}, expected {SCHEMA:?}", cfg.schema));
    }
    Ok(cfg)
}

fn elem(v: &[i32]) -> Elem {
    Elem::from_slice(v)
}

pub fn build_system(cfg: &ExperimentConfig) -> anyhow::Result<System> {
    let mut sys = match &cfg.system {
        SystemConfig::FreeWalk { rank, probs } => match probs {
            Some(p) => System::free_walk(*rank, p)?,
            None if *rank > 0 => System::free_simple(*rank),
            None => return fail(ErrorKind::Schema, "rank must be positive"),
        },
        SystemConfig::LatticeWalk { dim, probs } => match probs {
            Some(p) => System::lattice_walk(*dim, p)?,
            None if *dim > 0 => System::lattice_simple(*dim),
            None => return fail(ErrorKind::Schema, "dimension must be positive"),
        },
        SystemConfig::Custom { spec, group, marking } => {
            spec.validate()?;
            let group = GroupBackend::new(group.clone())?;
            let labels = marking.iter().map(|v| elem(v)).collect();
            let marking = Marking::new(&group, labels)?;
            System::new(spec.clone(), group, marking)?
        }
    };
    if let Some((big_a, a)) = cfg.twist {
        let k = sys.spec.alphabet_size as Letter;
        if big_a >= k || a >= k {
            return fail(ErrorKind::Schema, format!("twist letters ({big_a}, {a}) outside the alphabet of size {k}"));
        }
        sys = sys.with_twisted_letters(big_a, a)?;
    }
    if let Some(p) = cfg.budgets.max_points {
        sys.group.point_budget = p;
    }
    Ok(sys)
}

fn check_terms(n: usize, b: &Budgets) -> anyhow::Result<()> {
    if n == 0 {
        return fail(ErrorKind::Schema, "series orders must be positive");
    }
    if n > b.max_terms {
        return fail(ErrorKind::Budget, format!("requested order {n} exceeds the budget of {} terms", b.max_terms));
    }
    Ok(())
}

fn vector(sys: &System, pairs: &Option<Vec<(Vec<i32>, f64)>>) -> anyhow::Result<ConeVector> {
    Ok(match pairs {
        None => ConeVector::delta_e(&sys.group),
        Some(p) => ConeVector::from_pairs(&sys.group, p.iter().map(|(g, x)| (elem(g), *x)))?,
    })
}

fn opts(prune: f64, sequential: bool) -> EngineOptions {
    let mut o = if prune > 0.0 { EngineOptions::pruned(prune) } else { EngineOptions::exact() };
    o.sequential = sequential;
    o
}

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("report types serialize")
}

/// Runs the configured experiment and returns one record per reported quantity.
pub fn run(cfg: &ExperimentConfig, seed: u64, sequential: bool) -> anyhow::Result<Vec<Record>> {
    let start = Instant::now();
    let sys = build_system(cfg)?;
    let budgets = &cfg.budgets;
    let unit = SlowFunction::unit();
    // (values, diagnostics) per record
    let mut out: Vec<(Value, Value)> = Vec::new();
    match &cfg.experiment {
        Experiment::Kesten { n_max, gram, vector: v, prune } => {
            check_terms(*n_max, budgets)?;
            let f = vector(&sys, v)?;
            let kind = match gram {
                GramCfg::F => GramKind::F,
                GramCfg::Star => GramKind::Star,
                GramCfg::Full => GramKind::Full,
            };
            let g = gamma_estimate(kind, &f, &sys, Scope::All, *n_max, &unit, opts(*prune, sequential))?;
            let reference = sys.radial_rank().map(twisted::kesten_radius).or(sys.group.is_amenable().then_some(1.0));
            out.push((
                json!({ "gamma": g.value, "root_test": g.root_test, "beta": g.beta }),
                json!({ "method": g.method, "window": g.window, "points": g.points, "residual": g.residual,
                        "radial_fast_path": sys.radial_rank().is_some(), "reference": reference }),
            ));
        }
        Experiment::Pressure { n_max } => {
            check_terms(*n_max, budgets)?;
            let r = pressure_report(&sys, *n_max)?;
            out.push((to_value(&r), json!({ "exp_gurevic": r.gurevic.exp(), "exp_extension": r.extension.exp() })));
        }
        Experiment::Density { t, n_max, prune } => {
            check_terms(*n_max, budgets)?;
            let d = build_density(&sys, *t, *n_max, &unit, false, opts(*prune, sequential))?;
            out.push((
                json!({ "zeta": d.zeta, "total_mass": d.aggregate.total(), "support": d.aggregate.mass.len(), "layer_mass": d.layer_mass }),
                json!({ "pruned_mass": d.pruned_mass, "params": d.params }),
            ));
        }
        Experiment::Twisted { t, n_max, depth, mode, gamma_floor } => {
            check_terms(*n_max, budgets)?;
            if t.is_empty() {
                return fail(ErrorKind::Schema, "twisted needs at least one t");
            }
            let f = ConeVector::delta_e(&sys.group);
            let measures = match mode {
                ModeCfg::TwoSided => twisted::two_sided_measures(&sys, &f, t, *n_max, &unit, *depth)?,
                m => {
                    let mode = if matches!(m, ModeCfg::Star) { Mode::Star } else { Mode::Plain };
                    t.iter()
                        .map(|&t| twisted::approx_measure(&sys, mode, &f, t, *n_max, &unit, *depth, opts(0.0, sequential), *gamma_floor))
                        .collect::<skewtherm::Result<Vec<_>>>()?
                }
            };
            for m in measures {
                let mut diag = json!({ "normalizer": m.normalizer, "tail_mass": m.tail_mass, "pruned_mass": m.pruned_mass });
                if matches!(mode, ModeCfg::TwoSided) {
                    let total = twisted::total_mass(&m, sys.spec.alphabet_size);
                    let inv = twisted::shift_invariance_defect(&|u, v| m.mass2(u, v) / total, sys.spec.alphabet_size, depth.saturating_sub(1).max(1));
                    diag["total_mass"] = json!(total);
                    diag["shift_invariance"] = to_value(&inv);
                }
                out.push((json!({ "t": m.t, "masses": to_value(&m)["masses"] }), diag));
            }
        }
        Experiment::Spherical { radius_max, delta, k_max, n_max } => {
            check_terms(*n_max, budgets)?;
            let Some(rank) = sys.radial_rank() else {
                return fail(ErrorKind::Schema, "spherical needs the simple random walk on a free group");
            };
            let grid = twisted::t_grid(twisted::kesten_radius(rank), *delta, *k_max);
            for p in twisted::spherical_profile(rank, *radius_max, &grid, *n_max, &unit)? {
                out.push((json!({ "t": p.t, "profile": p.values }), json!({ "closed_form": p.closed_form, "eigen_defect": p.eigen_defect })));
            }
        }
        Experiment::Boundary { elements } => {
            for g in elements {
                let e = elem(g);
                let v = twisted::boundary_coefficient(&sys.group, &e)?;
                let l = sys.group.length(&e);
                out.push((
                    json!({ "element": g, "value": v }),
                    json!({ "length": l, "closed_form": twisted::spherical_closed_form(2, l), "masses": twisted::boundary_masses(&sys.group, &e)? }),
                ));
            }
        }
        Experiment::Tilt { upsilon } => {
            let r = tilt_minimize(&sys)?;
            let gamma = r.pressure.exp();
            out.push((to_value(&r), json!({ "gamma": gamma })));
            if let Some(u) = upsilon {
                check_terms(u.n_max, budgets)?;
                let grid = twisted::t_grid(gamma, u.delta, u.k_max);
                let targets: Vec<Elem> = u.targets.iter().map(|g| elem(g)).collect();
                let kind = if u.star { UpsilonKind::Star } else { UpsilonKind::Plain };
                let model = match u.model {
                    ModelCfg::Linear => Model::Linear,
                    ModelCfg::Sqrt => Model::Sqrt,
                };
                let tab = twisted::upsilon(kind, &targets, &sys, &ConeVector::delta_e(&sys.group), &grid, gamma, u.n_max, &unit, model)?;
                for (i, g) in u.targets.iter().enumerate() {
                    out.push((
                        json!({ "element": g, "upsilon": tab.extrapolated[i] }),
                        json!({ "kind": kind, "model": model, "grid": tab.grid, "values": tab.values[i] }),
                    ));
                }
            }
        }
        Experiment::Decay { gamma, paths, length, n0, majorant_n_max, gamma_floor } => {
            check_terms(*length, budgets)?;
            if paths.saturating_mul(*length) > budgets.max_steps {
                return fail(ErrorKind::Budget, format!("{paths} paths of length {length} exceed the step budget {}", budgets.max_steps));
            }
            let chain = decaylab::chain_of(&sys)?;
            let samples = decaylab::sample_paths(&chain, Some((&sys.group, &sys.marking)), *paths, *length, seed)?;
            let e = ConeVector::delta_e(&sys.group);
            let rep = decaylab::decay_report(&sys.group, &e, &e, *gamma, &samples, *n0)?;
            let mut values = json!({
                "exceedances": rep.exceedances, "paths_with_exceedance": rep.paths_with_exceedance,
                "max_exceedance_n": rep.max_exceedance_n, "rate": rep.rate, "empirical_bc_sum": rep.empirical_bc_sum,
            });
            if let Some(n) = majorant_n_max {
                check_terms(*n, budgets)?;
                let floor = gamma_floor.or(sys.radial_rank().map(twisted::kesten_radius));
                let Some(floor) = floor else {
                    return fail(ErrorKind::Schema, "the majorant needs gamma_floor for this system");
                };
                values["majorant"] = to_value(&decaylab::borel_cantelli_bound(&sys, &e, &e, *gamma, floor, *n)?);
            }
            out.push((values, json!({ "per_path": rep.per_path, "rng": RNG_NAME })));
        }
        Experiment::Slowvar { log_d, horizon, n_max, grid_points, window } => {
            let (p, q) = (log_d.exponent, log_d.log_exponent);
            let ld = move |n: u64| {
                let x = (n.max(1) as f64).ln();
                p * x + q * x.max(1.0).ln()
            };
            let id = format!("log d = {p} ln n + {q} ln ln n");
            let c = construct_slow_from_log_d(&ld, *horizon, &id)?;
            let r = slow_properties_check(&c, &log_grid(*n_max, *grid_points), Some(&ld));
            let terms = usize::try_from(*n_max).unwrap_or(usize::MAX).min(budgets.max_terms);
            let coeffs: Vec<f64> = (0..=terms.min(10_000)).map(|n| c.c(n as u64) * ld(n.max(1) as u64).exp()).collect();
            let fit = skewtherm::gdensity::estimate_gamma(&coeffs, *window)?;
            out.push((to_value(&r), json!({ "id": c.id, "enhanced_series_gamma": fit.value })));
        }
    }
    let wall = start.elapsed().as_secs_f64();
    let config = to_value(&ExperimentConfig { seed: Some(seed), ..cfg.clone() });
    let params = to_value(&cfg.experiment);
    Ok(out
        .into_iter()
        .map(|(values, diagnostics)| Record {
            experiment: cfg.experiment.name().to_string(),
            params: params.clone(),
            values,
            diagnostics,
            versions: versions(),
            seed,
            wall_time: wall,
            config: config.clone(),
        })
        .collect())
}

/// Convenience for tests: parse, run, and render JSON lines.
pub fn run_text(text: &str, seed: Option<u64>, sequential: bool) -> anyhow::Result<String> {
    let cfg = parse_config(text)?;
    let seed = seed.or(cfg.seed).unwrap_or(0);
    let recs = run(&cfg, seed, sequential)?;
    let mut s = String::new();
    for r in recs {
        s.push_str(&serde_json::to_string(&r)?);
        s.push('\n');
    }
    Ok(s)
}
