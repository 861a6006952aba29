//! Named computations driven by a [`RunConfig`].

use std::collections::BTreeMap;

use taplab::ac_sde::{identity_residuals, simulate, McOptions, Scheme};
use taplab::field_mc::{
    covariance_check, goe_logdet, hessian_blocks_check, CheckRow, DeformedGOE, FieldSampler,
};
use taplab::freeprob::{freeconv_density, left_edge, log_potential, SpectralMeasure};
use taplab::functionals::{solve_for, tap_gradient, tap_value_on, EmpiricalMu};
use taplab::variational::{
    lambda_curve, legendre_transform, minimize_parisi_prefix, stationary_uq, ComplexityCurve,
    Coords, CurveOptions, OptOptions, PrefixProblem, StationaryOptions, Variant,
};
use taplab::{solve, AtomicMeasure, Mixture};

use crate::checks::{self, Level};
use crate::config::{ConfigError, RunConfig};

pub const TASKS: [&str; 10] = [
    "parisi-solve",
    "tap-eval",
    "optimize-prefix",
    "stationary-uq",
    "lambda-curve",
    "legendre",
    "sde-sim",
    "freeconv",
    "rmt-verify",
    "verify-suite",
];

/// Failure modes, each with its own exit status.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Config(ConfigError),
    Numerical(taplab::Error),
    Io(std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            CliError::Numerical(e) => match e {
                taplab::Error::Domain(_)
                | taplab::Error::Construction(_)
                | taplab::Error::NotABoundary(_) => 2,
                _ => 3,
            },
            CliError::Io(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Config(e) => write!(f, "{e}"),
            CliError::Numerical(e) => write!(f, "numerical error: {e}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<taplab::Error> for CliError {
    fn from(e: taplab::Error) -> Self {
        CliError::Numerical(e)
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

/// How a task ended once its table is written.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    CheckFailed,
    NotConverged,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Ok => 0,
            Status::CheckFailed => 1,
            Status::NotConverged => 3,
        }
    }
}

/// A CSV body plus the tolerances it was produced with.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
    pub tolerances: BTreeMap<String, f64>,
    pub status: Status,
}

impl Table {
    fn new(columns: &[&'static str]) -> Self {
        Self {
            columns: columns.to_vec(),
            rows: Vec::new(),
            tolerances: BTreeMap::new(),
            status: Status::Ok,
        }
    }

    fn push<I: IntoIterator<Item = String>>(&mut self, row: I) {
        self.rows.push(row.into_iter().collect());
    }

    fn tol(mut self, name: &str, v: f64) -> Self {
        self.tolerances.insert(name.to_string(), v);
        self
    }

    fn fail_if(&mut self, failed: bool, status: Status) {
        if failed && self.status == Status::Ok {
            self.status = status;
        }
    }
}

/// Shortest round-trip representation.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

fn required<T: Clone>(v: &Option<T>, field: &str) -> Result<T, CliError> {
    v.clone().ok_or_else(|| {
        CliError::Config(ConfigError {
            path: format!("task.{field}"),
            message: "required by this task".into(),
        })
    })
}

fn bad(field: &str, message: impl Into<String>) -> CliError {
    CliError::Config(ConfigError {
        path: format!("task.{field}"),
        message: message.into(),
    })
}

fn opt_options(cfg: &RunConfig, mix: &Mixture) -> Result<OptOptions, CliError> {
    let mut o = OptOptions::for_mixture(mix);
    if cfg.grid.is_some() {
        o.grid = cfg.grid_spec(mix);
    }
    o.seed = cfg.mc.seed;
    if let Some(s) = cfg.task.starts {
        o.starts = s;
    }
    o.coords = match cfg.task.coords.as_deref() {
        None | Some("stick") => Coords::StickBreaking,
        Some("softmax") => Coords::Softmax,
        Some(other) => {
            return Err(bad(
                "coords",
                format!("unknown coordinates `{other}` (stick, softmax)"),
            ))
        }
    };
    Ok(o)
}

fn variant(cfg: &RunConfig) -> Result<Variant, CliError> {
    match cfg.task.variant.as_deref() {
        None | Some("annealed") => Ok(Variant::Annealed),
        Some("quenched") => Ok(Variant::Quenched),
        Some(other) => Err(bad(
            "variant",
            format!("unknown variant `{other}` (annealed, quenched)"),
        )),
    }
}

fn atoms_text(z: &AtomicMeasure) -> String {
    z.atoms()
        .iter()
        .map(|(t, w)| format!("{}:{}", num(*t), num(*w)))
        .collect::<Vec<_>>()
        .join(";")
}

/// Runs the task named in `cfg.task.name`.
pub fn run(cfg: &RunConfig) -> Result<Table, CliError> {
    let name = cfg
        .task
        .name
        .as_deref()
        .ok_or_else(|| CliError::Usage("no task given (use --task or task.name)".into()))?;
    let mix = cfg.mixture()?;
    match name {
        "parisi-solve" => parisi_solve(cfg, &mix),
        "tap-eval" => tap_eval(cfg, &mix),
        "optimize-prefix" => optimize_prefix(cfg, &mix),
        "stationary-uq" => stationary(cfg, &mix),
        "lambda-curve" => lambda(cfg, &mix),
        "legendre" => legendre(cfg, &mix),
        "sde-sim" => sde_sim(cfg, &mix),
        "freeconv" => freeconv(cfg),
        "rmt-verify" => rmt_verify(cfg, &mix),
        "verify-suite" => verify_suite(cfg),
        other => Err(CliError::Usage(format!(
            "unknown task `{other}`; expected one of {}",
            TASKS.join(", ")
        ))),
    }
}

fn parisi_solve(cfg: &RunConfig, mix: &Mixture) -> Result<Table, CliError> {
    let z = if cfg.measure.is_some() {
        cfg.measure()?
    } else {
        AtomicMeasure::dirac(0.0)?
    };
    let sol = solve(&z, mix, &cfg.grid_spec(mix))?;
    let mut t = Table::new(&["quantity", "t", "value"]);
    t.push([
        "parisi_value".into(),
        String::new(),
        num(sol.parisi_value()),
    ]);
    for &s in sol.layer_times() {
        t.push(["phi_at_origin".into(), num(s), num(sol.phi(s, 0.0)?)]);
    }
    Ok(t)
}

fn tap_eval(cfg: &RunConfig, mix: &Mixture) -> Result<Table, CliError> {
    let mu = EmpiricalMu::new(required(&cfg.task.mu, "mu")?)?;
    let sol = solve_for(&mu, &cfg.measure()?, mix, &cfg.grid_spec(mix))?;
    let mut t = Table::new(&["quantity", "index", "value"]);
    t.push(["q".into(), String::new(), num(mu.q())]);
    t.push([
        "tap_value".into(),
        String::new(),
        num(tap_value_on(&sol, &mu)?),
    ]);
    for (i, g) in tap_gradient(&sol, &mu)?.into_iter().enumerate() {
        t.push(["gradient".into(), i.to_string(), num(g)]);
    }
    Ok(t)
}

fn optimize_prefix(cfg: &RunConfig, mix: &Mixture) -> Result<Table, CliError> {
    let n = cfg.task.n.unwrap_or(1);
    let tail = cfg.task.tail_atoms.unwrap_or(1);
    let mut problem = PrefixProblem::free(n, tail);
    if let Some(u) = &cfg.task.u {
        if u.len() != n {
            return Err(bad("u", format!("expected {n} entries")));
        }
        problem.u = u.clone();
    }
    if let Some(q) = &cfg.task.q {
        if q.len() != n {
            return Err(bad("q", format!("expected {n} entries")));
        }
        problem.q = q.clone();
    }
    let o = opt_options(cfg, mix)?;
    let res = minimize_parisi_prefix(mix, &problem, &o)?;
    let mut t = Table::new(&["rank", "value", "residual", "converged", "hits", "atoms"])
        .tol("grad_tol", o.grad_tol);
    for (i, m) in res.found.iter().enumerate() {
        t.push([
            i.to_string(),
            num(m.value),
            num(m.residual),
            m.converged.to_string(),
            m.hits.to_string(),
            atoms_text(&m.measure),
        ]);
    }
    t.fail_if(!res.best.converged, Status::NotConverged);
    Ok(t)
}

fn stationary(cfg: &RunConfig, mix: &Mixture) -> Result<Table, CliError> {
    let f = required(&cfg.task.f, "f")?;
    let n = cfg.task.n.unwrap_or(1);
    let mut so = StationaryOptions::for_mixture(mix);
    so.opt = opt_options(cfg, mix)?;
    so.tail_atoms = cfg.task.tail_atoms.unwrap_or(1);
    let st = stationary_uq(mix, f, n, &so)?;
    let mut t = Table::new(&["quantity", "index", "value"]).tol("tol", so.tol);
    for (k, u) in st.spec.u.iter().enumerate() {
        t.push(["u".into(), (k + 1).to_string(), num(*u)]);
    }
    for (k, q) in st.spec.q.iter().enumerate() {
        t.push(["q".into(), (k + 1).to_string(), num(*q)]);
    }
    t.push(["tail".into(), String::new(), atoms_text(&st.spec.tail)]);
    t.push(["parisi_value".into(), String::new(), num(st.parisi)]);
    t.push(["complexity".into(), String::new(), num(st.c_value)]);
    for (k, r) in st.residuals.iter().enumerate() {
        t.push(["residual".into(), k.to_string(), num(*r)]);
    }
    t.push([
        "iterations".into(),
        String::new(),
        st.trace.len().to_string(),
    ]);
    t.push(["method".into(), String::new(), st.method.to_string()]);
    t.push(["converged".into(), String::new(), st.converged.to_string()]);
    t.fail_if(!st.converged, Status::NotConverged);
    Ok(t)
}

fn curve(cfg: &RunConfig, mix: &Mixture) -> Result<ComplexityCurve, CliError> {
    let thetas = cfg
        .task
        .thetas
        .clone()
        .unwrap_or_else(|| (1..=20).map(|i| i as f64 / 20.0).collect());
    let co = CurveOptions {
        opt: opt_options(cfg, mix)?,
        atoms: cfg.task.tail_atoms.unwrap_or(1),
    };
    Ok(lambda_curve(mix, &thetas, variant(cfg)?, &co)?)
}

fn lambda(cfg: &RunConfig, mix: &Mixture) -> Result<Table, CliError> {
    let c = curve(cfg, mix)?;
    let mut t = Table::new(&["theta", "value", "converged", "residual_max", "minimizer"]);
    for r in c.records() {
        t.push(r);
    }
    t.fail_if(c.points.iter().any(|p| !p.converged), Status::NotConverged);
    Ok(t)
}

fn legendre(cfg: &RunConfig, mix: &Mixture) -> Result<Table, CliError> {
    let fs = required(&cfg.task.fs, "fs")?;
    let c = curve(cfg, mix)?;
    let lt = legendre_transform(&c, &fs)?;
    let mut t = Table::new(&["f", "value", "argmin", "extrapolated"]);
    for p in &lt.points {
        t.push([
            num(p.axis),
            num(p.value),
            p.argmin.map(num).unwrap_or_default(),
            p.extrapolated.to_string(),
        ]);
    }
    t.fail_if(c.points.iter().any(|p| !p.converged), Status::NotConverged);
    Ok(t)
}

const QUANTITY_COLUMNS: [&str; 5] = ["quantity", "estimate", "se", "target", "pass"];

fn push_row(t: &mut Table, quantity: String, estimate: f64, se: f64, target: f64, pass: bool) {
    t.push([
        quantity,
        num(estimate),
        num(se),
        num(target),
        pass.to_string(),
    ]);
    t.fail_if(!pass, Status::CheckFailed);
}

fn sde_sim(cfg: &RunConfig, mix: &Mixture) -> Result<Table, CliError> {
    let scheme = match cfg.task.scheme.as_deref() {
        None | Some("plateau") => Scheme::PlateauExact,
        Some("euler") => Scheme::Euler { dt: cfg.mc.dt },
        Some(other) => {
            return Err(bad(
                "scheme",
                format!("unknown scheme `{other}` (plateau, euler)"),
            ))
        }
    };
    let sol = solve(&cfg.measure()?, mix, &cfg.grid_spec(mix))?;
    let e = simulate(
        &sol,
        scheme,
        McOptions {
            paths: cfg.mc.paths,
            seed: cfg.mc.seed,
            antithetic: false,
        },
    )?;
    let r = identity_residuals(&e, &sol)?;
    let mut t = Table::new(&QUANTITY_COLUMNS).tol("se_multiple", 3.0);
    for (name, list) in [("delta_m_x", &r.delta_m_x), ("delta_x_m", &r.delta_x_m)] {
        for (s, u, est) in list {
            push_row(
                &mut t,
                format!("{name} s={} t={}", num(*s), num(*u)),
                est.mean,
                est.se,
                0.0,
                est.within(0.0, 3.0),
            );
        }
    }
    for (name, list) in [("xt_mt", &r.xt_mt), ("flatness", &r.flatness)] {
        for (s, est) in list {
            push_row(
                &mut t,
                format!("{name} t={}", num(*s)),
                est.mean,
                est.se,
                0.0,
                est.within(0.0, 3.0),
            );
        }
    }
    Ok(t)
}

fn spectrum(cfg: &RunConfig) -> Result<SpectralMeasure, CliError> {
    Ok(SpectralMeasure::new(
        cfg.task
            .spectrum
            .clone()
            .unwrap_or_else(|| vec![(0.0, 1.0)]),
    )?)
}

fn freeconv(cfg: &RunConfig) -> Result<Table, CliError> {
    let mu = spectrum(cfg)?;
    let s = cfg.task.t.unwrap_or(1.0);
    let xs = cfg
        .task
        .xs
        .clone()
        .unwrap_or_else(|| (-12..=12).map(|i| i as f64 * 0.25).collect());
    let mut t = Table::new(&["quantity", "x", "value"]);
    t.push(["left_edge".into(), String::new(), num(left_edge(&mu, s)?.0)]);
    for (x, rho) in xs.iter().zip(freeconv_density(&mu, s, &xs)?) {
        t.push(["density".into(), num(*x), num(rho)]);
    }
    for &x in &xs {
        t.push([
            "log_potential".into(),
            num(x),
            num(log_potential(&mu, s, x)?),
        ]);
    }
    Ok(t)
}

/// `n` atoms placed at the midpoint quantiles of a discrete measure.
fn quantiles(mu: &SpectralMeasure, n: usize) -> Vec<f64> {
    let atoms: Vec<(f64, f64)> = mu.atoms().collect();
    let mut out = Vec::with_capacity(n);
    let mut cum = 0.0;
    let mut j = 0;
    for i in 0..n {
        let p = (i as f64 + 0.5) / n as f64;
        while j + 1 < atoms.len() && cum + atoms[j].1 < p {
            cum += atoms[j].1;
            j += 1;
        }
        out.push(atoms[j].0);
    }
    out
}

fn rmt_verify(cfg: &RunConfig, mix: &Mixture) -> Result<Table, CliError> {
    let dim = cfg.task.dim.unwrap_or(8);
    let samples = cfg.task.samples.unwrap_or(cfg.mc.paths);
    let m: Vec<f64> = match &cfg.task.mu {
        Some(m) if m.len() == dim => m.clone(),
        Some(_) => return Err(bad("mu", format!("expected {dim} entries"))),
        None => (0..dim)
            .map(|i| 0.7 * ((i as f64 + 0.5) * 2.4).sin())
            .collect(),
    };
    let m2: Vec<f64> = (0..dim)
        .map(|i| 0.6 * ((i as f64 + 0.5) * 1.3).cos())
        .collect();
    let sampler = FieldSampler::new(mix, dim)?;
    let mut t = Table::new(&QUANTITY_COLUMNS)
        .tol("se_multiple", 3.0)
        .tol("goe_logdet", 0.02);
    let mut rows: Vec<CheckRow> = covariance_check(&sampler, mix, &m, &m2, samples, cfg.mc.seed);
    if mix.is_pure().is_none() {
        rows.extend(hessian_blocks_check(
            &sampler,
            mix,
            &m,
            samples,
            cfg.mc.seed.wrapping_add(1),
        )?);
    }
    for r in rows {
        push_row(&mut t, r.quantity, r.estimate, r.se, r.target, r.pass);
    }
    let mu = spectrum(cfg)?;
    let s = cfg.task.t.unwrap_or(1.0);
    let diag = quantiles(&mu, 400);
    let goe = goe_logdet(
        &DeformedGOE {
            t: s,
            diag: diag.clone(),
            seed: cfg.mc.seed,
        },
        20,
    )?;
    let target = log_potential(&SpectralMeasure::empirical(&diag)?, s, 0.0)?;
    push_row(
        &mut t,
        "goe logdet per spin (N=400)".into(),
        goe.mean,
        goe.se,
        target,
        (goe.mean - target).abs() <= 0.02,
    );
    Ok(t)
}

fn verify_suite(cfg: &RunConfig) -> Result<Table, CliError> {
    let level = match cfg.task.level.as_deref() {
        None | Some("quick") => Level::Quick,
        Some("full") => Level::Full,
        Some(other) => {
            return Err(bad(
                "level",
                format!("unknown level `{other}` (quick, full)"),
            ))
        }
    };
    let rows = checks::suite(level, cfg.mc.seed)?;
    let mut t = Table::new(&["criterion", "module", "check", "value", "tolerance", "pass"]);
    for c in rows {
        t.tolerances
            .insert(format!("{}:{}", c.criterion, c.name), c.tolerance);
        t.push([
            c.criterion.to_string(),
            c.module.to_string(),
            c.name.clone(),
            num(c.value),
            num(c.tolerance),
            c.pass.to_string(),
        ]);
        t.fail_if(!c.pass, Status::CheckFailed);
    }
    Ok(t)
}
