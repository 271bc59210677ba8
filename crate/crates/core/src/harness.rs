//! Convergence studies on the built-in problems: h-, ε- and relation sweeps,
//! error tables, power-law fits and CSV output.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;

use crate::assembly::{error_norm, tensor_error_norm, Norm};
use crate::error::{Error, Result};
use crate::problem::ExactData;
use crate::solver::{MixedState, MixedSystem, NewtonOptions, SolveReport};

pub use crate::problem::{builtin_problem, ProblemSpec, Reference, BUILTIN_NAMES};

/// CSV column names, in order.
pub const CSV_COLUMNS: [&str; 9] = [
    "h",
    "nx",
    "epsilon",
    "err_u_L2",
    "err_u_H1",
    "err_sigma_L2",
    "err_sigma_H1",
    "newton_iters",
    "wall_ms",
];

/// Desk-scale mesh for ε-studies.
pub const DEFAULT_EPS_STUDY_NX: usize = 32;

/// Mesh with grid spacing closest to h = 0.015.
pub const FINE_EPS_STUDY_NX: usize = 67;

/// Largest mesh the relation study will build unless configured otherwise.
pub const DEFAULT_NX_CAP: usize = 64;

#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub k: usize,
    pub quad: Option<usize>,
    pub newton: NewtonOptions,
    /// Record wall time; when off `wall_ms` is 0 and output is reproducible byte for byte.
    pub record_time: bool,
    pub nx_cap: usize,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            k: 2,
            quad: None,
            newton: NewtonOptions::default(),
            record_time: true,
            nx_cap: DEFAULT_NX_CAP,
        }
    }
}

/// Errors of one discrete solution against an exact one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorNorms {
    pub u_l2: f64,
    pub u_h1: f64,
    pub sigma_l2: f64,
    pub sigma_h1: Option<f64>,
}

/// `‖u − u_h‖` in L² and H¹ and `‖D²u − σ_h‖` in L² and H¹.
pub fn error_norms(state: &MixedState, exact: &ExactData) -> Result<ErrorNorms> {
    let grad = exact.grad;
    let hess_grad = exact.hess_grad;
    Ok(ErrorNorms {
        u_l2: error_norm(&state.u, exact.u, None, Norm::L2)?,
        u_h1: error_norm(&state.u, exact.u, Some(&grad), Norm::H1)?,
        sigma_l2: tensor_error_norm(&state.sigma, exact.hess, None, Norm::L2)?,
        sigma_h1: Some(tensor_error_norm(&state.sigma, exact.hess, Some(&hess_grad), Norm::H1)?),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    /// Largest element diameter.
    pub h: f64,
    pub nx: usize,
    pub eps: f64,
    pub err_u_l2: f64,
    pub err_u_h1: f64,
    pub err_sigma_l2: f64,
    pub err_sigma_h1: Option<f64>,
    pub newton_iters: usize,
    pub wall_ms: u64,
}

impl StudyRow {
    /// Value of a CSV column; `None` for unknown names and missing σ H¹ errors.
    pub fn column(&self, name: &str) -> Option<f64> {
        Some(match name {
            "h" => self.h,
            "nx" => self.nx as f64,
            "epsilon" => self.eps,
            "err_u_L2" => self.err_u_l2,
            "err_u_H1" => self.err_u_h1,
            "err_sigma_L2" => self.err_sigma_l2,
            "err_sigma_H1" => self.err_sigma_h1?,
            "newton_iters" => self.newton_iters as f64,
            "wall_ms" => self.wall_ms as f64,
            _ => return None,
        })
    }

    /// Grid spacing `1/nx`.
    pub fn grid_spacing(&self) -> f64 {
        1.0 / self.nx as f64
    }
}

/// Solver diagnostics kept alongside each row.
#[derive(Debug, Clone, PartialEq)]
pub struct RowStatus {
    pub converged: bool,
    pub max_stage_iterations: usize,
    pub final_residual: f64,
    pub min_eigenvalue: f64,
    pub warnings: Vec<String>,
}

impl RowStatus {
    fn from_report(r: &SolveReport) -> Self {
        Self {
            converged: r.converged,
            max_stage_iterations: r.max_stage_iterations(),
            final_residual: r.final_residual(),
            min_eigenvalue: r.final_min_eigenvalue(),
            warnings: r.warnings.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sweep {
    H { eps: f64 },
    Eps { nx: usize },
    Relation { gamma: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyMeta {
    pub problem: String,
    pub k: usize,
    pub reference: Reference,
    pub sweep: Sweep,
    pub notes: Vec<String>,
    /// `(ε, nx)` pairs not run because nx exceeded the cap.
    pub skipped: Vec<(f64, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyTable {
    pub meta: StudyMeta,
    pub rows: Vec<StudyRow>,
    pub status: Vec<RowStatus>,
}

impl StudyTable {
    pub fn all_converged(&self) -> bool {
        self.status.iter().all(|s| s.converged)
    }

    /// Values of a named column; `None` if any row lacks it.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        self.rows.iter().map(|r| r.column(name)).collect()
    }

    /// Pairwise orders of `y` against `x` between consecutive rows.
    pub fn observed_orders(&self, x: &str, y: &str) -> Option<Vec<f64>> {
        Some(observed_orders(&self.column(x)?, &self.column(y)?))
    }

    /// Free power fit of column `y` against column `x`.
    pub fn fit(&self, x: &str, y: &str, mode: FitMode) -> Result<(f64, f64)> {
        let missing = || Error::InvalidInput(format!("column `{x}` or `{y}` is missing"));
        fit_power(&self.column(x).ok_or_else(missing)?, &self.column(y).ok_or_else(missing)?, mode)
    }

    /// Human-readable table with pairwise orders.
    pub fn summary(&self) -> String {
        let m = &self.meta;
        let mut s = String::new();
        let _ = writeln!(s, "problem {}  k = {}  reference {}  sweep {:?}", m.problem, m.k, m.reference, m.sweep);
        for n in &m.notes {
            let _ = writeln!(s, "note: {n}");
        }
        for (e, nx) in &m.skipped {
            let _ = writeln!(s, "skipped: eps = {e} needs nx = {nx}");
        }
        let _ = writeln!(
            s,
            "{:>9} {:>5} {:>10} {:>11} {:>11} {:>11} {:>11} {:>6} {:>9} {:>10}",
            "h", "nx", "eps", "u L2", "u H1", "sigma L2", "sigma H1", "iters", "min eig", "status"
        );
        for (r, st) in self.rows.iter().zip(&self.status) {
            let _ = writeln!(
                s,
                "{:>9.5} {:>5} {:>10.3e} {:>11.4e} {:>11.4e} {:>11.4e} {:>11.4e} {:>6} {:>9.2e} {:>10}",
                r.h,
                r.nx,
                r.eps,
                r.err_u_l2,
                r.err_u_h1,
                r.err_sigma_l2,
                r.err_sigma_h1.unwrap_or(f64::NAN),
                r.newton_iters,
                st.min_eigenvalue,
                if st.converged { "ok" } else { "NOT CONV" }
            );
        }
        let x = match m.sweep {
            Sweep::H { .. } => "h",
            Sweep::Eps { .. } | Sweep::Relation { .. } => "epsilon",
        };
        for y in ["err_u_L2", "err_u_H1", "err_sigma_L2", "err_sigma_H1"] {
            if let Some(o) = self.observed_orders(x, y) {
                let o: Vec<String> = o.iter().map(|v| format!("{v:.3}")).collect();
                let _ = writeln!(s, "orders of {y} vs {x}: [{}]", o.join(", "));
            }
        }
        s
    }
}

/// `log(y_i/y_{i+1}) / log(x_i/x_{i+1})` for consecutive pairs.
pub fn observed_orders(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    xs.windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| (y[0] / y[1]).ln() / (x[0] / x[1]).ln())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FitMode {
    Free,
    Fixed(f64),
}

/// Fits `y = β x^α` in log-log least squares; returns `(α, β)`.
pub fn fit_power(xs: &[f64], ys: &[f64], mode: FitMode) -> Result<(f64, f64)> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch { expected: xs.len(), got: ys.len() });
    }
    if xs.len() < 2 {
        return Err(Error::InvalidInput(format!("power fit needs at least 2 points, got {}", xs.len())));
    }
    if let Some(v) = xs.iter().chain(ys).find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidInput(format!("power fit needs positive finite data, got {v}")));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = xs.len() as f64;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / n;
    match mode {
        FitMode::Fixed(alpha) => {
            let b = lx.iter().zip(&ly).map(|(x, y)| y - alpha * x).sum::<f64>() / n;
            Ok((alpha, b.exp()))
        }
        FitMode::Free => {
            let (mx, my) = (mean(&lx), mean(&ly));
            let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
            if sxx <= 1e-300 {
                return Err(Error::InvalidInput("free power fit needs at least two distinct x values".into()));
            }
            let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
            let alpha = sxy / sxx;
            Ok((alpha, (my - alpha * mx).exp()))
        }
    }
}

fn require_u0(p: &ProblemSpec) -> Result<ExactData> {
    p.exact_u0
        .ok_or_else(|| Error::InvalidInput(format!("{} has no exact viscosity solution", p.name)))
}

fn gate(p: &ProblemSpec, eps: &[f64], notes: &mut Vec<String>) -> Result<()> {
    notes.extend(p.check_consistency(eps)?);
    Ok(())
}

fn check_eps(eps: &[f64]) -> Result<()> {
    if eps.is_empty() {
        return Err(Error::InvalidInput("empty eps list".into()));
    }
    match eps.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
        Some(e) => Err(Error::InvalidInput(format!("eps must be positive, got {e}"))),
        None => Ok(()),
    }
}

struct Solved {
    state: MixedState,
    report: SolveReport,
    wall_ms: u64,
}

fn row(sys: &MixedSystem, nx: usize, eps: f64, s: &Solved, exact: &ExactData) -> Result<(StudyRow, RowStatus)> {
    let e = error_norms(&s.state, exact)?;
    let r = StudyRow {
        h: sys.mesh().mesh_size(),
        nx,
        eps,
        err_u_l2: e.u_l2,
        err_u_h1: e.u_h1,
        err_sigma_l2: e.sigma_l2,
        err_sigma_h1: e.sigma_h1,
        newton_iters: s.report.total_iterations(),
        wall_ms: s.wall_ms,
    };
    info!(
        "{}: nx = {nx}, eps = {eps}: u L2 {:.4e}, iterations {}",
        sys.problem().name,
        r.err_u_l2,
        r.newton_iters
    );
    Ok((r, RowStatus::from_report(&s.report)))
}

fn timed(cfg: &StudyConfig, f: impl FnOnce() -> Result<(MixedState, SolveReport)>) -> Result<Solved> {
    let t = Instant::now();
    let (state, report) = f()?;
    let wall_ms = if cfg.record_time { t.elapsed().as_millis() as u64 } else { 0 };
    Ok(Solved { state, report, wall_ms })
}

/// One continuation solve per mesh at fixed ε; rows ordered by increasing nx.
pub fn run_h_study(p: &ProblemSpec, eps: f64, nxs: &[usize], cfg: &StudyConfig) -> Result<StudyTable> {
    check_eps(&[eps])?;
    let (reference, exact) = p
        .reference()
        .ok_or_else(|| Error::InvalidInput(format!("{} has no exact solution", p.name)))?;
    let mut notes = Vec::new();
    gate(p, &[eps], &mut notes)?;
    let mut nxs = nxs.to_vec();
    nxs.sort_unstable();
    let mut table = StudyTable {
        meta: StudyMeta {
            problem: p.name.clone(),
            k: cfg.k,
            reference,
            sweep: Sweep::H { eps },
            notes,
            skipped: Vec::new(),
        },
        rows: Vec::new(),
        status: Vec::new(),
    };
    for nx in nxs {
        let sys = MixedSystem::new(p.clone(), nx, cfg.k, cfg.quad)?;
        let s = timed(cfg, || sys.continuation_solve(eps, &cfg.newton))?;
        let (r, st) = row(&sys, nx, eps, &s, &exact)?;
        table.rows.push(r);
        table.status.push(st);
    }
    Ok(table)
}

/// Warm-started sweep on one mesh from the largest to the smallest ε.
pub fn run_eps_study(p: &ProblemSpec, nx: usize, eps_list: &[f64], cfg: &StudyConfig) -> Result<StudyTable> {
    check_eps(eps_list)?;
    let exact = require_u0(p)?;
    let mut notes = Vec::new();
    gate(p, eps_list, &mut notes)?;
    let mut eps_list = eps_list.to_vec();
    eps_list.sort_by(|a, b| b.total_cmp(a));
    let sys = MixedSystem::new(p.clone(), nx, cfg.k, cfg.quad)?;
    let mut table = StudyTable {
        meta: StudyMeta {
            problem: p.name.clone(),
            k: cfg.k,
            reference: Reference::U0,
            sweep: Sweep::Eps { nx },
            notes,
            skipped: Vec::new(),
        },
        rows: Vec::new(),
        status: Vec::new(),
    };
    let mut prev: Option<(MixedState, f64)> = None;
    for eps in eps_list {
        let s = match &prev {
            Some((state, from)) => timed(cfg, || sys.continue_from(state, *from, eps, &cfg.newton))?,
            None => timed(cfg, || sys.continuation_solve(eps, &cfg.newton))?,
        };
        let (r, st) = row(&sys, nx, eps, &s, &exact)?;
        // A failed stage is a poor warm start; the next row restarts cold.
        prev = st.converged.then(|| (s.state, eps));
        table.rows.push(r);
        table.status.push(st);
    }
    Ok(table)
}

/// `round(ε^{-γ})`, at least 1.
pub fn relation_nx(eps: f64, gamma: f64) -> usize {
    (eps.powf(-gamma).round() as usize).max(1)
}

/// Couples the mesh to ε through `h = ε^γ`; rows ordered by decreasing ε.
pub fn run_relation_study(p: &ProblemSpec, gamma: f64, eps_list: &[f64], cfg: &StudyConfig) -> Result<StudyTable> {
    check_eps(eps_list)?;
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidInput(format!("gamma must be positive, got {gamma}")));
    }
    let exact = require_u0(p)?;
    let mut notes = Vec::new();
    gate(p, eps_list, &mut notes)?;
    let mut eps_list = eps_list.to_vec();
    eps_list.sort_by(|a, b| b.total_cmp(a));
    let smallest = eps_list[eps_list.len() - 1];
    notes.push(format!("eps grid truncated at {smallest:e}; nx cap {}", cfg.nx_cap));
    let mut table = StudyTable {
        meta: StudyMeta {
            problem: p.name.clone(),
            k: cfg.k,
            reference: Reference::U0,
            sweep: Sweep::Relation { gamma },
            notes,
            skipped: Vec::new(),
        },
        rows: Vec::new(),
        status: Vec::new(),
    };
    for eps in eps_list {
        let nx = relation_nx(eps, gamma);
        if nx > cfg.nx_cap {
            table.meta.skipped.push((eps, nx));
            continue;
        }
        let sys = MixedSystem::new(p.clone(), nx, cfg.k, cfg.quad)?;
        let s = timed(cfg, || sys.continuation_solve(eps, &cfg.newton))?;
        let (r, st) = row(&sys, nx, eps, &s, &exact)?;
        table.rows.push(r);
        table.status.push(st);
    }
    Ok(table)
}

/// Cells of one row with 17 significant digits; `missing` stands in for an absent σ H¹ error.
fn row_cells(r: &StudyRow, missing: &str) -> [String; 9] {
    let e = |v: f64| format!("{v:.16e}");
    [
        e(r.h),
        r.nx.to_string(),
        e(r.eps),
        e(r.err_u_l2),
        e(r.err_u_h1),
        e(r.err_sigma_l2),
        r.err_sigma_h1.map_or_else(|| missing.to_string(), e),
        r.newton_iters.to_string(),
        r.wall_ms.to_string(),
    ]
}

fn csv_error(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

/// CSV text: header, then one line per row.
pub fn csv_string(t: &StudyTable) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_COLUMNS).expect("in-memory CSV write");
    for r in &t.rows {
        w.write_record(row_cells(r, "")).expect("in-memory CSV write");
    }
    String::from_utf8(w.into_inner().expect("in-memory CSV flush")).expect("CSV output is ASCII")
}

/// Whitespace-separated rows without a header; missing values are `nan`.
pub fn dat_string(t: &StudyTable) -> String {
    t.rows.iter().map(|r| row_cells(r, "nan").join(" ") + "\n").collect()
}

/// `key: value` lines describing the study.
pub fn meta_string(t: &StudyTable) -> String {
    let m = &t.meta;
    let mut s = String::new();
    let _ = writeln!(s, "problem: {}", m.problem);
    let _ = writeln!(s, "k: {}", m.k);
    let _ = writeln!(s, "reference: {}", m.reference);
    let _ = match m.sweep {
        Sweep::H { eps } => writeln!(s, "sweep: h\nepsilon: {eps:e}"),
        Sweep::Eps { nx } => writeln!(s, "sweep: epsilon\nnx: {nx}"),
        Sweep::Relation { gamma } => writeln!(s, "sweep: relation\ngamma: {gamma}"),
    };
    for n in &m.notes {
        let _ = writeln!(s, "note: {n}");
    }
    for (e, nx) in &m.skipped {
        let _ = writeln!(s, "skipped: epsilon={e:e} nx={nx}");
    }
    for (r, st) in t.rows.iter().zip(&t.status) {
        if !st.converged {
            let _ = writeln!(
                s,
                "not_converged: nx={} epsilon={:e} residual={:e}",
                r.nx, r.eps, st.final_residual
            );
        }
    }
    s
}

/// Companion paths `<stem>.dat` and `<stem>.meta`.
pub fn companion_paths(csv: &Path) -> (PathBuf, PathBuf) {
    (csv.with_extension("dat"), csv.with_extension("meta"))
}

/// Writes the CSV plus `.dat` and `.meta` companions.
pub fn emit_csv(t: &StudyTable, destination: &Path) -> Result<()> {
    let (dat, meta) = companion_paths(destination);
    std::fs::write(destination, csv_string(t))?;
    std::fs::write(dat, dat_string(t))?;
    std::fs::write(meta, meta_string(t))?;
    Ok(())
}

/// Parses text produced by [`csv_string`].
pub fn parse_csv(text: &str) -> Result<Vec<StudyRow>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = rdr.headers().map_err(csv_error)?;
    if header.iter().ne(CSV_COLUMNS) {
        return Err(Error::Parse(format!("unexpected CSV header `{}`", header.iter().collect::<Vec<_>>().join(","))));
    }
    rdr.records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec.map_err(csv_error)?;
            let cell = |j: usize| rec.get(j).unwrap_or("");
            let bad = |j: usize| Error::Parse(format!("row {}: bad {} value `{}`", i + 1, CSV_COLUMNS[j], cell(j)));
            let f = |j: usize| cell(j).parse::<f64>().map_err(|_| bad(j));
            let n = |j: usize| cell(j).parse::<u64>().map_err(|_| bad(j));
            Ok(StudyRow {
                h: f(0)?,
                nx: n(1)? as usize,
                eps: f(2)?,
                err_u_l2: f(3)?,
                err_u_h1: f(4)?,
                err_sigma_l2: f(5)?,
                err_sigma_h1: if cell(6).is_empty() { None } else { Some(f(6)?) },
                newton_iters: n(7)? as usize,
                wall_ms: n(8)?,
            })
        })
        .collect()
}

pub fn read_csv(path: &Path) -> Result<Vec<StudyRow>> {
    parse_csv(&std::fs::read_to_string(path)?)
}
