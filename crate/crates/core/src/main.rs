use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use monge_ampere::harness::{
    builtin_problem, emit_csv, error_norms, fit_power, read_csv, run_eps_study, run_h_study, run_relation_study,
    FitMode, StudyConfig, StudyTable, DEFAULT_EPS_STUDY_NX, DEFAULT_NX_CAP, FINE_EPS_STUDY_NX,
};
use monge_ampere::solver::{MixedSystem, NewtonOptions};
use monge_ampere::Error;

const EXIT_NOT_CONVERGED: u8 = 2;
const EXIT_INVALID_INPUT: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "monge-ampere", version, about = "Mixed FEM solver for the regularized Monge-Ampère equation")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Newton residual tolerance (∞-norm)
    #[arg(long, global = true, default_value_t = 1e-9)]
    tol: f64,
    /// Newton iterations per continuation stage
    #[arg(long, global = true, default_value_t = 50)]
    max_iters: usize,
    /// Quadrature degree for assembly (default: 3k, at most 10)
    #[arg(long, global = true)]
    quad_degree: Option<usize>,
    /// Seed for randomized checks; solves and studies are deterministic
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Log solver progress
    #[arg(short, long, global = true)]
    verbose: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve one problem and report errors
    Solve {
        #[arg(long)]
        problem: String,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        nx: usize,
        #[arg(long, default_value_t = 2)]
        k: usize,
        /// Write σ_h and u_h coefficients
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Error table over meshes at fixed ε
    StudyH {
        #[arg(long)]
        problem: String,
        #[arg(long)]
        eps: f64,
        #[arg(long, value_delimiter = ',', required = true)]
        nx_list: Vec<usize>,
        #[command(flatten)]
        study: StudyArgs,
    },
    /// Warm-started ε sweep on one mesh
    StudyEps {
        #[arg(long)]
        problem: String,
        #[arg(long, conflicts_with = "fine_grid")]
        nx: Option<usize>,
        /// Use the h = 0.015 grid instead of the desk-scale default
        #[arg(long)]
        fine_grid: bool,
        #[arg(long, value_delimiter = ',', required = true)]
        eps_list: Vec<f64>,
        #[command(flatten)]
        study: StudyArgs,
    },
    /// Sweep with h = ε^γ
    StudyRelation {
        #[arg(long)]
        problem: String,
        #[arg(long)]
        gamma: f64,
        #[arg(long, value_delimiter = ',', required = true)]
        eps_list: Vec<f64>,
        /// Skip rows whose mesh would exceed this nx
        #[arg(long, default_value_t = DEFAULT_NX_CAP)]
        nx_cap: usize,
        #[command(flatten)]
        study: StudyArgs,
    },
    /// Fit y = β x^α to two CSV columns
    Fit {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        x_col: String,
        #[arg(long)]
        y_col: String,
        /// Fix α and fit β only
        #[arg(long)]
        alpha: Option<f64>,
    },
}

#[derive(Args, Debug)]
struct StudyArgs {
    #[arg(long)]
    csv: PathBuf,
    #[arg(long, default_value_t = 2)]
    k: usize,
    /// Write wall_ms = 0 so repeated runs give identical files
    #[arg(long)]
    no_timing: bool,
}

fn newton(g: &Global) -> NewtonOptions {
    NewtonOptions { tol: g.tol, max_iters: g.max_iters, ..NewtonOptions::default() }
}

fn config(g: &Global, s: &StudyArgs, nx_cap: usize) -> StudyConfig {
    StudyConfig { k: s.k, quad: g.quad_degree, newton: newton(g), record_time: !s.no_timing, nx_cap }
}

fn finish_study(t: StudyTable, s: &StudyArgs) -> Result<bool, Error> {
    print!("{}", t.summary());
    emit_csv(&t, &s.csv)?;
    println!("wrote {}", s.csv.display());
    Ok(t.all_converged())
}

/// `Ok(false)` means the solver did not converge.
fn run(cli: Cli) -> Result<bool, Error> {
    let g = &cli.global;
    newton(g).validate()?;
    info!("seed {}", g.seed);
    match cli.command {
        Command::Solve { problem, eps, nx, k, out } => {
            let p = builtin_problem(&problem)?;
            for w in p.check_consistency(&[eps])? {
                warn!("{w}");
            }
            let sys = MixedSystem::new(p.clone(), nx, k, g.quad_degree)?;
            let (state, report) = sys.continuation_solve(eps, &newton(g))?;
            for s in &report.stages {
                println!(
                    "eps {:<12e} iterations {:>3} residual {:.3e} min eigenvalue {:.4e}{}",
                    s.eps,
                    s.iterations,
                    s.final_residual,
                    s.min_eigenvalue(),
                    if s.converged { "" } else { "  NOT CONVERGED" }
                );
            }
            if let Some((reference, exact)) = p.reference() {
                let e = error_norms(&state, &exact)?;
                println!("errors against {reference}: u L2 {:.6e}  u H1 {:.6e}", e.u_l2, e.u_h1);
                println!("                  sigma L2 {:.6e}  sigma H1 {:.6e}", e.sigma_l2, e.sigma_h1.unwrap_or(f64::NAN));
            }
            if let Some(path) = out {
                std::fs::write(&path, format!("{}{}", state.sigma.dump(), state.u.dump()))?;
                println!("wrote {}", path.display());
            }
            Ok(report.converged)
        }
        Command::StudyH { problem, eps, nx_list, study } => {
            let t = run_h_study(&builtin_problem(&problem)?, eps, &nx_list, &config(g, &study, DEFAULT_NX_CAP))?;
            finish_study(t, &study)
        }
        Command::StudyEps { problem, nx, fine_grid, eps_list, study } => {
            let nx = if fine_grid { FINE_EPS_STUDY_NX } else { nx.unwrap_or(DEFAULT_EPS_STUDY_NX) };
            let t = run_eps_study(&builtin_problem(&problem)?, nx, &eps_list, &config(g, &study, DEFAULT_NX_CAP))?;
            finish_study(t, &study)
        }
        Command::StudyRelation { problem, gamma, eps_list, nx_cap, study } => {
            let t = run_relation_study(&builtin_problem(&problem)?, gamma, &eps_list, &config(g, &study, nx_cap))?;
            finish_study(t, &study)
        }
        Command::Fit { csv, x_col, y_col, alpha } => {
            let rows = read_csv(&csv)?;
            let col = |name: &str| -> Result<Vec<f64>, Error> {
                rows.iter()
                    .map(|r| r.column(name))
                    .collect::<Option<Vec<f64>>>()
                    .ok_or_else(|| Error::InvalidInput(format!("column `{name}` is unknown or has missing values")))
            };
            let mode = alpha.map_or(FitMode::Free, FitMode::Fixed);
            let (a, b) = fit_power(&col(&x_col)?, &col(&y_col)?, mode)?;
            println!("alpha {a:.6} beta {b:.6e}");
            Ok(true)
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Singular(_) => EXIT_NOT_CONVERGED,
        Error::Io(_) => 1,
        _ => EXIT_INVALID_INPUT,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_INVALID_INPUT) } else { ExitCode::SUCCESS };
        }
    };
    let level = if cli.global.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: the solver did not converge");
            ExitCode::from(EXIT_NOT_CONVERGED)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
