//! Command-line front end.
//!
//! Exit codes: 0 ok, 1 load or validation error, 2 expression runtime error,
//! 3 non-convergence, 4 check failed, 5 structural mismatch.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::analysis::{
    compare, contraction_constant, optimize_gamma, residuals, sample_claimed, AnalysisError, Constants,
    ContractionReport, ResidualReport,
};
use crate::expr::parse;
use crate::gridfn::{Grid, GridFunction};
use crate::picard::{solve, SolveError, SolveOptions};
use crate::problem::{builtin_by_name, builtin_example, load_problem, serialize, BuiltinId, Problem};

pub const EXIT_OK: i32 = 0;
pub const EXIT_LOAD: i32 = 1;
pub const EXIT_EXPRESSION: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;
pub const EXIT_CHECK_FAILED: i32 = 4;
pub const EXIT_MISMATCH: i32 = 5;

/// Range scanned by `--optimize-gamma`.
pub const GAMMA_RANGE: (f64, f64) = (0.1, 5.0);

const DEFAULT_ODE_TOL: f64 = 1e-3;
const DEFAULT_SIDE_TOL: f64 = 1e-6;

#[derive(Debug, Parser)]
#[command(
    name = "vidnbc",
    version,
    about = "Solve and audit Volterra integrodifferential problems with nonlocal and boundary conditions"
)]
pub struct RunConfig {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Certify, solve by Picard iteration and print the solution table.
    Solve {
        /// Problem file, or builtin:<id>
        file: String,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        gamma: GammaArgs,
        #[command(flatten)]
        output: OutputArgs,
        /// Solve even when the contraction constant is not below 1.
        #[arg(long)]
        force: bool,
    },
    /// Print the contraction constant and its factors.
    Analyze {
        file: String,
        #[command(flatten)]
        gamma: GammaArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Solve two problems and check the data-dependence bound.
    Compare {
        file1: String,
        file2: String,
        /// Bound mu(t) on |F - F~|.
        #[arg(long, default_value = "0")]
        mu: String,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        gamma: GammaArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Substitute a claimed solution and report the residuals.
    Verify {
        file: String,
        /// Claimed solution w(t).
        #[arg(long)]
        solution: String,
        /// Its derivative w'(t).
        #[arg(long = "solution-deriv")]
        solution_deriv: String,
        #[arg(long, value_parser = positive_usize)]
        n: Option<usize>,
        /// Threshold for all three residuals (default 1e-3 for the equation, 1e-6 for the side conditions).
        #[arg(long, value_parser = positive_f64)]
        tol: Option<f64>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// List the built-in reference problems.
    Examples {
        /// Also write each problem file into this directory.
        #[arg(long)]
        write: Option<PathBuf>,
        #[command(flatten)]
        output: OutputArgs,
    },
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    #[arg(long, value_parser = positive_usize)]
    pub n: Option<usize>,
    #[arg(long, value_parser = positive_f64)]
    pub tol: Option<f64>,
    #[arg(long = "max-iter", value_parser = positive_usize)]
    pub max_iter: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GammaArgs {
    #[arg(long, value_parser = positive_f64, conflicts_with = "optimize_gamma")]
    pub gamma: Option<f64>,
    #[arg(long = "optimize-gamma")]
    pub optimize_gamma: bool,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    #[arg(long = "out", value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Write data here instead of standard output.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

fn positive_f64(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("'{s}' is not a positive number")),
    }
}

fn positive_usize(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(v) if v > 0 => Ok(v),
        _ => Err(format!("'{s}' is not a positive integer")),
    }
}

/// A failure carrying its exit code.
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Failure {
        Failure { code, message: message.into() }
    }
}

fn solve_failure(e: SolveError) -> Failure {
    let code = match &e {
        _ if e.is_expression_error() => EXIT_EXPRESSION,
        SolveError::Diverged { .. } => EXIT_NOT_CONVERGED,
        _ => EXIT_LOAD,
    };
    Failure::new(code, e.to_string())
}

fn analysis_failure(e: AnalysisError) -> Failure {
    match e {
        AnalysisError::Solve(s) => solve_failure(s),
        AnalysisError::StructuralMismatch => Failure::new(EXIT_MISMATCH, e.to_string()),
        AnalysisError::CertificateUnavailable { .. } => Failure::new(EXIT_CHECK_FAILED, e.to_string()),
        AnalysisError::Mu(_) | AnalysisError::NegativeMu { .. } => Failure::new(EXIT_EXPRESSION, e.to_string()),
        _ => Failure::new(EXIT_LOAD, e.to_string()),
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let config = match RunConfig::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let rendered = e.render().to_string();
            return if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(stdout, "{rendered}");
                EXIT_OK
            } else {
                let _ = write!(stderr, "{rendered}");
                EXIT_LOAD
            };
        }
    };
    match execute(&config, stdout, stderr) {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message);
            f.code
        }
    }
}

fn execute(config: &RunConfig, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32, Failure> {
    match &config.command {
        Command::Solve { file, solver, gamma, output, force } => {
            cmd_solve(file, solver, gamma, output, *force, stdout, stderr)
        }
        Command::Analyze { file, gamma, output } => cmd_analyze(file, gamma, output, stdout, stderr),
        Command::Compare { file1, file2, mu, solver, gamma, output } => {
            cmd_compare(file1, file2, mu, solver, gamma, output, stdout, stderr)
        }
        Command::Verify { file, solution, solution_deriv, n, tol, output } => {
            cmd_verify(file, solution, solution_deriv, *n, *tol, output, stdout, stderr)
        }
        Command::Examples { write, output } => cmd_examples(write.as_deref(), output, stdout),
    }
}

/// Reads a problem file, or a built-in instance given as `builtin:<id>`.
pub fn load_source(source: &str) -> Result<Problem, String> {
    if let Some(id) = source.strip_prefix("builtin:") {
        return builtin_by_name(id).map_err(|e| e.to_string());
    }
    let text = fs::read_to_string(source).map_err(|e| format!("cannot read {source}: {e}"))?;
    load_problem(&text).map_err(|e| format!("{source}: {e}"))
}

fn load(source: &str) -> Result<Problem, Failure> {
    load_source(source).map_err(|m| Failure::new(EXIT_LOAD, m))
}

fn options(p: &Problem, solver: Option<&SolverArgs>, n: Option<usize>, gamma: f64) -> SolveOptions {
    let d = SolveOptions::default();
    let s = &p.settings;
    SolveOptions {
        n: n.or(solver.and_then(|a| a.n)).or(s.n).unwrap_or(d.n),
        tol: solver.and_then(|a| a.tol).or(s.tol).unwrap_or(d.tol),
        max_iter: solver.and_then(|a| a.max_iter).or(s.max_iter).unwrap_or(d.max_iter),
        gamma,
    }
}

fn certify(p: &Problem, args: &GammaArgs) -> Result<ContractionReport, Failure> {
    let k = Constants::from_problem(p);
    let gamma = if args.optimize_gamma {
        optimize_gamma(&k, GAMMA_RANGE.0, GAMMA_RANGE.1).map_err(analysis_failure)?.0
    } else {
        args.gamma.or(p.settings.gamma).unwrap_or(SolveOptions::default().gamma)
    };
    contraction_constant(&k, gamma).map_err(analysis_failure)
}

fn real(v: f64) -> String {
    format!("{v:.16e}")
}

fn emit(output: &OutputArgs, stdout: &mut dyn Write, data: &str) -> Result<(), Failure> {
    match &output.output {
        Some(path) => {
            fs::write(path, data).map_err(|e| Failure::new(EXIT_LOAD, format!("cannot write {}: {e}", path.display())))
        }
        None => {
            stdout.write_all(data.as_bytes()).map_err(|e| Failure::new(EXIT_LOAD, format!("cannot write output: {e}")))
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}

/// CSV table with columns `t, w, wp, ode_residual`.
pub fn solution_csv(f: &GridFunction, ode_residual: &[f64]) -> String {
    let mut out = String::from("t,w,wp,ode_residual\n");
    for (i, t) in f.grid().nodes().enumerate() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            real(t),
            real(f.values()[i]),
            real(f.derivatives()[i]),
            real(ode_residual[i])
        ));
    }
    out
}

#[derive(Serialize)]
struct SolutionTable {
    t: Vec<f64>,
    w: Vec<f64>,
    wp: Vec<f64>,
    ode_residual: Vec<f64>,
}

impl SolutionTable {
    fn new(f: &GridFunction, report: &ResidualReport) -> SolutionTable {
        SolutionTable {
            t: f.grid().nodes().collect(),
            w: f.values().to_vec(),
            wp: f.derivatives().to_vec(),
            ode_residual: report.ode_residual.clone(),
        }
    }
}

#[derive(Serialize)]
struct SolveSummary<'a> {
    iterations: usize,
    increments: &'a [f64],
    q_used: f64,
    apost_bound: f64,
    converged: bool,
    certified: bool,
    options: SolveOptions,
}

#[derive(Serialize)]
struct ResidualSummary {
    ode_residual_max: f64,
    nonlocal_residual: f64,
    boundary_residual: f64,
}

impl From<&ResidualReport> for ResidualSummary {
    fn from(r: &ResidualReport) -> Self {
        ResidualSummary {
            ode_residual_max: r.ode_residual_max,
            nonlocal_residual: r.nonlocal_residual,
            boundary_residual: r.boundary_residual,
        }
    }
}

fn describe_contraction(r: &ContractionReport, err: &mut dyn Write) {
    let verdict = if r.unique { "unique (q < 1)" } else { "not certified (q >= 1)" };
    let _ = writeln!(err, "gamma = {}", r.gamma);
    let _ = writeln!(err, "q = {:.6}", r.q);
    let _ = writeln!(err, "verdict = {verdict}");
    let _ = writeln!(err, "factors = {:?}", r.factors);
}

#[allow(clippy::too_many_arguments)]
fn cmd_solve(
    file: &str,
    solver: &SolverArgs,
    gamma: &GammaArgs,
    output: &OutputArgs,
    force: bool,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<i32, Failure> {
    let p = load(file)?;
    let cert = certify(&p, gamma)?;
    describe_contraction(&cert, stderr);
    if !cert.unique && !force {
        return Err(Failure::new(
            EXIT_CHECK_FAILED,
            format!("contraction constant {:.6} is not below 1; pass --force to iterate anyway", cert.q),
        ));
    }
    let opts = options(&p, Some(solver), None, cert.gamma);
    let result = solve(&p, &opts).map_err(solve_failure)?;
    let report = residuals(&p, &result.solution).map_err(analysis_failure)?;
    let _ = writeln!(
        stderr,
        "iterations = {}, converged = {}, last increment = {:e}, a-posteriori bound = {:e}",
        result.iterations,
        result.converged,
        result.increments.last().copied().unwrap_or(0.0),
        result.apost_bound
    );
    let _ = writeln!(
        stderr,
        "residuals: ode max = {:e}, nonlocal = {:e}, boundary = {:e}",
        report.ode_residual_max, report.nonlocal_residual, report.boundary_residual
    );
    let data = match output.format {
        Format::Csv => solution_csv(&result.solution, &report.ode_residual),
        Format::Json => {
            #[derive(Serialize)]
            struct Out<'a> {
                contraction: &'a ContractionReport,
                solve: SolveSummary<'a>,
                residuals: ResidualSummary,
                solution: SolutionTable,
            }
            to_json(&Out {
                contraction: &cert,
                solve: SolveSummary {
                    iterations: result.iterations,
                    increments: &result.increments,
                    q_used: result.q_used,
                    apost_bound: result.apost_bound,
                    converged: result.converged,
                    certified: result.certified(),
                    options: opts,
                },
                residuals: (&report).into(),
                solution: SolutionTable::new(&result.solution, &report),
            })
        }
    };
    emit(output, stdout, &data)?;
    if result.converged {
        Ok(EXIT_OK)
    } else {
        let _ = writeln!(stderr, "error: no convergence within {} iterations", opts.max_iter);
        Ok(EXIT_NOT_CONVERGED)
    }
}

fn cmd_analyze(
    file: &str,
    gamma: &GammaArgs,
    output: &OutputArgs,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<i32, Failure> {
    let p = load(file)?;
    let r = certify(&p, gamma)?;
    describe_contraction(&r, stderr);
    let data = match output.format {
        Format::Csv => format!(
            "gamma,q,unique,sum_c,c_ratio,factor_lipschitz,factor_kernel,factor_boundary\n{},{},{},{},{},{},{},{}\n",
            real(r.gamma),
            real(r.q),
            r.unique,
            real(r.sum_c),
            real(r.c_ratio),
            real(r.factors[0]),
            real(r.factors[1]),
            real(r.factors[2])
        ),
        Format::Json => to_json(&r),
    };
    emit(output, stdout, &data)?;
    Ok(EXIT_OK)
}

#[allow(clippy::too_many_arguments)]
fn cmd_compare(
    file1: &str,
    file2: &str,
    mu: &str,
    solver: &SolverArgs,
    gamma: &GammaArgs,
    output: &OutputArgs,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<i32, Failure> {
    let p = load(file1)?;
    let p_tilde = load(file2)?;
    let mu = parse(mu, &["t"]).map_err(|e| Failure::new(EXIT_LOAD, format!("--mu: {e}")))?;
    if !p.same_structure(&p_tilde) {
        return Err(Failure::new(EXIT_MISMATCH, "problems differ in T, beta, c or tk"));
    }
    let cert = certify(&p, gamma)?;
    let opts = options(&p, Some(solver), None, cert.gamma);
    let r = compare(&p, &p_tilde, &mu, &opts).map_err(analysis_failure)?;
    let _ = writeln!(
        stderr,
        "bound = {:e}, measured = {:e}, L_mu = {}, q = {:.6}, |dw0| = {:e} -> {}",
        r.bound,
        r.measured,
        r.l_mu,
        r.q,
        r.delta_w0,
        if r.holds { "holds" } else { "VIOLATED" }
    );
    let data = match output.format {
        Format::Csv => format!(
            "bound,measured,l_mu,q,delta_w0,gamma,holds\n{},{},{},{},{},{},{}\n",
            real(r.bound),
            real(r.measured),
            real(r.l_mu),
            real(r.q),
            real(r.delta_w0),
            real(r.gamma),
            r.holds
        ),
        Format::Json => to_json(&r),
    };
    emit(output, stdout, &data)?;
    Ok(if r.holds { EXIT_OK } else { EXIT_CHECK_FAILED })
}

#[allow(clippy::too_many_arguments)]
fn cmd_verify(
    file: &str,
    solution: &str,
    solution_deriv: &str,
    n: Option<usize>,
    tol: Option<f64>,
    output: &OutputArgs,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<i32, Failure> {
    let p = load(file)?;
    let w = parse(solution, &["t"]).map_err(|e| Failure::new(EXIT_LOAD, format!("--solution: {e}")))?;
    let wp = parse(solution_deriv, &["t"]).map_err(|e| Failure::new(EXIT_LOAD, format!("--solution-deriv: {e}")))?;
    let n = options(&p, None, n, 1.0).n;
    let grid = Grid::new(p.horizon, n).map_err(|e| Failure::new(EXIT_LOAD, e.to_string()))?;
    let f = sample_claimed(&w, &wp, grid).map_err(|e| Failure::new(EXIT_EXPRESSION, e.to_string()))?;
    let report = residuals(&p, &f).map_err(analysis_failure)?;
    let (ode_tol, side_tol) = tol.map_or((DEFAULT_ODE_TOL, DEFAULT_SIDE_TOL), |t| (t, t));
    let pass = report.within(ode_tol, side_tol);
    let _ = writeln!(
        stderr,
        "ode_residual_max = {:e} (tol {ode_tol:e}), nonlocal_residual = {:e}, boundary_residual = {:e} (tol {side_tol:e}) -> {}",
        report.ode_residual_max,
        report.nonlocal_residual,
        report.boundary_residual,
        if pass { "pass" } else { "FAIL" }
    );
    let data = match output.format {
        Format::Csv => solution_csv(&f, &report.ode_residual),
        Format::Json => {
            #[derive(Serialize)]
            struct Out<'a> {
                residuals: &'a ResidualReport,
                ode_tol: f64,
                side_tol: f64,
                pass: bool,
            }
            to_json(&Out { residuals: &report, ode_tol, side_tol, pass })
        }
    };
    emit(output, stdout, &data)?;
    Ok(if pass { EXIT_OK } else { EXIT_CHECK_FAILED })
}

fn cmd_examples(write: Option<&Path>, output: &OutputArgs, stdout: &mut dyn Write) -> Result<i32, Failure> {
    #[derive(Serialize)]
    struct Entry {
        id: &'static str,
        label: String,
        solution: &'static str,
        solution_deriv: &'static str,
    }
    let entries: Vec<Entry> = BuiltinId::ALL
        .into_iter()
        .map(|id| {
            let (solution, solution_deriv) = id.claimed_solution();
            Entry { id: id.name(), label: builtin_example(id).label.unwrap_or_default(), solution, solution_deriv }
        })
        .collect();
    if let Some(dir) = write {
        fs::create_dir_all(dir).map_err(|e| Failure::new(EXIT_LOAD, format!("{}: {e}", dir.display())))?;
        for id in BuiltinId::ALL {
            let path = dir.join(format!("{}.prob", id.name()));
            fs::write(&path, serialize(&builtin_example(id)))
                .map_err(|e| Failure::new(EXIT_LOAD, format!("{}: {e}", path.display())))?;
        }
    }
    let data = match output.format {
        Format::Csv => {
            let mut s = String::from("id,solution,solution_deriv,label\n");
            for e in &entries {
                s.push_str(&format!("{},{},{},\"{}\"\n", e.id, e.solution, e.solution_deriv, e.label));
            }
            s
        }
        Format::Json => to_json(&entries),
    };
    emit(output, stdout, &data)?;
    Ok(EXIT_OK)
}
