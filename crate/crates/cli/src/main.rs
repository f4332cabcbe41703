//! `hamcalc`: every toolkit operation behind one command line. Reports are
//! JSON, fields are grid CSV and plots are SVG.
//!
//! Exit status: 0 when the command's check passes, 1 when it fails (the
//! report is still written), 2 on usage, parse or I/O errors.

mod commands;
mod error;
mod expr;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hamcalc::Vec2;
use serde::Serialize;

use crate::error::CliError;

#[derive(Debug, Parser, Serialize)]
#[command(name = "hamcalc", version, about = "Convex Hamiltonians, cone functions and absolute minimizers in the plane")]
pub struct Cli {
    /// Directory for reports, fields and plots.
    #[arg(long, short, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Seed of the xoshiro256++ generator behind every sampled check.
    #[arg(long, global = true, default_value_t = 0x5eed)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "subcommand", rename_all = "kebab-case")]
pub enum Command {
    /// Discrete Legendre transform of H on a grid.
    Conjugate(ConjugateArgs),
    /// Sublevel polygon {H <= k} and the cone function C_k.
    Cone(ConeArgs),
    /// Diagnose whether the level sets of H contain segments.
    ConditionA(ConditionAArgs),
    /// Hopf-Lax flow of a field and slope profiles at probes.
    Flow(FlowArgs),
    /// Comparison-with-cones certificate for a field.
    VerifyAm(VerifyAmArgs),
    /// Chebyshev linear fits on balls around a point.
    ProbeLap(ProbeLapArgs),
    /// Discrete gradient flow through the cone slopes.
    FlowTrace(FlowTraceArgs),
    /// Empirical modulus of continuity of the slope field.
    Modulus(ModulusArgs),
    /// Solve the Dirichlet problem for the absolute minimizer.
    Solve(SolveArgs),
    /// Sample the explicit counterexample u_f and write a fixture manifest.
    Counterexample(CounterexampleArgs),
    /// Residual report (cone-Lipschitz level, cones, flow criteria) for a field.
    Report(ReportArgs),
}

/// Hamiltonian given as a JSON family descriptor, inline or as a file path.
#[derive(Debug, Args, Serialize)]
pub struct HArg {
    #[arg(long = "H", value_name = "JSON|PATH")]
    pub h: String,
}

#[derive(Debug, Args, Serialize)]
pub struct ConjugateArgs {
    #[command(flatten)]
    pub h: HArg,
    /// Half-width of the primal box.
    #[arg(long = "box", default_value_t = 2.0)]
    pub primal_box: f64,
    /// Half-width of the dual box.
    #[arg(long, default_value_t = 1.0)]
    pub dual: f64,
    #[arg(long, default_value_t = 257)]
    pub n: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct ConeArgs {
    #[command(flatten)]
    pub h: HArg,
    #[arg(long, default_value_t = 1.0)]
    pub k: f64,
    #[arg(long, default_value_t = hamcalc::cone::DEFAULT_VERTICES)]
    pub vertices: usize,
    /// Levels c of the plotted sets {C_k = c}.
    #[arg(long, value_delimiter = ',', default_values_t = [0.25, 0.5, 0.75, 1.0])]
    pub levels: Vec<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct ConditionAArgs {
    #[command(flatten)]
    pub h: HArg,
    #[arg(long, default_value_t = 32)]
    pub levels: usize,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Up,
    Down,
}

#[derive(Debug, Args, Serialize)]
pub struct FlowArgs {
    /// Field as grid CSV.
    #[arg(long)]
    pub u: PathBuf,
    #[command(flatten)]
    pub h: HArg,
    /// Flow time of the written field.
    #[arg(long)]
    pub t: f64,
    #[arg(long, value_enum, default_value_t = Direction::Up)]
    pub direction: Direction,
    /// Flow times for the slope profiles.
    #[arg(long, value_delimiter = ',', default_values_t = [0.05, 0.1])]
    pub schedule: Vec<f64>,
    /// Probe point `x,y`; repeatable.
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    pub probe: Vec<Vec2>,
    #[arg(long, default_value_t = 1e-3)]
    pub slope_tol: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct VerifyAmArgs {
    #[arg(long)]
    pub u: PathBuf,
    #[command(flatten)]
    pub h: HArg,
    #[arg(long, default_value_t = 48)]
    pub rects: usize,
    #[arg(long, default_value_t = 8)]
    pub vertices: usize,
    /// Largest tolerated violation.
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct ProbeLapArgs {
    #[arg(long)]
    pub u: PathBuf,
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    pub x: Vec2,
    /// Ball radii.
    #[arg(long, value_delimiter = ',', default_values_t = [0.4, 0.2, 0.1])]
    pub r: Vec<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct FlowTraceArgs {
    #[arg(long)]
    pub u: PathBuf,
    #[command(flatten)]
    pub h: HArg,
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    pub x: Vec2,
    /// Step length.
    #[arg(long, default_value_t = 0.1)]
    pub t: f64,
    #[arg(long, default_value_t = 100)]
    pub steps: usize,
    /// Largest tolerated cone residual and slope decrease.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct ModulusArgs {
    #[arg(long)]
    pub u: PathBuf,
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    pub z: Vec2,
    #[arg(long, default_value_t = 0.4)]
    pub r: f64,
    #[arg(long, value_delimiter = ',', default_values_t = [0.4, 0.2, 0.1, 0.05])]
    pub schedule: Vec<f64>,
    /// Radius of the slope fits; four grid cells by default.
    #[arg(long)]
    pub fit_radius: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct SolveArgs {
    #[command(flatten)]
    pub h: HArg,
    /// Boundary data: `aronsson` or an expression in x1, x2 (or x, y).
    #[arg(long)]
    pub g: String,
    #[arg(long, default_value_t = 129)]
    pub n: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    /// The domain is the square [-w, w]^2.
    #[arg(long, default_value_t = 1.0)]
    pub half_width: f64,
    #[arg(long, default_value_t = hamcalc::solver::DEFAULT_DIRECTIONS)]
    pub directions: usize,
    #[arg(long, default_value_t = 20_000)]
    pub max_sweeps: usize,
    /// Solve on the fine grid only, without the coarse-to-fine start.
    #[arg(long)]
    pub no_nested: bool,
    /// Skip the comparison-with-cones check of the result.
    #[arg(long)]
    pub no_verify: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct CounterexampleArgs {
    /// JSON `{"a":[..],"b":[..],"f":{"kind":"abs"}}`, inline or a path.
    #[arg(long)]
    pub spec: String,
    #[arg(long, default_value_t = 257)]
    pub n: usize,
    #[arg(long, default_value_t = 1.0)]
    pub half_width: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct ReportArgs {
    #[arg(long)]
    pub u: PathBuf,
    #[command(flatten)]
    pub h: HArg,
    /// `solve.json` of the run that produced the field; supplies the
    /// declared bounds.
    #[arg(long)]
    pub solve: Option<PathBuf>,
    /// Bound on the comparison-with-cones violation (default 5 grid cells,
    /// or the solve report's bound).
    #[arg(long)]
    pub cc_bound: Option<f64>,
    /// Tolerance of the flow criteria (default from the solve report, else 1e-9).
    #[arg(long)]
    pub criteria_tol: Option<f64>,
}

fn parse_point(s: &str) -> Result<Vec2, String> {
    let parts: Vec<&str> = s.split(',').collect();
    let [x, y] = parts.as_slice() else {
        return Err(format!("expected `x,y`, got `{s}`"));
    };
    let num = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}"));
    Ok(Vec2::new(num(x)?, num(y)?))
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("HAMCALC_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::usage("HAMCALC_THREADS", format!("expected a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::usage("HAMCALC_THREADS", e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| commands::run(&cli));
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("hamcalc: {e}");
            ExitCode::from(2)
        }
    }
}
