use std::fs;
use std::path::{Path, PathBuf};

use hamcalc::analysis::{
    cone_comparison_check, cone_lipschitz_level, gradient_flow_trace, lap_probe, modulus_estimate, CcOptions, CcReport,
    LinearFit, LipschitzLevel,
};
use hamcalc::cone::{cone_eval, sublevel_polygon};
use hamcalc::convex::{check_condition_a, conjugate_grid};
use hamcalc::counterexamples::{build_uf, CounterexampleSpec, CreaseLine};
use hamcalc::flow::{Lagrangian, SlopeProfile};
use hamcalc::solver::{residual_report, solve_dirichlet, DirichletProblem, LevelStats, SchemeKind, SolveOptions};
use hamcalc::{build_hamiltonian, normalize_hamiltonian, FamilyDescriptor, GridField, Hamiltonian, Rect, Vec2};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::expr::BoundaryData;
use crate::{svg, Cli, Command, Direction, HArg};

const PRNG: &str = "xoshiro256++";

#[derive(Serialize)]
struct Envelope<'a, R> {
    command: &'static str,
    seed: u64,
    prng: &'static str,
    config: &'a Cli,
    passes: bool,
    result: R,
}

struct Output<'a> {
    cli: &'a Cli,
}

impl Output<'_> {
    fn path(&self, name: &str) -> PathBuf {
        self.cli.out.join(name)
    }

    fn text(&self, name: &str, body: &str) -> Result<(), CliError> {
        let path = self.path(name);
        fs::write(&path, body).map_err(|e| CliError::io(&path, e))?;
        println!("wrote {}", path.display());
        Ok(())
    }

    fn field(&self, name: &str, u: &GridField) -> Result<(), CliError> {
        self.text(name, &u.to_csv())
    }

    fn report<R: Serialize>(&self, name: &str, passes: bool, result: R) -> Result<bool, CliError> {
        let env = Envelope {
            command: command_name(&self.cli.command),
            seed: self.cli.seed,
            prng: PRNG,
            config: self.cli,
            passes,
            result,
        };
        let mut body = serde_json::to_string_pretty(&env).expect("reports serialize");
        body.push('\n');
        self.text(name, &body)?;
        println!("passes: {passes}");
        Ok(passes)
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Conjugate(_) => "conjugate",
        Command::Cone(_) => "cone",
        Command::ConditionA(_) => "condition-a",
        Command::Flow(_) => "flow",
        Command::VerifyAm(_) => "verify-am",
        Command::ProbeLap(_) => "probe-lap",
        Command::FlowTrace(_) => "flow-trace",
        Command::Modulus(_) => "modulus",
        Command::Solve(_) => "solve",
        Command::Counterexample(_) => "counterexample",
        Command::Report(_) => "report",
    }
}

/// Inline JSON when the text starts with `{`, otherwise a file path. Returns
/// the parsed value and the directory relative paths inside it refer to.
fn json_arg<T: DeserializeOwned>(field: &'static str, text: &str) -> Result<(T, PathBuf), CliError> {
    let (body, base) = if text.trim_start().starts_with('{') {
        (text.to_owned(), PathBuf::from("."))
    } else {
        let path = Path::new(text);
        let body = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        (body, path.parent().map(Path::to_path_buf).unwrap_or_default())
    };
    let value = serde_json::from_str(&body).map_err(|e| CliError::usage(field, e.to_string()))?;
    Ok((value, base))
}

fn load_h(arg: &HArg) -> Result<Hamiltonian, CliError> {
    let (mut desc, base): (FamilyDescriptor, PathBuf) = json_arg("H", &arg.h)?;
    if let FamilyDescriptor::Grid { path } = &mut desc {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
    Ok(build_hamiltonian(&desc)?)
}

fn load_u(path: &Path) -> Result<GridField, CliError> {
    if !path.exists() {
        return Err(CliError::usage("u", format!("{} does not exist", path.display())));
    }
    Ok(GridField::read_csv(path)?)
}

fn cc_options(cli: &Cli) -> CcOptions {
    CcOptions {
        seed: cli.seed,
        ..CcOptions::default()
    }
}

pub fn run(cli: &Cli) -> Result<bool, CliError> {
    fs::create_dir_all(&cli.out).map_err(|e| CliError::io(&cli.out, e))?;
    let out = Output { cli };
    match &cli.command {
        Command::Conjugate(a) => conjugate(&out, a),
        Command::Cone(a) => cone(&out, a),
        Command::ConditionA(a) => {
            let h = load_h(&a.h)?;
            let r = check_condition_a(&h, a.levels, a.tol)?;
            out.report("condition_a.json", r.passes, &r)
        }
        Command::Flow(a) => flow(&out, a),
        Command::VerifyAm(a) => verify_am(&out, a),
        Command::ProbeLap(a) => {
            let u = load_u(&a.u)?;
            let fits: Vec<LinearFit> = a.r.iter().map(|&r| lap_probe(&u, a.x, r)).collect::<Result<_, _>>()?;
            let passes = fits.iter().all(|f| f.converged);
            out.report("probe_lap.json", passes, &fits)
        }
        Command::FlowTrace(a) => flow_trace(&out, a),
        Command::Modulus(a) => {
            let u = load_u(&a.u)?;
            let m = modulus_estimate(&u, a.z, a.r, &a.schedule, a.fit_radius)?;
            out.report("modulus.json", true, &m)
        }
        Command::Solve(a) => solve(&out, a),
        Command::Counterexample(a) => counterexample(&out, a),
        Command::Report(a) => report(&out, a),
    }
}

#[derive(Serialize)]
struct ConjugateSummary {
    primal_box: Rect,
    dual_box: Rect,
    n: usize,
    min: f64,
    max: f64,
    /// Dual nodes whose maximizer lies on the primal boundary; the
    /// supremum there may not be attained inside the box.
    boundary_maximizers: usize,
    first_boundary_maximizers: Vec<Vec2>,
}

fn conjugate(out: &Output, a: &crate::ConjugateArgs) -> Result<bool, CliError> {
    let h = load_h(&a.h)?;
    let primal = GridField::covering(Rect::centered(a.primal_box), a.n, |p| h.eval(p))?;
    let c = conjugate_grid(&primal, Rect::centered(a.dual), a.n)?;
    out.field("conjugate.csv", &c.field)?;
    out.text("conjugate.svg", &svg::heatmap(&c.field, 12, &[]))?;
    let s = ConjugateSummary {
        primal_box: primal.bounds(),
        dual_box: c.field.bounds(),
        n: a.n,
        min: c.field.min_value(),
        max: c.field.max_value(),
        boundary_maximizers: c.on_boundary.len(),
        first_boundary_maximizers: c.on_boundary.iter().take(8).copied().collect(),
    };
    out.report("conjugate.json", c.on_boundary.is_empty(), s)
}

#[derive(Serialize)]
struct ConeSummary {
    k: f64,
    vertices: usize,
    tol: f64,
    /// `C_k` on the unit circle at multiples of 45 degrees.
    unit_circle: Vec<(Vec2, f64)>,
}

fn cone(out: &Output, a: &crate::ConeArgs) -> Result<bool, CliError> {
    let h = load_h(&a.h)?;
    let poly = sublevel_polygon(&h, a.k, a.vertices)?;
    let mut body = serde_json::to_string_pretty(&poly).expect("polygons serialize");
    body.push('\n');
    out.text("polygon.json", &body)?;
    out.text("cone.svg", &svg::cone_fan(&poly, &a.levels))?;
    let unit_circle = (0..8)
        .map(|i| {
            let d = Vec2::polar(std::f64::consts::FRAC_PI_4 * i as f64);
            (d, cone_eval(&poly, d))
        })
        .collect();
    out.report(
        "cone.json",
        true,
        ConeSummary {
            k: poly.k,
            vertices: poly.vertices.len(),
            tol: poly.tol,
            unit_circle,
        },
    )
}

#[derive(Serialize)]
#[serde(untagged)]
enum ProbeOutcome {
    Profile(SlopeProfile),
    Failed { x: Vec2, error: String },
}

#[derive(Serialize)]
struct FlowSummary {
    t: f64,
    window_radius: f64,
    truncated: usize,
    profiles: Vec<ProbeOutcome>,
}

fn flow(out: &Output, a: &crate::FlowArgs) -> Result<bool, CliError> {
    let (u, h) = (load_u(&a.u)?, load_h(&a.h)?);
    let lag = Lagrangian::for_field(&h, &u)?;
    let fr = match a.direction {
        Direction::Up => lag.flow_up(&u, a.t)?,
        Direction::Down => lag.flow_down(&u, a.t)?,
    };
    out.field("flow.csv", &fr.field)?;
    let profiles: Vec<ProbeOutcome> = a
        .probe
        .iter()
        .map(|&x| match lag.slopes(&u, x, &a.schedule, a.slope_tol) {
            Ok(p) => ProbeOutcome::Profile(p),
            Err(e) => ProbeOutcome::Failed { x, error: e.to_string() },
        })
        .collect();
    let mut csv = String::from("x,y,t,s_plus,s_minus,truncated\n");
    for p in &profiles {
        if let ProbeOutcome::Profile(p) = p {
            for s in &p.samples {
                csv.push_str(&format!("{},{},{},{},{},{}\n", s.x.x, s.x.y, s.t, s.s_plus, s.s_minus, s.truncated));
            }
        }
    }
    out.text("slopes.csv", &csv)?;
    let passes = profiles.iter().all(|p| matches!(p, ProbeOutcome::Profile(_)));
    out.report(
        "flow.json",
        passes,
        FlowSummary {
            t: fr.t,
            window_radius: fr.window_radius,
            truncated: fr.truncated_count(),
            profiles,
        },
    )
}

#[derive(Serialize)]
struct AmCertificate {
    #[serde(flatten)]
    cc: CcReport,
    slope_level: LipschitzLevel,
}

fn verify_am(out: &Output, a: &crate::VerifyAmArgs) -> Result<bool, CliError> {
    let (u, h) = (load_u(&a.u)?, load_h(&a.h)?);
    let opts = CcOptions {
        rects: a.rects,
        vertices: a.vertices,
        tol: a.tol,
        ..cc_options(out.cli)
    };
    let cc = cone_comparison_check(&u, &h, &opts)?;
    let slope_level = cone_lipschitz_level(&u, &h);
    out.report("verify_am.json", cc.passes, AmCertificate { cc, slope_level })
}

fn flow_trace(out: &Output, a: &crate::FlowTraceArgs) -> Result<bool, CliError> {
    let (u, h) = (load_u(&a.u)?, load_h(&a.h)?);
    let tr = gradient_flow_trace(&u, &h, a.x, a.t, a.steps)?;
    out.text("trace.svg", &svg::heatmap(&u, 12, &[tr.points.clone()]))?;
    let monotone = tr.slope_values.windows(2).all(|w| w[1] >= w[0] - a.tol);
    let straight = tr.cone_residuals.iter().all(|&r| r <= a.tol);
    out.report("trace.json", monotone && straight, &tr)
}

#[derive(Serialize)]
struct SolveSummary {
    n: usize,
    spacing: f64,
    scheme: SchemeKind,
    sweeps: usize,
    update_residual: f64,
    converged: bool,
    levels: Vec<LevelStats>,
    /// Gradient shift removed before solving when H was not normalized.
    shift: Vec2,
    slope_level: f64,
    cc_violation: Option<f64>,
    /// Declared bound on the comparison-with-cones violation: five cells.
    cc_bound: f64,
    coarse_gap: Option<f64>,
    /// Declared tolerance of the flow criteria on this output.
    criteria_tolerance: Option<f64>,
}

fn solve(out: &Output, a: &crate::SolveArgs) -> Result<bool, CliError> {
    let raw = load_h(&a.h)?;
    let g = BoundaryData::parse(&a.g)?;
    let normalized = raw.minimizer().norm() <= 1e-9 && raw.min_value().abs() <= 1e-9;
    let (h, shift) = if normalized {
        (raw, Vec2::ZERO)
    } else {
        let hn = normalize_hamiltonian(&raw)?;
        let s = hn.shift();
        (hn, s)
    };
    let domain = Rect::centered(a.half_width);
    let p = DirichletProblem::new(domain, h, a.n, move |x| g.eval(x) - shift.dot(x))?;
    let opts = SolveOptions {
        tol: a.tol,
        max_sweeps: a.max_sweeps,
        directions: a.directions,
        nested: !a.no_nested,
        verify: (!a.no_verify).then(|| cc_options(out.cli)),
    };
    let r = solve_dirichlet(&p, &opts)?;
    let field = r.field.map(|x, v| v + shift.dot(x));
    out.field("field.csv", &field)?;
    out.text("field.svg", &svg::heatmap(&field, 16, &[]))?;
    let cc_bound = 5.0 * p.spacing();
    let passes = r.converged && r.cc_violation.is_none_or(|v| v <= cc_bound);
    let summary = SolveSummary {
        n: a.n,
        spacing: p.spacing(),
        scheme: r.scheme,
        sweeps: r.sweeps,
        update_residual: r.update_residual,
        converged: r.converged,
        levels: r.levels.clone(),
        shift,
        slope_level: r.slope_level,
        cc_violation: r.cc_violation,
        cc_bound,
        coarse_gap: r.coarse_gap,
        criteria_tolerance: r.criteria_tolerance(),
    };
    out.report("solve.json", passes, summary)
}

#[derive(Serialize)]
struct Manifest {
    spec: CounterexampleSpec,
    lambda0: f64,
    /// The Hamiltonian with the flat edge `[a, b]` the field is built for.
    hamiltonian: FamilyDescriptor,
    h_at_a: f64,
    creases: Vec<CreaseLine>,
    bounds: Rect,
    n: usize,
    spacing: f64,
    field: &'static str,
}

fn counterexample(out: &Output, a: &crate::CounterexampleArgs) -> Result<bool, CliError> {
    let (spec, _): (CounterexampleSpec, _) = json_arg("spec", &a.spec)?;
    let cf = build_uf(&spec, Rect::centered(a.half_width), a.n)?;
    let desc = FamilyDescriptor::FlatEdge {
        a: spec.a,
        b: spec.b,
        lambda: 1.0,
    };
    let h = build_hamiltonian(&desc)?;
    out.field("uf.csv", &cf.field)?;
    out.text("uf.svg", &svg::heatmap(&cf.field, 16, &[]))?;
    let m = Manifest {
        lambda0: spec.lambda0(),
        h_at_a: h.eval(spec.a),
        hamiltonian: desc,
        creases: cf.creases.clone(),
        bounds: cf.field.bounds(),
        n: a.n,
        spacing: cf.field.spacing(),
        field: "uf.csv",
        spec,
    };
    out.report("manifest.json", true, m)
}

/// The fields of a `solve.json` that `report` reuses.
#[derive(Deserialize)]
struct DeclaredBounds {
    cc_bound: f64,
    criteria_tolerance: Option<f64>,
}

#[derive(Deserialize)]
struct SolveEnvelope {
    result: DeclaredBounds,
}

#[derive(Serialize)]
struct ResidualSummary {
    #[serde(flatten)]
    report: hamcalc::solver::ResidualReport,
    cc_bound: f64,
    criteria_tol: f64,
}

fn report(out: &Output, a: &crate::ReportArgs) -> Result<bool, CliError> {
    let (u, h) = (load_u(&a.u)?, load_h(&a.h)?);
    let declared = match &a.solve {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            let env: SolveEnvelope =
                serde_json::from_str(&text).map_err(|e| CliError::usage("solve", e.to_string()))?;
            Some(env.result)
        }
        None => None,
    };
    let cc_bound = a
        .cc_bound
        .or(declared.as_ref().map(|d| d.cc_bound))
        .unwrap_or(5.0 * u.spacing());
    let criteria_tol = a
        .criteria_tol
        .or(declared.as_ref().and_then(|d| d.criteria_tolerance))
        .unwrap_or(1e-9);
    let rr = residual_report(&u, &h, &cc_options(out.cli), criteria_tol)?;
    let passes = rr.cc.worst_violation <= cc_bound && rr.criteria_violation <= criteria_tol;
    out.report(
        "report.json",
        passes,
        ResidualSummary {
            report: rr,
            cc_bound,
            criteria_tol,
        },
    )
}
