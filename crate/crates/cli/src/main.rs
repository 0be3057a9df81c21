//! `selfdual`: conjugates, Fitzpatrick functions, symmetrization, gap
//! minimization and selfduality checks from the command line.

use std::fmt::Display;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::Value;

use selfdual::convex::GridFallback;
use selfdual::fitzpatrick::{above_pairing_check_by, subselfdual_check_by, MarginReport};
use selfdual::grid::{biconjugate_with, default_dual_axes, discrete_conjugate, parse_axes};
use selfdual::lagrangian::GapTol;
use selfdual::selfdualize::selfdualize_with;
use selfdual::solver::solve_inclusion_full;
use selfdual::{
    minimize_gap, Axis, ConvexFunction, EpiRoute, Error, GridFunction, Lagrangian, MonotoneGraph, PhaseBox,
    SelfdualizeOptions, SolveOptions, SolveReport, Stage, Vector,
};

const EXIT_PARSE: u8 = 2;
const EXIT_PROPERNESS: u8 = 3;
const EXIT_CHECK: u8 = 4;

/// Closed-form sampling box for `check` when `--box` is absent.
const CHECK_HALF_WIDTH: f64 = 2.0;

#[derive(Parser)]
#[command(name = "selfdual", version, about = "Selfdual Lagrangian toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Legendre conjugate of a convex function or a grid function.
    Conjugate {
        #[arg(value_parser = existing_file)]
        input: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Fitzpatrick Lagrangian of a monotone graph on the `--box` lattice.
    Fitzpatrick {
        #[arg(value_parser = existing_file)]
        input: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Symmetrize a Lagrangian (or the Fitzpatrick function of a graph) into
    /// a selfdual grid Lagrangian.
    Selfdualize {
        #[arg(value_parser = existing_file)]
        input: PathBuf,
        /// Where to write the iteration report; defaults to a sibling of
        /// `--output` named `<stem>.report.json`.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = RouteArg::Auto)]
        route: RouteArg,
        #[command(flatten)]
        common: Common,
    },
    /// Solve `p ∈ ∂̄L(x)` by gap minimization, or `p ∈ T(x)` for a graph.
    Solve {
        #[arg(value_parser = existing_file)]
        input: PathBuf,
        /// Right-hand side, comma separated.
        #[arg(long, value_parser = parse_vector, allow_hyphen_values = true)]
        p: VectorArg,
        /// Starting point (default: origin).
        #[arg(long, value_parser = parse_vector, allow_hyphen_values = true)]
        x0: Option<VectorArg>,
        #[command(flatten)]
        common: Common,
    },
    /// Selfduality, sub-selfduality, pairing and monotonicity checks.
    Check {
        #[arg(value_parser = existing_file)]
        input: PathBuf,
        /// Random states at which `∂̄L` is sampled.
        #[arg(long, default_value_t = 64)]
        samples: usize,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Clone)]
struct Common {
    /// Tolerance override (must be positive).
    #[arg(long, value_parser = positive_f64, allow_hyphen_values = true)]
    tol: Option<f64>,
    /// Iteration cap (at least 1).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    max_iter: Option<u64>,
    /// Axes as `min,max,count;...`.
    #[arg(long = "box", value_parser = parse_box, allow_hyphen_values = true)]
    bx: Option<AxesArg>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Keep the full objective trace in solver reports.
    #[arg(long)]
    trace: bool,
    /// Write pipeline intermediates next to `--output`.
    #[arg(long)]
    keep_intermediates: bool,
    /// Output path, `-` for stdout.
    #[arg(long, short, default_value = "-")]
    output: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum RouteArg {
    Auto,
    Direct,
    Conjugate,
}

impl From<RouteArg> for EpiRoute {
    fn from(r: RouteArg) -> Self {
        match r {
            RouteArg::Auto => EpiRoute::Auto,
            RouteArg::Direct => EpiRoute::Direct,
            RouteArg::Conjugate => EpiRoute::Conjugate,
        }
    }
}

#[derive(Clone)]
struct AxesArg(Vec<Axis>);

#[derive(Clone)]
struct VectorArg(Vec<f64>);

fn existing_file(s: &str) -> Result<PathBuf, String> {
    let p = PathBuf::from(s);
    if p.is_file() {
        Ok(p)
    } else {
        Err(format!("no such file: {s}"))
    }
}

fn positive_f64(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("expected a positive number, got \"{s}\"")),
    }
}

fn parse_box(s: &str) -> Result<AxesArg, String> {
    parse_axes(s).map(AxesArg).map_err(|e| e.to_string())
}

fn parse_vector(s: &str) -> Result<VectorArg, String> {
    s.split(',')
        .map(|t| {
            let t = t.trim();
            match t.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(format!("bad vector entry \"{t}\"")),
            }
        })
        .collect::<Result<Vec<_>, _>>()
        .map(VectorArg)
}

/// A failed run: exit code plus message.
struct Failure {
    code: u8,
    msg: String,
}

impl Failure {
    fn new(code: u8, msg: impl Display) -> Self {
        Failure {
            code,
            msg: msg.to_string(),
        }
    }

    fn parse(msg: impl Display) -> Self {
        Failure::new(EXIT_PARSE, msg)
    }
}

fn stage_code(stage: Stage) -> u8 {
    match stage {
        Stage::Fitzpatrick => 5,
        Stage::Selfdualize => 6,
        Stage::Solve => 7,
    }
}

/// Maps a library error to an exit code; `stage` is the command's own
/// stage, used for hypothesis and numerical failures.
fn classify(e: Error, stage: Option<Stage>) -> Failure {
    let code = match &e {
        Error::Stage { stage, .. } => stage_code(*stage),
        Error::Json(_) | Error::InvalidArgument(_) | Error::DimensionMismatch { .. } => EXIT_PARSE,
        Error::NotMonotone { .. } => stage_code(Stage::Fitzpatrick),
        Error::Hypothesis { .. } | Error::Numerical { .. } => stage.map_or(EXIT_PROPERNESS, stage_code),
        _ => EXIT_PROPERNESS,
    };
    let mut msg = e.to_string();
    if let Error::Hypothesis { node: Some(z), .. } = &e {
        msg.push_str(&format!(" at node {z:?}"));
    }
    if let Error::Stage { source, .. } = &e {
        if let Error::Hypothesis { node: Some(z), .. } = source.as_ref() {
            msg.push_str(&format!(" at node {z:?}"));
        }
    }
    Failure::new(code, msg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}

fn run(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Conjugate { input, common } => conjugate(&input, &common),
        Command::Fitzpatrick { input, common } => fitzpatrick(&input, &common),
        Command::Selfdualize {
            input,
            report,
            route,
            common,
        } => selfdualize(&input, report.as_deref(), route.into(), &common),
        Command::Solve { input, p, x0, common } => solve(&input, &p.0, x0.map(|v| v.0), &common),
        Command::Check { input, samples, common } => check(&input, samples, &common),
    }
}

// ---------------------------------------------------------------- input

enum Input {
    Convex(ConvexFunction),
    Grid(GridFunction),
    Graph(MonotoneGraph),
    Lagrangian(Box<Lagrangian>),
}

fn read_input(path: &Path) -> Result<Input, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::parse(format!("{}: {e}", path.display())))?;
    let value: Value =
        serde_json::from_str(&text).map_err(|e| Failure::parse(format!("{}: {e}", path.display())))?;
    let obj = value
        .as_object()
        .ok_or_else(|| Failure::parse(format!("{}: expected a JSON object", path.display())))?;
    // Re-parse from text so schema errors keep their line and column.
    let typed = |r: Result<Input, serde_json::Error>| {
        r.map_err(|e| match e.classify() {
            serde_json::error::Category::Data => classify_data(path, e),
            _ => Failure::parse(format!("{}: {e}", path.display())),
        })
    };
    if obj.contains_key("form") {
        typed(serde_json::from_str(&text).map(|l| Input::Lagrangian(Box::new(l))))
    } else if obj.contains_key("points") {
        typed(serde_json::from_str(&text).map(Input::Graph))
    } else if obj.contains_key("kind") {
        typed(serde_json::from_str(&text).map(Input::Convex))
    } else if obj.contains_key("axes") && obj.contains_key("values") {
        typed(serde_json::from_str(&text).map(Input::Grid))
    } else {
        Err(Failure::parse(format!(
            "{}: unrecognized input (expected a Lagrangian, graph, convex function or grid function)",
            path.display()
        )))
    }
}

/// Conversion failures inside well-formed JSON: improper functions and
/// non-PSD matrices are properness errors, everything else a parse error.
fn classify_data(path: &Path, e: serde_json::Error) -> Failure {
    let msg = e.to_string();
    let code = if msg.contains("improper") || msg.contains("positive semidefinite") {
        EXIT_PROPERNESS
    } else {
        EXIT_PARSE
    };
    Failure::new(code, format!("{}: {msg}", path.display()))
}

/// `--box` axes for a phase space of state dimension `n`; `n` axes are
/// reused for the costate.
fn phase_axes(common: &Common, n: usize) -> Result<Option<Vec<Axis>>, Failure> {
    let Some(AxesArg(axes)) = &common.bx else {
        return Ok(None);
    };
    if axes.len() == 2 * n {
        Ok(Some(axes.clone()))
    } else if axes.len() == n {
        Ok(Some(axes.iter().chain(axes).copied().collect()))
    } else {
        Err(Failure::parse(format!(
            "--box has {} axes, expected {n} or {}",
            axes.len(),
            2 * n
        )))
    }
}

fn require_box(common: &Common, n: usize, what: &str) -> Result<Vec<Axis>, Failure> {
    phase_axes(common, n)?.ok_or_else(|| Failure::parse(format!("{what} needs --box")))
}

// --------------------------------------------------------------- output

fn write_json<T: Serialize>(path: &str, value: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::new(EXIT_PROPERNESS, e))?;
    text.push('\n');
    if path == "-" {
        std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Failure::new(1, format!("stdout: {e}")))
    } else {
        std::fs::write(path, text).map_err(|e| Failure::new(1, format!("{path}: {e}")))
    }
}

/// `dir/stem.json` → `dir/stem.<suffix>.json`.
fn sibling(output: &str, suffix: &str) -> Result<String, Failure> {
    if output == "-" {
        return Err(Failure::parse(format!("writing {suffix} output needs --output PATH")));
    }
    let p = Path::new(output);
    let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    Ok(p.with_file_name(format!("{stem}.{suffix}.json")).to_string_lossy().into_owned())
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|t| format!("{t:.6}")).collect();
    format!("({})", parts.join(", "))
}

fn fmt_num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.3e}")
    } else if v > 0.0 {
        "INF".into()
    } else {
        "-INF".into()
    }
}

// ------------------------------------------------------------- commands

fn conjugate(input: &Path, common: &Common) -> Result<(), Failure> {
    match read_input(input)? {
        Input::Grid(f) => {
            let dual = match &common.bx {
                Some(AxesArg(axes)) => axes.clone(),
                None => default_dual_axes(&f),
            };
            let g = discrete_conjugate(&f, &dual).map_err(|e| classify(e, None))?;
            let back = biconjugate_with(&f, &dual).map_err(|e| classify(e, None))?;
            let dev = f
                .values()
                .iter()
                .zip(back.values())
                .filter(|(a, b)| a.is_finite() && b.is_finite())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            eprintln!(
                "conjugate: grid {} nodes -> {} nodes, max |f** - f| = {}",
                f.len(),
                g.len(),
                fmt_num(dev)
            );
            write_json(&common.output, &g)
        }
        Input::Convex(f) => {
            let fallback = match &common.bx {
                Some(AxesArg(axes)) => {
                    let samples = GridFunction::from_fn(axes.clone(), |x| {
                        f.evaluate(x).map(|v| v.value()).unwrap_or(f64::INFINITY)
                    })
                    .map_err(|e| classify(e, None))?;
                    Some(GridFallback {
                        primal: axes.clone(),
                        dual: default_dual_axes(&samples),
                    })
                }
                None => None,
            };
            let g = f.conjugate_with(fallback.as_ref()).map_err(|e| classify(e, None))?;
            let how = if g.is_grid_backed() { "grid fallback" } else { "closed form" };
            eprintln!("conjugate: {how}, dimension {}", g.dim());
            write_json(&common.output, &g)
        }
        _ => Err(Failure::parse("conjugate expects a convex function or a grid function")),
    }
}

fn fitzpatrick(input: &Path, common: &Common) -> Result<(), Failure> {
    let Input::Graph(g) = read_input(input)? else {
        return Err(Failure::parse("fitzpatrick expects a monotone graph"));
    };
    let axes = require_box(common, g.dim(), "fitzpatrick")?;
    let mono = g.is_monotone();
    if let Some((i, j)) = mono.witness {
        return Err(Failure::new(
            stage_code(Stage::Fitzpatrick),
            format!(
                "graph \"{}\" is not monotone: points {i} and {j} have pairing {}",
                g.label(),
                fmt_num(mono.min_pairing)
            ),
        ));
    }
    let l = g.fitzpatrick_lagrangian(&axes).map_err(|e| classify(e, Some(Stage::Fitzpatrick)))?;
    eprintln!("fitzpatrick: {} points, {} nodes", g.len(), l.as_grid().map_or(0, |q| q.grid().len()));
    write_json(&common.output, &l)
}

fn selfdualize_options(common: &Common, route: EpiRoute) -> SelfdualizeOptions {
    let mut opts = SelfdualizeOptions {
        route,
        ..SelfdualizeOptions::default()
    };
    if let Some(t) = common.tol {
        opts.tol = t;
    }
    if let Some(m) = common.max_iter {
        opts.max_iter = m as usize;
    }
    opts
}

fn selfdualize(input: &Path, report: Option<&Path>, route: EpiRoute, common: &Common) -> Result<(), Failure> {
    let (l, axes) = match read_input(input)? {
        Input::Graph(g) => {
            let axes = require_box(common, g.dim(), "a graph input")?;
            let l = g.fitzpatrick_lagrangian(&axes).map_err(|e| classify(e, Some(Stage::Fitzpatrick)))?;
            (l, None)
        }
        Input::Lagrangian(l) if l.as_grid().is_some() => (*l, None),
        Input::Lagrangian(l) => {
            let axes = require_box(common, l.dim(), "a closed-form Lagrangian")?;
            (*l, Some(axes))
        }
        _ => return Err(Failure::parse("selfdualize expects a Lagrangian or a monotone graph")),
    };
    let opts = selfdualize_options(common, route);
    let (out, rep) =
        selfdualize_with(&l, axes.as_deref(), &opts).map_err(|e| classify(e, Some(Stage::Selfdualize)))?;
    eprintln!(
        "selfdualize: {} after {} iterations ({:?} route), residual {}, output selfduality residual {}",
        if rep.converged { "converged" } else { "not converged" },
        rep.iterations,
        rep.route,
        fmt_num(rep.final_residual),
        fmt_num(rep.selfduality_residual_of_output),
    );
    write_json(&common.output, &out)?;
    match report {
        Some(p) => write_json(&p.to_string_lossy(), &rep)?,
        None if common.output != "-" => write_json(&sibling(&common.output, "report")?, &rep)?,
        None => {}
    }
    if rep.converged {
        Ok(())
    } else {
        Err(Failure::new(
            stage_code(Stage::Selfdualize),
            format!("no convergence within {} iterations", opts.max_iter),
        ))
    }
}

fn solve_options(common: &Common) -> SolveOptions {
    let mut opts = SolveOptions {
        tol: common.tol,
        selfdualize: selfdualize_options(&Common { tol: None, ..common.clone() }, EpiRoute::Auto),
        ..SolveOptions::default()
    };
    if let Some(m) = common.max_iter {
        opts.max_iter = m as usize;
    }
    opts
}

fn solve(input: &Path, p: &[f64], x0: Option<Vec<f64>>, common: &Common) -> Result<(), Failure> {
    let opts = solve_options(common);
    let mut rep: SolveReport = match read_input(input)? {
        Input::Lagrangian(l) => {
            let x0: Vector = x0.map_or_else(|| Vector::from_elem(0.0, l.dim()), |v| v.into_iter().collect());
            minimize_gap(&l, p, &x0, &opts).map_err(|e| classify(e, Some(Stage::Solve)))?
        }
        Input::Graph(g) => {
            if x0.is_some() {
                return Err(Failure::parse("--x0 applies to Lagrangian inputs only"));
            }
            let axes = require_box(common, g.dim(), "a graph input")?;
            let art = solve_inclusion_full(&g, p, &axes, &opts).map_err(|e| classify(e, None))?;
            eprintln!(
                "selfdualize: {} after {} iterations, residual {}",
                if art.selfdualize.converged { "converged" } else { "not converged" },
                art.selfdualize.iterations,
                fmt_num(art.selfdualize.final_residual)
            );
            if common.keep_intermediates {
                write_json(&sibling(&common.output, "fitzpatrick")?, &art.fitzpatrick)?;
                write_json(&sibling(&common.output, "selfdual")?, &art.selfdual)?;
                write_json(&sibling(&common.output, "selfdualize")?, &art.selfdualize)?;
            }
            art.solve
        }
        _ => return Err(Failure::parse("solve expects a Lagrangian or a monotone graph")),
    };
    if !common.trace {
        rep.trace.clear();
    }
    eprintln!(
        "solve: {:?} via {:?}, x = {}, gap {} (tol {}), {} iterations",
        rep.status,
        rep.method,
        fmt_vec(&rep.x_star),
        fmt_num(rep.gap),
        fmt_num(rep.tol),
        rep.iterations
    );
    write_json(&common.output, &rep)?;
    if rep.certified() {
        Ok(())
    } else {
        Err(Failure::new(stage_code(Stage::Solve), format!("solve ended {:?}", rep.status)))
    }
}

// ---------------------------------------------------------------- check

#[derive(Serialize)]
struct CheckRow {
    check: &'static str,
    pass: bool,
    #[serde(with = "selfdual::extended::serde_f64")]
    value: f64,
    /// Tolerance, or a description of the per-point rule.
    tol: String,
    worst: Option<(Vector, Vector)>,
    checked: usize,
}

#[derive(Serialize)]
struct CheckMatrix {
    all_pass: bool,
    seed: u64,
    rows: Vec<CheckRow>,
}

/// Sample box for `check`: `--box`, else the inner half of a grid's axes,
/// else `[−2, 2]^{2n}`.
fn check_box(l: &Lagrangian, common: &Common) -> Result<PhaseBox, Failure> {
    let n = l.dim();
    let bx = match (phase_axes(common, n)?, l.as_grid()) {
        (Some(axes), _) => PhaseBox::from_axes(&axes),
        (None, Some(g)) => {
            let ranges = g
                .grid()
                .axes()
                .iter()
                .map(|a| {
                    let (mid, half) = (0.5 * (a.min + a.max), 0.25 * (a.max - a.min));
                    (mid - half, mid + half)
                })
                .collect();
            PhaseBox::new(ranges, g.grid().axes()[0].count)
        }
        (None, None) => PhaseBox::cube(n, -CHECK_HALF_WIDTH, CHECK_HALF_WIDTH, if n == 1 { 41 } else { 9 }),
    };
    bx.map_err(|e| classify(e, None))
}

fn margin_row(check: &'static str, r: MarginReport, tol: String) -> CheckRow {
    CheckRow {
        check,
        pass: r.ok,
        value: r.min_margin,
        tol,
        worst: r.worst,
        checked: r.checked,
    }
}

fn check(input: &Path, samples: usize, common: &Common) -> Result<(), Failure> {
    let Input::Lagrangian(l) = read_input(input)? else {
        return Err(Failure::parse("check expects a Lagrangian"));
    };
    let bx = check_box(&l, common)?;
    let h = l.grid_step();
    let gap_tol = common.tol.map_or(GapTol::Default, GapTol::Abs);
    let rule = match (common.tol, h) {
        (Some(t), _) => fmt_num(t),
        (None, Some(h)) => format!("3h(1+|x|+|p|), h = {}", fmt_num(h)),
        (None, None) => fmt_num(l.gap_tol(GapTol::Default, &[], &[])),
    };
    let per_point = |x: &[f64], p: &[f64]| l.gap_tol(gap_tol, x, p);
    let mut rows = Vec::new();

    let res = l.selfduality_residual(&bx).map_err(|e| classify(e, None))?;
    let sd_tol = common.tol.unwrap_or(match h {
        Some(h) => 3.0 * h,
        None => 1e-8,
    });
    rows.push(CheckRow {
        check: "selfdual",
        pass: res.max_abs <= sd_tol && res.mismatched == 0,
        value: res.max_abs,
        tol: fmt_num(sd_tol),
        worst: res.worst_point,
        checked: res.compared,
    });
    let sub = subselfdual_check_by(&l, &bx, per_point).map_err(|e| classify(e, None))?;
    rows.push(margin_row("sub_selfdual", sub, rule.clone()));
    let above = above_pairing_check_by(&l, &bx, per_point).map_err(|e| classify(e, None))?;
    rows.push(margin_row("above_pairing", above, rule));
    rows.push(monotone_row(&l, &bx, samples, common)?);

    let all_pass = rows.iter().all(|r| r.pass);
    for r in &rows {
        let worst = r
            .worst
            .as_ref()
            .map(|(x, p)| format!("  worst x = {}, p = {}", fmt_vec(x), fmt_vec(p)))
            .unwrap_or_default();
        eprintln!(
            "{:<14} {}  value {:>10}  tol {}{}",
            r.check,
            if r.pass { "PASS" } else { "FAIL" },
            fmt_num(r.value),
            r.tol,
            worst
        );
    }
    write_json(
        &common.output,
        &CheckMatrix {
            all_pass,
            seed: common.seed,
            rows,
        },
    )?;
    if all_pass {
        Ok(())
    } else {
        Err(Failure::new(EXIT_CHECK, "check failed"))
    }
}

/// Pairwise monotonicity of gap minimizers at seeded random states.
/// Grid minimizers carry an `O(h)` error in `p`, so pairs are allowed
/// `⟨Δx, Δp⟩ ≥ −4h‖Δx‖`.
fn monotone_row(l: &Lagrangian, bx: &PhaseBox, samples: usize, common: &Common) -> Result<CheckRow, Failure> {
    let n = l.dim();
    let axes = bx.axes().map_err(|e| classify(e, None))?;
    let (state, costate) = axes.split_at(n);
    let mut rng = ChaCha8Rng::seed_from_u64(common.seed);
    let gap_tol = common.tol.map_or(GapTol::Default, GapTol::Abs);
    let mut pts: Vec<(Vector, Vector)> = Vec::new();
    for _ in 0..samples {
        let x: Vector = state.iter().map(|a| rng.gen_range(a.min..=a.max)).collect();
        let s = l.dbar(&x, costate, gap_tol).map_err(|e| classify(e, None))?;
        if let (false, Some(m)) = (s.is_empty(), s.minimizer) {
            pts.push((x, m.p));
        }
    }
    let slack = |dx: f64| match (common.tol, l.grid_step()) {
        (Some(t), _) => t,
        (None, Some(h)) => 4.0 * h * dx,
        (None, None) => 1e-9 * (1.0 + dx),
    };
    let mut worst: Option<(f64, usize, usize)> = None;
    let mut pass = true;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            let (xi, pi) = &pts[i];
            let (xj, pj) = &pts[j];
            let dx: Vec<f64> = xi.iter().zip(xj).map(|(a, b)| a - b).collect();
            let pairing: f64 = dx.iter().zip(pi.iter().zip(pj)).map(|(d, (a, b))| d * (a - b)).sum();
            let norm = dx.iter().map(|d| d * d).sum::<f64>().sqrt();
            if pairing < -slack(norm) {
                pass = false;
            }
            if worst.is_none_or(|(w, _, _)| pairing < w) {
                worst = Some((pairing, i, j));
            }
        }
    }
    let rule = match (common.tol, l.grid_step()) {
        (Some(t), _) => fmt_num(t),
        (None, Some(h)) => format!("4h|dx|, h = {}", fmt_num(h)),
        (None, None) => "1e-9(1+|dx|)".into(),
    };
    Ok(CheckRow {
        check: "monotone_dbar",
        pass,
        value: worst.map_or(f64::INFINITY, |w| w.0),
        tol: rule,
        worst: worst.map(|(_, i, _)| pts[i].clone()),
        checked: pts.len(),
    })
}
