use clap::{Args, Parser, Subcommand};
use nalgebra::{DMatrix, DVector};
use paflow::accept::{self, Check, DEFAULT_SEED};
use paflow::hamiltonian::{
    build_potential, flow, flow_symplectic_residual, flow_trajectory, jacobian_assembly, pa_bracket_evaluate,
    parse_shear, potential_from_action, BracketInputs, PotentialFile, ShearPoint,
};
use paflow::hyperbolic::{enumerate_crossings, richardson, trace_length, FuchsianRep, TwistPlan};
use paflow::linalg::{self, DEFAULT_TOL};
use paflow::pa::{build_linear_action, PseudoAnosovData};
use paflow::tracks::{thurston_form, validate_track, weight_space, IncidenceMatrix, TrainTrack};
use paflow::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

const REPORT_SCHEMA: &str = "report/1";
const EXIT_INPUT: u8 = 2;
const EXIT_INVARIANT: u8 = 3;

#[derive(Parser)]
#[command(name = "paflow", version, about = "Pseudo-Anosov potentials, flows and cosine-formula checks")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Tolerance for residual checks
    #[arg(long, global = true, env = "PAFLOW_TOL", default_value_t = DEFAULT_TOL)]
    tolerance: f64,
    /// Seed for randomized batteries
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Word-length radius for crossing enumeration (default depends on the surface)
    #[arg(long, global = true)]
    depth: Option<usize>,
    /// Write the JSON report here instead of stdout
    #[arg(long, global = true, value_name = "PATH")]
    json_out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train-track files
    Track {
        #[command(subcommand)]
        cmd: TrackCmd,
    },
    /// Pseudo-Anosov action of an incidence matrix
    Pa {
        #[command(subcommand)]
        cmd: PaCmd,
    },
    /// Hamiltonian potential of a pseudo-Anosov action
    Potential {
        #[command(subcommand)]
        cmd: PotentialCmd,
    },
    /// Flow of a potential
    Flow {
        #[command(subcommand)]
        cmd: FlowCmd,
    },
    /// Bracket of two pseudo-Anosov potentials
    Bracket {
        #[command(subcommand)]
        cmd: BracketCmd,
    },
    /// Jacobian from symplectic blocks
    Jacobian {
        #[command(subcommand)]
        cmd: JacobianCmd,
    },
    /// Cosine formula on a Fuchsian representation
    Cosine {
        #[command(subcommand)]
        cmd: CosineCmd,
    },
    /// Twist deformations
    Twist {
        #[command(subcommand)]
        cmd: TwistCmd,
    },
    /// Run an acceptance suite: tracks, pa, symplectic, hamiltonian, hyperbolic or all
    Accept { suite: String },
}

#[derive(Subcommand)]
enum TrackCmd {
    /// Check switch conditions, genus and maximality
    Validate { track: PathBuf },
    /// Print counts, genus and the weight-space dimension
    Info { track: PathBuf },
}

#[derive(Subcommand)]
enum PaCmd {
    /// Stretch factor, eigenbasis and sign checks
    Analyze { track: PathBuf, incidence: PathBuf },
}

#[derive(Subcommand)]
enum PotentialCmd {
    /// Assemble the potential and its generator
    Build { track: PathBuf, incidence: PathBuf },
}

#[derive(Subcommand)]
enum FlowCmd {
    /// Sample the flow of a potential from a starting shear
    Run {
        /// Potential file or a `potential build` report
        #[arg(long)]
        potential: PathBuf,
        /// Starting point, {"schema": "shear/1", "sigma": [...]}
        #[arg(long)]
        sigma: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        #[arg(long, default_value_t = 20)]
        steps: usize,
        /// Flow the inverse potential (time one gives B instead of B⁻¹)
        #[arg(long)]
        inverse: bool,
    },
}

#[derive(Subcommand)]
enum BracketCmd {
    /// Bracket of two potentials against the closed form
    Eval { inputs: PathBuf },
}

#[derive(Subcommand)]
enum JacobianCmd {
    /// Build the Jacobian and check it is symplectic
    Assemble { blocks: PathBuf },
}

#[derive(Args)]
struct CurveArgs {
    /// Representation file (punctured torus or genus 2)
    #[arg(long)]
    rep: PathBuf,
    /// Word for the measured curve
    #[arg(long)]
    gamma: String,
    /// Word for the twisting curve
    #[arg(long)]
    delta: String,
    #[arg(long, default_value_t = 1.0)]
    weight: f64,
}

#[derive(Subcommand)]
enum CosineCmd {
    /// Compare the cosine sum with the derivative of the length
    Check(CurveArgs),
}

#[derive(Subcommand)]
enum TwistCmd {
    /// Twist derivative of a length by the cosine sum
    Derivative(CurveArgs),
}

enum Failure {
    Input(String),
    Invariant(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Parse(_)
            | Error::InvalidTrack(_)
            | Error::ShapeMismatch { .. }
            | Error::BadParams(_)
            | Error::BadConfiguration(_)
            | Error::UnknownGenerator(_)
            | Error::SignViolation { .. } => Failure::Input(e.to_string()),
            _ => Failure::Invariant(e.to_string()),
        }
    }
}

type Outcome<T> = Result<T, Failure>;

#[derive(Serialize)]
struct RunReport {
    schema: &'static str,
    command: String,
    inputs: BTreeMap<String, String>,
    parameters: BTreeMap<String, Value>,
    results: BTreeMap<String, Value>,
    checks: Vec<Check>,
    wall_time_seconds: f64,
}

impl RunReport {
    fn new(command: &str) -> Self {
        RunReport {
            schema: REPORT_SCHEMA,
            command: command.into(),
            inputs: BTreeMap::new(),
            parameters: BTreeMap::new(),
            results: BTreeMap::new(),
            checks: Vec::new(),
            wall_time_seconds: 0.0,
        }
    }

    /// Reads a file and records its hash.
    fn read(&mut self, role: &str, path: &Path) -> Outcome<String> {
        let bytes = std::fs::read(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
        let hex: String = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
        self.inputs.insert(role.into(), format!("sha256:{hex}"));
        String::from_utf8(bytes).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
    }

    fn param(&mut self, k: &str, v: impl Serialize) {
        self.parameters.insert(k.into(), json!(v));
    }

    fn result(&mut self, k: &str, v: impl Serialize) {
        self.results.insert(k.into(), json!(v));
    }

    fn check(&mut self, c: Check) {
        self.checks.push(c);
    }

    fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn vector(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

fn load_action(r: &mut RunReport, track: &Path, incidence: &Path, tol: f64) -> Outcome<(TrainTrack, PseudoAnosovData)> {
    let t = TrainTrack::from_json(&r.read("track", track)?)?;
    let m = IncidenceMatrix::from_json(&r.read("incidence", incidence)?)?;
    let pa = build_linear_action(&m, &t, tol)?;
    Ok((t, pa))
}

fn track_validate(r: &mut RunReport, path: &Path) -> Outcome<()> {
    let t = TrainTrack::from_json(&r.read("track", path)?)?;
    let v = validate_track(&t);
    r.result("genus", t.genus);
    r.result("branches", t.branches.len());
    r.result("switches", t.switches.len());
    r.result("violation", v.violation.as_ref().map(|x| x.to_string()));
    let name = v.violation.as_ref().map_or("track-valid".to_string(), |x| format!("track-valid: {}", x.name()));
    r.check(Check { name, passed: v.passed(), residual: if v.passed() { 0.0 } else { 1.0 }, tolerance: 0.5 });
    Ok(())
}

fn track_info(r: &mut RunReport, path: &Path) -> Outcome<()> {
    let t = TrainTrack::from_json(&r.read("track", path)?)?;
    if let Some(v) = validate_track(&t).violation {
        return Err(Failure::Invariant(format!("invalid track: {v}")));
    }
    let info = t.info();
    let ws = weight_space(&t)?;
    let form = thurston_form(&t, &ws.basis)?;
    r.result("genus", t.genus);
    r.result("branches", info.branches);
    r.result("switches", info.switches);
    r.result("faces", info.faces.len());
    r.result("face_cusps", info.faces.iter().map(|f| f.cusps).collect::<Vec<_>>());
    r.result("euler_characteristic", info.euler_characteristic);
    r.result("maximal", info.maximal);
    r.result("weight_space_dimension", ws.dimension());
    r.result("thurston_form_degenerate", form.degenerate);
    let euler = (2 - 2 * t.genus as i64 - info.euler_characteristic).abs() as f64;
    r.check(Check::below("|χ - (2 - 2g)|", euler, 0.5));
    Ok(())
}

fn potential_checks(r: &mut RunReport, pa: &PseudoAnosovData, tol: f64, seed: u64) -> Outcome<PotentialFile> {
    let (dec, p) = potential_from_action(pa)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut expansion: f64 = 0.0;
    for _ in 0..100 {
        let s = DVector::from_fn(p.dimension(), |_, _| rng.gen_range(-1.0..1.0));
        expansion = expansion.max((p.evaluate(&s) - p.evaluate_quadratic(&s)).abs());
    }
    r.check(Check::below("decomposition residual", dec.canonical_residual(&pa.b)?, tol * pa.b.amax().max(1.0)));
    r.check(Check::below("symplectic basis residual", dec.symplectic_basis_residual(&pa.omega.form), tol * 10.0));
    r.check(Check::below("potential terms vs quadratic form", expansion, tol));
    // rebuilding from the same decomposition must agree
    let again = build_potential(pa, &dec)?;
    r.check(Check::below("potential rebuild", linalg::max_abs(&(&again.x - &p.x)), tol));
    Ok(PotentialFile::new(pa, &p))
}

fn pa_analyze(r: &mut RunReport, g: &Global, track: &Path, incidence: &Path) -> Outcome<()> {
    let (_, pa) = load_action(r, track, incidence, g.tolerance)?;
    r.result("stretch_factor", pa.lambda);
    r.result("power", pa.k);
    r.result("spectrum", pa.spectrum.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>());
    r.result("mu_plus_branches", vector(&pa.mu_plus_branches));
    r.check(Check { name: "stretch factor > 1".into(), passed: pa.lambda > 1.0, residual: pa.lambda, tolerance: 1.0 });
    r.check(Check::below("symplectic residual", pa.symplectic_residual(), g.tolerance * pa.b.amax().max(1.0)));
    r.check(Check::below("eigenvector residual", pa.eigen_residual(), g.tolerance * pa.stretch_power()));
    r.check(Check::below("reciprocal spectrum residual", pa.reciprocal_residual(), 1e-8));
    let file = potential_checks(r, &pa, g.tolerance, g.seed)?;
    r.result("block_kinds", &file.kinds);
    r.result("potential_terms", &file.terms);
    Ok(())
}

fn potential_build(r: &mut RunReport, g: &Global, track: &Path, incidence: &Path) -> Outcome<()> {
    let (_, pa) = load_action(r, track, incidence, g.tolerance)?;
    let file = potential_checks(r, &pa, g.tolerance, g.seed)?;
    r.result("potential", &file);
    Ok(())
}

/// Accepts a bare potential file or a report whose results carry one.
fn parse_potential(text: &str) -> Outcome<PotentialFile> {
    let v: Value = serde_json::from_str(text).map_err(|e| Failure::Input(e.to_string()))?;
    let inner = v.get("results").and_then(|x| x.get("potential")).cloned().unwrap_or(v);
    Ok(PotentialFile::from_json(&inner.to_string())?)
}

fn flow_run(r: &mut RunReport, g: &Global, potential: &Path, sigma: &Path, t: f64, steps: usize, inverse: bool) -> Outcome<()> {
    let file = parse_potential(&r.read("potential", potential)?)?;
    let sigma0 = parse_shear(&r.read("sigma", sigma)?)?;
    r.param("t", t);
    r.param("steps", steps);
    r.param("inverse", inverse);
    if !t.is_finite() || t < 0.0 {
        return Err(Failure::Input(format!("t must be a finite nonnegative number, got {t}")));
    }
    let base = file.spec()?;
    let b = file.action()?;
    if sigma0.len() != base.dimension() {
        return Err(Error::ShapeMismatch { expected: base.dimension(), found: sigma0.len() }.into());
    }
    let p = if inverse { base.flip() } else { base };
    let start = ShearPoint::new(sigma0.clone(), &p.mu_plus, &p.omega)?;
    let tr = flow_trajectory(&p, &start, t, steps);
    if let Some((at, witness)) = tr.left_cone {
        return Err(Error::LeftCone { t: at, witness }.into());
    }
    let scale = tr.potential[0].abs().max(1.0);
    r.check(Check::below("conservation residual", tr.conservation_residual(), g.tolerance * scale));
    let symp = tr.times.iter().map(|&s| flow_symplectic_residual(&p, s)).fold(0.0, f64::max);
    r.check(Check::below("symplectic residual", symp, 1e-8));
    // time one against the action itself, whatever t was asked for
    let target = if inverse { &b * &sigma0 } else { b.clone().lu().solve(&sigma0).ok_or(Error::DegenerateForm)? };
    let one = flow(&p, &start, 1.0)?;
    r.check(Check::below("time-one residual", (&one.sigma - &target).amax() / target.amax().max(1.0), 1e-8));
    r.result("times", &tr.times);
    r.result("points", tr.points.iter().map(vector).collect::<Vec<_>>());
    r.result("potential", &tr.potential);
    r.result("witness", &tr.witness);
    Ok(())
}

fn bracket_eval(r: &mut RunReport, path: &Path) -> Outcome<()> {
    let inp: BracketInputs = serde_json::from_str(&r.read("inputs", path)?).map_err(|e| Failure::Input(e.to_string()))?;
    let v = pa_bracket_evaluate(&inp)?;
    r.result("bracket", v);
    r.check(Check { name: "bracket finite".into(), passed: v.is_finite(), residual: v, tolerance: f64::INFINITY });
    Ok(())
}

#[derive(serde::Deserialize)]
struct JacobianBlocks {
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
    d: Vec<Vec<f64>>,
}

fn from_rows(rows: &[Vec<f64>]) -> Outcome<DMatrix<f64>> {
    let n = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != n) {
        return Err(Failure::Input("ragged matrix".into()));
    }
    Ok(DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]))
}

fn jacobian_assemble(r: &mut RunReport, g: &Global, path: &Path) -> Outcome<()> {
    let blk: JacobianBlocks = serde_json::from_str(&r.read("blocks", path)?).map_err(|e| Failure::Input(e.to_string()))?;
    let (a, b, c, d) = (from_rows(&blk.a)?, from_rows(&blk.b)?, from_rows(&blk.c)?, from_rows(&blk.d)?);
    let (j, inv) = jacobian_assembly(&a, &b, &c, &d, g.tolerance)?;
    let n = j.nrows();
    let direct = j.clone().try_inverse().ok_or(Error::DegenerateForm)?;
    let scale = linalg::max_abs(&j).max(1.0).powi(2);
    r.check(Check::below("symplectic residual", linalg::symplectic_residual(&j, &linalg::std_form(n / 2)), g.tolerance * scale));
    r.check(Check::below("block inverse vs numerical inverse", linalg::max_abs(&(&inv - direct)), g.tolerance * scale));
    r.result("jacobian", matrix_rows(&j));
    r.result("inverse", matrix_rows(&inv));
    Ok(())
}

fn load_rep(r: &mut RunReport, g: &Global, a: &CurveArgs) -> Outcome<(FuchsianRep, usize)> {
    let rep = FuchsianRep::from_json(&r.read("rep", &a.rep)?)?;
    let depth = g.depth.unwrap_or(rep.surface.default_depth());
    r.param("gamma", &a.gamma);
    r.param("delta", &a.delta);
    r.param("weight", a.weight);
    r.param("depth", depth);
    Ok((rep, depth))
}

fn twist_fd(rep: &FuchsianRep, a: &CurveArgs, depth: usize) -> Outcome<(TwistPlan, f64, f64)> {
    let plan = TwistPlan::new(rep, &a.delta, a.weight, depth)?;
    let word = rep.parse_word(&a.gamma)?;
    let (v, err) = richardson(|t| trace_length(&plan.at(t).eval_letters(&word)), 1e-4)?;
    Ok((plan, v, err))
}

fn cosine_check(r: &mut RunReport, g: &Global, a: &CurveArgs) -> Outcome<()> {
    let (rep, depth) = load_rep(r, g, a)?;
    let report = enumerate_crossings(&rep, &a.gamma, &a.delta, depth)?;
    let sum = report.cosine_sum(a.weight);
    let (_, fd, err) = twist_fd(&rep, a, depth)?;
    r.result("period", report.period);
    r.result("crossings", &report.crossings);
    r.result("cosine_sum", sum);
    r.result("dlength_dtwist", fd);
    r.result("fd_error_estimate", err);
    r.check(Check { name: "crossings saturated".into(), passed: report.saturated, residual: report.crossings.len() as f64, tolerance: depth as f64 });
    r.check(Check::below("relative |dℓ/dt - Σ w cos θ|", (fd - sum).abs() / sum.abs().max(1.0), 1e-5));
    Ok(())
}

fn twist_derivative(r: &mut RunReport, g: &Global, a: &CurveArgs) -> Outcome<()> {
    let (rep, depth) = load_rep(r, g, a)?;
    let (plan, fd, err) = twist_fd(&rep, a, depth)?;
    let delta_len = trace_length(&rep.eval(&a.delta)?)?;
    let mut relator: f64 = 0.0;
    let mut drift: f64 = 0.0;
    for t in [-1.0, -0.5, 0.5, 1.0] {
        let moved = plan.at(t);
        relator = relator.max(moved.relator_residual()?);
        drift = drift.max((trace_length(&moved.eval(&a.delta)?)? - delta_len).abs());
    }
    r.result("dlength_dtwist", fd);
    r.result("fd_error_estimate", err);
    r.result("separating_lifts_per_generator", plan.crossings_per_generator());
    r.check(Check::below("relator residual for |t| ≤ 1", relator, 1e-8));
    r.check(Check::below("twisting curve length drift", drift, 1e-9));
    Ok(())
}

fn accept_suite(r: &mut RunReport, g: &Global, suite: &str) -> Outcome<()> {
    r.param("suite", suite);
    r.param("seed", g.seed);
    let reports = accept::run_suite(suite, g.seed)?;
    for c in &reports {
        eprintln!("{}", c.line());
        for chk in &c.checks {
            r.check(Check { name: format!("criterion {}: {}", c.id, chk.name), ..chk.clone() });
        }
    }
    r.result("criteria", &reports);
    Ok(())
}

fn run(cli: &Cli, r: &mut RunReport) -> Outcome<()> {
    let g = &cli.global;
    if !(g.tolerance > 0.0 && g.tolerance.is_finite()) {
        return Err(Failure::Input(format!("tolerance must be positive, got {}", g.tolerance)));
    }
    r.param("tolerance", g.tolerance);
    match &cli.command {
        Command::Track { cmd: TrackCmd::Validate { track } } => track_validate(r, track),
        Command::Track { cmd: TrackCmd::Info { track } } => track_info(r, track),
        Command::Pa { cmd: PaCmd::Analyze { track, incidence } } => pa_analyze(r, g, track, incidence),
        Command::Potential { cmd: PotentialCmd::Build { track, incidence } } => potential_build(r, g, track, incidence),
        Command::Flow { cmd: FlowCmd::Run { potential, sigma, t, steps, inverse } } => {
            flow_run(r, g, potential, sigma, *t, *steps, *inverse)
        }
        Command::Bracket { cmd: BracketCmd::Eval { inputs } } => bracket_eval(r, inputs),
        Command::Jacobian { cmd: JacobianCmd::Assemble { blocks } } => jacobian_assemble(r, g, blocks),
        Command::Cosine { cmd: CosineCmd::Check(a) } => cosine_check(r, g, a),
        Command::Twist { cmd: TwistCmd::Derivative(a) } => twist_derivative(r, g, a),
        Command::Accept { suite } => accept_suite(r, g, suite),
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Track { cmd: TrackCmd::Validate { .. } } => "track validate",
        Command::Track { cmd: TrackCmd::Info { .. } } => "track info",
        Command::Pa { .. } => "pa analyze",
        Command::Potential { .. } => "potential build",
        Command::Flow { .. } => "flow run",
        Command::Bracket { .. } => "bracket eval",
        Command::Jacobian { .. } => "jacobian assemble",
        Command::Cosine { .. } => "cosine check",
        Command::Twist { .. } => "twist derivative",
        Command::Accept { .. } => "accept",
    }
}

fn emit(r: &RunReport, out: Option<&Path>) -> Result<(), String> {
    let text = serde_json::to_string_pretty(r).map_err(|e| e.to_string())?;
    match out {
        Some(p) => std::fs::write(p, text + "\n").map_err(|e| format!("{}: {e}", p.display())),
        None => {
            use std::io::Write;
            match writeln!(std::io::stdout().lock(), "{text}") {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.to_string()),
                _ => Ok(()),
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let start = Instant::now();
    let mut report = RunReport::new(command_name(&cli.command));
    let outcome = run(&cli, &mut report);
    report.wall_time_seconds = start.elapsed().as_secs_f64();
    let code = match outcome {
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            return ExitCode::from(EXIT_INPUT);
        }
        Err(Failure::Invariant(msg)) => {
            eprintln!("invariant failure: {msg}");
            report.check(Check { name: msg, passed: false, residual: f64::NAN, tolerance: 0.0 });
            EXIT_INVARIANT
        }
        Ok(()) if !report.passed() => {
            for c in report.checks.iter().filter(|c| !c.passed) {
                eprintln!("check failed: {} ({:e} vs {:e})", c.name, c.residual, c.tolerance);
            }
            EXIT_INVARIANT
        }
        Ok(()) => 0,
    };
    if let Err(e) = emit(&report, cli.global.json_out.as_deref()) {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_INPUT);
    }
    ExitCode::from(code)
}
