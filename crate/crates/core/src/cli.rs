//! Batch front end behind the `lvlab` binary.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | bad command line, unreadable or invalid scenario, or a request that does not apply to the scenario |
//! | 2 | solver failure |
//! | 3 | a requested certificate or agreement check fails (the report is still written) |

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use crate::certify::{
    betas_from_box, betas_from_equilibrium, check_49a, check_corollary48, check_degenerate_thm31, check_f2, check_f3,
    check_semitrivial_g, check_theorem12, corollary37_box, default_d_samples, env_extrema, estimate_ls, off_diagonal,
    solve_bounds_f1, BetaSource, BoundsCertificate, Condition, ConditionReport, Variant, Witness,
};
use crate::lyapunov::{self, monotonicity_report, DegenerateCase, FunctionalSpec, Slack, MIN_SNAPSHOTS};
use crate::model::{Grid, SpeciesState};
use crate::odecmp::{check_sandwich, init_from_state, integrate_bounds_ode, limit_residual};
use crate::scenario::{Scenario, ScenarioError};
use crate::steady::{
    default_guess, degenerate_equilibrium, monotone_iteration, multistart_relaxation, newton_equilibrium,
    semitrivial_equilibrium, solve_logistic_theta, EquilibriumResult,
};
use crate::stepper::{L2Distance, Observer, RunStatus, Stepper, Trajectory};
use crate::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_SOLVER: i32 = 2;
pub const EXIT_CHECK_FAILED: i32 = 3;

/// Tolerance for the cross-method agreement reported by `steady`.
pub const AGREEMENT_TOLERANCE: f64 = 1e-6;

/// Conditions accepted in a scenario's `[certify] conditions` list.
pub const KNOWN_CONDITIONS: [&str; 14] =
    ["F1", "F2", "F3", "4.9a", "G1", "G2", "A1", "A2", "A3", "A4", "THM31", "COR37", "LS", "COR48"];

#[derive(Debug, Parser)]
#[command(name = "lvlab", version, about = "Heterogeneous diffusive Lotka-Volterra competition lab")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Time integration with diagnostics and Lyapunov audit.
    Simulate(Common),
    /// Equilibrium by Newton, relaxation and monotone iteration.
    Steady(Common),
    /// Evaluate the conditions listed under `[certify]`.
    Certify(Common),
    /// Constant upper/lower bounds on every equilibrium.
    Bounds(Common),
    /// Integrate the bounds ODE and compare with its fixed point.
    Odecmp(Common),
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Simulate(c) | Command::Steady(c) | Command::Certify(c) | Command::Bounds(c) | Command::Odecmp(c) => c,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Steady(_) => "steady",
            Command::Certify(_) => "certify",
            Command::Bounds(_) => "bounds",
            Command::Odecmp(_) => "odecmp",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Overrides the scenario's `threads`.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Overrides the scenario's `seed`.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Solver(String),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::Config(_) => EXIT_CONFIG,
            Failure::Solver(_) => EXIT_SOLVER,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Solver(m) => m,
        }
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NotApplicable(_)
            | Error::InvalidArgument(_)
            | Error::InvalidSystem(_)
            | Error::InvalidGrid(_)
            | Error::InvalidField(_)
            | Error::GridMismatch
            | Error::DimensionMismatch { .. } => Failure::Config(e.to_string()),
            _ => Failure::Solver(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Config(format!("output: {e}"))
    }
}

type CResult<T> = std::result::Result<T, Failure>;

/// Parses `args` (including the program name) and runs the command.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(&cli),
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                EXIT_CONFIG
            } else {
                EXIT_OK
            }
        }
    }
}

pub fn run(cli: &Cli) -> i32 {
    match execute(cli) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("lvlab {}: {}", cli.command.name(), f.message());
            f.code()
        }
    }
}

fn execute(cli: &Cli) -> CResult<i32> {
    let common = cli.command.common();
    let mut scn = Scenario::load(&common.scenario)?;
    if let Some(t) = common.threads {
        scn.threads = t.max(1);
    }
    if let Some(s) = common.seed {
        scn.seed = s;
    }
    let mut out = Artifacts::new(&common.out)?;
    let code = match &cli.command {
        Command::Simulate(_) => cmd_simulate(&scn, &mut out)?,
        Command::Steady(_) => cmd_steady(&scn, &mut out)?,
        Command::Certify(_) => cmd_certify(&scn, &mut out)?,
        Command::Bounds(_) => cmd_bounds(&scn, &mut out)?,
        Command::Odecmp(_) => cmd_odecmp(&scn, &mut out)?,
    };
    out.finish(cli.command.name(), &scn, code)?;
    Ok(code)
}

/// Output directory plus a record of everything written to it.
pub struct Artifacts {
    dir: PathBuf,
    written: Vec<(String, String)>,
}

impl Artifacts {
    pub fn new(dir: &Path) -> CResult<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), written: Vec::new() })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> CResult<()> {
        let path = self.dir.join(name);
        if let Some(p) = path.parent() {
            std::fs::create_dir_all(p)?;
        }
        std::fs::write(&path, contents)?;
        let digest = Sha256::digest(contents.as_bytes());
        let hex = digest.iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        });
        self.written.push((name.to_string(), hex));
        Ok(())
    }

    fn finish(mut self, command: &str, scn: &Scenario, code: i32) -> CResult<()> {
        let mut s = String::new();
        let _ = writeln!(s, "command = {}", toml_str(command));
        let _ = writeln!(s, "scenario = {}", toml_str(&scn.name));
        let _ = writeln!(s, "seed = {}", scn.seed);
        let _ = writeln!(s, "threads = {}", scn.threads);
        let _ = writeln!(s, "exit_code = {code}");
        let _ = writeln!(s, "\n[artifacts]");
        for (name, hash) in &self.written {
            let _ = writeln!(s, "{} = \"sha256:{hash}\"", toml_str(name));
        }
        self.write_untracked("summary.toml", &s)
    }

    fn write_untracked(&mut self, name: &str, contents: &str) -> CResult<()> {
        std::fs::write(self.dir.join(name), contents)?;
        Ok(())
    }
}

fn toml_str(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

/// One row per node: coordinates then `u_1..u_k`.
pub fn snapshot_csv(grid: &Grid, state: &SpeciesState) -> String {
    let mut s = String::from(if grid.dimension() == 2 { "x,y" } else { "x" });
    for i in 1..=state.k() {
        let _ = write!(s, ",u_{i}");
    }
    s.push('\n');
    for node in 0..grid.len() {
        let [x, y] = grid.coordinates(node);
        let _ = write!(s, "{x:?}");
        if grid.dimension() == 2 {
            let _ = write!(s, ",{y:?}");
        }
        for f in &state.fields {
            let _ = write!(s, ",{:?}", f[node]);
        }
        s.push('\n');
    }
    s
}

/// `t, sup_i.., inf_i.., observers..` rows.
pub fn diagnostics_csv(traj: &Trajectory) -> String {
    let k = traj.snapshots.first().map_or(0, |s| s.k());
    let mut s = String::from("t");
    for i in 1..=k {
        let _ = write!(s, ",sup_u_{i}");
    }
    for i in 1..=k {
        let _ = write!(s, ",inf_u_{i}");
    }
    for n in &traj.observer_names {
        let _ = write!(s, ",{n}");
    }
    s.push('\n');
    for row in &traj.diagnostics {
        let _ = write!(s, "{:?}", row.time);
        for v in row.sup.iter().chain(&row.inf).chain(&row.observed) {
            let _ = write!(s, ",{v:?}");
        }
        s.push('\n');
    }
    s
}

fn constant_unit_matrix(scn: &Scenario) -> CResult<Vec<Vec<f64>>> {
    let a = scn
        .system
        .constant_matrix()
        .ok_or_else(|| Failure::Config("condition requires spatially constant competition coefficients".into()))?;
    if (0..a.len()).any(|i| (a[i][i] - 1.0).abs() > 1e-12) {
        return Err(Failure::Config("condition requires a unit diagonal competition matrix".into()));
    }
    Ok(a)
}

fn bounds_certificate(scn: &Scenario) -> CResult<(Vec<Vec<f64>>, BoundsCertificate)> {
    let a = constant_unit_matrix(scn)?;
    let (mminus, mplus) = env_extrema(&scn.system);
    let b = solve_bounds_f1(&a, &mminus, &mplus)?;
    Ok((a, b))
}

fn survivors(scn: &Scenario) -> Option<usize> {
    scn.certify.as_ref().and_then(|c| c.i0)
}

/// The equilibrium trajectories are compared against: semi-trivial when the
/// scenario names survivors, the reduced solution when species 2 is
/// immobile, Newton otherwise.
fn reference_equilibrium(scn: &Scenario) -> crate::Result<EquilibriumResult> {
    let sys = &scn.system;
    if let Some(i0) = survivors(scn) {
        let list: Vec<usize> = (0..i0).collect();
        return semitrivial_equilibrium(sys, &list);
    }
    if sys.k() == 2 && sys.is_degenerate(1) && !sys.is_degenerate(0) {
        return degenerate_equilibrium(sys);
    }
    newton_equilibrium(sys, &default_guess(sys)?)
}

fn witness_vector(c: &Condition, key: &str) -> Option<Vec<f64>> {
    c.vector(key).map(<[f64]>::to_vec)
}

fn build_functional(scn: &Scenario, name: &str, reference: &SpeciesState) -> CResult<FunctionalSpec> {
    let sys = &scn.system;
    let grid = &scn.grid;
    match name {
        "Q" => {
            if sys.k() != 1 {
                return Err(Failure::Config(format!("functional Q needs k = 1, scenario has k = {}", sys.k())));
            }
            Ok(lyapunov::logistic_q(reference.species(0), sys.d(0))?)
        }
        "F_k" => {
            let (a, bounds) = bounds_certificate(scn)?;
            let (c, _) = check_f3(&off_diagonal(&a), &bounds, "F3")?;
            if !c.holds {
                return Err(Failure::Config("F_k weights need F1 and F3 to hold".into()));
            }
            let eps = witness_vector(&c, "epsilon").expect("F3 witness carries epsilon");
            Ok(lyapunov::k_species(&reference.fields, &eps)?)
        }
        "F_deg" => {
            let report = check_degenerate_thm31(sys)?;
            let case = match report.get("THM31").and_then(|c| c.get("case")) {
                Some(Witness::Text(t)) => t.clone(),
                _ => "none".into(),
            };
            match case.as_str() {
                "i" => Ok(lyapunov::degenerate(sys, DegenerateCase::Coexistence, Some(reference.species(0)))?),
                "ii" => {
                    let theta = solve_logistic_theta(sys.d(0), sys.m(0), sys.a(0, 0), grid)?;
                    Ok(lyapunov::degenerate(sys, DegenerateCase::MobileWins, Some(&theta))?)
                }
                "iii" => Ok(lyapunov::degenerate(sys, DegenerateCase::ImmobileWins, None)?),
                _ => Err(Failure::Config("no case of the immobile-species analysis applies".into())),
            }
        }
        "F_semi" => {
            let i0 = survivors(scn).ok_or_else(|| Failure::Config("F_semi needs certify.i0".into()))?;
            let report = check_semitrivial_g(sys, i0)?;
            let g2 = report.get("G2").expect("G2 is always reported");
            let eps = witness_vector(g2, "epsilon")
                .ok_or_else(|| Failure::Config("F_semi weights need G1 bounds and G2 to hold".into()))?;
            Ok(lyapunov::semitrivial(&reference.fields[..i0], &eps, sys.k(), None)?)
        }
        other => {
            let variant = other
                .strip_prefix("F_")
                .and_then(Variant::parse)
                .ok_or_else(|| Failure::Config(format!("unknown functional `{other}`")))?;
            let betas = match scn.certify.as_ref().and_then(|c| c.cor37.as_ref()) {
                Some(p) => betas_from_box(sys, &corollary37_box(p, grid)?.1)?,
                None => betas_from_equilibrium(sys, reference)?,
            };
            Ok(lyapunov::two_species(sys, reference, &betas, variant)?)
        }
    }
}

fn auto_functional(scn: &Scenario) -> &'static str {
    let sys = &scn.system;
    if sys.k() == 1 {
        "Q"
    } else if sys.k() == 2 && sys.is_degenerate(1) {
        "F_deg"
    } else if survivors(scn).is_some() {
        "F_semi"
    } else if constant_unit_matrix(scn).is_ok() {
        "F_k"
    } else {
        "F_A1"
    }
}

fn cmd_simulate(scn: &Scenario, out: &mut Artifacts) -> CResult<i32> {
    let settings = scn
        .simulate
        .as_ref()
        .ok_or_else(|| Failure::Config("scenario has no [simulate] section".into()))?;
    let control = settings.control();
    control.validate()?;
    let init = scn.initial_state()?;

    let reference = match reference_equilibrium(scn) {
        Ok(r) => Some(r.state()),
        Err(e) => {
            eprintln!("note: no reference equilibrium ({e}); distance column omitted");
            None
        }
    };
    let functional = match (settings.functional.as_str(), &reference) {
        ("none", _) => None,
        ("auto", None) => None,
        ("auto", Some(r)) => match build_functional(scn, auto_functional(scn), r) {
            Ok(f) => Some(f),
            Err(e) => {
                eprintln!("note: no Lyapunov functional attached ({})", e.message());
                None
            }
        },
        (name, Some(r)) => Some(build_functional(scn, name, r)?),
        (name, None) => {
            return Err(Failure::Solver(format!("functional {name} needs a reference equilibrium")));
        }
    };

    let mut l2 = reference.clone().map(|r| L2Distance::new(r, &scn.system));
    let mut fobs = functional.as_ref().map(|f| f.observer(&scn.grid));
    let mut observers: Vec<&mut dyn Observer> = Vec::new();
    if let Some(o) = l2.as_mut() {
        observers.push(o);
    }
    if let Some(o) = fobs.as_mut() {
        observers.push(o);
    }
    let stepper = Stepper::new(&scn.system)?.with_threads(scn.threads);
    let traj = stepper.simulate(&init, &control, &mut observers)?;

    out.write("diagnostics.csv", &diagnostics_csv(&traj))?;
    if settings.snapshots {
        for (i, s) in traj.snapshots.iter().enumerate() {
            out.write(&format!("snapshots/snapshot_{i:04}.csv"), &snapshot_csv(&scn.grid, s))?;
        }
    }
    let mut audit = String::new();
    let _ = writeln!(audit, "status = {}", toml_str(&format!("{:?}", traj.status)));
    let _ = writeln!(audit, "accepted_steps = {}", traj.accepted_steps);
    let _ = writeln!(audit, "rejected_steps = {}", traj.rejected_steps);
    let _ = writeln!(audit, "snapshots = {}", traj.snapshots.len());
    if let Some(spec) = &functional {
        if traj.snapshots.len() >= MIN_SNAPSHOTS {
            let rep = monotonicity_report(&traj, spec, &scn.grid, Slack::default())?;
            let _ = writeln!(audit, "\n[functional]");
            let _ = writeln!(audit, "name = {}", toml_str(&rep.name));
            let _ = writeln!(audit, "monotone = {}", rep.is_monotone());
            let _ = writeln!(audit, "flags = {}", rep.flags.len());
            let _ = writeln!(audit, "pattern_extrapolated = {}", rep.pattern_extrapolated);
            if let Some(f) = rep.flags.first() {
                let _ = writeln!(audit, "first_flag_time = {}", f.time);
                let _ = writeln!(audit, "first_flag_increase = {}", f.increase);
            }
            if let Some(al) = &rep.allowance {
                let _ = writeln!(audit, "allowance_total = {}", al.cumulative.last().copied().unwrap_or(0.0));
                let _ = writeln!(audit, "allowance_finite = {}", al.finite);
                let _ = writeln!(audit, "allowance_plateau = {}", al.plateau);
            }
            println!("{}: {} flags over {} snapshots", rep.name, rep.flags.len(), traj.snapshots.len());
        }
    }
    out.write("run.toml", &audit)?;

    match &traj.status {
        RunStatus::Completed | RunStatus::Stopped { .. } => {
            let last = traj.last();
            println!(
                "simulated to t = {} in {} steps ({} rejected)",
                last.time, traj.accepted_steps, traj.rejected_steps
            );
            Ok(EXIT_OK)
        }
        other => Err(Failure::Solver(format!("time stepping stopped: {other:?}"))),
    }
}

fn result_section(s: &mut String, name: &str, r: &EquilibriumResult) {
    let _ = writeln!(s, "\n[{name}]");
    let _ = writeln!(s, "method = {}", toml_str(r.method.as_str()));
    let _ = writeln!(s, "residual_sup = {}", float(r.residual_sup));
    let _ = writeln!(s, "iterations = {}", r.iterations);
    let _ = writeln!(s, "converged = {}", r.converged);
}

fn float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:?}")
    } else {
        toml_str(&v.to_string())
    }
}

fn vec_str(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| float(*x)).collect();
    format!("[{}]", parts.join(", "))
}

fn cmd_steady(scn: &Scenario, out: &mut Artifacts) -> CResult<i32> {
    let sys = &scn.system;
    let newton = reference_equilibrium(scn)?;
    if !newton.converged {
        return Err(Failure::Solver(format!("Newton stalled at residual {:e}", newton.residual_sup)));
    }
    let seeds: Vec<u64> = (0..scn.steady.starts as u64).map(|i| scn.seed.wrapping_add(i)).collect();
    let multi = multistart_relaxation(sys, scn.steady.t_max, &seeds)?;

    let monotone = if survivors(scn).is_none() && !sys.has_degenerate_species() {
        match bounds_certificate(scn) {
            Ok((_, b)) if b.feasible => {
                let up = SpeciesState::constant(&scn.grid, &b.cbar)?;
                let lo = SpeciesState::constant(&scn.grid, &b.cunder)?;
                Some(monotone_iteration(sys, &up, &lo)?.as_equilibrium(sys)?)
            }
            _ => None,
        }
    } else {
        None
    };

    let ns = newton.state();
    let relax_dist = multi.results.iter().map(|r| r.state().sup_distance(&ns)).fold(0.0, f64::max);
    let mono_dist = monotone.as_ref().map(|m| m.state().sup_distance(&ns));
    let relax_mono = monotone
        .as_ref()
        .map(|m| multi.results.iter().map(|r| r.state().sup_distance(&m.state())).fold(0.0, f64::max));
    let worst = [Some(relax_dist), mono_dist, relax_mono, Some(multi.max_pairwise_distance)]
        .into_iter()
        .flatten()
        .fold(0.0, f64::max);
    let all_converged =
        multi.results.iter().all(|r| r.converged) && monotone.as_ref().map_or(true, |m| m.converged);
    let agree = worst <= AGREEMENT_TOLERANCE && all_converged;

    let mut s = String::new();
    let _ = writeln!(s, "agree = {agree}");
    let _ = writeln!(s, "tolerance = {}", float(AGREEMENT_TOLERANCE));
    let _ = writeln!(s, "worst_distance = {}", float(worst));
    let _ = writeln!(s, "newton_vs_relaxation = {}", float(relax_dist));
    let _ = writeln!(s, "relaxation_pairwise = {}", float(multi.max_pairwise_distance));
    if let Some(d) = mono_dist {
        let _ = writeln!(s, "newton_vs_monotone = {}", float(d));
    }
    if let Some(d) = relax_mono {
        let _ = writeln!(s, "relaxation_vs_monotone = {}", float(d));
    }
    result_section(&mut s, "newton", &newton);
    for (seed, r) in multi.seeds.iter().zip(&multi.results) {
        result_section(&mut s, &format!("relaxation_seed_{seed}"), r);
    }
    if let Some(m) = &monotone {
        result_section(&mut s, "monotone", m);
    } else {
        let _ = writeln!(s, "\n[monotone]\nskipped = true");
    }
    out.write("steady.toml", &s)?;
    out.write("equilibrium.csv", &snapshot_csv(&scn.grid, &ns))?;
    println!(
        "newton/relaxation/monotone agreement: worst distance {:e} ({})",
        worst,
        if agree { "agree" } else { "DISAGREE" }
    );
    Ok(if agree { EXIT_OK } else { EXIT_CHECK_FAILED })
}

fn cmd_certify(scn: &Scenario, out: &mut Artifacts) -> CResult<i32> {
    let settings = scn
        .certify
        .as_ref()
        .ok_or_else(|| Failure::Config("scenario has no [certify] section".into()))?;
    for c in &settings.conditions {
        if !KNOWN_CONDITIONS.contains(&c.as_str()) {
            return Err(Failure::Config(format!(
                "unknown condition `{c}` (known: {})",
                KNOWN_CONDITIONS.join(", ")
            )));
        }
    }
    let sys = &scn.system;
    let wants = |n: &str| settings.conditions.iter().any(|c| c == n);
    let mut report = ConditionReport::new();

    if ["F1", "F2", "F3", "4.9a"].iter().any(|n| wants(n)) {
        let (a, bounds) = bounds_certificate(scn)?;
        let b = off_diagonal(&a);
        if wants("F1") {
            report.push(bounds.condition("F1"));
        }
        if wants("F2") {
            report.push(check_f2(&b)?);
        }
        if wants("4.9a") {
            report.push(check_49a(&b)?.0);
        }
        if wants("F3") {
            report.push(check_f3(&b, &bounds, "F3")?.0);
        }
    }
    if wants("G1") || wants("G2") {
        let i0 = settings
            .i0
            .ok_or_else(|| Failure::Config("G1/G2 need `i0` (number of survivors) under [certify]".into()))?;
        let g = check_semitrivial_g(sys, i0)?;
        for c in g.conditions {
            let group = if c.name.starts_with("G1") || c.name == "yy" { "G1" } else { "G2" };
            if wants(group) {
                report.push(c);
            }
        }
    }
    let variants: Vec<Variant> = Variant::ALL.into_iter().filter(|v| wants(v.name())).collect();
    if !variants.is_empty() {
        if sys.k() != 2 {
            return Err(Failure::Config(format!(
                "{} apply to two species only; scenario has k = {}",
                variants.iter().map(|v| v.name()).collect::<Vec<_>>().join("/"),
                sys.k()
            )));
        }
        let t12 = match &settings.cor37 {
            Some(p) => check_theorem12(sys, BetaSource::Box(&corollary37_box(p, &scn.grid)?.1))?,
            None => {
                let eq = reference_equilibrium(scn)?;
                check_theorem12(sys, BetaSource::Equilibrium(&eq.state()))?
            }
        };
        for c in t12.conditions {
            if wants(&c.name) {
                report.push(c);
            }
        }
    }
    if wants("THM31") {
        report.extend(check_degenerate_thm31(sys)?);
    }
    if wants("COR37") {
        let p = settings
            .cor37
            .as_ref()
            .ok_or_else(|| Failure::Config("COR37 needs a [certify.cor37] section".into()))?;
        report.extend(corollary37_box(p, &scn.grid)?.0);
    }
    if wants("LS") {
        if sys.k() < 2 {
            return Err(Failure::Config("LS needs at least two species".into()));
        }
        let (a12, a21) = (sys.a(0, 1), sys.a(1, 0));
        if !a12.is_constant(0.0) || !a21.is_constant(0.0) {
            return Err(Failure::Config("LS needs constant a12 and a21".into()));
        }
        let est = estimate_ls(&default_d_samples(settings.ls_samples), sys.m(0), sys.m(1), &scn.grid)?;
        report.push(est.condition(a12[0], a21[0]));
    }
    if wants("COR48") {
        let a = constant_unit_matrix(scn)?;
        report.push(check_corollary48(&a, settings.eps_cap)?.0);
    }

    out.write("certificate.toml", &report.to_toml_string())?;
    out.write("certificate.csv", &report.to_csv(&scn.name))?;
    let mut failed = Vec::new();
    for name in &settings.conditions {
        let holds = report.holds(name).unwrap_or(false);
        let margin = report.get(name).map_or(f64::NAN, |c| c.margin);
        println!("{name}: {} (margin {margin:e})", if holds { "holds" } else { "fails" });
        if !holds {
            failed.push(name.as_str());
        }
    }
    Ok(if failed.is_empty() { EXIT_OK } else { EXIT_CHECK_FAILED })
}

fn cmd_bounds(scn: &Scenario, out: &mut Artifacts) -> CResult<i32> {
    let (_, b) = bounds_certificate(scn)?;
    let mut report = ConditionReport::new();
    report.push(b.condition("F1"));
    out.write("bounds.toml", &report.to_toml_string())?;
    println!("cbar   = {}", vec_str(&b.cbar));
    println!("cunder = {}", vec_str(&b.cunder));
    if b.cbar == b.cunder {
        println!("cbar = cunder");
    }
    Ok(if b.feasible { EXIT_OK } else { EXIT_CHECK_FAILED })
}

fn cmd_odecmp(scn: &Scenario, out: &mut Artifacts) -> CResult<i32> {
    let settings = scn
        .odecmp
        .as_ref()
        .ok_or_else(|| Failure::Config("scenario has no [odecmp] section".into()))?;
    let a = constant_unit_matrix(scn)?;
    let (mminus, mplus) = env_extrema(&scn.system);
    let init = scn.initial_state()?;
    let (mut upper, mut lower) = init_from_state(&init);
    if let Some(u) = &settings.upper {
        upper = u.clone();
    }
    if let Some(l) = &settings.lower {
        lower = l.clone();
    }
    let control = settings.control();
    let traj = integrate_bounds_ode(&a, &mminus, &mplus, (&upper, &lower), &control)?;
    out.write("bounds_trajectory.csv", &traj.to_csv())?;

    let bounds = solve_bounds_f1(&a, &mminus, &mplus)?;
    let mut s = String::new();
    let mut ok = true;
    let (fu, fl) = (traj.upper.last().expect("initial row"), traj.lower.last().expect("initial row"));
    let _ = writeln!(s, "final_upper = {}", vec_str(fu));
    let _ = writeln!(s, "final_lower = {}", vec_str(fl));
    let _ = writeln!(s, "derivative_sup = {}", float(traj.derivative_sup));
    let _ = writeln!(s, "limit_reached = {}", traj.limit.is_some());
    let _ = writeln!(s, "fixed_point_residual = {}", float(limit_residual(&a, &mminus, &mplus, fu, fl)));
    if bounds.feasible {
        let dist = fu
            .iter()
            .zip(&bounds.cbar)
            .chain(fl.iter().zip(&bounds.cunder))
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        let _ = writeln!(s, "distance_to_cstar = {}", float(dist));
        println!("bounds ODE limit vs (cbar, cunder): {dist:e}");
        ok &= traj.limit.is_some();
    } else {
        let _ = writeln!(s, "distance_to_cstar = \"undefined\"");
        ok = false;
    }
    if settings.sandwich {
        let pde = Stepper::new(&scn.system)?.with_threads(scn.threads).simulate(&init, &control, &mut [])?;
        if !pde.status.is_ok() {
            return Err(Failure::Solver(format!("PDE run stopped: {:?}", pde.status)));
        }
        let rep = check_sandwich(&pde, &traj, settings.sandwich_tol)?;
        let _ = writeln!(s, "\n[sandwich]");
        let _ = writeln!(s, "holds = {}", rep.holds());
        let _ = writeln!(s, "checked_times = {}", rep.checked_times);
        let _ = writeln!(s, "violations = {}", rep.violations.len());
        let _ = writeln!(s, "worst_excess = {}", float(rep.worst_excess));
        println!("sandwich: {} violations over {} times", rep.violations.len(), rep.checked_times);
        ok &= rep.holds();
    }
    out.write("odecmp.toml", &s)?;
    Ok(if ok { EXIT_OK } else { EXIT_CHECK_FAILED })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let g = Grid::interval(1.0, 3).unwrap();
        let s = SpeciesState::constant(&g, &[1.0, 0.5]).unwrap();
        let csv = snapshot_csv(&g, &s);
        assert_eq!(csv, "x,u_1,u_2\n0.0,1.0,0.5\n0.5,1.0,0.5\n1.0,1.0,0.5\n");
    }

    #[test]
    fn error_classes() {
        assert_eq!(Failure::from(Error::NotApplicable("x".into())).code(), EXIT_CONFIG);
        assert_eq!(Failure::from(Error::LinearSolve("x".into())).code(), EXIT_SOLVER);
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run_from_args(["lvlab", "frobnicate"]), EXIT_CONFIG);
        assert_eq!(run_from_args(["lvlab", "simulate"]), EXIT_CONFIG);
    }
}
