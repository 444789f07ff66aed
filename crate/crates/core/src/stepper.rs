//! Time integration of the k-species system.
//!
//! One step for species i freezes the competitors at `uⁿ` and sets
//! `r = m_i - Σ_{j≠i} a_ij u_jⁿ`, `φ = (e^{r dt} - 1)/r`. The new state solves
//!
//! ```text
//! (diag(1/φ + a_ii uⁿ) - D_i L) uⁿ⁺¹ = uⁿ e^{r dt} / φ
//! ```
//!
//! Without diffusion this is exactly the logistic flow over `dt`; with
//! diffusion it is an M-matrix solve, so positivity is kept, and its fixed
//! points are the discrete equilibria. The system is symmetrized by
//! `D⁻¹W` (or `W` in divergence form) and solved by a tridiagonal sweep in
//! 1D and Jacobi-preconditioned CG in 2D.

use crate::discretize::{divergence_form_operator, neumann_laplacian, CsrMatrix};
use crate::error::{Error, Result};
use crate::linalg::{pcg, solve_tridiagonal};
use crate::model::{CompetitionSystem, DiffusionForm, Field, SpeciesState};

/// Threshold on `|r|` below which the series form of the exact update is used.
pub const SERIES_THRESHOLD: f64 = 1e-8;
/// A step is rejected when some node changes by more than this fraction.
pub const MAX_RELATIVE_UPDATE: f64 = 0.2;
/// Number of accepted steps before dt is doubled.
pub const GROWTH_INTERVAL: usize = 10;
const CG_TOLERANCE: f64 = 1e-15;
const CG_FALLBACK_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct StepControl {
    pub dt: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub output_times: Vec<f64>,
    pub positivity_guard: bool,
    pub t_end: f64,
    /// Halving/doubling heuristic; when false every step has size `dt`
    /// except those clipped to land on output times.
    pub adaptive: bool,
}

impl StepControl {
    /// Adaptive control with dt_min = 1e-8 dt, dt_max = dt and a single output at t_end.
    pub fn new(dt: f64, t_end: f64) -> Self {
        Self {
            dt,
            dt_min: dt * 1e-8,
            dt_max: dt,
            output_times: vec![t_end],
            positivity_guard: true,
            t_end,
            adaptive: true,
        }
    }

    /// Fixed step size.
    pub fn fixed(dt: f64, t_end: f64) -> Self {
        Self { adaptive: false, dt_min: dt, ..Self::new(dt, t_end) }
    }

    pub fn with_bounds(mut self, dt_min: f64, dt_max: f64) -> Self {
        self.dt_min = dt_min;
        self.dt_max = dt_max;
        self
    }

    pub fn with_outputs(mut self, times: Vec<f64>) -> Self {
        self.output_times = times;
        self
    }

    /// `count` equally spaced output times in `(0, t_end]`.
    pub fn with_uniform_outputs(mut self, count: usize) -> Self {
        let n = count.max(1);
        self.output_times = (1..=n).map(|i| self.t_end * i as f64 / n as f64).collect();
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.dt_min > 0.0 && self.dt_min <= self.dt && self.dt <= self.dt_max && self.dt_max.is_finite();
        if !ok {
            return Err(Error::InvalidArgument(format!(
                "step control needs 0 < dt_min <= dt <= dt_max (got {}, {}, {})",
                self.dt_min, self.dt, self.dt_max
            )));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::InvalidArgument(format!("t_end must be finite and >= 0, got {}", self.t_end)));
        }
        if self.output_times.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidArgument("output times must be finite".into()));
        }
        Ok(())
    }

    /// Sorted output times in `(t0, t_end]`, always ending at `t_end`.
    pub fn schedule(&self, t0: f64) -> Vec<f64> {
        let mut times: Vec<f64> = self
            .output_times
            .iter()
            .copied()
            .filter(|&t| t > t0 && t <= self.t_end)
            .collect();
        if self.t_end > t0 {
            times.push(self.t_end);
        }
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        times.dedup();
        times
    }
}

/// Why a run stopped.
#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Completed,
    /// Stopped early by the caller (e.g. a relaxation run that converged).
    Stopped { time: f64 },
    StepUnderflow { time: f64, dt: f64 },
    Failed { time: f64, message: String },
}

impl RunStatus {
    pub fn is_ok(&self) -> bool {
        matches!(self, RunStatus::Completed | RunStatus::Stopped { .. })
    }
}

pub(crate) struct Outcome<S> {
    pub status: RunStatus,
    pub state: S,
    pub accepted: usize,
    pub rejected: usize,
}

pub(crate) enum StepVerdict {
    Accept,
    /// Too large a change or lost positivity.
    Reject,
}

/// Drives a one-step method through the output schedule of `control`.
/// `on_step` may return true to stop after an accepted step.
pub(crate) fn run_schedule<S>(
    control: &StepControl,
    t0: f64,
    state: S,
    mut step: impl FnMut(&S, f64) -> Result<S>,
    judge: impl Fn(&S, &S) -> StepVerdict,
    mut on_output: impl FnMut(f64, &S) -> Result<()>,
    mut on_step: impl FnMut(f64, &S) -> Result<bool>,
) -> Outcome<S> {
    let outputs = control.schedule(t0);
    let mut state = state;
    let mut t = t0;
    let mut dt = control.dt;
    let mut streak = 0usize;
    let (mut accepted, mut rejected) = (0usize, 0usize);
    let fail = |status, state, _time: f64, accepted, rejected| Outcome { status, state, accepted, rejected };

    for &target in &outputs {
        loop {
            let remaining = target - t;
            let landing = dt >= remaining * (1.0 - 1e-12);
            let h = if landing { remaining } else { dt };
            let next = match step(&state, h) {
                Ok(s) => s,
                Err(e) => {
                    let status = RunStatus::Failed { time: t, message: e.to_string() };
                    return fail(status, state, t, accepted, rejected);
                }
            };
            if let StepVerdict::Reject = judge(&state, &next) {
                if control.adaptive {
                    rejected += 1;
                    streak = 0;
                    dt = h / 2.0;
                    if dt < control.dt_min {
                        return fail(RunStatus::StepUnderflow { time: t, dt }, state, t, accepted, rejected);
                    }
                    continue;
                } else if control.positivity_guard {
                    let status = RunStatus::Failed { time: t, message: "positivity lost at fixed dt".into() };
                    return fail(status, state, t, accepted, rejected);
                }
            }
            state = next;
            accepted += 1;
            t = if landing { target } else { t + h };
            if control.adaptive && !landing {
                streak += 1;
                if streak >= GROWTH_INTERVAL {
                    dt = (2.0 * dt).min(control.dt_max);
                    streak = 0;
                }
            }
            match on_step(t, &state) {
                Ok(true) => {
                    if landing {
                        if let Err(e) = on_output(t, &state) {
                            let status = RunStatus::Failed { time: t, message: e.to_string() };
                            return fail(status, state, t, accepted, rejected);
                        }
                    }
                    return Outcome { status: RunStatus::Stopped { time: t }, state, accepted, rejected };
                }
                Ok(false) => {}
                Err(e) => {
                    let status = RunStatus::Failed { time: t, message: e.to_string() };
                    return fail(status, state, t, accepted, rejected);
                }
            }
            if landing {
                if let Err(e) = on_output(t, &state) {
                    let status = RunStatus::Failed { time: t, message: e.to_string() };
                    return fail(status, state, t, accepted, rejected);
                }
                break;
            }
        }
    }
    Outcome { status: RunStatus::Completed, state, accepted, rejected }
}

/// `1/φ` and `e^{r dt}/φ` for `φ = (e^{r dt} - 1)/r`.
pub fn logistic_factors(r: f64, dt: f64) -> (f64, f64) {
    if r.abs() < SERIES_THRESHOLD {
        let inv_dt = 1.0 / dt;
        (inv_dt * (1.0 - 0.5 * r * dt), inv_dt * (1.0 + 0.5 * r * dt))
    } else {
        (r / (r * dt).exp_m1(), r / -(-r * dt).exp_m1())
    }
}

/// Exact solution of `u' = u (r - a u)` after time `dt`.
pub fn exact_logistic(u0: f64, r: f64, a: f64, dt: f64) -> f64 {
    let (inv_phi, growth) = logistic_factors(r, dt);
    u0 * growth / (inv_phi + a * u0)
}

#[derive(Debug, Clone)]
enum SpeciesOperator {
    Immobile,
    Mobile {
        /// The diffusion operator itself (`D L` or `div(d ∇)`).
        diffusion: CsrMatrix,
        /// Row scaling that symmetrizes it.
        scale: Vec<f64>,
        /// `-diag(scale) * diffusion`, symmetric positive semi-definite.
        stiffness: CsrMatrix,
        /// Tridiagonal bands of `-diag(W) * diffusion` in 1D.
        bands: Option<(Vec<f64>, Vec<f64>, Vec<f64>)>,
    },
}

/// Per-species assembled diffusion operators for one system.
#[derive(Debug, Clone)]
pub struct Operators {
    species: Vec<SpeciesOperator>,
    weights: Vec<f64>,
}

impl Operators {
    pub fn new(system: &CompetitionSystem) -> Result<Self> {
        let grid = system.grid();
        let w = grid.weights();
        let lap = neumann_laplacian(grid);
        let mut species = Vec::with_capacity(system.k());
        for i in 0..system.k() {
            if system.is_degenerate(i) {
                species.push(SpeciesOperator::Immobile);
                continue;
            }
            let d = system.d(i);
            d.require_positive(&format!("diffusion of species {}", i + 1))?;
            let neg_w: Vec<f64> = w.iter().map(|w| -w).collect();
            let (diffusion, scale, stiffness) = match system.form() {
                DiffusionForm::Laplacian => {
                    let scale: Vec<f64> = w.iter().zip(d.values()).map(|(w, d)| w / d).collect();
                    // built from W L directly so the column sums stay exactly symmetric
                    (lap.matrix.scale_rows(d.values()), scale, lap.matrix.scale_rows(&neg_w))
                }
                DiffusionForm::Divergence => {
                    let op = divergence_form_operator(d, grid)?.matrix;
                    let stiffness = op.scale_rows(&neg_w);
                    (op, w.to_vec(), stiffness)
                }
            };
            // the 1D solve does not need symmetry, so it works with weights W
            // alone and conserves sum(W u) to roundoff
            let bands = (grid.dimension() == 1).then(|| {
                let n = grid.len();
                let m = diffusion.scale_rows(&neg_w);
                let diag = m.diagonal();
                let sub = (0..n).map(|r| if r == 0 { 0.0 } else { m.get(r, r - 1) }).collect();
                let sup = (0..n).map(|r| if r + 1 == n { 0.0 } else { m.get(r, r + 1) }).collect();
                (sub, diag, sup)
            });
            species.push(SpeciesOperator::Mobile { diffusion, scale, stiffness, bands });
        }
        Ok(Self { species, weights: w.to_vec() })
    }

    /// The diffusion operator of species i, `None` for immobile species.
    pub fn diffusion(&self, i: usize) -> Option<&CsrMatrix> {
        match &self.species[i] {
            SpeciesOperator::Immobile => None,
            SpeciesOperator::Mobile { diffusion, .. } => Some(diffusion),
        }
    }

    pub fn k(&self) -> usize {
        self.species.len()
    }
}

/// Right-hand side of the PDE: `d_i Δu_i + u_i (m_i - Σ_j a_ij u_j)` per species.
pub fn rhs(system: &CompetitionSystem, ops: &Operators, state: &[&[f64]]) -> Vec<Vec<f64>> {
    let n = system.grid().len();
    (0..system.k())
        .map(|i| {
            let mut out = match ops.diffusion(i) {
                Some(l) => l.apply(state[i]),
                None => vec![0.0; n],
            };
            for (node, o) in out.iter_mut().enumerate() {
                *o += state[i][node] * system.growth_rate(i, state, node);
            }
            out
        })
        .collect()
}

/// Largest entry of `rhs` in absolute value.
pub fn rhs_sup(system: &CompetitionSystem, ops: &Operators, state: &[&[f64]]) -> f64 {
    rhs(system, ops, state)
        .iter()
        .flatten()
        .fold(0.0f64, |a, v| a.max(v.abs()))
}

fn advance_species(
    i: usize,
    u: &[&[f64]],
    dt: f64,
    system: &CompetitionSystem,
    ops: &Operators,
) -> Result<Vec<f64>> {
    let n = u[i].len();
    let aii = system.a(i, i).values();
    let mut diag_coef = vec![0.0; n];
    let mut source = vec![0.0; n];
    for node in 0..n {
        let r = system.growth_rate(i, u, node) + aii[node] * u[i][node];
        let (inv_phi, growth) = logistic_factors(r, dt);
        diag_coef[node] = inv_phi + aii[node] * u[i][node];
        source[node] = u[i][node] * growth;
    }
    let out = match &ops.species[i] {
        SpeciesOperator::Immobile => diag_coef.iter().zip(&source).map(|(c, s)| s / c).collect(),
        SpeciesOperator::Mobile { scale, stiffness, bands, .. } => {
            let row_scale = if bands.is_some() { ops.weights.as_slice() } else { scale.as_slice() };
            let shift: Vec<f64> = row_scale.iter().zip(&diag_coef).map(|(s, c)| s * c).collect();
            let b: Vec<f64> = row_scale.iter().zip(&source).map(|(s, v)| s * v).collect();
            match bands {
                Some((sub, diag, sup)) => {
                    let d: Vec<f64> = diag.iter().zip(&shift).map(|(a, b)| a + b).collect();
                    let mut x = solve_tridiagonal(sub, &d, sup, &b)?;
                    // one refinement pass keeps the mass drift at roundoff level over long runs
                    let r: Vec<f64> = (0..n)
                        .map(|j| {
                            let mut ax = d[j] * x[j];
                            if j > 0 {
                                ax += sub[j] * x[j - 1];
                            }
                            if j + 1 < n {
                                ax += sup[j] * x[j + 1];
                            }
                            b[j] - ax
                        })
                        .collect();
                    let dx = solve_tridiagonal(sub, &d, sup, &r)?;
                    for (xj, e) in x.iter_mut().zip(dx) {
                        *xj += e;
                    }
                    x
                }
                None => {
                    let mut x = u[i].to_vec();
                    // the tight tolerance keeps mass drift at roundoff; fall back if the
                    // residual stagnates above it
                    match pcg(stiffness, &shift, &b, &mut x, CG_TOLERANCE, 10 * n + 100) {
                        Err(Error::LinearSolve(_)) => {
                            pcg(stiffness, &shift, &b, &mut x, CG_FALLBACK_TOLERANCE, 10 * n + 100)?;
                        }
                        other => {
                            other?;
                        }
                    }
                    x
                }
            }
        }
    };
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("step of species {}", i + 1)));
    }
    Ok(out)
}

/// One step of size `dt`; competitors are frozen at the start of the step.
pub fn step_imex(state: &SpeciesState, dt: f64, system: &CompetitionSystem, ops: &Operators) -> Result<SpeciesState> {
    step_threaded(state, dt, system, ops, 1)
}

fn step_threaded(
    state: &SpeciesState,
    dt: f64,
    system: &CompetitionSystem,
    ops: &Operators,
    threads: usize,
) -> Result<SpeciesState> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    let u = state.slices();
    let k = system.k();
    let values: Vec<Result<Vec<f64>>> = if threads <= 1 || k == 1 {
        (0..k).map(|i| advance_species(i, &u, dt, system, ops)).collect()
    } else {
        let u = &u;
        let per = k.div_ceil(threads);
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..k)
                .collect::<Vec<_>>()
                .chunks(per)
                .map(|chunk| {
                    let chunk = chunk.to_vec();
                    scope.spawn(move || {
                        chunk.into_iter().map(|i| advance_species(i, u, dt, system, ops)).collect::<Vec<_>>()
                    })
                })
                .collect();
            handles.into_iter().flat_map(|h| h.join().expect("species worker panicked")).collect()
        })
    };
    let grid = system.grid();
    let mut fields = Vec::with_capacity(k);
    for v in values {
        fields.push(Field::new(grid, v?)?);
    }
    Ok(SpeciesState { time: state.time + dt, fields })
}

/// Positivity (when guarded) and, for adaptive runs, the relative-update limit.
fn judge_step(old: &SpeciesState, new: &SpeciesState, guard: bool, limit_update: bool) -> StepVerdict {
    for (a, b) in old.fields.iter().zip(&new.fields) {
        let floor = 1e-8 * a.max().abs();
        for (&x, &y) in a.values().iter().zip(b.values()) {
            if guard && (y < 0.0 || (x > 0.0 && y <= 0.0)) {
                return StepVerdict::Reject;
            }
            let rel = (y - x).abs() / x.abs().max(floor).max(f64::MIN_POSITIVE);
            if limit_update && rel > MAX_RELATIVE_UPDATE {
                return StepVerdict::Reject;
            }
        }
    }
    StepVerdict::Accept
}

/// A scalar quantity recorded at every output time.
pub trait Observer {
    fn name(&self) -> String;
    fn observe(&mut self, state: &SpeciesState) -> Result<f64>;
}

/// Observer built from a closure.
pub struct FnObserver<F> {
    name: String,
    f: F,
}

impl<F: FnMut(&SpeciesState) -> Result<f64>> FnObserver<F> {
    pub fn new(name: impl Into<String>, f: F) -> Self {
        Self { name: name.into(), f }
    }
}

impl<F: FnMut(&SpeciesState) -> Result<f64>> Observer for FnObserver<F> {
    fn name(&self) -> String {
        self.name.clone()
    }
    fn observe(&mut self, state: &SpeciesState) -> Result<f64> {
        (self.f)(state)
    }
}

/// Discrete L² distance (all species combined) to a reference state.
pub struct L2Distance {
    reference: SpeciesState,
    weights: Vec<f64>,
}

impl L2Distance {
    pub fn new(reference: SpeciesState, system: &CompetitionSystem) -> Self {
        Self { reference, weights: system.grid().weights().to_vec() }
    }
}

impl Observer for L2Distance {
    fn name(&self) -> String {
        "l2_distance".into()
    }
    fn observe(&mut self, state: &SpeciesState) -> Result<f64> {
        let mut s = 0.0;
        for (a, b) in state.fields.iter().zip(&self.reference.fields) {
            for ((x, y), w) in a.values().iter().zip(b.values()).zip(&self.weights) {
                s += w * (x - y).powi(2);
            }
        }
        Ok(s.sqrt())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticRow {
    pub time: f64,
    pub sup: Vec<f64>,
    pub inf: Vec<f64>,
    pub observed: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    /// Initial state followed by one snapshot per output time.
    pub snapshots: Vec<SpeciesState>,
    pub diagnostics: Vec<DiagnosticRow>,
    pub observer_names: Vec<String>,
    pub status: RunStatus,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.time).collect()
    }

    pub fn last(&self) -> &SpeciesState {
        self.snapshots.last().expect("trajectory has at least the initial snapshot")
    }

    pub fn is_complete(&self) -> bool {
        self.status == RunStatus::Completed
    }
}

fn diagnostic_row(state: &SpeciesState, observers: &mut [&mut dyn Observer]) -> Result<DiagnosticRow> {
    let observed = observers.iter_mut().map(|o| o.observe(state)).collect::<Result<Vec<_>>>()?;
    Ok(DiagnosticRow {
        time: state.time,
        sup: state.fields.iter().map(|f| f.max()).collect(),
        inf: state.fields.iter().map(|f| f.min()).collect(),
        observed,
    })
}

/// Time integrator bound to one system.
pub struct Stepper<'a> {
    system: &'a CompetitionSystem,
    ops: Operators,
    threads: usize,
}

impl<'a> Stepper<'a> {
    pub fn new(system: &'a CompetitionSystem) -> Result<Self> {
        system.ensure_valid()?;
        Ok(Self { system, ops: Operators::new(system)?, threads: 1 })
    }

    pub fn with_threads(mut self, threads: usize) -> Self {
        self.threads = threads.max(1);
        self
    }

    pub fn operators(&self) -> &Operators {
        &self.ops
    }

    pub fn step(&self, state: &SpeciesState, dt: f64) -> Result<SpeciesState> {
        step_threaded(state, dt, self.system, &self.ops, self.threads)
    }

    pub fn rhs_sup(&self, state: &SpeciesState) -> f64 {
        rhs_sup(self.system, &self.ops, &state.slices())
    }

    pub fn simulate(
        &self,
        initial: &SpeciesState,
        control: &StepControl,
        observers: &mut [&mut dyn Observer],
    ) -> Result<Trajectory> {
        self.simulate_until(initial, control, observers, |_, _| false)
    }

    /// Like [`Stepper::simulate`], stopping early after any accepted step
    /// for which `stop` returns true.
    pub fn simulate_until(
        &self,
        initial: &SpeciesState,
        control: &StepControl,
        observers: &mut [&mut dyn Observer],
        mut stop: impl FnMut(f64, &SpeciesState) -> bool,
    ) -> Result<Trajectory> {
        control.validate()?;
        initial.check_against(self.system)?;
        let observer_names = observers.iter().map(|o| o.name()).collect();
        let mut snapshots = vec![initial.clone()];
        let mut diagnostics = vec![diagnostic_row(initial, observers)?];
        let guard = control.positivity_guard;
        let outcome = run_schedule(
            control,
            initial.time,
            initial.clone(),
            |s, h| self.step(s, h),
            |a, b| judge_step(a, b, guard, control.adaptive),
            |t, s| {
                let mut snap = s.clone();
                snap.time = t;
                diagnostics.push(diagnostic_row(&snap, observers)?);
                snapshots.push(snap);
                Ok(())
            },
            |t, s| Ok(stop(t, s)),
        );
        if let RunStatus::Stopped { time } = outcome.status {
            if snapshots.last().map(|s| s.time) != Some(time) {
                let mut snap = outcome.state.clone();
                snap.time = time;
                diagnostics.push(diagnostic_row(&snap, observers)?);
                snapshots.push(snap);
            }
        }
        Ok(Trajectory {
            snapshots,
            diagnostics,
            observer_names,
            status: outcome.status,
            accepted_steps: outcome.accepted,
            rejected_steps: outcome.rejected,
        })
    }
}

/// Convenience wrapper around [`Stepper::simulate`].
pub fn simulate(
    system: &CompetitionSystem,
    initial: &SpeciesState,
    control: &StepControl,
    observers: &mut [&mut dyn Observer],
) -> Result<Trajectory> {
    Stepper::new(system)?.simulate(initial, control, observers)
}
