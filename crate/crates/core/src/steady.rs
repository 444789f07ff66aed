//! Non-constant equilibria: the logistic steady state θ, Newton on the
//! coupled system, monotone upper/lower iteration and long-time relaxation.
//!
//! Residual tolerances are applied to `sup |F| / max(1, max d)`, which is
//! the plain sup norm for unit diffusion and stays meaningful when d is large.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::BandedMatrix;
use crate::model::{CompetitionSystem, DiffusionForm, Field, Grid, SpeciesState};
use crate::stepper::{rhs, Operators, RunStatus, StepControl, Stepper};

pub const NEWTON_TOLERANCE: f64 = 1e-10;
pub const INNER_TOLERANCE: f64 = 1e-11;
pub const MONOTONE_TOLERANCE: f64 = 1e-10;
pub const RELAXATION_TOLERANCE: f64 = 1e-9;
pub const NEWTON_MAX_ITERATIONS: usize = 50;
pub const MAX_HALVINGS: usize = 30;
pub const GUESS_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Newton,
    Relaxation,
    Monotone,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Newton => "newton",
            Method::Relaxation => "relaxation",
            Method::Monotone => "monotone",
        }
    }
}

#[derive(Debug, Clone)]
pub struct EquilibriumResult {
    pub fields: Vec<Field>,
    pub residual_sup: f64,
    pub method: Method,
    pub iterations: usize,
    pub converged: bool,
}

impl EquilibriumResult {
    pub fn state(&self) -> SpeciesState {
        SpeciesState { time: 0.0, fields: self.fields.clone() }
    }
}

fn residual_scale(system: &CompetitionSystem) -> f64 {
    (0..system.k()).map(|i| system.d(i).max()).fold(1.0, f64::max)
}

fn sup(v: &[Vec<f64>]) -> f64 {
    v.iter().flatten().fold(0.0f64, |a, x| a.max(x.abs()))
}

fn l2(v: &[Vec<f64>]) -> f64 {
    v.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
}

/// Scaled steady residual `sup |d_i Δu_i + u_i (m_i - Σ a_ij u_j)| / max(1, max d)`.
pub fn steady_residual(system: &CompetitionSystem, state: &SpeciesState) -> Result<f64> {
    state.check_against(system)?;
    let ops = Operators::new(system)?;
    Ok(sup(&rhs(system, &ops, &state.slices())) / residual_scale(system))
}

fn jacobian(system: &CompetitionSystem, ops: &Operators, u: &[Vec<f64>]) -> Result<BandedMatrix> {
    let k = system.k();
    let n = system.grid().len();
    let node_band = match system.grid().dimension() {
        1 => 1,
        _ => system.grid().nodes_per_axis()[0],
    };
    let band = node_band * k + k - 1;
    let mut j = BandedMatrix::zeros(n * k, band, band);
    let slices: Vec<&[f64]> = u.iter().map(|v| v.as_slice()).collect();
    for i in 0..k {
        if let Some(l) = ops.diffusion(i) {
            for (r, c, v) in l.triplets() {
                j.add(r * k + i, c * k + i, v);
            }
        }
        for node in 0..n {
            let row = node * k + i;
            let aii = system.a(i, i)[node];
            j.add(row, row, system.growth_rate(i, &slices, node) - aii * u[i][node]);
            for jj in 0..k {
                if jj != i {
                    j.add(row, node * k + jj, -system.a(i, jj)[node] * u[i][node]);
                }
            }
        }
    }
    j.factor()?;
    Ok(j)
}

/// Damped Newton with residual-monotone halving; iterates must stay positive.
fn newton_core(system: &CompetitionSystem, guess: Vec<Vec<f64>>, tol: f64) -> Result<EquilibriumResult> {
    let k = system.k();
    let n = system.grid().len();
    let ops = Operators::new(system)?;
    let scale = residual_scale(system);
    let eval = |u: &Vec<Vec<f64>>| {
        let s: Vec<&[f64]> = u.iter().map(|v| v.as_slice()).collect();
        rhs(system, &ops, &s)
    };
    let mut u = guess;
    let mut f = eval(&u);
    let mut iterations = 0;
    let mut converged = sup(&f) / scale <= tol;
    while !converged && iterations < NEWTON_MAX_ITERATIONS {
        iterations += 1;
        let jac = match jacobian(system, &ops, &u) {
            Ok(j) => j,
            Err(_) => break,
        };
        let mut rhs_vec = vec![0.0; n * k];
        for i in 0..k {
            for node in 0..n {
                rhs_vec[node * k + i] = -f[i][node];
            }
        }
        let delta = match jac.solve(&rhs_vec) {
            Ok(d) => d,
            Err(_) => break,
        };
        let base = l2(&f);
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let trial: Vec<Vec<f64>> = (0..k)
                .map(|i| (0..n).map(|node| u[i][node] + lambda * delta[node * k + i]).collect())
                .collect();
            if trial.iter().flatten().all(|&v| v > 0.0 && v.is_finite()) {
                let ft = eval(&trial);
                if l2(&ft) < base {
                    u = trial;
                    f = ft;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
        converged = sup(&f) / scale <= tol;
    }
    let residual_sup = sup(&f) / scale;
    let grid = system.grid();
    let fields = u.into_iter().map(|v| Field::new(grid, v)).collect::<Result<Vec<_>>>()?;
    Ok(EquilibriumResult { fields, residual_sup, method: Method::Newton, iterations, converged })
}

/// Newton's method for the coupled elliptic system from a positive guess.
pub fn newton_equilibrium(system: &CompetitionSystem, initial_guess: &SpeciesState) -> Result<EquilibriumResult> {
    newton_equilibrium_with_tolerance(system, initial_guess, NEWTON_TOLERANCE)
}

pub fn newton_equilibrium_with_tolerance(
    system: &CompetitionSystem,
    initial_guess: &SpeciesState,
    tol: f64,
) -> Result<EquilibriumResult> {
    system.ensure_valid()?;
    if system.has_degenerate_species() {
        return Err(Error::NotApplicable(
            "Newton requires every species to diffuse; use degenerate_equilibrium".into(),
        ));
    }
    initial_guess.check_against(system)?;
    for (i, f) in initial_guess.fields.iter().enumerate() {
        f.require_positive(&format!("initial guess for species {}", i + 1))?;
    }
    let guess = initial_guess.fields.iter().map(|f| f.values().to_vec()).collect();
    newton_core(system, guess, tol)
}

/// Default Newton guess `max(m_i / a_ii, 1e-3)`.
pub fn default_guess(system: &CompetitionSystem) -> Result<SpeciesState> {
    let fields = (0..system.k())
        .map(|i| system.m(i).zip_map(system.a(i, i), |m, a| (m / a).max(GUESS_FLOOR)))
        .collect::<Result<Vec<_>>>()?;
    SpeciesState::new(0.0, fields)
}

/// Result of a logistic steady-state solve.
#[derive(Debug, Clone)]
pub struct ThetaSolution {
    pub theta: Field,
    pub residual_sup: f64,
    pub iterations: usize,
    pub method: Method,
}

/// Whether `∫ m/d ≥ 0` and `m ≢ 0`, which guarantees a positive steady state.
pub fn theta_exists(d: &Field, m: &Field, grid: &Grid) -> bool {
    let ratio: Vec<f64> = m.values().iter().zip(d.values()).map(|(m, d)| m / d).collect();
    let abs: Vec<f64> = ratio.iter().map(|v| v.abs()).collect();
    let total = grid.integrate(&ratio);
    m.values().iter().any(|&v| v != 0.0) && total >= -1e-14 * grid.integrate(&abs)
}

/// θ solving `d Δθ + θ (m - φ θ) = 0` with Neumann conditions.
pub fn solve_logistic_theta(d: &Field, m: &Field, phi: &Field, grid: &Grid) -> Result<Field> {
    Ok(solve_logistic_theta_with(d, m, phi, grid, DiffusionForm::Laplacian, NEWTON_TOLERANCE)?.theta)
}

pub fn solve_logistic_theta_with(
    d: &Field,
    m: &Field,
    phi: &Field,
    grid: &Grid,
    form: DiffusionForm,
    tol: f64,
) -> Result<ThetaSolution> {
    for f in [d, m, phi] {
        f.check_grid(grid)?;
    }
    d.require_positive("diffusion")?;
    phi.require_positive("phi")?;
    if !theta_exists(d, m, grid) {
        return Err(Error::NoPositiveSteadyState(
            "requires integral of m/d >= 0 and m not identically zero".into(),
        ));
    }
    let system = CompetitionSystem::new(grid.clone(), vec![d.clone()], vec![m.clone()], vec![vec![phi.clone()]])?
        .with_form(form);
    let guess: Vec<f64> = m.values().iter().zip(phi.values()).map(|(m, p)| (m / p).max(GUESS_FLOOR)).collect();
    let newton = newton_core(&system, vec![guess], tol)?;
    let nontrivial = |r: &EquilibriumResult| r.fields[0].max() > 1e-8;
    if newton.converged && nontrivial(&newton) {
        return Ok(ThetaSolution {
            theta: newton.fields[0].clone(),
            residual_sup: newton.residual_sup,
            iterations: newton.iterations,
            method: Method::Newton,
        });
    }
    // fallback: relax from the guess, then polish with Newton
    let start = SpeciesState::new(0.0, vec![Field::new(grid, vec![1.0f64.max(m.max() / phi.min()); grid.len()])?])?;
    let relaxed = equilibrium_via_relaxation_with(&system, 1e4, &start, 1e-6)?;
    let polished = newton_core(&system, vec![relaxed.fields[0].values().to_vec()], tol)?;
    if polished.converged && nontrivial(&polished) {
        return Ok(ThetaSolution {
            theta: polished.fields[0].clone(),
            residual_sup: polished.residual_sup,
            iterations: newton.iterations + relaxed.iterations + polished.iterations,
            method: Method::Relaxation,
        });
    }
    Err(Error::NonConvergence {
        method: "logistic steady state",
        iterations: newton.iterations + relaxed.iterations + polished.iterations,
        residual: polished.residual_sup.min(newton.residual_sup),
    })
}

/// θ of `d Δθ + θ (m - φ θ) = 0` or the zero field when no positive solution exists.
fn theta_or_zero(d: &Field, m: &Field, phi: &Field, grid: &Grid, form: DiffusionForm) -> Result<Field> {
    if !theta_exists(d, m, grid) {
        return Ok(Field::zeros(grid));
    }
    Ok(solve_logistic_theta_with(d, m, phi, grid, form, INNER_TOLERANCE)?.theta)
}

#[derive(Debug, Clone)]
pub struct MonotoneResult {
    pub upper: Vec<Field>,
    pub lower: Vec<Field>,
    pub iterations: usize,
    pub last_change: f64,
    pub converged: bool,
}

impl MonotoneResult {
    /// Largest gap between the two limits.
    pub fn gap(&self) -> f64 {
        self.upper.iter().zip(&self.lower).map(|(a, b)| a.sup_distance(b)).fold(0.0, f64::max)
    }

    pub fn as_equilibrium(&self, system: &CompetitionSystem) -> Result<EquilibriumResult> {
        let fields = self
            .upper
            .iter()
            .zip(&self.lower)
            .map(|(a, b)| a.zip_map(b, |x, y| 0.5 * (x + y)))
            .collect::<Result<Vec<_>>>()?;
        let state = SpeciesState { time: 0.0, fields };
        let residual_sup = steady_residual(system, &state)?;
        Ok(EquilibriumResult {
            fields: state.fields,
            residual_sup,
            method: Method::Monotone,
            iterations: self.iterations,
            converged: self.converged,
        })
    }
}

const ORDER_SLACK: f64 = 1e-9;
const MONOTONE_MAX_ITERATIONS: usize = 2000;

/// Competition-structure upper/lower sweep: each upper iterate sees the
/// competitors' lower iterates and vice versa.
pub fn monotone_iteration(
    system: &CompetitionSystem,
    upper: &SpeciesState,
    lower: &SpeciesState,
) -> Result<MonotoneResult> {
    system.ensure_valid()?;
    if system.has_degenerate_species() {
        return Err(Error::NotApplicable("monotone iteration requires every species to diffuse".into()));
    }
    upper.check_against(system)?;
    lower.check_against(system)?;
    let k = system.k();
    let grid = system.grid();
    let check_order = |up: &[Field], lo: &[Field], stage: &str| -> Result<()> {
        for i in 0..k {
            for node in 0..grid.len() {
                if up[i][node] < lo[i][node] - ORDER_SLACK {
                    return Err(Error::OrderViolation(format!(
                        "{stage}: species {} upper {} < lower {} at node {node}",
                        i + 1,
                        up[i][node],
                        lo[i][node]
                    )));
                }
            }
        }
        Ok(())
    };
    check_order(&upper.fields, &lower.fields, "input")?;
    let mut up = upper.fields.clone();
    let mut lo = lower.fields.clone();
    let mut change = f64::INFINITY;
    for iteration in 1..=MONOTONE_MAX_ITERATIONS {
        let effective = |i: usize, others: &[Field]| -> Result<Field> {
            let values = (0..grid.len())
                .map(|node| {
                    let mut r = system.m(i)[node];
                    for j in (0..k).filter(|&j| j != i) {
                        r -= system.a(i, j)[node] * others[j][node];
                    }
                    r
                })
                .collect();
            Field::new(grid, values)
        };
        let mut new_up = Vec::with_capacity(k);
        let mut new_lo = Vec::with_capacity(k);
        for i in 0..k {
            let aii = system.a(i, i);
            new_up.push(theta_or_zero(system.d(i), &effective(i, &lo)?, aii, grid, system.form())?);
            new_lo.push(theta_or_zero(system.d(i), &effective(i, &up)?, aii, grid, system.form())?);
        }
        check_order(&new_up, &new_lo, &format!("iteration {iteration}"))?;
        change = new_up
            .iter()
            .zip(&up)
            .chain(new_lo.iter().zip(&lo))
            .map(|(a, b)| a.sup_distance(b))
            .fold(0.0, f64::max);
        up = new_up;
        lo = new_lo;
        if change <= MONOTONE_TOLERANCE {
            return Ok(MonotoneResult { upper: up, lower: lo, iterations: iteration, last_change: change, converged: true });
        }
    }
    Ok(MonotoneResult {
        upper: up,
        lower: lo,
        iterations: MONOTONE_MAX_ITERATIONS,
        last_change: change,
        converged: false,
    })
}

/// Runs the time stepper until the scaled PDE right-hand side drops below
/// 1e-9 or `t_max` is reached.
pub fn equilibrium_via_relaxation(
    system: &CompetitionSystem,
    t_max: f64,
    initial: &SpeciesState,
) -> Result<EquilibriumResult> {
    equilibrium_via_relaxation_with(system, t_max, initial, RELAXATION_TOLERANCE)
}

pub fn equilibrium_via_relaxation_with(
    system: &CompetitionSystem,
    t_max: f64,
    initial: &SpeciesState,
    tol: f64,
) -> Result<EquilibriumResult> {
    let stepper = Stepper::new(system)?;
    let scale = residual_scale(system);
    let control = StepControl::new(1e-2, t_max).with_bounds(1e-12, 0.5);
    let traj = stepper.simulate_until(initial, &control, &mut [], |_, s| stepper.rhs_sup(s) / scale <= tol)?;
    if let RunStatus::Failed { message, .. } = &traj.status {
        return Err(Error::LinearSolve(format!("relaxation step failed: {message}")));
    }
    let last = traj.last().clone();
    let residual_sup = stepper.rhs_sup(&last) / scale;
    Ok(EquilibriumResult {
        fields: last.fields,
        residual_sup,
        method: Method::Relaxation,
        iterations: traj.accepted_steps,
        converged: residual_sup <= tol,
    })
}

/// Seeded random initial state, nodewise uniform in `[lo, hi]`.
pub fn random_positive_state(grid: &Grid, k: usize, seed: u64, lo: f64, hi: f64) -> Result<SpeciesState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fields = (0..k)
        .map(|_| Field::new(grid, (0..grid.len()).map(|_| rng.gen_range(lo..hi)).collect()))
        .collect::<Result<Vec<_>>>()?;
    SpeciesState::new(0.0, fields)
}

#[derive(Debug, Clone)]
pub struct MultiStartReport {
    pub seeds: Vec<u64>,
    pub results: Vec<EquilibriumResult>,
    /// Largest sup-norm distance between any two final states.
    pub max_pairwise_distance: f64,
}

/// Relaxation from several seeded random states; agreement of the limits
/// is evidence of uniqueness.
pub fn multistart_relaxation(system: &CompetitionSystem, t_max: f64, seeds: &[u64]) -> Result<MultiStartReport> {
    let mut results = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let init = random_positive_state(system.grid(), system.k(), seed, 0.1, 2.0)?;
        results.push(equilibrium_via_relaxation(system, t_max, &init)?);
    }
    let mut max_pairwise_distance: f64 = 0.0;
    for a in 0..results.len() {
        for b in a + 1..results.len() {
            max_pairwise_distance = max_pairwise_distance.max(results[a].state().sup_distance(&results[b].state()));
        }
    }
    Ok(MultiStartReport { seeds: seeds.to_vec(), results, max_pairwise_distance })
}

/// Equilibrium with the listed species positive and all others pinned to 0,
/// computed by Newton on the surviving block.
pub fn semitrivial_equilibrium(
    system: &CompetitionSystem,
    survivors: &[usize],
) -> Result<EquilibriumResult> {
    let block = system.sub_system(survivors)?;
    let guess = default_guess(&block)?;
    let mut res = newton_equilibrium(&block, &guess)?;
    let grid = system.grid();
    let mut fields = vec![Field::zeros(grid); system.k()];
    for (slot, f) in survivors.iter().zip(res.fields.drain(..)) {
        fields[*slot] = f;
    }
    res.fields = fields;
    Ok(res)
}

/// Two species with species 2 immobile: species 1 solves the reduced
/// logistic problem with `m = m1 - a12 m2 / a22`, `φ = a11 - a12 a21 / a22`
/// and species 2 sits at `(m2 - a21 u1) / a22`.
pub fn degenerate_equilibrium(system: &CompetitionSystem) -> Result<EquilibriumResult> {
    system.ensure_valid()?;
    if system.k() != 2 || !system.is_degenerate(1) || system.is_degenerate(0) {
        return Err(Error::NotApplicable("requires k = 2 with only species 2 immobile".into()));
    }
    let grid = system.grid();
    let n = grid.len();
    let (a11, a12, a21, a22) = (system.a(0, 0), system.a(0, 1), system.a(1, 0), system.a(1, 1));
    let (m1, m2) = (system.m(0), system.m(1));
    let m_red = Field::new(grid, (0..n).map(|x| m1[x] - a12[x] * m2[x] / a22[x]).collect())?;
    let phi = Field::new(grid, (0..n).map(|x| a11[x] - a12[x] * a21[x] / a22[x]).collect())?;
    if phi.min() <= 0.0 {
        return Err(Error::NotApplicable("a12 a21 < a11 a22 fails somewhere".into()));
    }
    let sol = solve_logistic_theta_with(system.d(0), &m_red, &phi, grid, system.form(), NEWTON_TOLERANCE)?;
    let u1 = sol.theta;
    let u2 = Field::new(grid, (0..n).map(|x| (m2[x] - a21[x] * u1[x]) / a22[x]).collect())?;
    if u2.min() <= 0.0 {
        return Err(Error::NoPositiveSteadyState(format!(
            "immobile species would be non-positive (min {})",
            u2.min()
        )));
    }
    let state = SpeciesState::new(0.0, vec![u1, u2])?;
    let residual_sup = steady_residual(system, &state)?;
    Ok(EquilibriumResult {
        fields: state.fields,
        residual_sup,
        method: Method::Newton,
        iterations: sol.iterations,
        converged: residual_sup <= 10.0 * NEWTON_TOLERANCE,
    })
}
