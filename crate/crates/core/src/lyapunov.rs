//! Weighted entropy-type Lyapunov functionals and decrease audits.
//!
//! Every functional is a sum of terms `∫ w(x) G(u_i, r_i) dx` with
//! `G(u, r) = ∫_r^u (s - r)/s ds = (u - r) - r ln(u/r)`, or linear terms
//! `∫ w(x) u_i dx` for species driven to extinction.

use crate::certify::{Betas, Variant};
use crate::discretize::neumann_laplacian;
use crate::error::{Error, Result};
use crate::model::{CompetitionSystem, Field, Grid, SpeciesState};
use crate::stepper::{Observer, Trajectory};

pub const MIN_SNAPSHOTS: usize = 20;

/// `∫_r^u (s - r)/s ds` for `u, r > 0`.
pub fn entropy_integrand(u: f64, r: f64) -> f64 {
    let y = (u - r) / r;
    if y.abs() < 1e-3 {
        // y - ln(1+y) = y²/2 - y³/3 + y⁴/4 - ...
        let mut term = y * y;
        let mut sum = 0.0;
        for n in 2..10 {
            sum += term / n as f64 * if n % 2 == 0 { 1.0 } else { -1.0 };
            term *= y;
        }
        r * sum
    } else {
        r * (y - y.ln_1p())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Term {
    /// `∫ weight · G(u_species, reference)`.
    Log { species: usize, weight: Field, reference: Field },
    /// `∫ weight · u_species`.
    Linear { species: usize, weight: Field },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FunctionalKind {
    LogisticQ,
    KSpecies,
    TwoSpecies(Variant),
    Degenerate(DegenerateCase),
    Semitrivial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DegenerateCase {
    Coexistence,
    MobileWins,
    ImmobileWins,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalSpec {
    pub kind: FunctionalKind,
    pub terms: Vec<Term>,
    /// Weight variant written out only by analogy with the fully worked one.
    pub pattern_extrapolated: bool,
    /// Species whose `∫∫ u²` is reported as the allowance.
    pub allowance_species: Vec<usize>,
}

fn check_weight(w: &Field, what: &str) -> Result<()> {
    w.require_positive(what)
}

impl FunctionalSpec {
    pub fn name(&self) -> String {
        match self.kind {
            FunctionalKind::LogisticQ => "Q".into(),
            FunctionalKind::KSpecies => "F_k".into(),
            FunctionalKind::TwoSpecies(v) => format!("F_{}", v.name()),
            FunctionalKind::Degenerate(c) => match c {
                DegenerateCase::Coexistence => "F_deg_i".into(),
                DegenerateCase::MobileWins => "F_deg_ii".into(),
                DegenerateCase::ImmobileWins => "F_deg_iii".into(),
            },
            FunctionalKind::Semitrivial => "F_semi".into(),
        }
    }

    pub fn evaluate(&self, state: &SpeciesState, grid: &Grid) -> Result<f64> {
        let mut total = 0.0;
        for term in &self.terms {
            match term {
                Term::Log { species, weight, reference } => {
                    let u = field_of(state, *species)?;
                    u.check_grid(grid)?;
                    u.require_positive("state")?;
                    let vals: Vec<f64> = (0..grid.len())
                        .map(|x| weight[x] * entropy_integrand(u[x], reference[x]))
                        .collect();
                    total += grid.integrate(&vals);
                }
                Term::Linear { species, weight } => {
                    let u = field_of(state, *species)?;
                    u.check_grid(grid)?;
                    if u.min() < 0.0 {
                        return Err(Error::NonPositive { what: "state".into(), node: 0, value: u.min() });
                    }
                    let vals: Vec<f64> = (0..grid.len()).map(|x| weight[x] * u[x]).collect();
                    total += grid.integrate(&vals);
                }
            }
        }
        Ok(total)
    }

    /// Observer view for attaching to a simulation.
    pub fn observer<'a>(&'a self, grid: &'a Grid) -> FunctionalObserver<'a> {
        FunctionalObserver { spec: self, grid }
    }
}

fn field_of(state: &SpeciesState, i: usize) -> Result<&Field> {
    state
        .fields
        .get(i)
        .ok_or(Error::DimensionMismatch { what: "species", expected: i + 1, got: state.fields.len() })
}

pub struct FunctionalObserver<'a> {
    spec: &'a FunctionalSpec,
    grid: &'a Grid,
}

impl Observer for FunctionalObserver<'_> {
    fn name(&self) -> String {
        self.spec.name()
    }
    fn observe(&mut self, state: &SpeciesState) -> Result<f64> {
        self.spec.evaluate(state, self.grid)
    }
}

/// Logistic functional with weight `θ/d`.
pub fn logistic_q(theta: &Field, d: &Field) -> Result<FunctionalSpec> {
    theta.require_positive("theta")?;
    d.require_positive("diffusion")?;
    let weight = theta.zip_map(d, |t, d| t / d)?;
    Ok(FunctionalSpec {
        kind: FunctionalKind::LogisticQ,
        terms: vec![Term::Log { species: 0, weight, reference: theta.clone() }],
        pattern_extrapolated: false,
        allowance_species: vec![],
    })
}

pub fn eval_logistic_q(state: &Field, theta: &Field, d: &Field, grid: &Grid) -> Result<f64> {
    let spec = logistic_q(theta, d)?;
    spec.evaluate(&SpeciesState { time: 0.0, fields: vec![state.clone()] }, grid)
}

/// `Σ εi ∫ ui* G(ui, ui*)`.
pub fn k_species(equilibrium: &[Field], weights: &[f64]) -> Result<FunctionalSpec> {
    if equilibrium.len() != weights.len() {
        return Err(Error::DimensionMismatch { what: "weights", expected: equilibrium.len(), got: weights.len() });
    }
    if weights.iter().any(|&w| !(w > 0.0)) {
        return Err(Error::InvalidArgument("functional weights must be positive".into()));
    }
    let terms = equilibrium
        .iter()
        .zip(weights)
        .enumerate()
        .map(|(i, (u, &e))| {
            u.require_positive("equilibrium")?;
            Ok(Term::Log { species: i, weight: u.map(|v| e * v)?, reference: u.clone() })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FunctionalSpec { kind: FunctionalKind::KSpecies, terms, pattern_extrapolated: false, allowance_species: vec![] })
}

pub fn eval_k_species_f(state: &SpeciesState, equilibrium: &[Field], weights: &[f64], grid: &Grid) -> Result<f64> {
    if state.k() != equilibrium.len() {
        return Err(Error::DimensionMismatch { what: "species", expected: equilibrium.len(), got: state.k() });
    }
    k_species(equilibrium, weights)?.evaluate(state, grid)
}

/// Two-species functional `∫ (u1*/d1) G(u1, u1*) + ξ ∫ (u2*/d2) G(u2, u2*)`.
pub fn two_species(
    system: &CompetitionSystem,
    equilibrium: &SpeciesState,
    betas: &Betas,
    variant: Variant,
) -> Result<FunctionalSpec> {
    let e = crate::certify::evaluate_variant(system, betas, variant)?;
    if !e.applicable {
        return Err(Error::NotApplicable(format!("{} proportionality hypothesis fails", variant.name())));
    }
    equilibrium.check_against(system)?;
    let (u1, u2) = (equilibrium.species(0), equilibrium.species(1));
    u1.require_positive("u1*")?;
    u2.require_positive("u2*")?;
    system.d(0).require_positive("d1")?;
    system.d(1).require_positive("d2")?;
    let w1 = u1.zip_map(system.d(0), |u, d| u / d)?;
    let w2 = u2.zip_map(system.d(1), |u, d| e.xi * u / d)?;
    Ok(FunctionalSpec {
        kind: FunctionalKind::TwoSpecies(variant),
        terms: vec![
            Term::Log { species: 0, weight: w1, reference: u1.clone() },
            Term::Log { species: 1, weight: w2, reference: u2.clone() },
        ],
        pattern_extrapolated: variant != Variant::A1,
        allowance_species: vec![],
    })
}

pub fn eval_two_species_f(
    state: &SpeciesState,
    equilibrium: &SpeciesState,
    system: &CompetitionSystem,
    betas: &Betas,
    variant: Variant,
) -> Result<f64> {
    two_species(system, equilibrium, betas, variant)?.evaluate(state, system.grid())
}

/// Functionals for two species with species 2 immobile. `reference` is the
/// coexistence state for `Coexistence`, θ of species 1 for `MobileWins`,
/// and ignored for `ImmobileWins`.
pub fn degenerate(system: &CompetitionSystem, case: DegenerateCase, reference: Option<&Field>) -> Result<FunctionalSpec> {
    if system.k() != 2 {
        return Err(Error::NotApplicable("requires k = 2".into()));
    }
    let grid = system.grid();
    let n = grid.len();
    let (d1, a12, a21, a22, m2) = (system.d(0), system.a(0, 1), system.a(1, 0), system.a(1, 1), system.m(1));
    d1.require_positive("d1")?;
    a21.require_positive("a21")?;
    let need = || reference.ok_or_else(|| Error::InvalidArgument("reference field required".into()));
    let terms = match case {
        DegenerateCase::Coexistence | DegenerateCase::MobileWins => {
            let r1 = need()?;
            r1.require_positive("reference")?;
            let w1 = r1.zip_map(d1, |u, d| u / d)?;
            let xi = Field::new(grid, (0..n).map(|x| a12[x] * r1[x] / (d1[x] * a21[x])).collect())?;
            check_weight(&xi, "xi")?;
            let first = Term::Log { species: 0, weight: w1, reference: r1.clone() };
            if case == DegenerateCase::Coexistence {
                let u2 = Field::new(grid, (0..n).map(|x| (m2[x] - a21[x] * r1[x]) / a22[x]).collect())?;
                u2.require_positive("u2*")?;
                vec![first, Term::Log { species: 1, weight: xi, reference: u2 }]
            } else {
                vec![first, Term::Linear { species: 1, weight: xi }]
            }
        }
        DegenerateCase::ImmobileWins => {
            let w1 = d1.map(|d| 1.0 / d)?;
            let xi = Field::new(grid, (0..n).map(|x| a12[x] / (d1[x] * a21[x])).collect())?;
            check_weight(&xi, "xi")?;
            let u2 = m2.zip_map(a22, |m, a| m / a)?;
            u2.require_positive("m2/a22")?;
            vec![Term::Linear { species: 0, weight: w1 }, Term::Log { species: 1, weight: xi, reference: u2 }]
        }
    };
    Ok(FunctionalSpec {
        kind: FunctionalKind::Degenerate(case),
        terms,
        pattern_extrapolated: false,
        allowance_species: vec![],
    })
}

/// `Σ_{i<i0} εi ∫ ui* G(ui, ui*)` plus optional linear terms `∫ ξj uj` on
/// the extinct species.
pub fn semitrivial(
    equilibrium_block: &[Field],
    weights: &[f64],
    k: usize,
    extinct_weights: Option<&[Field]>,
) -> Result<FunctionalSpec> {
    let i0 = equilibrium_block.len();
    if i0 == 0 || i0 >= k {
        return Err(Error::InvalidArgument(format!("survivor count must lie in 1..{k}, got {i0}")));
    }
    let mut spec = k_species(equilibrium_block, weights)?;
    if let Some(xs) = extinct_weights {
        if xs.len() != k - i0 {
            return Err(Error::DimensionMismatch { what: "extinct weights", expected: k - i0, got: xs.len() });
        }
        for (j, w) in xs.iter().enumerate() {
            check_weight(w, "xi")?;
            spec.terms.push(Term::Linear { species: i0 + j, weight: w.clone() });
        }
    }
    spec.kind = FunctionalKind::Semitrivial;
    spec.allowance_species = (i0..k).collect();
    Ok(spec)
}

pub fn eval_semitrivial_f(
    state: &SpeciesState,
    equilibrium_block: &[Field],
    weights: &[f64],
    extinct_weights: Option<&[Field]>,
    grid: &Grid,
) -> Result<f64> {
    semitrivial(equilibrium_block, weights, state.k(), extinct_weights)?.evaluate(state, grid)
}

/// Discrete diffusion contribution to the time derivative of the logistic
/// functional: `Σ w θ (u - θ)/u ((L u) - (u/θ)(L θ))`. Non-positive for
/// positive `u`, `θ`.
pub fn diffusion_dissipation(u: &Field, reference: &Field, grid: &Grid) -> Result<f64> {
    u.check_grid(grid)?;
    reference.check_grid(grid)?;
    u.require_positive("state")?;
    reference.require_positive("reference")?;
    let l = neumann_laplacian(grid);
    let lu = l.apply(u.values());
    let lr = l.apply(reference.values());
    let vals: Vec<f64> = (0..grid.len())
        .map(|x| {
            let (a, r) = (u[x], reference[x]);
            r * (a - r) / a * (lu[x] - a / r * lr[x])
        })
        .collect();
    Ok(grid.integrate(&vals))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Slack {
    pub absolute: f64,
    pub relative: f64,
}

impl Default for Slack {
    fn default() -> Self {
        Self { absolute: 1e-8, relative: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Increase {
    pub index: usize,
    pub time: f64,
    pub increase: f64,
    pub allowed: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Allowance {
    /// `∫_0^t Σ_j ∫ u_j² dx dt` at every snapshot (trapezoid in time).
    pub cumulative: Vec<f64>,
    pub finite: bool,
    /// Increment over the last quarter of the time span is at most 1% of the total.
    pub plateau: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityReport {
    pub name: String,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub flags: Vec<Increase>,
    pub allowance: Option<Allowance>,
    pub pattern_extrapolated: bool,
}

impl MonotonicityReport {
    pub fn is_monotone(&self) -> bool {
        self.flags.is_empty()
    }
}

pub fn monotonicity_report_snapshots(
    snapshots: &[SpeciesState],
    spec: &FunctionalSpec,
    grid: &Grid,
    slack: Slack,
) -> Result<MonotonicityReport> {
    if snapshots.len() < MIN_SNAPSHOTS {
        return Err(Error::InvalidArgument(format!(
            "monotonicity audit needs at least {MIN_SNAPSHOTS} snapshots, got {}",
            snapshots.len()
        )));
    }
    let times: Vec<f64> = snapshots.iter().map(|s| s.time).collect();
    let values = snapshots.iter().map(|s| spec.evaluate(s, grid)).collect::<Result<Vec<_>>>()?;
    let mut flags = Vec::new();
    for n in 1..values.len() {
        let allowed = slack.absolute + slack.relative * values[n - 1].abs();
        let inc = values[n] - values[n - 1];
        if inc > allowed {
            flags.push(Increase { index: n, time: times[n], increase: inc, allowed });
        }
    }
    let allowance = if spec.allowance_species.is_empty() {
        None
    } else {
        let sq: Vec<f64> = snapshots
            .iter()
            .map(|s| {
                spec.allowance_species
                    .iter()
                    .map(|&j| {
                        let v: Vec<f64> = s.fields[j].values().iter().map(|u| u * u).collect();
                        grid.integrate(&v)
                    })
                    .sum()
            })
            .collect();
        let mut cumulative = vec![0.0; sq.len()];
        for n in 1..sq.len() {
            cumulative[n] = cumulative[n - 1] + 0.5 * (sq[n] + sq[n - 1]) * (times[n] - times[n - 1]);
        }
        let total = *cumulative.last().unwrap();
        let t_q = times[0] + 0.75 * (times[times.len() - 1] - times[0]);
        let at_q = times
            .iter()
            .zip(&cumulative)
            .filter(|(t, _)| **t <= t_q)
            .map(|(_, c)| *c)
            .last()
            .unwrap_or(0.0);
        let finite = cumulative.iter().all(|c| c.is_finite());
        Some(Allowance { cumulative, finite, plateau: finite && total - at_q <= 1e-2 * total.max(1e-300) })
    };
    Ok(MonotonicityReport {
        name: spec.name(),
        times,
        values,
        flags,
        allowance,
        pattern_extrapolated: spec.pattern_extrapolated,
    })
}

pub fn monotonicity_report(
    trajectory: &Trajectory,
    spec: &FunctionalSpec,
    grid: &Grid,
    slack: Slack,
) -> Result<MonotonicityReport> {
    monotonicity_report_snapshots(&trajectory.snapshots, spec, grid, slack)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    fn unit() -> Grid {
        Grid::interval(1.0, 9).unwrap()
    }

    #[test]
    fn logistic_closed_forms() {
        let g = unit();
        let one = Field::constant(&g, 1.0);
        assert_eq!(eval_logistic_q(&one, &one, &one, &g).unwrap(), 0.0);
        let q = eval_logistic_q(&Field::constant(&g, 2.0), &one, &one, &g).unwrap();
        assert!((q - (1.0 - LN_2)).abs() < 1e-14);
        let q = eval_logistic_q(&Field::constant(&g, 0.5), &one, &one, &g).unwrap();
        assert!((q - (LN_2 - 0.5)).abs() < 1e-14);
    }

    #[test]
    fn integrand_series_branch_is_continuous() {
        for r in [0.3, 1.0, 7.0] {
            for y in [-1.0001e-3, -0.9999e-3, 0.9999e-3, 1.0001e-3] {
                let u = r * (1.0 + y);
                let direct = r * (y - (1.0f64 + y).ln());
                assert!((entropy_integrand(u, r) - direct).abs() < 1e-13 * r);
            }
        }
        assert_eq!(entropy_integrand(1.0, 1.0), 0.0);
    }

    #[test]
    fn k_species_matches_logistic_with_unit_diffusion() {
        let g = unit();
        let theta = Field::from_fn(&g, |p| 1.0 + 0.3 * p[0]).unwrap();
        let u = Field::from_fn(&g, |p| 0.5 + p[0]).unwrap();
        let one = Field::constant(&g, 1.0);
        let q = eval_logistic_q(&u, &theta, &one, &g).unwrap();
        let f = eval_k_species_f(&SpeciesState { time: 0.0, fields: vec![u] }, &[theta], &[1.0], &g).unwrap();
        assert!((q - f).abs() < 1e-15);
    }

    #[test]
    fn linear_tail_only() {
        let g = unit();
        let eq = vec![Field::constant(&g, 0.8), Field::constant(&g, 0.6)];
        let state = SpeciesState::constant(&g, &[0.8, 0.6, 0.25]).unwrap();
        let xi = [Field::constant(&g, 1.0)];
        let f = eval_semitrivial_f(&state, &eq, &[1.0, 2.0], Some(&xi), &g).unwrap();
        assert!((f - 0.25).abs() < 1e-15);
    }

    #[test]
    fn reversed_trajectory_flags_every_step() {
        let g = unit();
        let theta = Field::constant(&g, 1.0);
        let spec = logistic_q(&theta, &theta).unwrap();
        let snaps: Vec<SpeciesState> = (0..25)
            .map(|n| SpeciesState::constant(&g, &[1.0 + 0.1 * n as f64]).unwrap())
            .collect();
        let r = monotonicity_report_snapshots(&snaps, &spec, &g, Slack::default()).unwrap();
        assert_eq!(r.flags.len(), 24);
        assert!(monotonicity_report_snapshots(&snaps[..5], &spec, &g, Slack::default()).is_err());
    }

    #[test]
    fn dissipation_non_positive() {
        let g = Grid::interval(1.0, 33).unwrap();
        let u = Field::from_fn(&g, |p| 1.0 + 0.5 * (7.0 * p[0]).sin()).unwrap();
        let r = Field::from_fn(&g, |p| 2.0 + (3.0 * p[0]).cos()).unwrap();
        assert!(diffusion_dissipation(&u, &r, &g).unwrap() <= 1e-12);
        assert!(diffusion_dissipation(&r, &r, &g).unwrap().abs() < 1e-10);
    }
}
