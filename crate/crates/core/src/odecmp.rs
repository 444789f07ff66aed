//! Coupled upper/lower ODE comparison system
//!
//! ```text
//! ūi' = ūi (m⁺i - ūi - Σ_{j≠i} aij u̲j)
//! u̲i' = u̲i (m⁻i - u̲i - Σ_{j≠i} aij ūj)
//! ```
//!
//! stepped with the same frozen-coefficient exact logistic update as the
//! PDE reaction part, and the check that PDE extrema stay inside it.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::SpeciesState;
use crate::stepper::{exact_logistic, run_schedule, RunStatus, StepControl, StepVerdict, Trajectory, MAX_RELATIVE_UPDATE};

pub const LIMIT_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct BoundsTrajectory {
    pub times: Vec<f64>,
    pub upper: Vec<Vec<f64>>,
    pub lower: Vec<Vec<f64>>,
    /// Final `(ū, u̲)` when the vector field there is below `LIMIT_TOLERANCE`.
    pub limit: Option<(Vec<f64>, Vec<f64>)>,
    pub derivative_sup: f64,
    pub status: RunStatus,
}

impl BoundsTrajectory {
    pub fn k(&self) -> usize {
        self.upper.first().map_or(0, |v| v.len())
    }

    /// `t, upper_1..upper_k, lower_1..lower_k` rows.
    pub fn to_csv(&self) -> String {
        let k = self.k();
        let mut s = String::from("t");
        for i in 1..=k {
            let _ = write!(s, ",upper_{i}");
        }
        for i in 1..=k {
            let _ = write!(s, ",lower_{i}");
        }
        s.push('\n');
        for n in 0..self.times.len() {
            let _ = write!(s, "{:e}", self.times[n]);
            for v in self.upper[n].iter().chain(&self.lower[n]) {
                let _ = write!(s, ",{v:e}");
            }
            s.push('\n');
        }
        s
    }

    /// Linear interpolation of `(ū, u̲)` at `t`.
    pub fn at(&self, t: f64) -> Option<(Vec<f64>, Vec<f64>)> {
        let n = self.times.len();
        let (first, last) = (*self.times.first()?, *self.times.last()?);
        let eps = 1e-12 * last.abs().max(1.0);
        if t < first - eps || t > last + eps {
            return None;
        }
        let idx = self.times.partition_point(|&s| s < t).min(n - 1);
        if idx == 0 || (self.times[idx] - t).abs() <= eps {
            return Some((self.upper[idx].clone(), self.lower[idx].clone()));
        }
        let (t0, t1) = (self.times[idx - 1], self.times[idx]);
        let w = (t - t0) / (t1 - t0);
        let lerp = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x + w * (y - x)).collect::<Vec<_>>();
        Some((lerp(&self.upper[idx - 1], &self.upper[idx]), lerp(&self.lower[idx - 1], &self.lower[idx])))
    }
}

fn check_inputs(a: &[Vec<f64>], mminus: &[f64], mplus: &[f64], upper: &[f64], lower: &[f64]) -> Result<usize> {
    let k = a.len();
    if k == 0 || a.iter().any(|r| r.len() != k) {
        return Err(Error::InvalidArgument("competition matrix must be square".into()));
    }
    for (what, v) in [("m-", mminus), ("m+", mplus), ("upper", upper), ("lower", lower)] {
        if v.len() != k {
            return Err(Error::DimensionMismatch { what: "bounds vector", expected: k, got: v.len() });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(format!("{what} has non-finite entries")));
        }
    }
    if (0..k).any(|i| (a[i][i] - 1.0).abs() > 1e-12) {
        return Err(Error::InvalidArgument("competition matrix must have unit diagonal".into()));
    }
    if let Some(i) = (0..k).find(|&i| upper[i] < lower[i] || lower[i] < 0.0) {
        return Err(Error::OrderViolation(format!(
            "initial pair not ordered and non-negative for species {} ({} < {})",
            i + 1,
            upper[i],
            lower[i]
        )));
    }
    Ok(k)
}

/// Right-hand side of the comparison system.
pub fn bounds_vector_field(a: &[Vec<f64>], mminus: &[f64], mplus: &[f64], upper: &[f64], lower: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let k = a.len();
    let cross = |i: usize, v: &[f64]| (0..k).filter(|&j| j != i).map(|j| a[i][j] * v[j]).sum::<f64>();
    let du = (0..k).map(|i| upper[i] * (mplus[i] - upper[i] - cross(i, lower))).collect();
    let dl = (0..k).map(|i| lower[i] * (mminus[i] - lower[i] - cross(i, upper))).collect();
    (du, dl)
}

type Pair = (Vec<f64>, Vec<f64>);

pub fn integrate_bounds_ode(
    a: &[Vec<f64>],
    mminus: &[f64],
    mplus: &[f64],
    init: (&[f64], &[f64]),
    control: &StepControl,
) -> Result<BoundsTrajectory> {
    let k = check_inputs(a, mminus, mplus, init.0, init.1)?;
    control.validate()?;
    let cross = |i: usize, v: &[f64]| (0..k).filter(|&j| j != i).map(|j| a[i][j] * v[j]).sum::<f64>();
    let step = |s: &Pair, h: f64| -> Result<Pair> {
        let (u, l) = s;
        let nu = (0..k).map(|i| exact_logistic(u[i], mplus[i] - cross(i, l), 1.0, h)).collect();
        let nl = (0..k).map(|i| exact_logistic(l[i], mminus[i] - cross(i, u), 1.0, h)).collect();
        Ok((nu, nl))
    };
    let judge = |old: &Pair, new: &Pair| {
        let pairs = old.0.iter().zip(&new.0).chain(old.1.iter().zip(&new.1));
        let floor = 1e-8 * old.0.iter().chain(&old.1).fold(0.0f64, |m, v| m.max(v.abs()));
        for (x, y) in pairs {
            if !y.is_finite() || *y < 0.0 || (*x > 0.0 && *y <= 0.0) {
                return StepVerdict::Reject;
            }
            if (y - x).abs() / x.abs().max(floor).max(f64::MIN_POSITIVE) > MAX_RELATIVE_UPDATE {
                return StepVerdict::Reject;
            }
        }
        StepVerdict::Accept
    };
    let mut times = vec![0.0];
    let mut upper = vec![init.0.to_vec()];
    let mut lower = vec![init.1.to_vec()];
    let order_ok = |s: &Pair| (0..k).all(|i| s.0[i] >= s.1[i] - 1e-12 * s.0[i].abs().max(1.0));
    let outcome = run_schedule(
        control,
        0.0,
        (init.0.to_vec(), init.1.to_vec()),
        step,
        judge,
        |t, s: &Pair| {
            times.push(t);
            upper.push(s.0.clone());
            lower.push(s.1.clone());
            Ok(())
        },
        |t, s: &Pair| {
            if order_ok(s) {
                Ok(false)
            } else {
                Err(Error::OrderViolation(format!("upper bound fell below lower bound at t = {t}")))
            }
        },
    );
    if let RunStatus::Failed { message, .. } = &outcome.status {
        if message.contains("order") {
            return Err(Error::OrderViolation(message.clone()));
        }
    }
    let (du, dl) = bounds_vector_field(a, mminus, mplus, &outcome.state.0, &outcome.state.1);
    let derivative_sup = du.iter().chain(&dl).fold(0.0f64, |m, v| m.max(v.abs()));
    let limit = (derivative_sup < LIMIT_TOLERANCE && outcome.status.is_ok()).then(|| outcome.state.clone());
    Ok(BoundsTrajectory { times, upper, lower, limit, derivative_sup, status: outcome.status })
}

/// `(max φi, min φi)` per species.
pub fn init_from_state(state: &SpeciesState) -> (Vec<f64>, Vec<f64>) {
    (state.fields.iter().map(|f| f.max()).collect(), state.fields.iter().map(|f| f.min()).collect())
}

/// Sup residual of `[[I, B], [B, I]] (ū, u̲) = (m⁺, m⁻)`.
pub fn limit_residual(a: &[Vec<f64>], mminus: &[f64], mplus: &[f64], upper: &[f64], lower: &[f64]) -> f64 {
    let k = a.len();
    let cross = |i: usize, v: &[f64]| (0..k).filter(|&j| j != i).map(|j| a[i][j] * v[j]).sum::<f64>();
    (0..k)
        .map(|i| (upper[i] + cross(i, lower) - mplus[i]).abs().max((lower[i] + cross(i, upper) - mminus[i]).abs()))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Upper,
    Lower,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub time: f64,
    pub species: usize,
    pub side: Side,
    pub excess: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SandwichReport {
    pub checked_times: usize,
    pub violations: Vec<Violation>,
    /// Largest `min u - u̲` deficit or `max u - ū` excess (negative when strictly inside).
    pub worst_excess: f64,
}

impl SandwichReport {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn check_sandwich(pde: &Trajectory, bounds: &BoundsTrajectory, tol: f64) -> Result<SandwichReport> {
    check_sandwich_snapshots(&pde.snapshots, bounds, tol)
}

pub fn check_sandwich_snapshots(snapshots: &[SpeciesState], bounds: &BoundsTrajectory, tol: f64) -> Result<SandwichReport> {
    let mut violations = Vec::new();
    let mut worst = f64::NEG_INFINITY;
    for s in snapshots {
        let (up, lo) = bounds.at(s.time).ok_or_else(|| {
            Error::InvalidArgument(format!("time {} outside the bounds trajectory", s.time))
        })?;
        if s.k() != up.len() {
            return Err(Error::DimensionMismatch { what: "species", expected: up.len(), got: s.k() });
        }
        for (i, f) in s.fields.iter().enumerate() {
            let over = f.max() - up[i];
            let under = lo[i] - f.min();
            worst = worst.max(over).max(under);
            if over > tol {
                violations.push(Violation { time: s.time, species: i, side: Side::Upper, excess: over });
            }
            if under > tol {
                violations.push(Violation { time: s.time, species: i, side: Side::Lower, excess: under });
            }
        }
    }
    Ok(SandwichReport { checked_times: snapshots.len(), violations, worst_excess: worst })
}
