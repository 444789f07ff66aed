use super::report::Condition;
use crate::error::{Error, Result};
use crate::linalg::{dense_solve, determinant, identity, mat_vec};
use crate::model::CompetitionSystem;

pub const DET_THRESHOLD: f64 = 1e-12;

/// Per-species grid minimum and maximum of the resources.
pub fn env_extrema(system: &CompetitionSystem) -> (Vec<f64>, Vec<f64>) {
    (0..system.k()).map(|i| (system.m(i).min(), system.m(i).max())).unzip()
}

/// Constant bounds `c̄ ≥ c̲` on every equilibrium and the shift matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundsCertificate {
    pub cbar: Vec<f64>,
    pub cunder: Vec<f64>,
    pub feasible: bool,
    pub det_ok: bool,
    pub ordered: bool,
    pub positive: bool,
    /// Diagonal entries `(c̄_i - c̲_i) / c̄_i`.
    pub shift: Vec<f64>,
    /// `det[A (2I - A)]`.
    pub determinant: f64,
    /// Sup-norm residual of `[[I, B], [B, I]] (c̄, c̲) = (m⁺, m⁻)`.
    pub consistency_residual: f64,
}

impl BoundsCertificate {
    /// Smallest of the positivity and ordering slacks.
    pub fn margin(&self) -> f64 {
        if !self.det_ok {
            return self.determinant.abs() - DET_THRESHOLD;
        }
        let pos = self.cbar.iter().chain(&self.cunder).copied().fold(f64::INFINITY, f64::min);
        let ord = self
            .cbar
            .iter()
            .zip(&self.cunder)
            .map(|(a, b)| a - b)
            .fold(f64::INFINITY, f64::min);
        pos.min(ord)
    }

    pub fn condition(&self, name: &str) -> Condition {
        Condition::new(name, self.feasible, self.margin())
            .with("cbar", self.cbar.clone())
            .with("cunder", self.cunder.clone())
            .with("shift", self.shift.clone())
            .with("determinant", self.determinant)
            .with("det_ok", self.det_ok)
            .with("positive", self.positive)
            .with("ordered", self.ordered)
            .with("consistency_residual", self.consistency_residual)
    }
}

pub(crate) fn check_square(a: &[Vec<f64>], what: &str) -> Result<usize> {
    let k = a.len();
    if k == 0 || a.iter().any(|r| r.len() != k) {
        return Err(Error::InvalidArgument(format!("{what} must be a non-empty square matrix")));
    }
    if a.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("{what} has non-finite entries")));
    }
    Ok(k)
}

/// Off-diagonal part `B = A - I` of a unit-diagonal matrix.
pub fn off_diagonal(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = a.len();
    (0..k).map(|i| (0..k).map(|j| if i == j { 0.0 } else { a[i][j] }).collect()).collect()
}

/// Solves `A c̄ = m⁻ + (I-B)⁻¹(m⁺-m⁻)` and `A c̲ = m⁺ - (I-B)⁻¹(m⁺-m⁻)`.
pub fn solve_bounds_f1(a: &[Vec<f64>], mminus: &[f64], mplus: &[f64]) -> Result<BoundsCertificate> {
    let k = check_square(a, "competition matrix")?;
    if mminus.len() != k || mplus.len() != k {
        return Err(Error::DimensionMismatch { what: "resource extrema", expected: k, got: mminus.len().min(mplus.len()) });
    }
    if let Some(i) = (0..k).find(|&i| (a[i][i] - 1.0).abs() > 1e-12) {
        return Err(Error::InvalidArgument(format!(
            "competition matrix must have unit diagonal (a{0}{0} = {1})",
            i + 1,
            a[i][i]
        )));
    }
    let b = off_diagonal(a);
    let eye = identity(k);
    let i_minus_b: Vec<Vec<f64>> = (0..k).map(|i| (0..k).map(|j| eye[i][j] - b[i][j]).collect()).collect();
    let det = determinant(a) * determinant(&i_minus_b);
    let nan = vec![f64::NAN; k];
    if !(det.abs() > DET_THRESHOLD) {
        return Ok(BoundsCertificate {
            cbar: nan.clone(),
            cunder: nan.clone(),
            feasible: false,
            det_ok: false,
            ordered: false,
            positive: false,
            shift: nan,
            determinant: det,
            consistency_residual: f64::NAN,
        });
    }
    let spread: Vec<f64> = mplus.iter().zip(mminus).map(|(p, m)| p - m).collect();
    let solve = |m: &[Vec<f64>], v: &[f64]| {
        dense_solve(m, v).ok_or_else(|| Error::LinearSolve("singular bound system".into()))
    };
    let w = solve(&i_minus_b, &spread)?;
    let rhs_bar: Vec<f64> = mminus.iter().zip(&w).map(|(m, w)| m + w).collect();
    let rhs_under: Vec<f64> = mplus.iter().zip(&w).map(|(m, w)| m - w).collect();
    let cbar = solve(a, &rhs_bar)?;
    let cunder = solve(a, &rhs_under)?;

    let b_under = mat_vec(&b, &cunder);
    let b_bar = mat_vec(&b, &cbar);
    let consistency_residual = (0..k)
        .map(|i| (cbar[i] + b_under[i] - mplus[i]).abs().max((cunder[i] + b_bar[i] - mminus[i]).abs()))
        .fold(0.0, f64::max);
    let positive = cbar.iter().chain(&cunder).all(|&v| v > 0.0);
    let ordered = cbar.iter().zip(&cunder).all(|(a, b)| a >= b);
    let shift = cbar.iter().zip(&cunder).map(|(a, b)| (a - b) / a).collect();
    Ok(BoundsCertificate {
        cbar,
        cunder,
        feasible: positive && ordered,
        det_ok: true,
        ordered,
        positive,
        shift,
        determinant: det,
        consistency_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_collapses() {
        let c = solve_bounds_f1(&identity(3), &[1.0; 3], &[1.0; 3]).unwrap();
        assert_eq!(c.cbar, vec![1.0; 3]);
        assert_eq!(c.cunder, vec![1.0; 3]);
        assert!(c.shift.iter().all(|&s| s == 0.0));
        assert!(c.feasible);
    }

    #[test]
    fn two_species_closed_form() {
        let (a12, a21) = (0.3, 0.6);
        let (mm, mp) = ([0.8, 0.9], [1.2, 1.1]);
        let c = solve_bounds_f1(&[vec![1.0, a12], vec![a21, 1.0]], &mm, &mp).unwrap();
        let den = 1.0 - a12 * a21;
        let bar = [(mp[0] - a12 * mm[1]) / den, (mp[1] - a21 * mm[0]) / den];
        let under = [(mm[0] - a12 * mp[1]) / den, (mm[1] - a21 * mp[0]) / den];
        for i in 0..2 {
            assert!((c.cbar[i] - bar[i]).abs() < 1e-14);
            assert!((c.cunder[i] - under[i]).abs() < 1e-14);
        }
        assert!(c.consistency_residual < 1e-14);
    }

    #[test]
    fn singular_flagged() {
        // 2I - A singular when a12 a21 = 1
        let c = solve_bounds_f1(&[vec![1.0, 1.0], vec![1.0, 1.0]], &[1.0; 2], &[1.0; 2]).unwrap();
        assert!(!c.det_ok && !c.feasible);
    }

    #[test]
    fn non_unit_diagonal_rejected() {
        assert!(solve_bounds_f1(&[vec![2.0]], &[1.0], &[1.0]).is_err());
    }
}
