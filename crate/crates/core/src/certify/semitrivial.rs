use super::bounds::{env_extrema, off_diagonal, solve_bounds_f1, BoundsCertificate};
use super::diagonal::{check_49a, check_f2, check_f3, shifted_search};
use super::report::{Condition, ConditionReport};
use crate::error::{Error, Result};
use crate::linalg::dense_solve;
use crate::model::{CompetitionSystem, Field, Grid};
use crate::steady::solve_logistic_theta;

fn constant_normalized(system: &CompetitionSystem) -> Result<Vec<Vec<f64>>> {
    let a = system
        .constant_matrix()
        .ok_or_else(|| Error::NotApplicable("requires spatially constant competition coefficients".into()))?;
    if (0..a.len()).any(|i| (a[i][i] - 1.0).abs() > 1e-12) {
        return Err(Error::NotApplicable("requires unit diagonal competition".into()));
    }
    Ok(a)
}

/// Extinction slacks for species `i0..k` (0-based): for each, the pair
/// `(m⁺i - Σ_{j<i0} aij c̲j, m⁻i - Σ_{j<i0} aij c̄j)`; both must be negative.
pub fn extinction_margins(
    a: &[Vec<f64>],
    mminus: &[f64],
    mplus: &[f64],
    cbar: &[f64],
    cunder: &[f64],
    i0: usize,
) -> Vec<(f64, f64)> {
    (i0..a.len())
        .map(|i| {
            let lo: f64 = (0..i0).map(|j| a[i][j] * cunder[j]).sum();
            let hi: f64 = (0..i0).map(|j| a[i][j] * cbar[j]).sum();
            (mplus[i] - lo, mminus[i] - hi)
        })
        .collect()
}

/// Conditions for extinction of species `i0+1..k` (1-based) and stability
/// of the surviving block. `i0` counts survivors.
pub fn check_semitrivial_g(system: &CompetitionSystem, i0: usize) -> Result<ConditionReport> {
    let k = system.k();
    if i0 == 0 || i0 >= k {
        return Err(Error::InvalidArgument(format!("survivor count must lie in 1..{k}, got {i0}")));
    }
    let a = constant_normalized(system)?;
    let (mminus, mplus) = env_extrema(system);
    let block: Vec<Vec<f64>> = a[..i0].iter().map(|r| r[..i0].to_vec()).collect();
    let bounds = solve_bounds_f1(&block, &mminus[..i0], &mplus[..i0])?;
    let mut report = ConditionReport::new();

    let g1_bounds = bounds.condition("G1_bounds");
    let yy = if bounds.feasible {
        let pairs = extinction_margins(&a, &mminus, &mplus, &bounds.cbar, &bounds.cunder, i0);
        let worst = pairs.iter().map(|p| p.0.max(p.1)).fold(f64::NEG_INFINITY, f64::max);
        Condition::new("yy", worst < 0.0, -worst)
            .with("upper_slack", pairs.iter().map(|p| p.0).collect::<Vec<_>>())
            .with("lower_slack", pairs.iter().map(|p| p.1).collect::<Vec<_>>())
    } else {
        Condition::new("yy", false, f64::NAN).note("survivor bounds infeasible")
    };
    let g1 = Condition::new("G1", g1_bounds.holds && yy.holds, g1_bounds.margin.min(yy.margin));
    report.push(g1);
    report.push(g1_bounds);
    report.push(yy);

    let b_block = off_diagonal(&block);
    let (g2, _) = check_f3(&b_block, &bounds, "G2")?;
    report.push(g2);

    let b = off_diagonal(&a);
    let (c49, _) = check_49a(&b)?;
    let global = if c49.holds {
        Condition::new("G_global", true, c49.margin).with("via", "4.9a")
    } else {
        let f2 = check_f2(&b)?;
        Condition::new("G_global", f2.holds, f2.margin).with("via", "F2")
    };
    report.push(global);
    Ok(report)
}

/// `n` log-spaced diffusion rates on `[1e-3, 1e3]`.
pub fn default_d_samples(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n).map(|i| 10f64.powf(-3.0 + 6.0 * i as f64 / (n - 1) as f64)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LsSample {
    pub d: f64,
    /// `m̄2 / θ̄_{d,m1,1}`.
    pub ratio1: f64,
    /// `sup m2 / θ_{d,m1,1}`.
    pub sup1: f64,
    pub ratio2: f64,
    pub sup2: f64,
}

/// Sampled estimates of the infimum/supremum quantities. `L̂ ≥ L` and
/// `Ŝ ≤ S` because only finitely many diffusion rates are visited.
#[derive(Debug, Clone, PartialEq)]
pub struct LsEstimate {
    pub l1: f64,
    pub s1: f64,
    pub l2: f64,
    pub s2: f64,
    pub samples: Vec<LsSample>,
    pub skipped: Vec<(f64, String)>,
    pub grid_approximation: bool,
}

impl LsEstimate {
    pub fn condition(&self, a12: f64, a21: f64) -> Condition {
        let margin = (self.l1 - a21).min(self.l2 - a12);
        Condition::new("LS", margin > 0.0, margin)
            .with("L1", self.l1)
            .with("S1", self.s1)
            .with("L2", self.l2)
            .with("S2", self.s2)
            .with("samples", self.samples.len() as f64)
            .with("skipped", self.skipped.len() as f64)
            .with("grid_approximation", self.grid_approximation)
            .note("L estimates are biased upward and S estimates downward by the finite d sweep")
    }
}

fn ratios(d: f64, own: &Field, other: &Field, grid: &Grid) -> Result<(f64, f64)> {
    let theta = solve_logistic_theta(&Field::constant(grid, d), own, &Field::constant(grid, 1.0), grid)?;
    let ratio = grid.mean(other.values()) / grid.mean(theta.values());
    let sup = other.values().iter().zip(theta.values()).map(|(m, t)| m / t).fold(f64::NEG_INFINITY, f64::max);
    Ok((ratio, sup))
}

pub fn estimate_ls(d_samples: &[f64], m1: &Field, m2: &Field, grid: &Grid) -> Result<LsEstimate> {
    if d_samples.is_empty() || d_samples.iter().any(|&d| !(d > 0.0) || !d.is_finite()) {
        return Err(Error::InvalidArgument("diffusion samples must be positive and non-empty".into()));
    }
    m1.check_grid(grid)?;
    m2.check_grid(grid)?;
    m1.require_positive("m1")?;
    m2.require_positive("m2")?;
    let results: Vec<(f64, Result<LsSample>)> = std::thread::scope(|s| {
        let handles: Vec<_> = d_samples
            .iter()
            .map(|&d| {
                s.spawn(move || {
                    let (ratio1, sup1) = ratios(d, m1, m2, grid)?;
                    let (ratio2, sup2) = ratios(d, m2, m1, grid)?;
                    Ok(LsSample { d, ratio1, sup1, ratio2, sup2 })
                })
            })
            .collect();
        d_samples.iter().copied().zip(handles.into_iter().map(|h| h.join().expect("theta worker panicked"))).collect()
    });
    let mut samples = Vec::new();
    let mut skipped = Vec::new();
    for (d, r) in results {
        match r {
            Ok(s) => samples.push(s),
            Err(e) => skipped.push((d, e.to_string())),
        }
    }
    if samples.is_empty() {
        return Err(Error::NonConvergence { method: "logistic steady state sweep", iterations: d_samples.len(), residual: f64::NAN });
    }
    let min = |f: fn(&LsSample) -> f64| samples.iter().map(f).fold(f64::INFINITY, f64::min);
    let max = |f: fn(&LsSample) -> f64| samples.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
    Ok(LsEstimate {
        l1: min(|s| s.ratio1),
        s1: max(|s| s.sup1),
        l2: min(|s| s.ratio2),
        s2: max(|s| s.sup2),
        samples,
        skipped,
        grid_approximation: true,
    })
}

/// Perturbation criterion for `mi = 1 + ε fi`, `|fi| ≤ 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Corollary48 {
    pub symmetric: bool,
    pub diagonally_dominant: bool,
    pub base: Vec<f64>,
    pub base_positive: bool,
    /// Largest ε (bisection, up to `eps_cap`) at which the bounds and the
    /// shifted diagonal condition both hold.
    pub eps0: f64,
}

fn perturbed_ok(a: &[Vec<f64>], b: &[Vec<f64>], eps: f64) -> Result<bool> {
    let k = a.len();
    let bounds = solve_bounds_f1(a, &vec![1.0 - eps; k], &vec![1.0 + eps; k])?;
    if !bounds.feasible {
        return Ok(false);
    }
    Ok(shifted_search(b, &bounds.shift)?.feasible)
}

pub fn check_corollary48(a: &[Vec<f64>], eps_cap: f64) -> Result<(Condition, Corollary48)> {
    let k = super::bounds::check_square(a, "competition matrix")?;
    let symmetric = (0..k).all(|i| (0..k).all(|j| (a[i][j] - a[j][i]).abs() <= 1e-14));
    let diagonally_dominant =
        (0..k).all(|i| a[i][i] > (0..k).filter(|&j| j != i).map(|j| a[i][j].abs()).sum::<f64>());
    let base = dense_solve(a, &vec![1.0; k]).ok_or_else(|| Error::LinearSolve("singular competition matrix".into()))?;
    let base_positive = base.iter().all(|&v| v > 0.0);
    let b = off_diagonal(a);
    let mut eps0 = 0.0;
    if symmetric && diagonally_dominant && base_positive && (0..k).all(|i| (a[i][i] - 1.0).abs() <= 1e-12) {
        if perturbed_ok(a, &b, eps_cap)? {
            eps0 = eps_cap;
        } else {
            let (mut lo, mut hi) = (0.0, eps_cap);
            for _ in 0..50 {
                let mid = 0.5 * (lo + hi);
                if perturbed_ok(a, &b, mid)? {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            eps0 = lo;
        }
    }
    let holds = symmetric && diagonally_dominant && base_positive && eps0 > 0.0;
    let c = Condition::new("COR48", holds, eps0)
        .with("symmetric", symmetric)
        .with("diagonally_dominant", diagonally_dominant)
        .with("base", base.clone())
        .with("eps0", eps0)
        .note("eps0 located by bisection; assumes the feasible set is an interval");
    Ok((c, Corollary48 { symmetric, diagonally_dominant, base, base_positive, eps0 }))
}

/// `A⁻¹v ± ε (I - B)⁻¹ v` for unit resources.
pub fn perturbation_bounds(a: &[Vec<f64>], eps: f64) -> Result<BoundsCertificate> {
    let k = a.len();
    solve_bounds_f1(a, &vec![1.0 - eps; k], &vec![1.0 + eps; k])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::identity;

    fn example() -> Vec<Vec<f64>> {
        vec![
            vec![1.0, 0.2, 0.1, 0.1],
            vec![0.2, 1.0, 0.2, 0.15],
            vec![0.1, 0.2, 1.0, 0.1],
            vec![0.1, 0.15, 0.1, 1.0],
        ]
    }

    #[test]
    fn extinction_arithmetic() {
        let a = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![1.0, 1.0, 1.0]];
        let m = extinction_margins(&a, &[0.0, 0.0, 0.25], &[0.0, 0.0, 0.3], &[0.6, 0.6], &[0.5, 0.5], 2);
        assert!((m[0].0 + 0.7).abs() < 1e-15);
        assert!((m[0].1 + 0.95).abs() < 1e-15);
    }

    #[test]
    fn identity_block_constant_resources() {
        let g = Grid::interval(1.0, 9).unwrap();
        let a = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![1.0, 1.0, 1.0]];
        let s = CompetitionSystem::constant(g, &[1.0; 3], &[1.0, 1.0, 0.3], &a).unwrap();
        let r = check_semitrivial_g(&s, 2).unwrap();
        assert!(r.holds("G1").unwrap());
        let g2 = r.get("G2").unwrap();
        assert!(g2.holds);
        assert!(g2.vector("shift").unwrap().iter().all(|&c| c == 0.0));
        assert!(g2.vector("q").unwrap().iter().all(|&q| (q - 1.0).abs() < 1e-12));
    }

    #[test]
    fn strong_invader_fails_yy() {
        let g = Grid::interval(1.0, 9).unwrap();
        let a = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.5, 0.5, 1.0]];
        let s = CompetitionSystem::constant(g, &[1.0; 3], &[1.0, 1.0, 3.0], &a).unwrap();
        let r = check_semitrivial_g(&s, 2).unwrap();
        assert!(!r.holds("yy").unwrap());
        assert!(!r.holds("G1").unwrap());
    }

    #[test]
    fn bad_survivor_count() {
        let g = Grid::interval(1.0, 9).unwrap();
        let s = CompetitionSystem::constant(g, &[1.0; 2], &[1.0; 2], &identity(2)).unwrap();
        assert!(check_semitrivial_g(&s, 2).is_err());
        assert!(check_semitrivial_g(&s, 0).is_err());
    }

    #[test]
    fn constant_resources_give_constant_ls() {
        let g = Grid::interval(1.0, 17).unwrap();
        let m1 = Field::constant(&g, 2.0);
        let m2 = Field::constant(&g, 1.0);
        let est = estimate_ls(&default_d_samples(4), &m1, &m2, &g).unwrap();
        for s in &est.samples {
            assert!((s.ratio1 - 0.5).abs() < 1e-10);
            assert!((s.ratio2 - 2.0).abs() < 1e-10);
        }
        assert!(est.grid_approximation);
    }

    #[test]
    fn single_sample_sweep() {
        let g = Grid::interval(1.0, 17).unwrap();
        let m1 = Field::from_fn(&g, |p| 1.0 + 0.5 * (std::f64::consts::PI * p[0]).cos()).unwrap();
        let m2 = Field::constant(&g, 1.0);
        let est = estimate_ls(&[0.7], &m1, &m2, &g).unwrap();
        assert_eq!(est.samples.len(), 1);
        assert_eq!(est.l1, est.samples[0].ratio1);
        assert_eq!(est.s1, est.samples[0].sup1);
    }

    #[test]
    fn example_matrix_perturbation() {
        let (c, cor) = check_corollary48(&example(), 1.0).unwrap();
        assert!(c.holds);
        assert!(cor.eps0 >= 0.1, "{}", cor.eps0);
        let b = perturbation_bounds(&example(), 0.1).unwrap();
        let w = dense_solve(&vec![vec![1.0, -0.2, -0.1, -0.1], vec![-0.2, 1.0, -0.2, -0.15], vec![-0.1, -0.2, 1.0, -0.1], vec![-0.1, -0.15, -0.1, 1.0]], &[1.0; 4]).unwrap();
        for i in 0..4 {
            assert!((b.cbar[i] - b.cunder[i] - 0.2 * w[i]).abs() < 1e-14);
        }
    }
}
