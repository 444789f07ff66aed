use super::report::{Condition, ConditionReport};
use crate::error::{Error, Result};
use crate::linalg::dense_solve;
use crate::model::{CompetitionSystem, Field, Grid, SpeciesState};
use crate::steady::solve_logistic_theta_with;

const PROPORTIONAL_TOLERANCE: f64 = 1e-10;

/// The four sufficient conditions for two-species global stability.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    A1,
    A2,
    A3,
    A4,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::A1, Variant::A2, Variant::A3, Variant::A4];

    pub fn name(self) -> &'static str {
        match self {
            Variant::A1 => "A1",
            Variant::A2 => "A2",
            Variant::A3 => "A3",
            Variant::A4 => "A4",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.name().eq_ignore_ascii_case(s))
    }
}

/// Ratio bounds `β1 ≤ u1 d2 / (u2 d1) ≤ β2` and `β̃1 ≤ u1 / u2 ≤ β̃2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Betas {
    pub beta1: f64,
    pub beta2: f64,
    pub beta_t1: f64,
    pub beta_t2: f64,
}

/// Box `u̲i ≤ ui* ≤ ūi` on the two-species equilibrium.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Box37 {
    pub u1_upper: f64,
    pub u1_lower: f64,
    pub u2_upper: f64,
    pub u2_lower: f64,
}

pub enum BetaSource<'a> {
    Equilibrium(&'a SpeciesState),
    Box(&'a Box37),
}

fn require_pair(system: &CompetitionSystem) -> Result<()> {
    if system.k() != 2 {
        return Err(Error::NotApplicable(format!("requires k = 2, got k = {}", system.k())));
    }
    Ok(())
}

fn extrema(v: impl Iterator<Item = f64>) -> (f64, f64) {
    v.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)))
}

fn d_ratio(system: &CompetitionSystem) -> (f64, f64) {
    let (d1, d2) = (system.d(0), system.d(1));
    extrema((0..system.grid().len()).map(|x| d2[x] / d1[x]))
}

pub fn betas_from_equilibrium(system: &CompetitionSystem, eq: &SpeciesState) -> Result<Betas> {
    require_pair(system)?;
    eq.check_against(system)?;
    let (u1, u2) = (eq.species(0), eq.species(1));
    u1.require_positive("u1*")?;
    u2.require_positive("u2*")?;
    let (d1, d2) = (system.d(0), system.d(1));
    let n = system.grid().len();
    let (beta1, beta2) = extrema((0..n).map(|x| u1[x] * d2[x] / (u2[x] * d1[x])));
    let (beta_t1, beta_t2) = extrema((0..n).map(|x| u1[x] / u2[x]));
    Ok(Betas { beta1, beta2, beta_t1, beta_t2 })
}

pub fn betas_from_box(system: &CompetitionSystem, b: &Box37) -> Result<Betas> {
    require_pair(system)?;
    let (lo, hi) = d_ratio(system);
    let beta_t1 = b.u1_lower / b.u2_upper;
    let beta_t2 = b.u1_upper / b.u2_lower;
    Ok(Betas { beta1: beta_t1 * lo, beta2: beta_t2 * hi, beta_t1, beta_t2 })
}

/// Constant λ with `num = λ den` at every node, if one exists.
fn proportional(num: &[f64], den: &[f64]) -> Option<f64> {
    if den.iter().any(|&v| v <= 0.0) {
        return None;
    }
    let (lo, hi) = extrema(num.iter().zip(den).map(|(a, b)| a / b));
    (hi > 0.0 && hi - lo <= PROPORTIONAL_TOLERANCE * hi).then_some(0.5 * (lo + hi))
}

fn node_values(system: &CompetitionSystem, f: impl Fn(usize) -> f64) -> Vec<f64> {
    (0..system.grid().len()).map(f).collect()
}

/// Evaluation of one variant: left side, right side, and the Lyapunov weight ξ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariantEvaluation {
    pub applicable: bool,
    pub lhs: f64,
    pub rhs: f64,
    pub xi: f64,
    pub lambda: Option<f64>,
}

pub fn evaluate_variant(system: &CompetitionSystem, betas: &Betas, variant: Variant) -> Result<VariantEvaluation> {
    require_pair(system)?;
    let (a11, a12, a21, a22) = (system.a(0, 0), system.a(0, 1), system.a(1, 0), system.a(1, 1));
    let (d1, d2) = (system.d(0), system.d(1));
    let prod = node_values(system, |x| a11[x] * a22[x]);
    let cross_ratio = || extrema((0..prod.len()).map(|x| prod[x] / (a12[x] * a21[x]))).0;
    let sb = (betas.beta1 * betas.beta2).sqrt();
    let sbt = (betas.beta_t1 * betas.beta_t2).sqrt();
    let rb = (betas.beta2 / betas.beta1).sqrt();
    let rbt = (betas.beta_t2 / betas.beta_t1).sqrt();
    Ok(match variant {
        Variant::A1 => {
            let lhs = extrema(prod.iter().copied()).0 / (a12.max() * a21.max());
            VariantEvaluation { applicable: true, lhs, rhs: rb, xi: a12.max() / a21.max() * sb, lambda: None }
        }
        Variant::A2 => match proportional(a12.values(), a21.values()) {
            Some(l) => VariantEvaluation { applicable: true, lhs: cross_ratio(), rhs: rb, xi: l * sb, lambda: Some(l) },
            None => VariantEvaluation { applicable: false, lhs: f64::NAN, rhs: rb, xi: f64::NAN, lambda: None },
        },
        Variant::A3 => {
            let num = extrema((0..prod.len()).map(|x| prod[x] / (d1[x] * d2[x]))).0;
            let p = extrema((0..prod.len()).map(|x| a12[x] / d1[x])).1;
            let q = extrema((0..prod.len()).map(|x| a21[x] / d2[x])).1;
            VariantEvaluation { applicable: true, lhs: num / (p * q), rhs: rbt, xi: p / q * sbt, lambda: None }
        }
        Variant::A4 => {
            let num = node_values(system, |x| a12[x] / d1[x]);
            let den = node_values(system, |x| a21[x] / d2[x]);
            match proportional(&num, &den) {
                Some(l) => VariantEvaluation { applicable: true, lhs: cross_ratio(), rhs: rbt, xi: l * sbt, lambda: Some(l) },
                None => VariantEvaluation { applicable: false, lhs: f64::NAN, rhs: rbt, xi: f64::NAN, lambda: None },
            }
        }
    })
}

/// Evaluates all four variants with β's from an equilibrium or a box.
pub fn check_theorem12(system: &CompetitionSystem, source: BetaSource<'_>) -> Result<ConditionReport> {
    require_pair(system)?;
    let (betas, origin) = match source {
        BetaSource::Equilibrium(eq) => (betas_from_equilibrium(system, eq)?, "equilibrium"),
        BetaSource::Box(b) => (betas_from_box(system, b)?, "box"),
    };
    let mut report = ConditionReport::new();
    for v in Variant::ALL {
        let e = evaluate_variant(system, &betas, v)?;
        let holds = e.applicable && e.lhs > e.rhs;
        let mut c = Condition::new(v.name(), holds, e.lhs - e.rhs)
            .with("lhs", e.lhs)
            .with("rhs", e.rhs)
            .with("beta1", betas.beta1)
            .with("beta2", betas.beta2)
            .with("beta_tilde1", betas.beta_t1)
            .with("beta_tilde2", betas.beta_t2)
            .with("xi", e.xi)
            .with("beta_source", origin)
            .with("applicable", e.applicable);
        if let Some(l) = e.lambda {
            c = c.with("lambda", l);
        }
        if !e.applicable {
            c = c.note("proportionality hypothesis fails; not evaluated");
        }
        if origin == "equilibrium" {
            c = c.note("ratio bounds taken from a computed equilibrium: diagnostic, not a proof");
        }
        report.push(c);
    }
    Ok(report)
}

/// Two-species system `mi = m̃i ψ + εi fi`, `aij = ãij ψ`.
#[derive(Debug, Clone)]
pub struct Cor37Params {
    pub a_tilde: [[f64; 2]; 2],
    pub m_tilde: [f64; 2],
    pub eps: [f64; 2],
    pub psi: Field,
    pub f: [Field; 2],
    pub d: [Field; 2],
}

impl Cor37Params {
    pub fn system(&self, grid: &Grid) -> Result<CompetitionSystem> {
        let n = grid.len();
        let p = &self.psi;
        let m = (0..2)
            .map(|i| Field::new(grid, (0..n).map(|x| self.m_tilde[i] * p[x] + self.eps[i] * self.f[i][x]).collect()))
            .collect::<Result<Vec<_>>>()?;
        let a = (0..2)
            .map(|i| (0..2).map(|j| p.map(|v| self.a_tilde[i][j] * v)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        CompetitionSystem::new(grid.clone(), self.d.to_vec(), m, a)
    }

    /// `(r̄i, r̲i)`: extrema of `fi / ψ`.
    pub fn r_extrema(&self) -> ([f64; 2], [f64; 2]) {
        let mut hi = [0.0; 2];
        let mut lo = [0.0; 2];
        for i in 0..2 {
            let (l, h) = extrema(self.f[i].values().iter().zip(self.psi.values()).map(|(f, p)| f / p));
            lo[i] = l;
            hi[i] = h;
        }
        (hi, lo)
    }
}

/// Solves the four-equation upper/lower system and checks the resulting
/// ratio criterion.
pub fn corollary37_box(params: &Cor37Params, grid: &Grid) -> Result<(ConditionReport, Box37)> {
    let system = params.system(grid)?;
    let [[a11, a12], [a21, a22]] = params.a_tilde;
    let det = a11 * a22 - a12 * a21;
    if det.abs() <= 1e-12 {
        return Err(Error::InvalidArgument("singular box system: a11 a22 = a12 a21".into()));
    }
    params.psi.require_positive("psi")?;
    let (rbar, runder) = params.r_extrema();
    let [m1, m2] = params.m_tilde;
    let [e1, e2] = params.eps;
    // unknowns (ū1, u̲1, ū2, u̲2)
    let mat = vec![
        vec![a11, 0.0, 0.0, a12],
        vec![0.0, a11, a12, 0.0],
        vec![0.0, a21, a22, 0.0],
        vec![a21, 0.0, 0.0, a22],
    ];
    let rhs = [m1 + e1 * rbar[0], m1 + e1 * runder[0], m2 + e2 * rbar[1], m2 + e2 * runder[1]];
    let sol = dense_solve(&mat, &rhs).ok_or_else(|| Error::LinearSolve("box system".into()))?;
    let b = Box37 { u1_upper: sol[0], u1_lower: sol[1], u2_upper: sol[2], u2_lower: sol[3] };

    let entries = [("u1_upper", b.u1_upper), ("u1_lower", b.u1_lower), ("u2_upper", b.u2_upper), ("u2_lower", b.u2_lower)];
    let gaps = [b.u1_upper - b.u1_lower, b.u2_upper - b.u2_lower];
    let box_margin = entries.iter().map(|e| e.1).chain(gaps).fold(f64::INFINITY, f64::min);
    let mut box_cond = Condition::new("COR37_box", box_margin > 0.0 || (box_margin == 0.0 && gaps.iter().all(|&g| g == 0.0) && entries.iter().all(|e| e.1 > 0.0)), box_margin)
        .with("box", sol.clone())
        .with("r_upper", rbar.to_vec())
        .with("r_lower", runder.to_vec());
    for (name, v) in entries {
        if v <= 0.0 {
            box_cond = box_cond.note(format!("{name} is not positive ({v})"));
        }
    }
    if gaps[0] < 0.0 {
        box_cond = box_cond.note("u1 bounds out of order");
    }
    if gaps[1] < 0.0 {
        box_cond = box_cond.note("u2 bounds out of order");
    }

    let hyp_margin = (m2 / m1 - a21 / a11).min(a22 / a12 - m2 / m1);
    let (lo, hi) = d_ratio(&system);
    let ratio = a11 * a22 / (a12 * a21);
    let spread = (hi / lo).sqrt();
    let hyp = Condition::new("COR37_hypothesis", hyp_margin > 0.0 && ratio > spread, hyp_margin.min(ratio - spread))
        .with("resource_ratio_margin", hyp_margin)
        .with("competition_ratio", ratio)
        .with("diffusion_spread", spread);

    let mut report = ConditionReport::new();
    let box_ok = box_cond.holds;
    report.push(box_cond);
    report.push(hyp);
    if box_ok {
        let betas = betas_from_box(&system, &b)?;
        let rhs = (betas.beta2 / betas.beta1).sqrt();
        report.push(
            Condition::new("COR37", ratio > rhs, ratio - rhs)
                .with("beta1", betas.beta1)
                .with("beta2", betas.beta2)
                .with("competition_ratio", ratio)
                .with("sqrt_beta_ratio", rhs),
        );
    } else {
        report.push(Condition::new("COR37", false, box_margin).note("box not positive and ordered"));
    }
    Ok((report, b))
}

/// Case analysis for two species with species 2 immobile.
pub fn check_degenerate_thm31(system: &CompetitionSystem) -> Result<ConditionReport> {
    require_pair(system)?;
    if !system.is_degenerate(1) {
        return Err(Error::NotApplicable("requires d2 identically 0".into()));
    }
    system.d(0).require_positive("d1")?;
    let grid = system.grid();
    let n = grid.len();
    let (a11, a12, a21, a22) = (system.a(0, 0), system.a(0, 1), system.a(1, 0), system.a(1, 1));
    let (m1, m2, d1) = (system.m(0), system.m(1), system.d(0));

    let weak = extrema((0..n).map(|x| a11[x] * a22[x] - a12[x] * a21[x])).0;
    let weak_c = Condition::new("THM31_weak", weak > 0.0, weak);

    let integrand: Vec<f64> = (0..n).map(|x| (a22[x] * m1[x] - a12[x] * m2[x]) / (d1[x] * a22[x])).collect();
    let integral = grid.integrate(&integrand);
    let int_c = Condition::new("THM31_i_integral", integral > 0.0, integral);

    let lhs = extrema((0..n).map(|x| if a21[x] > 0.0 { m2[x] / a21[x] } else { f64::INFINITY })).0;
    let rhs = extrema((0..n).map(|x| (a22[x] * m1[x] - a12[x] * m2[x]) / (a11[x] * a22[x] - a12[x] * a21[x]))).1;
    let ratio_c = Condition::new("THM31_i_ratio", lhs > rhs, lhs - rhs).with("min_m2_over_a21", lhs).with("max_reduced_carrying", rhs);

    let case_i = weak_c.holds && int_c.holds && ratio_c.holds;
    let case_i_c = Condition::new("THM31_i", case_i, weak.min(integral).min(lhs - rhs));

    let case_ii_c = match solve_logistic_theta_with(d1, m1, a11, grid, system.form(), crate::steady::NEWTON_TOLERANCE) {
        Ok(sol) => {
            let theta = sol.theta;
            let margin = extrema((0..n).map(|x| theta[x] - m2[x] / a21[x])).0;
            Condition::new("THM31_ii", weak_c.holds && margin >= 0.0, margin.min(weak))
                .with("min_theta_minus_ratio", margin)
                .with("theta_max", theta.max())
                .with("theta_min", theta.min())
        }
        Err(e) => Condition::new("THM31_ii", false, f64::NAN).note(format!("logistic steady state unavailable: {e}")),
    };

    let iii = extrema((0..n).map(|x| m2[x] / m1[x] - a22[x] / a12[x])).0;
    let case_iii_c = Condition::new("THM31_iii", weak_c.holds && iii >= 0.0, iii.min(weak));

    let case = if case_i {
        "i"
    } else if case_ii_c.holds {
        "ii"
    } else if case_iii_c.holds {
        "iii"
    } else {
        "none"
    };
    let mut report = ConditionReport::new();
    let best = [&case_i_c, &case_ii_c, &case_iii_c].iter().map(|c| c.margin).filter(|m| m.is_finite()).fold(f64::NEG_INFINITY, f64::max);
    report.push(Condition::new("THM31", case != "none", best).with("case", case));
    for c in [weak_c, int_c, ratio_c, case_i_c, case_ii_c, case_iii_c] {
        report.push(c);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid {
        Grid::interval(1.0, 17).unwrap()
    }

    #[test]
    fn equal_betas_reduce_to_weak_competition() {
        let g = grid();
        let s = CompetitionSystem::constant(g.clone(), &[1.0, 1.0], &[1.0, 1.0], &[vec![1.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let eq = SpeciesState::constant(&g, &[2.0 / 3.0, 2.0 / 3.0]).unwrap();
        let r = check_theorem12(&s, BetaSource::Equilibrium(&eq)).unwrap();
        let a1 = r.get("A1").unwrap();
        assert!(a1.holds);
        assert!((a1.scalar("lhs").unwrap() - 4.0).abs() < 1e-12);
        assert!((a1.scalar("rhs").unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn proportional_coefficients_enable_a2_a4() {
        let g = grid();
        let s = CompetitionSystem::constant(g.clone(), &[1.0, 2.0], &[1.0, 1.0], &[vec![1.0, 0.4], vec![0.2, 1.0]]).unwrap();
        let eq = SpeciesState::constant(&g, &[0.7, 0.8]).unwrap();
        let r = check_theorem12(&s, BetaSource::Equilibrium(&eq)).unwrap();
        assert!((r.get("A2").unwrap().scalar("lambda").unwrap() - 2.0).abs() < 1e-12);
        assert!((r.get("A4").unwrap().scalar("lambda").unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn non_proportional_skips_a2() {
        let g = grid();
        let a12 = Field::from_fn(&g, |p| 0.3 + 0.1 * p[0]).unwrap();
        let c = |v: f64| Field::constant(&g, v);
        let s = CompetitionSystem::new(g.clone(), vec![c(1.0), c(1.0)], vec![c(1.0), c(1.0)], vec![vec![c(1.0), a12], vec![c(0.3), c(1.0)]]).unwrap();
        let eq = SpeciesState::constant(&g, &[0.7, 0.8]).unwrap();
        let r = check_theorem12(&s, BetaSource::Equilibrium(&eq)).unwrap();
        assert!(!r.holds("A2").unwrap());
        assert!(r.get("A2").unwrap().margin.is_nan());
    }

    fn params(eps: f64) -> Cor37Params {
        let g = grid();
        Cor37Params {
            a_tilde: [[1.0, 0.5], [0.5, 1.0]],
            m_tilde: [1.0, 1.0],
            eps: [eps, eps],
            psi: Field::constant(&g, 1.0),
            f: [Field::from_fn(&g, |p| (std::f64::consts::PI * p[0]).cos()).unwrap(), Field::from_fn(&g, |p| -(std::f64::consts::PI * p[0]).cos()).unwrap()],
            d: [Field::constant(&g, 1.0), Field::from_fn(&g, |p| 1.0 + 0.5 * p[0]).unwrap()],
        }
    }

    #[test]
    fn box_closed_forms() {
        let p = params(0.01);
        let (r, b) = corollary37_box(&p, &grid()).unwrap();
        let (rb, ru) = p.r_extrema();
        let det = 0.75;
        let u1u = ((1.0 + 0.01 * rb[0]) - 0.5 * (1.0 + 0.01 * ru[1])) / det;
        let u1l = ((1.0 + 0.01 * ru[0]) - 0.5 * (1.0 + 0.01 * rb[1])) / det;
        let u2u = ((1.0 + 0.01 * rb[1]) - 0.5 * (1.0 + 0.01 * ru[0])) / det;
        let u2l = ((1.0 + 0.01 * ru[1]) - 0.5 * (1.0 + 0.01 * rb[0])) / det;
        assert!((b.u1_upper - u1u).abs() < 1e-14);
        assert!((b.u1_lower - u1l).abs() < 1e-14);
        assert!((b.u2_upper - u2u).abs() < 1e-14);
        assert!((b.u2_lower - u2l).abs() < 1e-14);
        assert!(r.holds("COR37").unwrap());
    }

    #[test]
    fn box_collapses_without_perturbation() {
        let (_, b) = corollary37_box(&params(0.0), &grid()).unwrap();
        for v in [b.u1_upper, b.u1_lower, b.u2_upper, b.u2_lower] {
            assert!((v - 2.0 / 3.0).abs() < 1e-14);
        }
    }

    #[test]
    fn large_perturbation_breaks_box() {
        let (r, _) = corollary37_box(&params(2.0), &grid()).unwrap();
        assert!(!r.holds("COR37_box").unwrap());
        assert!(!r.get("COR37_box").unwrap().notes.is_empty());
    }

    fn thm31(m2: f64) -> ConditionReport {
        let s = CompetitionSystem::constant(grid(), &[1.0, 0.0], &[1.0, m2], &[vec![1.0, 0.5], vec![0.5, 1.0]]).unwrap();
        check_degenerate_thm31(&s).unwrap()
    }

    #[test]
    fn degenerate_case_i_arithmetic() {
        let r = thm31(0.6);
        let c = r.get("THM31_i_ratio").unwrap();
        assert!((c.scalar("min_m2_over_a21").unwrap() - 1.2).abs() < 1e-12);
        assert!((c.scalar("max_reduced_carrying").unwrap() - 0.7 / 0.75).abs() < 1e-12);
        assert_eq!(r.holds("THM31_i"), Some(true));

        let r = thm31(0.5);
        let c = r.get("THM31_i_ratio").unwrap();
        assert!((c.scalar("min_m2_over_a21").unwrap() - 1.0).abs() < 1e-12);
        assert!((c.scalar("max_reduced_carrying").unwrap() - 1.0).abs() < 1e-12);

        let r = thm31(0.4);
        let c = r.get("THM31_i_ratio").unwrap();
        assert!((c.scalar("min_m2_over_a21").unwrap() - 0.8).abs() < 1e-12);
        assert!((c.scalar("max_reduced_carrying").unwrap() - 0.8 / 0.75).abs() < 1e-12);
        assert!(!c.holds);
    }

    #[test]
    fn degenerate_case_ii_and_iii() {
        let s = CompetitionSystem::constant(grid(), &[0.3, 0.0], &[1.0, 0.3], &[vec![1.0, 0.5], vec![1.0, 1.0]]).unwrap();
        let r = check_degenerate_thm31(&s).unwrap();
        assert!(r.holds("THM31_ii").unwrap());
        let s = CompetitionSystem::constant(grid(), &[1.0, 0.0], &[1.0, 2.0], &[vec![1.0, 1.0], vec![0.5, 1.0]]).unwrap();
        let r = check_degenerate_thm31(&s).unwrap();
        assert!(r.holds("THM31_iii").unwrap());
    }

    #[test]
    fn mobile_second_species_rejected() {
        let s = CompetitionSystem::constant(grid(), &[1.0, 1.0], &[1.0, 1.0], &[vec![1.0, 0.5], vec![0.5, 1.0]]).unwrap();
        assert!(check_degenerate_thm31(&s).is_err());
    }
}
