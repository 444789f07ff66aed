use lvlab::certify::{
    block_lambda_from_q4, check_49a, diagonal_lyapunov_search, off_diagonal, perturbation_bounds, solve_bounds_f1,
};
use lvlab::discretize::{divergence_form_operator, neumann_laplacian};
use lvlab::lyapunov::entropy_integrand;
use lvlab::model::DiffusionForm;
use lvlab::stepper::{exact_logistic, step_imex, Operators};
use lvlab::{CompetitionSystem, Field, Grid, SpeciesState};
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;

fn grid_for(two_d: bool, n: usize) -> Grid {
    if two_d {
        Grid::rectangle(1.0, 0.7, n, n / 2 + 3).unwrap()
    } else {
        Grid::interval(1.3, n).unwrap()
    }
}

fn values(len: usize, lo: f64, hi: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(lo..hi, len)
}

fn weighted(g: &Grid, u: &[f64], v: &[f64]) -> f64 {
    g.weights().iter().zip(u.iter().zip(v)).map(|(w, (a, b))| w * a * b).sum()
}

/// Random fields on a random small grid: (grid, u, v, positive coefficient).
fn grid_fields() -> impl Strategy<Value = (Grid, Vec<f64>, Vec<f64>, Vec<f64>)> {
    (any::<bool>(), 4usize..12).prop_flat_map(|(two_d, n)| {
        let g = grid_for(two_d, n);
        let len = g.len();
        (Just(g), values(len, -2.0, 2.0), values(len, -2.0, 2.0), values(len, 0.2, 3.0))
    })
}

/// λ_min of sym(diag(q) M), computed independently with nalgebra.
fn oracle_lambda(q: &[f64], m: &[Vec<f64>]) -> f64 {
    let k = m.len();
    let qm = DMatrix::from_fn(k, k, |i, j| q[i] * m[i][j]);
    let sym = (&qm + qm.transpose()) * 0.5;
    SymmetricEigen::new(sym).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

fn unit_diagonal(k: usize, max_off: f64) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(0.0..max_off, k * k).prop_map(move |v| {
        (0..k).map(|i| (0..k).map(|j| if i == j { 1.0 } else { v[i * k + j] }).collect()).collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn laplacian_is_self_adjoint_and_dissipative((g, u, v, _) in grid_fields()) {
        let l = neumann_laplacian(&g);
        let lu = l.apply(&u);
        let lv = l.apply(&v);
        let scale = 1.0 + weighted(&g, &u, &u).max(weighted(&g, &v, &v)) * 4.0 / g.spacing()[0].powi(2);
        prop_assert!((weighted(&g, &u, &lv) - weighted(&g, &lu, &v)).abs() <= 1e-12 * scale);
        prop_assert!(weighted(&g, &u, &lu) <= 1e-12 * scale);
    }

    #[test]
    fn divergence_form_is_self_adjoint_and_dissipative((g, u, v, a) in grid_fields()) {
        let a = Field::new(&g, a).unwrap();
        let op = divergence_form_operator(&a, &g).unwrap();
        let lu = op.apply(&u);
        let lv = op.apply(&v);
        let scale = 1.0 + weighted(&g, &u, &u).max(weighted(&g, &v, &v)) * 12.0 / g.spacing()[0].powi(2);
        prop_assert!((weighted(&g, &u, &lv) - weighted(&g, &lu, &v)).abs() <= 1e-12 * scale);
        prop_assert!(weighted(&g, &u, &lu) <= 1e-12 * scale);
        // constants are in the kernel
        let ones = vec![1.0; g.len()];
        prop_assert!(op.apply(&ones).iter().all(|x| x.abs() <= 1e-9));
    }

    #[test]
    fn quadrature_is_exact_for_affine_data(two_d in any::<bool>(), n in 3usize..20, c0 in -3.0..3.0f64, cx in -3.0..3.0f64, cy in -3.0..3.0f64) {
        let g = grid_for(two_d, n);
        let f = Field::from_fn(&g, |[x, y]| c0 + cx * x + cy * y).unwrap();
        let (lx, ly) = (g.extent()[0], if two_d { g.extent()[1] } else { 0.0 });
        let exact = if two_d {
            c0 * lx * ly + cx * lx * lx / 2.0 * ly + cy * ly * ly / 2.0 * lx
        } else {
            c0 * lx + cx * lx * lx / 2.0
        };
        prop_assert!((g.integrate(f.values()) - exact).abs() <= 1e-12 * (1.0 + exact.abs()));
        prop_assert!((g.weights().iter().sum::<f64>() - g.measure()).abs() <= 1e-13);
    }

    #[test]
    fn imex_step_preserves_positivity(
        two_d in any::<bool>(),
        n in 4usize..10,
        dt in 1e-3..2.0f64,
        d in prop::collection::vec(0.01..2.0f64, 2),
        m in prop::collection::vec(-1.0..2.0f64, 2),
        off in prop::collection::vec(0.0..2.0f64, 2),
        seed in values(400, 1e-6, 5.0),
    ) {
        let g = grid_for(two_d, n);
        let sys = CompetitionSystem::constant(g.clone(), &d, &m, &[vec![1.0, off[0]], vec![off[1], 1.0]]).unwrap();
        let ops = Operators::new(&sys).unwrap();
        let len = g.len();
        let fields = (0..2).map(|i| Field::new(&g, seed[i * len..(i + 1) * len].to_vec()).unwrap()).collect();
        let s = step_imex(&SpeciesState::new(0.0, fields).unwrap(), dt, &sys, &ops).unwrap();
        for i in 0..2 {
            prop_assert!(s.species(i).min() > 0.0);
        }
    }

    #[test]
    fn pure_diffusion_conserves_mass((g, u, _, a) in grid_fields(), divergence in any::<bool>(), dt in 1e-3..0.5f64) {
        let (d, form) = if divergence {
            (Field::new(&g, a).unwrap(), DiffusionForm::Divergence)
        } else {
            (Field::constant(&g, a[0]), DiffusionForm::Laplacian)
        };
        let sys = CompetitionSystem::new(g.clone(), vec![d], vec![Field::zeros(&g)], vec![vec![Field::zeros(&g)]])
            .unwrap()
            .with_form(form);
        let ops = Operators::new(&sys).unwrap();
        let u: Vec<f64> = u.iter().map(|x| 3.0 + x).collect();
        let mass = g.integrate(&u);
        let mut s = SpeciesState::new(0.0, vec![Field::new(&g, u).unwrap()]).unwrap();
        for _ in 0..20 {
            s = step_imex(&s, dt, &sys, &ops).unwrap();
        }
        prop_assert!((g.integrate(s.species(0).values()) - mass).abs() <= 1e-12 * mass);
    }

    #[test]
    fn exact_logistic_matches_closed_form_and_composes(u0 in 1e-3..10.0f64, r in -3.0..3.0f64, a in 0.0..3.0f64, t1 in 1e-3..2.0f64, t2 in 1e-3..2.0f64) {
        let t = t1 + t2;
        let closed = if r.abs() < 1e-12 {
            u0 / (1.0 + a * u0 * t)
        } else {
            u0 * (r * t).exp() / (1.0 + a * u0 * (r * t).exp_m1() / r)
        };
        let once = exact_logistic(u0, r, a, t);
        let twice = exact_logistic(exact_logistic(u0, r, a, t1), r, a, t2);
        prop_assert!((once - closed).abs() <= 1e-12 * closed.abs().max(1.0));
        prop_assert!((once - twice).abs() <= 1e-12 * closed.abs().max(1.0));
    }

    #[test]
    fn entropy_integrand_is_nonnegative_convex_and_matches_quadrature(u in 1e-3..20.0f64, v in 1e-3..20.0f64, r in 0.05..5.0f64) {
        let g = |x| entropy_integrand(x, r);
        prop_assert!(g(u) >= 0.0);
        prop_assert!(g(r).abs() <= 1e-15);
        prop_assert!(g(0.5 * (u + v)) <= 0.5 * (g(u) + g(v)) + 1e-12);
        // composite Simpson on ∫_r^u (s - r)/s ds after s = r e^t
        let n = 2000;
        let h = (u / r).ln() / n as f64;
        let f = |t: f64| r * t.exp_m1();
        let mut simpson = f(0.0) + f(n as f64 * h);
        for j in 1..n {
            simpson += f(j as f64 * h) * if j % 2 == 1 { 4.0 } else { 2.0 };
        }
        simpson *= h / 3.0;
        prop_assert!((g(u) - simpson).abs() <= 1e-8 * (1.0 + simpson.abs()));
    }

    #[test]
    fn diagonal_search_witnesses_are_sound(k in 2usize..6, raw in prop::collection::vec(-1.5..1.5f64, 36)) {
        let m: Vec<Vec<f64>> = (0..k)
            .map(|i| (0..k).map(|j| if i == j { 1.0 + raw[i * 6 + j].abs() } else { raw[i * 6 + j] }).collect())
            .collect();
        let cert = diagonal_lyapunov_search(&m, 1e-9).unwrap();
        prop_assert!(cert.q.iter().all(|&q| q > 0.0));
        let lambda = oracle_lambda(&cert.q, &m);
        prop_assert!((lambda - cert.lambda_min).abs() <= 1e-10 * (1.0 + lambda.abs()));
        if cert.feasible {
            prop_assert!(lambda > 0.0);
        }
        prop_assert!(cert.lambda_min >= cert.identity_lambda_min - 1e-12);
    }

    #[test]
    fn block_matrix_inherits_certificate(a in (2usize..6).prop_flat_map(|k| unit_diagonal(k, 0.6))) {
        let b = off_diagonal(&a);
        let (c, cert) = check_49a(&b).unwrap();
        if c.holds {
            prop_assert!(block_lambda_from_q4(&b, &cert.q) > 0.0);
        }
    }

    #[test]
    fn constant_resources_collapse_bounds(a in (2usize..6).prop_flat_map(|k| unit_diagonal(k, 0.3)), level in 0.2..3.0f64) {
        let k = a.len();
        let m = vec![level; k];
        let cert = solve_bounds_f1(&a, &m, &m).unwrap();
        let am = DMatrix::from_fn(k, k, |i, j| a[i][j]);
        let c = am.qr().solve(&nalgebra::DVector::from_vec(m)).unwrap();
        for i in 0..k {
            prop_assert!((cert.cbar[i] - cert.cunder[i]).abs() <= 1e-12);
            prop_assert!((cert.cbar[i] - c[i]).abs() <= 1e-10);
        }
    }

    #[test]
    fn perturbation_bounds_are_affine_in_eps(a in (2usize..6).prop_flat_map(|k| unit_diagonal(k, 0.3)), eps in 0.0..0.5f64) {
        let c0 = perturbation_bounds(&a, 0.0).unwrap();
        let c1 = perturbation_bounds(&a, eps).unwrap();
        let c2 = perturbation_bounds(&a, 2.0 * eps).unwrap();
        for i in 0..a.len() {
            prop_assert!((c2.cbar[i] - 2.0 * c1.cbar[i] + c0.cbar[i]).abs() <= 1e-10);
            prop_assert!((c2.cunder[i] - 2.0 * c1.cunder[i] + c0.cunder[i]).abs() <= 1e-10);
            prop_assert!((c1.cbar[i] + c1.cunder[i] - 2.0 * c0.cbar[i]).abs() <= 1e-10);
        }
    }
}
