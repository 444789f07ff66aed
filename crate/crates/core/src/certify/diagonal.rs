use super::bounds::{check_square, BoundsCertificate};
use super::report::Condition;
use crate::error::Result;
use crate::linalg::{identity, lambda_min_scaled, symmetric_eigen, symmetric_eigenvalues};

/// Positive-definiteness threshold for `sym(Q M)`.
pub const PD_TOLERANCE: f64 = 1e-9;
const SEARCH_ITERATIONS: usize = 200;

/// A positive diagonal `Q` and the smallest eigenvalue of `(QM + MᵀQ)/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalCertificate {
    /// Diagonal of Q, normalized to sum k.
    pub q: Vec<f64>,
    pub lambda_min: f64,
    pub feasible: bool,
    /// λ_min at Q = I, the starting candidate.
    pub identity_lambda_min: f64,
    /// 2×2 closed-form verdict (M11 > 0, M22 > 0, det M > 0); `None` for k > 2.
    pub closed_form: Option<bool>,
    pub iterations: usize,
}

impl DiagonalCertificate {
    pub fn condition(&self, name: &str) -> Condition {
        let mut c = Condition::new(name, self.feasible, self.lambda_min - PD_TOLERANCE)
            .with("q", self.q.clone())
            .with("lambda_min", self.lambda_min)
            .with("identity_candidate_lambda_min", self.identity_lambda_min)
            .with("identity_candidate_accepted", self.identity_lambda_min > PD_TOLERANCE);
        if let Some(cf) = self.closed_form {
            c = c.with("closed_form_2x2", cf);
        }
        if !self.feasible {
            c = c.note("search failed to find a witness; this is not a proof of infeasibility");
        }
        c
    }
}

fn normalize(p: &[f64]) -> Vec<f64> {
    let q: Vec<f64> = p.iter().map(|v| v.exp()).collect();
    let s: f64 = q.iter().sum();
    let k = q.len() as f64;
    q.iter().map(|v| v * k / s).collect()
}

fn closed_form_2x2(m: &[Vec<f64>]) -> Option<bool> {
    (m.len() == 2).then(|| m[0][0] > 0.0 && m[1][1] > 0.0 && m[0][0] * m[1][1] - m[0][1] * m[1][0] > 0.0)
}

/// Gradient of λ_min(sym(QM)) with respect to log q at a simple eigenvalue.
fn log_gradient(q: &[f64], m: &[Vec<f64>]) -> Vec<f64> {
    let k = m.len();
    let qm: Vec<Vec<f64>> = (0..k).map(|i| (0..k).map(|j| q[i] * m[i][j]).collect()).collect();
    let sym: Vec<Vec<f64>> = (0..k).map(|i| (0..k).map(|j| 0.5 * (qm[i][j] + qm[j][i])).collect()).collect();
    let (_, vecs) = symmetric_eigen(&sym);
    let v: Vec<f64> = (0..k).map(|r| vecs[r][0]).collect();
    (0..k)
        .map(|i| {
            let mv: f64 = (0..k).map(|j| m[i][j] * v[j]).sum();
            q[i] * v[i] * mv
        })
        .collect()
}

/// Searches a positive diagonal Q maximizing λ_min(sym(QM)) by pattern
/// ascent in log q from Q = I.
pub fn diagonal_lyapunov_search(m: &[Vec<f64>], tolerance: f64) -> Result<DiagonalCertificate> {
    let k = check_square(m, "matrix")?;
    let eval = |p: &[f64]| lambda_min_scaled(&normalize(p), m);
    let mut p = vec![0.0; k];
    let identity_lambda_min = eval(&p);
    let mut best = identity_lambda_min;
    let mut step = 1.0;
    let mut iterations = 0;
    if k > 1 {
        for it in 0..SEARCH_ITERATIONS {
            iterations = it + 1;
            let mut trials: Vec<Vec<f64>> = Vec::with_capacity(2 * k + 1);
            let g = log_gradient(&normalize(&p), m);
            let gn = g.iter().map(|x| x * x).sum::<f64>().sqrt();
            if gn > 0.0 {
                trials.push(p.iter().zip(&g).map(|(a, b)| a + step * b / gn).collect());
            }
            for i in 0..k {
                for s in [step, -step] {
                    let mut t = p.clone();
                    t[i] += s;
                    trials.push(t);
                }
            }
            let mut improved = false;
            for t in trials {
                let v = eval(&t);
                if v > best + 1e-15 * best.abs().max(1.0) {
                    best = v;
                    p = t;
                    improved = true;
                }
            }
            if improved {
                step = (step * 1.5).min(4.0);
            } else {
                step *= 0.5;
                if step < 1e-10 {
                    break;
                }
            }
        }
    }
    let q = normalize(&p);
    let lambda_min = lambda_min_scaled(&q, m);
    Ok(DiagonalCertificate {
        q,
        lambda_min,
        feasible: lambda_min > tolerance,
        identity_lambda_min,
        closed_form: closed_form_2x2(m),
        iterations,
    })
}

/// `[[I, B], [B, I]]`.
pub fn block_matrix(b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = b.len();
    let eye = identity(k);
    (0..2 * k)
        .map(|r| {
            (0..2 * k)
                .map(|c| {
                    let (bi, bj) = (r / k, c / k);
                    let (i, j) = (r % k, c % k);
                    if bi == bj {
                        eye[i][j]
                    } else {
                        b[i][j]
                    }
                })
                .collect()
        })
        .collect()
}

/// Block condition with diagonal Q1, Q2: searched on the 2k×2k matrix
/// `E = Q H + Hᵀ Q`, `H = [[I, B], [B, I]]`. The witness also reports the
/// smallest eigenvalue of `4Q2 - (Q2 B + Bᵀ Q1) Q1⁻¹ (Bᵀ Q2 + Q1 B)`.
pub fn check_f2(b: &[Vec<f64>]) -> Result<Condition> {
    let k = check_square(b, "B")?;
    let h = block_matrix(b);
    let cert = diagonal_lyapunov_search(&h, PD_TOLERANCE)?;
    let (q1, q2) = cert.q.split_at(k);
    let left: Vec<Vec<f64>> = (0..k)
        .map(|i| (0..k).map(|j| q2[i] * b[i][j] + b[j][i] * q1[j]).collect())
        .collect();
    let schur: Vec<Vec<f64>> = (0..k)
        .map(|i| {
            (0..k)
                .map(|j| {
                    let s: f64 = (0..k).map(|l| left[i][l] * left[j][l] / q1[l]).sum();
                    (if i == j { 4.0 * q2[i] } else { 0.0 }) - s
                })
                .collect()
        })
        .collect();
    let schur_min = symmetric_eigenvalues(&schur)[0];
    Ok(Condition::new("F2", cert.feasible, cert.lambda_min - PD_TOLERANCE)
        .with("q1", q1.to_vec())
        .with("q2", q2.to_vec())
        .with("lambda_min_E_half", cert.lambda_min)
        .with("schur_lambda_min", schur_min))
}

/// `Q(I - B) + (I - B)ᵀQ` positive definite for some diagonal Q > 0.
pub fn check_49a(b: &[Vec<f64>]) -> Result<(Condition, DiagonalCertificate)> {
    let k = check_square(b, "B")?;
    let m: Vec<Vec<f64>> = (0..k)
        .map(|i| (0..k).map(|j| if i == j { 1.0 - b[i][j] } else { -b[i][j] }).collect())
        .collect();
    let cert = diagonal_lyapunov_search(&m, PD_TOLERANCE)?;
    Ok((cert.condition("4.9a"), cert))
}

/// `Q(I - B - c) + (I - B - c)ᵀQ` positive definite, `c = diag(shift)`.
pub fn shifted_search(b: &[Vec<f64>], shift: &[f64]) -> Result<DiagonalCertificate> {
    let k = check_square(b, "B")?;
    let m: Vec<Vec<f64>> = (0..k)
        .map(|i| (0..k).map(|j| if i == j { 1.0 - b[i][j] - shift[i] } else { -b[i][j] }).collect())
        .collect();
    diagonal_lyapunov_search(&m, PD_TOLERANCE)
}

/// Shifted condition on `I - B - c` with `c` the bound-certificate shift.
/// The witness carries the functional weights `εi = qi / c̄i`.
pub fn check_f3(b: &[Vec<f64>], bounds: &BoundsCertificate, name: &str) -> Result<(Condition, Option<DiagonalCertificate>)> {
    if !bounds.feasible {
        return Ok((
            Condition::new(name, false, bounds.margin()).note("bound certificate infeasible; shift undefined"),
            None,
        ));
    }
    let cert = shifted_search(b, &bounds.shift)?;
    let eps: Vec<f64> = cert.q.iter().zip(&bounds.cbar).map(|(q, c)| q / c).collect();
    let c = cert.condition(name).with("shift", bounds.shift.clone()).with("epsilon", eps);
    Ok((c, Some(cert)))
}

/// Block matrix with `Q5 = diag(Q4, Q4)` is positive definite whenever Q4
/// certifies I - B; returns λ_min(sym(Q5 H)).
pub fn block_lambda_from_q4(b: &[Vec<f64>], q4: &[f64]) -> f64 {
    let h = block_matrix(b);
    let q5: Vec<f64> = q4.iter().chain(q4).copied().collect();
    lambda_min_scaled(&q5, &h)
}
