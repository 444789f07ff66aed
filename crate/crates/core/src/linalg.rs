//! Small in-house solvers: tridiagonal (Thomas), Jacobi-preconditioned CG,
//! banded LU with partial pivoting and a cyclic Jacobi symmetric
//! eigensolver.

use crate::discretize::CsrMatrix;
use crate::error::{Error, Result};

/// Solves a tridiagonal system. `sub[0]` and `sup[n-1]` are ignored.
pub fn solve_tridiagonal(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut x = vec![0.0; n];
    let mut beta = diag[0];
    if beta == 0.0 {
        return Err(Error::LinearSolve("zero pivot in tridiagonal solve".into()));
    }
    x[0] = rhs[0] / beta;
    for i in 1..n {
        c[i - 1] = sup[i - 1] / beta;
        beta = diag[i] - sub[i] * c[i - 1];
        if beta == 0.0 || !beta.is_finite() {
            return Err(Error::LinearSolve(format!("zero pivot in tridiagonal solve at row {i}")));
        }
        x[i] = (rhs[i] - sub[i] * x[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    Ok(x)
}

#[derive(Debug, Clone, Copy)]
pub struct CgInfo {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Jacobi-preconditioned conjugate gradient for `(diag(shift) + K) x = b`
/// with `K` symmetric. `x` holds the initial guess on entry.
pub fn pcg(k: &CsrMatrix, shift: &[f64], b: &[f64], x: &mut [f64], tol: f64, max_iter: usize) -> Result<CgInfo> {
    let n = b.len();
    let apply = |v: &[f64], out: &mut [f64]| {
        k.apply_into(v, out);
        for i in 0..n {
            out[i] += shift[i] * v[i];
        }
    };
    let precond: Vec<f64> = k.diagonal().iter().zip(shift).map(|(d, s)| 1.0 / (d + s)).collect();
    let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgInfo { iterations: 0, relative_residual: 0.0 });
    }
    let mut r = vec![0.0; n];
    apply(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut z: Vec<f64> = r.iter().zip(&precond).map(|(a, p)| a * p).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut ap = vec![0.0; n];
    for it in 0..=max_iter {
        let rnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt() / bnorm;
        if !rnorm.is_finite() {
            return Err(Error::NonFinite("conjugate gradient residual".into()));
        }
        if rnorm <= tol {
            return Ok(CgInfo { iterations: it, relative_residual: rnorm });
        }
        if it == max_iter {
            return Err(Error::LinearSolve(format!("CG reached {max_iter} iterations (residual {rnorm:e})")));
        }
        apply(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if !(pap > 0.0) {
            return Err(Error::LinearSolve("CG breakdown: matrix not positive definite".into()));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] * precond[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    unreachable!()
}

/// General banded matrix with `kl` sub- and `ku` super-diagonals, factored
/// in place by Gaussian elimination with partial pivoting.
#[derive(Debug, Clone)]
pub struct BandedMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
    pivots: Vec<usize>,
    factored: bool,
}

impl BandedMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        // pivoting fills the upper band up to kl + ku
        let width = 2 * kl + ku + 1;
        Self { n, kl, ku, width, data: vec![0.0; n * width], pivots: vec![0; n], factored: false }
    }

    pub fn from_csr(m: &CsrMatrix) -> Self {
        let (kl, ku) = m.bandwidths();
        let mut b = Self::zeros(m.dim(), kl, ku);
        for (i, j, v) in m.triplets() {
            b.add(i, j, v);
        }
        b
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.kl >= i && j <= i + self.kl + self.ku);
        i * self.width + (j + self.kl - i)
    }

    fn in_band(&self, i: usize, j: usize) -> bool {
        j + self.kl >= i && j <= i + self.ku
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_band(i, j), "entry ({i},{j}) outside band");
        let s = self.slot(i, j);
        self.data[s] += v;
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[self.slot(i, j)]
    }

    fn set(&mut self, i: usize, j: usize, v: f64) {
        let s = self.slot(i, j);
        self.data[s] = v;
    }

    pub fn factor(&mut self) -> Result<()> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let scale = self.data.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
        for col in 0..n {
            let last_row = (col + kl).min(n - 1);
            let mut p = col;
            let mut best = self.at(col, col).abs();
            for r in col + 1..=last_row {
                let v = self.at(r, col).abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if !(best > 1e-300 * scale) || !best.is_finite() {
                return Err(Error::LinearSolve(format!("singular banded matrix at column {col}")));
            }
            self.pivots[col] = p;
            let last_col = (col + kl + ku).min(n - 1);
            if p != col {
                for c in col..=last_col {
                    let (a, b) = (self.at(col, c), self.at(p, c));
                    self.set(col, c, b);
                    self.set(p, c, a);
                }
            }
            let piv = self.at(col, col);
            for r in col + 1..=last_row {
                let l = self.at(r, col) / piv;
                if l == 0.0 {
                    continue;
                }
                self.set(r, col, l);
                for c in col + 1..=last_col {
                    let v = self.at(r, c) - l * self.at(col, c);
                    self.set(r, c, v);
                }
            }
        }
        self.factored = true;
        Ok(())
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        if !self.factored {
            return Err(Error::LinearSolve("banded matrix not factored".into()));
        }
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let mut x = rhs.to_vec();
        for col in 0..n {
            x.swap(col, self.pivots[col]);
            let last_row = (col + kl).min(n - 1);
            for r in col + 1..=last_row {
                x[r] -= self.at(r, col) * x[col];
            }
        }
        for i in (0..n).rev() {
            let last_col = (i + kl + ku).min(n - 1);
            let mut s = x[i];
            for c in i + 1..=last_col {
                s -= self.at(i, c) * x[c];
            }
            x[i] = s / self.at(i, i);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("banded solve".into()));
        }
        Ok(x)
    }
}

/// Eigenvalues (ascending) and eigenvectors (columns) of a symmetric matrix
/// by the cyclic Jacobi method.
pub fn symmetric_eigen(m: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = m.len();
    let mut a: Vec<Vec<f64>> = m.to_vec();
    let mut v = vec![vec![0.0; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let norm: f64 = a.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * norm.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p][q];
                if apq.abs() < f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i][i].partial_cmp(&a[j][j]).unwrap_or(std::cmp::Ordering::Equal));
    let values = order.iter().map(|&i| a[i][i]).collect();
    let vectors = (0..n).map(|r| order.iter().map(|&c| v[r][c]).collect()).collect();
    (values, vectors)
}

pub fn symmetric_eigenvalues(m: &[Vec<f64>]) -> Vec<f64> {
    symmetric_eigen(m).0
}

/// `(M + Mᵀ) / 2`.
pub fn symmetric_part(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = m.len();
    (0..n).map(|i| (0..n).map(|j| 0.5 * (m[i][j] + m[j][i])).collect()).collect()
}

/// Smallest eigenvalue of `sym(diag(q) M)`.
pub fn lambda_min_scaled(q: &[f64], m: &[Vec<f64>]) -> f64 {
    let n = m.len();
    let qm: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| q[i] * m[i][j]).collect()).collect();
    symmetric_eigenvalues(&symmetric_part(&qm))[0]
}

pub fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

pub fn to_nalgebra(m: &[Vec<f64>]) -> nalgebra::DMatrix<f64> {
    let n = m.len();
    let c = m.first().map_or(0, |r| r.len());
    nalgebra::DMatrix::from_fn(n, c, |i, j| m[i][j])
}

pub fn mat_vec(m: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    m.iter().map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
}

/// Dense solve by LU with partial pivoting; `None` when singular.
pub fn dense_solve(m: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let lu = to_nalgebra(m).lu();
    let x = lu.solve(&nalgebra::DVector::from_column_slice(b))?;
    if x.iter().all(|v| v.is_finite()) {
        Some(x.iter().copied().collect())
    } else {
        None
    }
}

pub fn determinant(m: &[Vec<f64>]) -> f64 {
    to_nalgebra(m).determinant()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tridiagonal_matches_dense() {
        let sub = [0.0, -1.0, -1.0, -1.0];
        let diag = [4.0, 4.0, 4.0, 4.0];
        let sup = [-2.0, -1.0, -1.0, 0.0];
        let b = [1.0, 2.0, 3.0, 4.0];
        let x = solve_tridiagonal(&sub, &diag, &sup, &b).unwrap();
        let dense = vec![
            vec![4.0, -2.0, 0.0, 0.0],
            vec![-1.0, 4.0, -1.0, 0.0],
            vec![0.0, -1.0, 4.0, -1.0],
            vec![0.0, 0.0, -1.0, 4.0],
        ];
        let y = dense_solve(&dense, &b).unwrap();
        for (a, b) in x.iter().zip(y) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn banded_lu_with_pivoting_matches_dense() {
        // pivoting is forced by a zero leading diagonal
        let n = 7;
        let mut dense = vec![vec![0.0; n]; n];
        let mut band = BandedMatrix::zeros(n, 2, 1);
        for i in 0..n {
            for j in i.saturating_sub(2)..=(i + 1).min(n - 1) {
                let v = if i == j && i % 3 == 0 { 0.0 } else { ((i * 7 + j * 3) % 5) as f64 - 1.7 };
                dense[i][j] = v;
                band.add(i, j, v);
            }
        }
        let b: Vec<f64> = (0..n).map(|i| i as f64 + 0.5).collect();
        band.factor().unwrap();
        let x = band.solve(&b).unwrap();
        let y = dense_solve(&dense, &b).unwrap();
        for (a, b) in x.iter().zip(y) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn jacobi_eigen_agrees_with_nalgebra() {
        let m = vec![
            vec![2.0, -0.3, 0.5, 0.1],
            vec![-0.3, 1.0, 0.2, -0.4],
            vec![0.5, 0.2, -1.0, 0.3],
            vec![0.1, -0.4, 0.3, 0.5],
        ];
        let ours = symmetric_eigenvalues(&m);
        let mut theirs: Vec<f64> = to_nalgebra(&m).symmetric_eigen().eigenvalues.iter().copied().collect();
        theirs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (a, b) in ours.iter().zip(theirs) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn pcg_solves_spd_system() {
        let k = CsrMatrix::from_triplets(
            3,
            vec![(0, 0, 1.0), (0, 1, -1.0), (1, 0, -1.0), (1, 1, 2.0), (1, 2, -1.0), (2, 1, -1.0), (2, 2, 1.0)],
        );
        let shift = [0.5, 0.5, 0.5];
        let b = [1.0, 0.0, -2.0];
        let mut x = vec![0.0; 3];
        pcg(&k, &shift, &b, &mut x, 1e-14, 100).unwrap();
        let mut dense = k.to_dense();
        for i in 0..3 {
            dense[i][i] += shift[i];
        }
        let y = dense_solve(&dense, &b).unwrap();
        for (a, b) in x.iter().zip(y) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
