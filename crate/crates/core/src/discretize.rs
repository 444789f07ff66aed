//! Neumann Laplacian, divergence-form operator and quadrature inner product
//! on uniform grids.
//!
//! Both operators use the mirror (ghost-node) closure: a neighbor index that
//! falls off the grid is reflected back inside, so boundary rows read
//! `2 (u_1 - u_0) / h²` and every row sums to zero.

use crate::error::{Error, Result};
use crate::model::{Field, Grid};

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Square matrix from (row, col, value) triplets; duplicates are summed.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(r < n && c < n, "triplet ({r},{c}) outside {n}x{n}");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self { n, row_ptr, col_idx, values }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).map(|(c, v)| v * x[c]).sum();
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.apply_into(x, &mut y);
        y
    }

    /// `diag(s) * self`.
    pub fn scale_rows(&self, s: &[f64]) -> Self {
        let mut out = self.clone();
        for i in 0..self.n {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                out.values[p] *= s[i];
            }
        }
        out
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for (i, row) in d.iter_mut().enumerate() {
            for (c, v) in self.row(i) {
                row[c] = v;
            }
        }
        d
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.n).all(|i| self.row(i).all(|(c, v)| (v - self.get(c, i)).abs() <= tol * v.abs().max(1.0)))
    }

    /// Lower and upper bandwidths.
    pub fn bandwidths(&self) -> (usize, usize) {
        let (mut kl, mut ku) = (0, 0);
        for i in 0..self.n {
            for (c, _) in self.row(i) {
                if c < i {
                    kl = kl.max(i - c);
                } else {
                    ku = ku.max(c - i);
                }
            }
        }
        (kl, ku)
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        (0..self.n).flat_map(|i| self.row(i).map(move |(c, v)| (i, c, v))).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorKind {
    Laplacian,
    DivergenceForm,
}

/// Assembled spatial operator over the nodes of a grid.
#[derive(Debug, Clone)]
pub struct LinearOperator {
    pub matrix: CsrMatrix,
    /// Raw matrix symmetry. The ghost closure breaks it at boundary rows;
    /// `W L` is always symmetric.
    pub symmetric: bool,
    pub kind: OperatorKind,
}

impl LinearOperator {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.matrix.apply(x)
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    /// `W L`, symmetric negative semi-definite.
    pub fn weighted(&self, grid: &Grid) -> CsrMatrix {
        self.matrix.scale_rows(grid.weights())
    }
}

fn reflect(i: isize, n: usize) -> usize {
    if i < 0 {
        (-i) as usize
    } else if i as usize >= n {
        2 * (n - 1) - i as usize
    } else {
        i as usize
    }
}

fn assemble_flux(grid: &Grid, coef: &[f64]) -> CsrMatrix {
    let dims = grid.nodes_per_axis();
    let n = grid.len();
    let mut trip = Vec::with_capacity(5 * n);
    for node in 0..n {
        let (ix, iy) = grid.axis_indices(node);
        let mut diag = 0.0;
        for axis in 0..grid.dimension() {
            let h2 = grid.spacing()[axis].powi(2);
            for step in [-1isize, 1] {
                let nb = if axis == 0 {
                    grid.index(reflect(ix as isize + step, dims[0]), iy)
                } else {
                    grid.index(ix, reflect(iy as isize + step, dims[1]))
                };
                let c = 0.5 * (coef[node] + coef[nb]) / h2;
                trip.push((node, nb, c));
                diag -= c;
            }
        }
        trip.push((node, node, diag));
    }
    CsrMatrix::from_triplets(n, trip)
}

pub fn neumann_laplacian(grid: &Grid) -> LinearOperator {
    let matrix = assemble_flux(grid, &vec![1.0; grid.len()]);
    let symmetric = matrix.is_symmetric(0.0);
    LinearOperator { matrix, symmetric, kind: OperatorKind::Laplacian }
}

/// `div(a ∇·)` with arithmetic-mean face coefficients; the mirrored ghost
/// node carries the mirrored coefficient.
pub fn divergence_form_operator(a: &Field, grid: &Grid) -> Result<LinearOperator> {
    a.check_grid(grid)?;
    a.require_positive("divergence-form coefficient")?;
    let matrix = assemble_flux(grid, a.values());
    let symmetric = matrix.is_symmetric(0.0);
    Ok(LinearOperator { matrix, symmetric, kind: OperatorKind::DivergenceForm })
}

pub fn inner_product(f: &Field, g: &Field, grid: &Grid) -> Result<f64> {
    f.check_grid(grid)?;
    g.check_grid(grid)?;
    if f.grid_id() != g.grid_id() {
        return Err(Error::GridMismatch);
    }
    Ok(grid
        .weights()
        .iter()
        .zip(f.values().iter().zip(g.values()))
        .map(|(w, (a, b))| w * a * b)
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn three_node_stencil() {
        let g = Grid::interval(2.0, 3).unwrap();
        let l = neumann_laplacian(&g).matrix.to_dense();
        assert_eq!(l[0], vec![-2.0, 2.0, 0.0]);
        assert_eq!(l[1], vec![1.0, -2.0, 1.0]);
        assert_eq!(l[2], vec![0.0, 2.0, -2.0]);
    }

    #[test]
    fn constants_in_kernel_and_row_sums() {
        for g in [Grid::interval(1.0, 9).unwrap(), Grid::rectangle(1.0, 2.0, 5, 7).unwrap()] {
            let l = neumann_laplacian(&g);
            assert!(l.apply(&vec![3.0; g.len()]).iter().all(|&v| v == 0.0));
            assert!(!l.symmetric);
            assert!(l.weighted(&g).is_symmetric(1e-14));
        }
    }

    #[test]
    fn divergence_reductions() {
        let g = Grid::rectangle(1.0, 1.0, 6, 5).unwrap();
        let one = divergence_form_operator(&Field::constant(&g, 1.0), &g).unwrap();
        assert_eq!(one.matrix, neumann_laplacian(&g).matrix);
        let two = divergence_form_operator(&Field::constant(&g, 2.0), &g).unwrap();
        let v: Vec<f64> = (0..g.len()).map(|i| (i as f64 * 0.37).sin()).collect();
        let lv = neumann_laplacian(&g).apply(&v);
        for (a, b) in two.apply(&v).iter().zip(lv) {
            assert!((a - 2.0 * b).abs() < 1e-12 * b.abs().max(1.0));
        }
        assert!(divergence_form_operator(&Field::constant(&g, 0.0), &g).is_err());
    }

    #[test]
    fn inner_products() {
        let g = Grid::interval(1.0, 129).unwrap();
        let one = Field::constant(&g, 1.0);
        let c = Field::from_fn(&g, |[x, _]| (PI * x).cos()).unwrap();
        assert!((inner_product(&one, &one, &g).unwrap() - 1.0).abs() < 1e-14);
        assert!(inner_product(&c, &one, &g).unwrap().abs() < 1e-4);
        assert!((inner_product(&c, &c, &g).unwrap() - 0.5).abs() < 1e-4);
        let other = Grid::interval(1.0, 5).unwrap();
        assert!(inner_product(&Field::constant(&other, 1.0), &one, &g).is_err());
    }
}
