use crate::error::{Error, Result};

/// Identity of a grid's shape, carried by every [`crate::Field`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridId(u64);

/// Uniform tensor grid on `[0, Lx]` or `[0, Lx] x [0, Ly]`.
///
/// Nodes are numbered row-major with x varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    extent: Vec<f64>,
    nodes: Vec<usize>,
    spacing: Vec<f64>,
    weights: Vec<f64>,
    id: GridId,
}

pub fn build_grid(dimension: usize, extent: &[f64], nodes_per_axis: &[usize]) -> Result<Grid> {
    if dimension != extent.len() || dimension != nodes_per_axis.len() {
        return Err(Error::InvalidGrid(format!(
            "dimension {dimension} with {} extents and {} node counts",
            extent.len(),
            nodes_per_axis.len()
        )));
    }
    Grid::new(extent, nodes_per_axis)
}

fn trapezoid_1d(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; n];
    w[0] = 0.5 * h;
    w[n - 1] = 0.5 * h;
    w
}

impl Grid {
    pub fn new(extent: &[f64], nodes_per_axis: &[usize]) -> Result<Self> {
        let dim = extent.len();
        if !(1..=2).contains(&dim) || nodes_per_axis.len() != dim {
            return Err(Error::InvalidGrid(format!(
                "dimension must be 1 or 2 (got {} extents, {} node counts)",
                dim,
                nodes_per_axis.len()
            )));
        }
        for (axis, (&l, &n)) in extent.iter().zip(nodes_per_axis).enumerate() {
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::InvalidGrid(format!("extent on axis {axis} must be positive, got {l}")));
            }
            if n < 3 {
                return Err(Error::InvalidGrid(format!("axis {axis} needs at least 3 nodes, got {n}")));
            }
        }
        let spacing: Vec<f64> = extent
            .iter()
            .zip(nodes_per_axis)
            .map(|(&l, &n)| l / (n - 1) as f64)
            .collect();
        let wx = trapezoid_1d(nodes_per_axis[0], spacing[0]);
        let weights = if dim == 1 {
            wx
        } else {
            let wy = trapezoid_1d(nodes_per_axis[1], spacing[1]);
            let mut w = Vec::with_capacity(wx.len() * wy.len());
            for &b in &wy {
                for &a in &wx {
                    w.push(a * b);
                }
            }
            w
        };

        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        let mut mix = |v: u64| {
            for byte in v.to_le_bytes() {
                hash ^= byte as u64;
                hash = hash.wrapping_mul(0x0100_0000_01b3);
            }
        };
        mix(dim as u64);
        for (&l, &n) in extent.iter().zip(nodes_per_axis) {
            mix(l.to_bits());
            mix(n as u64);
        }

        Ok(Self {
            extent: extent.to_vec(),
            nodes: nodes_per_axis.to_vec(),
            spacing,
            weights,
            id: GridId(hash),
        })
    }

    pub fn interval(length: f64, nodes: usize) -> Result<Self> {
        Self::new(&[length], &[nodes])
    }

    pub fn rectangle(lx: f64, ly: f64, nx: usize, ny: usize) -> Result<Self> {
        Self::new(&[lx, ly], &[nx, ny])
    }

    pub fn id(&self) -> GridId {
        self.id
    }

    pub fn dimension(&self) -> usize {
        self.extent.len()
    }

    pub fn extent(&self) -> &[f64] {
        &self.extent
    }

    pub fn nodes_per_axis(&self) -> &[usize] {
        &self.nodes
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Domain measure |Ω|.
    pub fn measure(&self) -> f64 {
        self.extent.iter().product()
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.nodes[0] + ix
    }

    /// Axis indices of a node, `(ix, iy)`; `iy` is 0 in 1D.
    pub fn axis_indices(&self, node: usize) -> (usize, usize) {
        (node % self.nodes[0], node / self.nodes[0])
    }

    /// Physical coordinates of a node; the y entry is 0 in 1D.
    pub fn coordinates(&self, node: usize) -> [f64; 2] {
        let (ix, iy) = self.axis_indices(node);
        let x = ix as f64 * self.spacing[0];
        let y = if self.dimension() == 2 { iy as f64 * self.spacing[1] } else { 0.0 };
        [x, y]
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.len());
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }

    pub fn mean(&self, values: &[f64]) -> f64 {
        self.integrate(values) / self.measure()
    }

    /// Discrete L² norm of `values` under the quadrature weights.
    pub fn l2_norm(&self, values: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(values)
            .map(|(w, v)| w * v * v)
            .sum::<f64>()
            .sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_interval_five_nodes() {
        let g = build_grid(1, &[1.0], &[5]).unwrap();
        assert_eq!(g.weights(), &[0.125, 0.25, 0.25, 0.25, 0.125]);
        assert!((g.weights().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn square_three_by_three() {
        let g = build_grid(2, &[1.0, 1.0], &[3, 3]).unwrap();
        assert_eq!(g.weights()[0], 0.0625);
        assert_eq!(g.weights()[1], 0.125);
        assert_eq!(g.weights()[4], 0.25);
        assert!((g.weights().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn interval_of_length_two() {
        let g = build_grid(1, &[2.0], &[3]).unwrap();
        assert_eq!(g.weights(), &[0.5, 1.0, 0.5]);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(build_grid(1, &[1.0], &[2]).is_err());
        assert!(build_grid(1, &[0.0], &[5]).is_err());
        assert!(build_grid(1, &[-1.0], &[5]).is_err());
        assert!(build_grid(3, &[1.0; 3], &[3; 3]).is_err());
        assert!(build_grid(2, &[1.0], &[3]).is_err());
    }

    #[test]
    fn cosine_quadrature_is_second_order() {
        let mut errs = Vec::new();
        for n in [17usize, 33, 65, 129] {
            let g = Grid::interval(1.0, n).unwrap();
            // integrand with nonzero exact integral so the trapezoid error is visible
            let v: Vec<f64> = (0..n)
                .map(|i| (std::f64::consts::PI * g.coordinates(i)[0] / 2.0).cos())
                .collect();
            errs.push((g.integrate(&v) - 2.0 / std::f64::consts::PI).abs());
        }
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order > 1.9, "order {order}");
        }
        let g = Grid::interval(1.0, 65).unwrap();
        let v: Vec<f64> = (0..65).map(|i| (std::f64::consts::PI * g.coordinates(i)[0]).cos()).collect();
        assert!(g.integrate(&v).abs() < 1e-14);
    }

    #[test]
    fn distinct_shapes_have_distinct_ids() {
        let a = Grid::interval(1.0, 5).unwrap();
        let b = Grid::interval(1.0, 6).unwrap();
        let c = Grid::interval(1.0, 5).unwrap();
        assert_ne!(a.id(), b.id());
        assert_eq!(a.id(), c.id());
    }
}
