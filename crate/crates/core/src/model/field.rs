use super::grid::{Grid, GridId};
use crate::error::{Error, Result};

/// Real values sampled at the nodes of one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: GridId,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                what: "field values",
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidField(format!("non-finite value {} at node {i}", values[i])));
        }
        Ok(Self { grid: grid.id(), values })
    }

    /// Like [`Field::new`] but also requires every value to be > 0.
    pub fn strictly_positive(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        let f = Self::new(grid, values)?;
        f.require_positive("field")?;
        Ok(f)
    }

    pub fn constant(grid: &Grid, value: f64) -> Self {
        assert!(value.is_finite(), "constant field must be finite");
        Self { grid: grid.id(), values: vec![value; grid.len()] }
    }

    pub fn zeros(grid: &Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn from_fn(grid: &Grid, f: impl Fn([f64; 2]) -> f64) -> Result<Self> {
        let values = (0..grid.len()).map(|i| f(grid.coordinates(i))).collect();
        Self::new(grid, values)
    }

    pub fn grid_id(&self) -> GridId {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_identically_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    /// True when max - min <= tol * max(1, |max|).
    pub fn is_constant(&self, tol: f64) -> bool {
        let (lo, hi) = (self.min(), self.max());
        hi - lo <= tol * hi.abs().max(1.0)
    }

    pub fn check_grid(&self, grid: &Grid) -> Result<()> {
        if self.grid != grid.id() {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    pub fn require_positive(&self, what: &str) -> Result<()> {
        if let Some((i, &v)) = self.values.iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
            return Err(Error::NonPositive { what: what.to_string(), node: i, value: v });
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values: Vec<f64> = self.values.iter().map(|&v| f(v)).collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidField("map produced a non-finite value".into()));
        }
        Ok(Self { grid: self.grid, values })
    }

    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        let values: Vec<f64> = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidField("zip_map produced a non-finite value".into()));
        }
        Ok(Self { grid: self.grid, values })
    }

    pub fn sup_distance(&self, other: &Field) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl std::ops::Index<usize> for Field {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_wrong_length_and_non_finite() {
        let g = Grid::interval(1.0, 5).unwrap();
        assert!(Field::new(&g, vec![1.0; 4]).is_err());
        assert!(Field::new(&g, vec![1.0, f64::NAN, 1.0, 1.0, 1.0]).is_err());
        assert!(Field::new(&g, vec![1.0, f64::INFINITY, 1.0, 1.0, 1.0]).is_err());
        assert!(Field::new(&g, vec![1.0; 5]).is_ok());
    }

    #[test]
    fn strictly_positive_checks_minimum() {
        let g = Grid::interval(1.0, 3).unwrap();
        assert!(Field::strictly_positive(&g, vec![1.0, 0.0, 1.0]).is_err());
        assert!(Field::strictly_positive(&g, vec![1.0, 0.5, 1.0]).is_ok());
    }

    #[test]
    fn grid_mismatch_detected() {
        let a = Grid::interval(1.0, 3).unwrap();
        let b = Grid::interval(2.0, 3).unwrap();
        let f = Field::constant(&a, 1.0);
        assert_eq!(f.check_grid(&b), Err(Error::GridMismatch));
    }
}
