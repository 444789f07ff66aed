use serde::{Deserialize, Serialize};

use super::field::Field;
use super::grid::Grid;
use crate::error::{Error, Result};

/// `base + amplitude * cos(frequency * π * x + phase)`, times
/// `cos(frequency * π * y)` on rectangles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CosineWave {
    #[serde(default)]
    pub base: f64,
    pub amplitude: f64,
    #[serde(default = "unit")]
    pub frequency: f64,
    #[serde(default)]
    pub phase: f64,
}

/// `base + amplitude * exp(-|x - c|² / (2 width²))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianBump {
    #[serde(default)]
    pub base: f64,
    pub center: f64,
    /// y coordinate of the center on rectangles; defaults to mid-height.
    #[serde(default)]
    pub center_y: Option<f64>,
    pub amplitude: f64,
    pub width: f64,
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoefficientSpec {
    Constant(f64),
    /// Node values in row-major order.
    Table(Vec<f64>),
    Cosine(CosineWave),
    Bump(GaussianBump),
}

impl From<f64> for CoefficientSpec {
    fn from(v: f64) -> Self {
        CoefficientSpec::Constant(v)
    }
}

fn finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidField(format!("waveform parameter {name} = {v} out of range")))
    }
}

pub fn sample_field(spec: &CoefficientSpec, grid: &Grid) -> Result<Field> {
    match spec {
        CoefficientSpec::Constant(c) => {
            finite("constant", *c)?;
            Ok(Field::constant(grid, *c))
        }
        CoefficientSpec::Table(values) => {
            if values.len() != grid.len() {
                return Err(Error::DimensionMismatch {
                    what: "tabulated field",
                    expected: grid.len(),
                    got: values.len(),
                });
            }
            Field::new(grid, values.clone())
        }
        CoefficientSpec::Cosine(w) => {
            finite("base", w.base)?;
            finite("amplitude", w.amplitude)?;
            finite("phase", w.phase)?;
            if !(w.frequency.is_finite() && w.frequency >= 0.0) {
                return Err(Error::InvalidField(format!(
                    "waveform parameter frequency = {} out of range",
                    w.frequency
                )));
            }
            let two_d = grid.dimension() == 2;
            Field::from_fn(grid, |[x, y]| {
                let k = w.frequency * std::f64::consts::PI;
                let mut v = (k * x + w.phase).cos();
                if two_d {
                    v *= (k * y).cos();
                }
                w.base + w.amplitude * v
            })
        }
        CoefficientSpec::Bump(b) => {
            finite("base", b.base)?;
            finite("center", b.center)?;
            finite("amplitude", b.amplitude)?;
            if !(b.width.is_finite() && b.width > 0.0) {
                return Err(Error::InvalidField(format!(
                    "waveform parameter width = {} out of range",
                    b.width
                )));
            }
            let two_d = grid.dimension() == 2;
            let cy = match b.center_y {
                Some(c) => {
                    finite("center_y", c)?;
                    c
                }
                None if two_d => grid.extent()[1] / 2.0,
                None => 0.0,
            };
            Field::from_fn(grid, |[x, y]| {
                let mut r2 = (x - b.center).powi(2);
                if two_d {
                    r2 += (y - cy).powi(2);
                }
                b.base + b.amplitude * (-r2 / (2.0 * b.width * b.width)).exp()
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_everywhere() {
        let g = Grid::rectangle(1.0, 2.0, 4, 5).unwrap();
        let f = sample_field(&CoefficientSpec::Constant(1.0), &g).unwrap();
        assert!(f.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn cosine_on_five_nodes() {
        let g = Grid::interval(1.0, 5).unwrap();
        let spec = CoefficientSpec::Cosine(CosineWave { base: 1.0, amplitude: 0.1, frequency: 1.0, phase: 0.0 });
        let f = sample_field(&spec, &g).unwrap();
        let c = (std::f64::consts::PI / 4.0).cos();
        let want = [1.1, 1.0 + 0.1 * c, 1.0, 1.0 - 0.1 * c, 0.9];
        for (a, b) in f.values().iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn bump_peaks_at_nearest_node() {
        let g = Grid::interval(1.0, 12).unwrap();
        let spec = CoefficientSpec::Bump(GaussianBump {
            base: 0.0,
            center: 0.5,
            center_y: None,
            amplitude: 0.2,
            width: 0.1,
        });
        let f = sample_field(&spec, &g).unwrap();
        let (imax, _) = f
            .values()
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        let nearest = (0..g.len())
            .min_by(|&a, &b| {
                let da = (g.coordinates(a)[0] - 0.5).abs();
                let db = (g.coordinates(b)[0] - 0.5).abs();
                da.partial_cmp(&db).unwrap()
            })
            .unwrap();
        // 12 nodes: two nodes are equally near; either is acceptable as long as value matches
        let x = g.coordinates(imax)[0];
        let scalar = 0.2 * (-(x - 0.5f64).powi(2) / 0.02).exp();
        assert!((f[imax] - scalar).abs() < 1e-15);
        assert!(((g.coordinates(nearest)[0] - 0.5).abs() - (x - 0.5).abs()).abs() < 1e-15);
    }

    #[test]
    fn table_and_parameter_errors() {
        let g = Grid::interval(1.0, 4).unwrap();
        assert!(sample_field(&CoefficientSpec::Table(vec![1.0; 3]), &g).is_err());
        assert!(sample_field(&CoefficientSpec::Table(vec![1.0; 4]), &g).is_ok());
        let bad = CoefficientSpec::Bump(GaussianBump {
            base: 0.0,
            center: 0.5,
            center_y: None,
            amplitude: 1.0,
            width: 0.0,
        });
        assert!(sample_field(&bad, &g).is_err());
        let bad = CoefficientSpec::Cosine(CosineWave { base: 0.0, amplitude: 1.0, frequency: -1.0, phase: 0.0 });
        assert!(sample_field(&bad, &g).is_err());
    }
}
