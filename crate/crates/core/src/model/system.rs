use std::fmt;

use serde::{Deserialize, Serialize};

use super::field::Field;
use super::grid::Grid;
use crate::error::{Error, Result};

/// How the diffusion term is written: `d(x) Δu` or `div(d(x) ∇u)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiffusionForm {
    #[default]
    Laplacian,
    Divergence,
}

/// Full problem specification for k competing species on one grid.
#[derive(Debug, Clone)]
pub struct CompetitionSystem {
    grid: Grid,
    d: Vec<Field>,
    m: Vec<Field>,
    a: Vec<Field>,
    normalized: bool,
    positive_resources: bool,
    form: DiffusionForm,
}

impl CompetitionSystem {
    /// Structural checks only (shapes and grids); semantic checks live in
    /// [`validate_system`].
    pub fn new(grid: Grid, d: Vec<Field>, m: Vec<Field>, a: Vec<Vec<Field>>) -> Result<Self> {
        let k = d.len();
        if k == 0 {
            return Err(Error::InvalidSystem("at least one species required".into()));
        }
        if m.len() != k {
            return Err(Error::DimensionMismatch { what: "resource fields", expected: k, got: m.len() });
        }
        if a.len() != k {
            return Err(Error::DimensionMismatch { what: "competition rows", expected: k, got: a.len() });
        }
        for row in &a {
            if row.len() != k {
                return Err(Error::DimensionMismatch { what: "competition columns", expected: k, got: row.len() });
            }
        }
        let a: Vec<Field> = a.into_iter().flatten().collect();
        for f in d.iter().chain(&m).chain(&a) {
            f.check_grid(&grid)?;
        }
        Ok(Self {
            grid,
            d,
            m,
            a,
            normalized: false,
            positive_resources: false,
            form: DiffusionForm::Laplacian,
        })
    }

    /// Constant diffusion rates and competition matrix with arbitrary resources.
    pub fn with_constant_coefficients(grid: Grid, d: &[f64], m: Vec<Field>, a: &[Vec<f64>]) -> Result<Self> {
        let df = d.iter().map(|&v| Field::constant(&grid, v)).collect();
        let af = a
            .iter()
            .map(|row| row.iter().map(|&v| Field::constant(&grid, v)).collect())
            .collect();
        Self::new(grid, df, m, af)
    }

    /// Everything constant.
    pub fn constant(grid: Grid, d: &[f64], m: &[f64], a: &[Vec<f64>]) -> Result<Self> {
        let mf = m.iter().map(|&v| Field::constant(&grid, v)).collect();
        Self::with_constant_coefficients(grid, d, mf, a)
    }

    pub fn normalized(mut self, on: bool) -> Self {
        self.normalized = on;
        self
    }

    pub fn requiring_positive_resources(mut self, on: bool) -> Self {
        self.positive_resources = on;
        self
    }

    pub fn with_form(mut self, form: DiffusionForm) -> Self {
        self.form = form;
        self
    }

    pub fn k(&self) -> usize {
        self.d.len()
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn d(&self, i: usize) -> &Field {
        &self.d[i]
    }

    pub fn m(&self, i: usize) -> &Field {
        &self.m[i]
    }

    pub fn a(&self, i: usize, j: usize) -> &Field {
        &self.a[i * self.k() + j]
    }

    pub fn form(&self) -> DiffusionForm {
        self.form
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn requires_positive_resources(&self) -> bool {
        self.positive_resources
    }

    /// A species is degenerate (immobile) when its diffusion field is identically 0.
    pub fn is_degenerate(&self, i: usize) -> bool {
        self.d[i].is_identically_zero()
    }

    pub fn has_degenerate_species(&self) -> bool {
        (0..self.k()).any(|i| self.is_degenerate(i))
    }

    pub fn d_is_constant(&self, i: usize) -> bool {
        self.d[i].is_constant(0.0)
    }

    pub fn m_is_constant(&self, i: usize) -> bool {
        self.m[i].is_constant(0.0)
    }

    pub fn a_is_constant(&self, i: usize, j: usize) -> bool {
        self.a(i, j).is_constant(0.0)
    }

    /// The competition matrix when every a_ij is spatially constant.
    pub fn constant_matrix(&self) -> Option<Vec<Vec<f64>>> {
        let k = self.k();
        let mut out = vec![vec![0.0; k]; k];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                let f = self.a(i, j);
                if !f.is_constant(0.0) {
                    return None;
                }
                *v = f[0];
            }
        }
        Some(out)
    }

    /// `m_i - Σ_j a_ij u_j` at one node.
    pub fn growth_rate(&self, i: usize, state: &[&[f64]], node: usize) -> f64 {
        let mut r = self.m[i][node];
        for (j, u) in state.iter().enumerate() {
            r -= self.a(i, j)[node] * u[node];
        }
        r
    }

    /// Restriction to a subset of species (e.g. the surviving block).
    pub fn sub_system(&self, species: &[usize]) -> Result<Self> {
        if species.is_empty() || species.iter().any(|&s| s >= self.k()) {
            return Err(Error::InvalidArgument(format!("species selection {species:?} out of range")));
        }
        let d = species.iter().map(|&i| self.d[i].clone()).collect();
        let m = species.iter().map(|&i| self.m[i].clone()).collect();
        let a = species
            .iter()
            .map(|&i| species.iter().map(|&j| self.a(i, j).clone()).collect())
            .collect();
        Ok(Self::new(self.grid.clone(), d, m, a)?
            .normalized(self.normalized)
            .requiring_positive_resources(self.positive_resources)
            .with_form(self.form))
    }

    pub fn validate(&self) -> ValidationReport {
        validate_system(self)
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let report = self.validate();
        if report.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidSystem(report.to_string()))
        }
    }
}

/// One violated invariant. Species indices are 0-based internally and
/// printed 1-based.
#[derive(Debug, Clone, PartialEq)]
pub enum Issue {
    NonPositiveDiffusion { species: usize, node: usize, value: f64 },
    NegativeCompetition { i: usize, j: usize, node: usize, value: f64 },
    NonPositiveSelfCompetition { i: usize, node: usize, value: f64 },
    NonPositiveResource { species: usize, node: usize, value: f64 },
    DiagonalNotNormalized { i: usize, node: usize, value: f64 },
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Issue::NonPositiveDiffusion { species, node, value } => write!(
                f,
                "non-positive diffusion for non-degenerate species {} (node {node}, value {value})",
                species + 1
            ),
            Issue::NegativeCompetition { i, j, node, value } => write!(
                f,
                "negative competition coefficient ({},{}) (node {node}, value {value})",
                i + 1,
                j + 1
            ),
            Issue::NonPositiveSelfCompetition { i, node, value } => write!(
                f,
                "non-positive self competition ({},{}) (node {node}, value {value})",
                i + 1,
                i + 1
            ),
            Issue::NonPositiveResource { species, node, value } => write!(
                f,
                "non-positive resource for species {} (node {node}, value {value})",
                species + 1
            ),
            Issue::DiagonalNotNormalized { i, node, value } => write!(
                f,
                "diagonal not normalized ({},{}) (node {node}, value {value})",
                i + 1,
                i + 1
            ),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.issues.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msgs: Vec<String> = self.issues.iter().map(|i| i.to_string()).collect();
        write!(f, "{}", msgs.join("; "))
    }
}

fn first(field: &Field, bad: impl Fn(f64) -> bool) -> Option<(usize, f64)> {
    field.values().iter().copied().enumerate().find(|&(_, v)| bad(v))
}

pub fn validate_system(system: &CompetitionSystem) -> ValidationReport {
    let k = system.k();
    let mut issues = Vec::new();
    for i in 0..k {
        if !system.is_degenerate(i) {
            if let Some((node, value)) = first(system.d(i), |v| !(v > 0.0)) {
                issues.push(Issue::NonPositiveDiffusion { species: i, node, value });
            }
        }
        if system.requires_positive_resources() {
            if let Some((node, value)) = first(system.m(i), |v| !(v > 0.0)) {
                issues.push(Issue::NonPositiveResource { species: i, node, value });
            }
        }
        for j in 0..k {
            let a = system.a(i, j);
            if i == j {
                if let Some((node, value)) = first(a, |v| !(v > 0.0)) {
                    issues.push(Issue::NonPositiveSelfCompetition { i, node, value });
                }
                if system.is_normalized() {
                    if let Some((node, value)) = first(a, |v| v != 1.0) {
                        issues.push(Issue::DiagonalNotNormalized { i, node, value });
                    }
                }
            } else if let Some((node, value)) = first(a, |v| v < 0.0) {
                issues.push(Issue::NegativeCompetition { i, j, node, value });
            }
        }
    }
    ValidationReport { issues }
}

/// Densities of all k species at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeciesState {
    pub time: f64,
    pub fields: Vec<Field>,
}

impl SpeciesState {
    pub fn new(time: f64, fields: Vec<Field>) -> Result<Self> {
        if let Some(first) = fields.first() {
            let id = first.grid_id();
            if fields.iter().any(|f| f.grid_id() != id) {
                return Err(Error::GridMismatch);
            }
        }
        for (i, f) in fields.iter().enumerate() {
            if let Some((node, value)) = f.values().iter().copied().enumerate().find(|&(_, v)| v < 0.0) {
                return Err(Error::InvalidField(format!(
                    "species {} has negative density {value} at node {node}",
                    i + 1
                )));
            }
        }
        Ok(Self { time, fields })
    }

    pub fn constant(grid: &Grid, values: &[f64]) -> Result<Self> {
        Self::new(0.0, values.iter().map(|&v| Field::constant(grid, v)).collect())
    }

    pub fn k(&self) -> usize {
        self.fields.len()
    }

    pub fn species(&self, i: usize) -> &Field {
        &self.fields[i]
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        self.fields.iter().map(|f| f.values()).collect()
    }

    pub fn check_against(&self, system: &CompetitionSystem) -> Result<()> {
        if self.k() != system.k() {
            return Err(Error::DimensionMismatch { what: "state species", expected: system.k(), got: self.k() });
        }
        for f in &self.fields {
            f.check_grid(system.grid())?;
        }
        Ok(())
    }

    /// Largest pointwise difference over all species.
    pub fn sup_distance(&self, other: &SpeciesState) -> f64 {
        self.fields
            .iter()
            .zip(&other.fields)
            .map(|(a, b)| a.sup_distance(b))
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid {
        Grid::interval(1.0, 5).unwrap()
    }

    #[test]
    fn degenerate_species_is_legal() {
        let g = grid();
        let s = CompetitionSystem::constant(g, &[0.0, 1.0], &[1.0, 0.6], &[vec![1.0, 0.5], vec![0.5, 1.0]]).unwrap();
        assert!(s.is_degenerate(0));
        assert!(validate_system(&s).is_empty());
    }

    #[test]
    fn negative_competition_reported() {
        let g = grid();
        let mut a12 = vec![0.2; 5];
        a12[3] = -0.1;
        let a = vec![
            vec![Field::constant(&g, 1.0), Field::new(&g, a12).unwrap()],
            vec![Field::constant(&g, 0.3), Field::constant(&g, 1.0)],
        ];
        let s = CompetitionSystem::new(
            g.clone(),
            vec![Field::constant(&g, 1.0); 2],
            vec![Field::constant(&g, 1.0); 2],
            a,
        )
        .unwrap();
        let r = validate_system(&s);
        assert_eq!(r.issues.len(), 1);
        assert!(r.to_string().contains("negative competition coefficient (1,2)"));
    }

    #[test]
    fn normalization_reported() {
        let s = CompetitionSystem::constant(grid(), &[1.0], &[1.0], &[vec![2.0]]).unwrap().normalized(true);
        assert!(validate_system(&s).to_string().contains("diagonal not normalized"));
    }

    #[test]
    fn positive_resources_only_when_required() {
        let s = CompetitionSystem::constant(grid(), &[1.0], &[-1.0], &[vec![1.0]]).unwrap();
        assert!(validate_system(&s).is_empty());
        let s = s.requiring_positive_resources(true);
        assert!(validate_system(&s).to_string().contains("non-positive resource"));
    }

    #[test]
    fn structural_errors() {
        let g = grid();
        let other = Grid::interval(2.0, 5).unwrap();
        let r = CompetitionSystem::new(
            g.clone(),
            vec![Field::constant(&other, 1.0)],
            vec![Field::constant(&g, 1.0)],
            vec![vec![Field::constant(&g, 1.0)]],
        );
        assert_eq!(r.unwrap_err(), Error::GridMismatch);
        let r = CompetitionSystem::constant(g, &[1.0, 1.0], &[1.0], &[vec![1.0]]);
        assert!(r.is_err());
    }

    #[test]
    fn state_rejects_negative_values() {
        let g = grid();
        assert!(SpeciesState::constant(&g, &[-0.1]).is_err());
        assert!(SpeciesState::constant(&g, &[0.0, 1.0]).is_ok());
    }
}
