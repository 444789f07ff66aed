//! TOML scenario files.
//!
//! A coefficient entry is either a bare number or a table with exactly one
//! of the keys `constant`, `table` (path to a CSV with one value per line,
//! relative to the scenario file), `cosine` or `bump`.
//!
//! ```toml
//! name = "pair"
//! seed = 7
//!
//! [grid]
//! extent = [1.0]
//! nodes = [65]
//!
//! [system]
//! d = [1.0, 0.5]
//! m = [{ cosine = { base = 1.0, amplitude = 0.1 } }, 1.0]
//! a = [[1.0, 0.5], [0.5, 1.0]]
//!
//! [simulate]
//! t_end = 50.0
//! dt = 0.05
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::certify::Cor37Params;
use crate::model::{
    build_grid, sample_field, validate_system, CoefficientSpec, CompetitionSystem, CosineWave, DiffusionForm, Field,
    GaussianBump, Grid, SpeciesState,
};
use crate::steady::random_positive_state;
use crate::stepper::StepControl;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

type SResult<T> = std::result::Result<T, ScenarioError>;

fn invalid(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid(msg.into())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: Option<String>,
    seed: Option<u64>,
    threads: Option<usize>,
    grid: RawGrid,
    system: RawSystem,
    initial: Option<RawInitial>,
    simulate: Option<SimulateSettings>,
    steady: Option<SteadySettings>,
    certify: Option<RawCertify>,
    odecmp: Option<OdecmpSettings>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    dimension: Option<usize>,
    extent: Vec<f64>,
    nodes: Vec<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    k: Option<usize>,
    d: Vec<toml::Value>,
    m: Vec<toml::Value>,
    a: Vec<Vec<toml::Value>>,
    #[serde(default)]
    form: DiffusionForm,
    #[serde(default)]
    normalized: bool,
    #[serde(default)]
    positive_resources: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInitial {
    species: Option<Vec<toml::Value>>,
    random: Option<RandomRange>,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomRange {
    pub lo: f64,
    pub hi: f64,
}

impl Default for RandomRange {
    fn default() -> Self {
        Self { lo: 0.1, hi: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSettings {
    pub t_end: f64,
    pub dt: f64,
    pub dt_min: Option<f64>,
    pub dt_max: Option<f64>,
    /// Number of equally spaced output times after t = 0.
    #[serde(default = "default_outputs")]
    pub outputs: usize,
    #[serde(default = "yes")]
    pub adaptive: bool,
    /// `auto`, `none`, or a functional name (`Q`, `F_k`, `F_A1`..`F_A4`,
    /// `F_deg`, `F_semi`).
    #[serde(default = "auto")]
    pub functional: String,
    /// Write one CSV per snapshot.
    #[serde(default = "yes")]
    pub snapshots: bool,
}

impl SimulateSettings {
    pub fn control(&self) -> StepControl {
        let base = if self.adaptive { StepControl::new(self.dt, self.t_end) } else { StepControl::fixed(self.dt, self.t_end) };
        let lo = self.dt_min.unwrap_or(base.dt_min);
        let hi = self.dt_max.unwrap_or(base.dt_max);
        base.with_bounds(lo, hi).with_uniform_outputs(self.outputs)
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SteadySettings {
    /// Relaxation horizon.
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    /// Number of seeded random starts for the relaxation runs.
    #[serde(default = "default_starts")]
    pub starts: usize,
}

impl Default for SteadySettings {
    fn default() -> Self {
        Self { t_max: default_t_max(), starts: default_starts() }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCertify {
    conditions: Vec<String>,
    i0: Option<usize>,
    ls_samples: Option<usize>,
    eps_cap: Option<f64>,
    cor37: Option<RawCor37>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCor37 {
    a_tilde: [[f64; 2]; 2],
    m_tilde: [f64; 2],
    eps: [f64; 2],
    psi: toml::Value,
    f: [toml::Value; 2],
}

#[derive(Debug, Clone)]
pub struct CertifySettings {
    pub conditions: Vec<String>,
    pub i0: Option<usize>,
    pub ls_samples: usize,
    pub eps_cap: f64,
    pub cor37: Option<Cor37Params>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OdecmpSettings {
    pub t_end: f64,
    pub dt: f64,
    #[serde(default = "default_outputs")]
    pub outputs: usize,
    /// Initial bounds; default to the extrema of the initial data.
    pub upper: Option<Vec<f64>>,
    pub lower: Option<Vec<f64>>,
    /// Also run the PDE on the same fixed-step schedule and check the sandwich.
    #[serde(default)]
    pub sandwich: bool,
    #[serde(default = "default_sandwich_tol")]
    pub sandwich_tol: f64,
}

impl OdecmpSettings {
    pub fn control(&self) -> StepControl {
        StepControl::fixed(self.dt, self.t_end).with_uniform_outputs(self.outputs)
    }
}

fn default_outputs() -> usize {
    20
}
fn default_t_max() -> f64 {
    400.0
}
fn default_starts() -> usize {
    3
}
fn default_sandwich_tol() -> f64 {
    1e-6
}
fn yes() -> bool {
    true
}
fn auto() -> String {
    "auto".into()
}

#[derive(Debug, Clone)]
pub enum InitialData {
    Fields(Vec<Field>),
    Random(RandomRange),
}

/// A parsed and validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub threads: usize,
    pub grid: Grid,
    pub system: CompetitionSystem,
    pub initial: InitialData,
    pub simulate: Option<SimulateSettings>,
    pub steady: SteadySettings,
    pub certify: Option<CertifySettings>,
    pub odecmp: Option<OdecmpSettings>,
}

impl Scenario {
    pub fn load(path: &Path) -> SResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ScenarioError::Io { path: path.display().to_string(), message: e.to_string() })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let fallback = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let mut s = Self::parse(&text, &base)?;
        if s.name.is_empty() {
            s.name = fallback;
        }
        Ok(s)
    }

    /// Parses scenario text; table paths resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> SResult<Self> {
        let raw: RawScenario = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.message().to_string()))?;
        let ctx = Ctx { base: base_dir.to_path_buf() };

        let dim = raw.grid.dimension.unwrap_or(raw.grid.extent.len());
        let grid = build_grid(dim, &raw.grid.extent, &raw.grid.nodes).map_err(|e| invalid(format!("grid: {e}")))?;

        let sys = &raw.system;
        let k = sys.k.unwrap_or(sys.d.len());
        if sys.d.len() != k || sys.m.len() != k || sys.a.len() != k || sys.a.iter().any(|r| r.len() != k) {
            return Err(invalid(format!(
                "system: k = {k} but d has {}, m has {}, a has {} rows",
                sys.d.len(),
                sys.m.len(),
                sys.a.len()
            )));
        }
        let field_list = |vals: &[toml::Value], key: &str| -> SResult<Vec<Field>> {
            vals.iter()
                .enumerate()
                .map(|(i, v)| ctx.field(v, &format!("{key}[{i}]"), &grid))
                .collect()
        };
        let d = field_list(&sys.d, "system.d")?;
        let m = field_list(&sys.m, "system.m")?;
        let a = sys
            .a
            .iter()
            .enumerate()
            .map(|(i, row)| field_list(row, &format!("system.a[{i}]")))
            .collect::<SResult<Vec<_>>>()?;
        let system = CompetitionSystem::new(grid.clone(), d, m, a)
            .map_err(|e| invalid(format!("system: {e}")))?
            .normalized(sys.normalized)
            .requiring_positive_resources(sys.positive_resources)
            .with_form(sys.form);
        let report = validate_system(&system);
        if !report.is_empty() {
            return Err(invalid(format!("system: {report}")));
        }

        let initial = match raw.initial {
            None => InitialData::Random(RandomRange::default()),
            Some(RawInitial { species: Some(_), random: Some(_) }) => {
                return Err(invalid("initial: give either `species` or `random`, not both"))
            }
            Some(RawInitial { species: Some(list), .. }) => {
                if list.len() != k {
                    return Err(invalid(format!("initial.species: expected {k} entries, got {}", list.len())));
                }
                InitialData::Fields(field_list(&list, "initial.species")?)
            }
            Some(RawInitial { random, .. }) => {
                let r = random.unwrap_or_default();
                if !(r.lo > 0.0 && r.hi > r.lo) {
                    return Err(invalid(format!("initial.random: need 0 < lo < hi, got [{}, {}]", r.lo, r.hi)));
                }
                InitialData::Random(r)
            }
        };

        let certify = match raw.certify {
            None => None,
            Some(c) => {
                let cor37 = match c.cor37 {
                    None => None,
                    Some(p) => {
                        if k != 2 {
                            return Err(invalid("certify.cor37: requires k = 2"));
                        }
                        let params = Cor37Params {
                            a_tilde: p.a_tilde,
                            m_tilde: p.m_tilde,
                            eps: p.eps,
                            psi: ctx.field(&p.psi, "certify.cor37.psi", &grid)?,
                            f: [
                                ctx.field(&p.f[0], "certify.cor37.f[0]", &grid)?,
                                ctx.field(&p.f[1], "certify.cor37.f[1]", &grid)?,
                            ],
                            d: [system.d(0).clone(), system.d(1).clone()],
                        };
                        check_cor37_matches(&params, &system)?;
                        Some(params)
                    }
                };
                Some(CertifySettings {
                    conditions: c.conditions,
                    i0: c.i0,
                    ls_samples: c.ls_samples.unwrap_or(9),
                    eps_cap: c.eps_cap.unwrap_or(1.0),
                    cor37,
                })
            }
        };

        if let Some(o) = &raw.odecmp {
            for (key, v) in [("odecmp.upper", &o.upper), ("odecmp.lower", &o.lower)] {
                if let Some(v) = v {
                    if v.len() != k {
                        return Err(invalid(format!("{key}: expected {k} entries, got {}", v.len())));
                    }
                }
            }
        }

        Ok(Scenario {
            name: raw.name.unwrap_or_default(),
            seed: raw.seed.unwrap_or(0),
            threads: raw.threads.unwrap_or(1).max(1),
            grid,
            system,
            initial,
            simulate: raw.simulate,
            steady: raw.steady.unwrap_or_default(),
            certify,
            odecmp: raw.odecmp,
        })
    }

    pub fn k(&self) -> usize {
        self.system.k()
    }

    /// Initial state; random data is drawn from the scenario seed.
    pub fn initial_state(&self) -> crate::Result<SpeciesState> {
        match &self.initial {
            InitialData::Fields(f) => SpeciesState::new(0.0, f.clone()),
            InitialData::Random(r) => random_positive_state(&self.grid, self.k(), self.seed, r.lo, r.hi),
        }
    }
}

/// The `[certify.cor37]` parameters must describe the `[system]` resources
/// and competition coefficients.
fn check_cor37_matches(p: &Cor37Params, system: &CompetitionSystem) -> SResult<()> {
    let built = p.system(system.grid()).map_err(|e| invalid(format!("certify.cor37: {e}")))?;
    let close = |a: &Field, b: &Field| a.values().iter().zip(b.values()).all(|(x, y)| (x - y).abs() <= 1e-12 * (1.0 + y.abs()));
    for i in 0..2 {
        if !close(built.m(i), system.m(i)) {
            return Err(invalid(format!("certify.cor37: m̃ ψ + ε f differs from system.m[{i}]")));
        }
        for j in 0..2 {
            if !close(built.a(i, j), system.a(i, j)) {
                return Err(invalid(format!("certify.cor37: ã ψ differs from system.a[{i}][{j}]")));
            }
        }
    }
    Ok(())
}

struct Ctx {
    base: PathBuf,
}

impl Ctx {
    fn field(&self, v: &toml::Value, key: &str, grid: &Grid) -> SResult<Field> {
        let spec = self.spec(v, key)?;
        sample_field(&spec, grid).map_err(|e| invalid(format!("{key}: {e}")))
    }

    fn spec(&self, v: &toml::Value, key: &str) -> SResult<CoefficientSpec> {
        use toml::Value;
        let number = |v: &Value| match v {
            Value::Float(x) => Some(*x),
            Value::Integer(i) => Some(*i as f64),
            _ => None,
        };
        if let Some(x) = number(v) {
            return Ok(CoefficientSpec::Constant(x));
        }
        let Value::Table(t) = v else {
            return Err(invalid(format!("{key}: expected a number or a table")));
        };
        if t.len() != 1 {
            return Err(invalid(format!("{key}: expected exactly one of constant, table, cosine, bump")));
        }
        let (kind, inner) = t.iter().next().expect("one entry");
        match kind.as_str() {
            "constant" => number(inner)
                .map(CoefficientSpec::Constant)
                .ok_or_else(|| invalid(format!("{key}.constant: expected a number"))),
            "table" => {
                let Value::String(p) = inner else {
                    return Err(invalid(format!("{key}.table: expected a path")));
                };
                self.table(p, key).map(CoefficientSpec::Table)
            }
            "cosine" => inner
                .clone()
                .try_into::<CosineWave>()
                .map(CoefficientSpec::Cosine)
                .map_err(|e| invalid(format!("{key}.cosine: {}", e.message()))),
            "bump" => inner
                .clone()
                .try_into::<GaussianBump>()
                .map(CoefficientSpec::Bump)
                .map_err(|e| invalid(format!("{key}.bump: {}", e.message()))),
            other => Err(invalid(format!("{key}: unknown coefficient kind `{other}`"))),
        }
    }

    fn table(&self, rel: &str, key: &str) -> SResult<Vec<f64>> {
        let path = self.base.join(rel);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| ScenarioError::Io { path: path.display().to_string(), message: e.to_string() })?;
        text.lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .enumerate()
            .map(|(i, l)| {
                l.parse::<f64>()
                    .map_err(|_| invalid(format!("{key}.table: line {} of {} is not a number: {l}", i + 1, path.display())))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[grid]
extent = [1.0]
nodes = [5]

[system]
d = [1.0]
m = [{ cosine = { base = 1.0, amplitude = 0.5 } }]
a = [[1]]
"#;

    #[test]
    fn minimal_scenario() {
        let s = Scenario::parse(MINIMAL, Path::new(".")).unwrap();
        assert_eq!(s.k(), 1);
        assert_eq!(s.system.m(0).values()[0], 1.5);
        assert!(s.system.a(0, 0).values().iter().all(|&v| v == 1.0));
        assert!(matches!(s.initial, InitialData::Random(_)));
        let a = s.initial_state().unwrap();
        let b = s.initial_state().unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn missing_grid_is_named() {
        let text = MINIMAL.replace("[grid]\nextent = [1.0]\nnodes = [5]\n", "");
        let err = Scenario::parse(&text, Path::new(".")).unwrap_err().to_string();
        assert!(err.contains("grid"), "{err}");
    }

    #[test]
    fn table_is_read_relative_to_file() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("m.csv"), "1\n2\n3\n2\n1\n").unwrap();
        let text = MINIMAL.replace(
            "m = [{ cosine = { base = 1.0, amplitude = 0.5 } }]",
            "m = [{ table = \"m.csv\" }]",
        );
        let path = dir.path().join("s.toml");
        std::fs::write(&path, text).unwrap();
        let s = Scenario::load(&path).unwrap();
        assert_eq!(s.system.m(0).values(), &[1.0, 2.0, 3.0, 2.0, 1.0]);
        assert_eq!(s.name, "s");
    }

    #[test]
    fn bad_entries_rejected() {
        for bad in ["m = [\"x\"]", "m = [{ constant = 1.0, table = \"a\" }]", "m = [{ wave = 1.0 }]", "m = [1.0, 2.0]"] {
            let text = MINIMAL.replace("m = [{ cosine = { base = 1.0, amplitude = 0.5 } }]", bad);
            assert!(Scenario::parse(&text, Path::new(".")).is_err(), "{bad}");
        }
    }

    #[test]
    fn validation_runs() {
        let text = MINIMAL.replace("d = [1.0]", "d = [-1.0]");
        let err = Scenario::parse(&text, Path::new(".")).unwrap_err();
        assert!(matches!(err, ScenarioError::Invalid(_)), "{err}");
    }
}
