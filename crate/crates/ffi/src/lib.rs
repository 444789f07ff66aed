//! C interface to the competition-diffusion solver.
//!
//! Grids and systems are opaque handles owned by the caller and released
//! with the matching `_free` function. Every fallible call returns an
//! [`LvStatus`]; the message of the last failure on the calling thread is
//! available through [`lv_last_error`].
//!
//! Species data crosses the boundary as `k * n` doubles, species-major
//! (all nodes of species 1, then species 2, ...). Matrices are row-major.

use std::cell::RefCell;
use std::ffi::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};

use lvlab::certify::{diagonal_lyapunov_search, solve_bounds_f1};
use lvlab::model::DiffusionForm;
use lvlab::steady::{default_guess, newton_equilibrium};
use lvlab::stepper::{simulate, StepControl};
use lvlab::{CompetitionSystem, Error, Field, Grid, SpeciesState};

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LvStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    SolverFailure = 3,
    Panic = 4,
}

/// Which coefficient [`lv_system_set_field`] replaces.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LvCoefficient {
    Diffusion = 0,
    Resource = 1,
    Competition = 2,
}

/// Opaque grid handle.
pub struct LvGrid {
    grid: Grid,
}

/// Opaque system handle. Coefficients are kept as raw nodal values and
/// validated when a solver runs.
#[derive(Clone)]
pub struct LvSystem {
    grid: Grid,
    k: usize,
    d: Vec<Vec<f64>>,
    m: Vec<Vec<f64>>,
    a: Vec<Vec<Vec<f64>>>,
    divergence: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

struct Failure(LvStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::InvalidArgument(_)
            | Error::InvalidSystem(_)
            | Error::InvalidGrid(_)
            | Error::InvalidField(_)
            | Error::GridMismatch
            | Error::DimensionMismatch { .. }
            | Error::NonPositive { .. }
            | Error::NotApplicable(_) => LvStatus::InvalidArgument,
            _ => LvStatus::SolverFailure,
        };
        Failure(status, e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(LvStatus::InvalidArgument, msg.into())
}

fn null(what: &str) -> Failure {
    Failure(LvStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> LvStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            LvStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            LvStatus::Panic
        }
    }
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn write<T>(p: *mut T, v: T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    p.write(v);
    Ok(())
}

fn rows(flat: &[f64], k: usize) -> Vec<Vec<f64>> {
    flat.chunks(k).map(|r| r.to_vec()).collect()
}

impl LvSystem {
    fn build(&self) -> Result<CompetitionSystem, Failure> {
        let g = &self.grid;
        let field = |v: &Vec<f64>| Field::new(g, v.clone());
        let d = self.d.iter().map(field).collect::<lvlab::Result<Vec<_>>>()?;
        let m = self.m.iter().map(field).collect::<lvlab::Result<Vec<_>>>()?;
        let a = self
            .a
            .iter()
            .map(|row| row.iter().map(field).collect::<lvlab::Result<Vec<_>>>())
            .collect::<lvlab::Result<Vec<_>>>()?;
        let form = if self.divergence { DiffusionForm::Divergence } else { DiffusionForm::Laplacian };
        let sys = CompetitionSystem::new(g.clone(), d, m, a)?.with_form(form);
        sys.ensure_valid()?;
        Ok(sys)
    }

    fn state(&self, flat: &[f64], time: f64) -> Result<SpeciesState, Failure> {
        let n = self.grid.len();
        let fields = flat
            .chunks(n)
            .map(|c| Field::new(&self.grid, c.to_vec()))
            .collect::<lvlab::Result<Vec<_>>>()?;
        Ok(SpeciesState::new(time, fields)?)
    }

    fn flatten(state: &SpeciesState, out: &mut [f64]) {
        let mut pos = 0;
        for i in 0..state.k() {
            let v = state.species(i).values();
            out[pos..pos + v.len()].copy_from_slice(v);
            pos += v.len();
        }
    }
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `cap - 1` bytes) and returns the full message length.
/// Pass a null `buf` to query the length.
///
/// # Safety
/// `buf` must be null or valid for `cap` bytes.
#[no_mangle]
pub unsafe extern "C" fn lv_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && cap > 0 {
            let n = msg.len().min(cap - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Creates a uniform grid on `[0, extent[0]] (x [0, extent[1]])`.
/// `dimension` is 1 or 2; `extent` and `nodes` hold `dimension` entries.
///
/// # Safety
/// `extent` and `nodes` must be valid for `dimension` elements and `out`
/// must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lv_grid_new(
    dimension: usize,
    extent: *const f64,
    nodes: *const usize,
    out: *mut *mut LvGrid,
) -> LvStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if !(1..=2).contains(&dimension) {
            return Err(invalid(format!("dimension must be 1 or 2, got {dimension}")));
        }
        let extent = slice(extent, dimension, "extent")?;
        if nodes.is_null() {
            return Err(null("nodes"));
        }
        let nodes = std::slice::from_raw_parts(nodes, dimension);
        let grid = lvlab::model::build_grid(dimension, extent, nodes)?;
        write(out, Box::into_raw(Box::new(LvGrid { grid })), "out")
    })
}

/// # Safety
/// `grid` must be null or a handle from [`lv_grid_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lv_grid_free(grid: *mut LvGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

/// Number of nodes, 0 for a null handle.
///
/// # Safety
/// `grid` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lv_grid_node_count(grid: *const LvGrid) -> usize {
    grid.as_ref().map_or(0, |g| g.grid.len())
}

/// Creates a `k`-species system with constant coefficients: `d` and `m`
/// hold `k` values, `a` is the row-major `k x k` competition matrix. A zero
/// diffusion rate makes the species immobile. `divergence` selects the
/// form `div(d grad u)` instead of `d Δu`.
///
/// # Safety
/// `grid` must be a live handle, the arrays valid for the stated lengths
/// and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lv_system_new_constant(
    grid: *const LvGrid,
    k: usize,
    d: *const f64,
    m: *const f64,
    a: *const f64,
    divergence: bool,
    out: *mut *mut LvSystem,
) -> LvStatus {
    guard(|| {
        let grid = grid.as_ref().ok_or_else(|| null("grid"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        if k == 0 {
            return Err(invalid("k must be positive"));
        }
        let (d, m, a) = (slice(d, k, "d")?, slice(m, k, "m")?, slice(a, k * k, "a")?);
        let n = grid.grid.len();
        let sys = LvSystem {
            grid: grid.grid.clone(),
            k,
            d: d.iter().map(|&v| vec![v; n]).collect(),
            m: m.iter().map(|&v| vec![v; n]).collect(),
            a: rows(a, k).iter().map(|r| r.iter().map(|&v| vec![v; n]).collect()).collect(),
            divergence,
        };
        sys.build()?;
        write(out, Box::into_raw(Box::new(sys)), "out")
    })
}

/// Replaces one coefficient by nodal values (`len` must equal the node
/// count). `j` is only read for [`LvCoefficient::Competition`].
///
/// # Safety
/// `system` must be a live handle and `values` valid for `len` elements.
#[no_mangle]
pub unsafe extern "C" fn lv_system_set_field(
    system: *mut LvSystem,
    which: LvCoefficient,
    i: usize,
    j: usize,
    values: *const f64,
    len: usize,
) -> LvStatus {
    guard(|| {
        let sys = system.as_mut().ok_or_else(|| null("system"))?;
        let n = sys.grid.len();
        if len != n {
            return Err(invalid(format!("expected {n} values, got {len}")));
        }
        if i >= sys.k || (which == LvCoefficient::Competition && j >= sys.k) {
            return Err(invalid(format!("species index out of range for k = {}", sys.k)));
        }
        let v = slice(values, len, "values")?.to_vec();
        let mut next = sys.clone();
        match which {
            LvCoefficient::Diffusion => next.d[i] = v,
            LvCoefficient::Resource => next.m[i] = v,
            LvCoefficient::Competition => next.a[i][j] = v,
        }
        next.build()?;
        *sys = next;
        Ok(())
    })
}

/// # Safety
/// `system` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lv_system_free(system: *mut LvSystem) {
    if !system.is_null() {
        drop(Box::from_raw(system));
    }
}

/// Number of species, 0 for a null handle.
///
/// # Safety
/// `system` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lv_system_species_count(system: *const LvSystem) -> usize {
    system.as_ref().map_or(0, |s| s.k)
}

/// Integrates from `initial` (k * n values) over `[0, t_end]` with step
/// `dt`, adaptive or fixed, and writes the final state to `out_state`
/// and the reached time to `out_time`.
///
/// # Safety
/// `system` must be a live handle; `initial` and `out_state` valid for
/// `k * n` doubles; `out_time` valid.
#[no_mangle]
pub unsafe extern "C" fn lv_simulate(
    system: *const LvSystem,
    initial: *const f64,
    t_end: f64,
    dt: f64,
    adaptive: bool,
    out_state: *mut f64,
    out_time: *mut f64,
) -> LvStatus {
    guard(|| {
        let sys = system.as_ref().ok_or_else(|| null("system"))?;
        let len = sys.k * sys.grid.len();
        let init = sys.state(slice(initial, len, "initial")?, 0.0)?;
        let out = slice_mut(out_state, len, "out_state")?;
        if out_time.is_null() {
            return Err(null("out_time"));
        }
        let control = if adaptive { StepControl::new(dt, t_end) } else { StepControl::fixed(dt, t_end) };
        let cs = sys.build()?;
        let traj = simulate(&cs, &init, &control, &mut [])?;
        if !traj.status.is_ok() {
            return Err(Failure(LvStatus::SolverFailure, format!("run stopped: {:?}", traj.status)));
        }
        let last = traj.last();
        LvSystem::flatten(last, out);
        write(out_time, last.time, "out_time")
    })
}

/// Newton iteration for a positive steady state. `guess` may be null for
/// the default initial guess. Writes `k * n` values and the sup-norm
/// residual.
///
/// # Safety
/// `system` must be a live handle; `guess` null or valid for `k * n`
/// doubles; `out_state` valid for `k * n`; `out_residual` valid.
#[no_mangle]
pub unsafe extern "C" fn lv_newton_equilibrium(
    system: *const LvSystem,
    guess: *const f64,
    out_state: *mut f64,
    out_residual: *mut f64,
) -> LvStatus {
    guard(|| {
        let sys = system.as_ref().ok_or_else(|| null("system"))?;
        let len = sys.k * sys.grid.len();
        let out = slice_mut(out_state, len, "out_state")?;
        if out_residual.is_null() {
            return Err(null("out_residual"));
        }
        let cs = sys.build()?;
        let start = if guess.is_null() { default_guess(&cs)? } else { sys.state(slice(guess, len, "guess")?, 0.0)? };
        let eq = newton_equilibrium(&cs, &start)?;
        LvSystem::flatten(&eq.state(), out);
        write(out_residual, eq.residual_sup, "out_residual")
    })
}

/// Constant equilibrium bounds for a unit-diagonal matrix `a` (row-major
/// `k x k`) and resource extrema. `out_feasible` is set to whether the
/// bounds are positive and ordered.
///
/// # Safety
/// Arrays must be valid for the stated lengths; output pointers valid.
#[no_mangle]
pub unsafe extern "C" fn lv_solve_bounds_f1(
    k: usize,
    a: *const f64,
    m_minus: *const f64,
    m_plus: *const f64,
    out_cbar: *mut f64,
    out_cunder: *mut f64,
    out_feasible: *mut bool,
) -> LvStatus {
    guard(|| {
        if k == 0 {
            return Err(invalid("k must be positive"));
        }
        let a = rows(slice(a, k * k, "a")?, k);
        let cert = solve_bounds_f1(&a, slice(m_minus, k, "m_minus")?, slice(m_plus, k, "m_plus")?)?;
        slice_mut(out_cbar, k, "out_cbar")?.copy_from_slice(&cert.cbar);
        slice_mut(out_cunder, k, "out_cunder")?.copy_from_slice(&cert.cunder);
        write(out_feasible, cert.feasible, "out_feasible")
    })
}

/// Searches a positive diagonal `q` with `q M + Mᵀ q` positive definite.
/// Writes `q` (normalized to sum `k`), the smallest eigenvalue of the
/// symmetric part and whether it clears `tolerance`. An infeasible result
/// is not a proof that no such `q` exists.
///
/// # Safety
/// `m` must be valid for `k * k` doubles, `out_q` for `k`; other outputs
/// valid.
#[no_mangle]
pub unsafe extern "C" fn lv_diagonal_lyapunov_search(
    k: usize,
    m: *const f64,
    tolerance: f64,
    out_q: *mut f64,
    out_lambda_min: *mut f64,
    out_feasible: *mut bool,
) -> LvStatus {
    guard(|| {
        if k == 0 {
            return Err(invalid("k must be positive"));
        }
        let m = rows(slice(m, k * k, "m")?, k);
        let cert = diagonal_lyapunov_search(&m, tolerance)?;
        slice_mut(out_q, k, "out_q")?.copy_from_slice(&cert.q);
        write(out_lambda_min, cert.lambda_min, "out_lambda_min")?;
        write(out_feasible, cert.feasible, "out_feasible")
    })
}
