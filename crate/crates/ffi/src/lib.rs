//! C ABI for ikdiff.
//!
//! Objects are opaque handles created by `*_new`/`*_load` functions and
//! released with the matching `*_free`. Every fallible call returns an
//! [`IkStatus`]; on failure the message is available from
//! [`ik_last_error_message`] on the same thread until the next failing call.
//! Arrays are passed as pointer plus length; lengths are checked against the
//! layout and mismatches return [`IkStatus::Dimension`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ikdiff::objectives::{ObjectiveFile, ObjectiveTerm};
use ikdiff::planner::PlanOptions;
use ikdiff::{IkError, ObjectiveSpec, SolveReport, SolverConfig, StopReason};

/// Skeleton handle.
pub struct IkSkeleton(ikdiff::Skeleton);

/// Controlled degrees of freedom of one skeleton.
pub struct IkLayout(ikdiff::DofLayout);

/// Weighted list of objective terms, edited in place between solves.
pub struct IkObjective(Vec<ObjectiveTerm>);

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IkStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    Io = 4,
    UnknownBone = 5,
    Dimension = 6,
    InvalidSkeleton = 7,
    InvalidObjective = 8,
    InvalidConfig = 9,
    NonFinite = 10,
    Panic = 99,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IkStopReason {
    Threshold = 0,
    MaxIterations = 1,
    TimeBudget = 2,
}

/// Solver settings; obtain defaults from [`ik_solver_config_default`].
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct IkSolverConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub max_iterations: u32,
    pub loss_threshold: f64,
    /// Milliseconds; zero or negative disables the time budget.
    pub time_budget_ms: f64,
    pub cautious: bool,
    pub cautious_scaling: bool,
}

#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct IkSolveResult {
    pub final_loss: f64,
    pub iterations: u32,
    pub iteration_limit: u32,
    pub wall_time_ms: f64,
    pub success: bool,
    pub stop_reason: IkStopReason,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(e: &IkError) -> IkStatus {
    match e {
        IkError::Io { .. } | IkError::Output(_) => IkStatus::Io,
        IkError::Parse(_) => IkStatus::Parse,
        IkError::UnknownBone(_) | IkError::BoneIndex { .. } => IkStatus::UnknownBone,
        IkError::Dimension { .. } => IkStatus::Dimension,
        IkError::InvalidBone { .. } | IkError::InvalidSkeleton(_) | IkError::InvalidChain(_) => IkStatus::InvalidSkeleton,
        IkError::InvalidTerm { .. } => IkStatus::InvalidObjective,
        IkError::InvalidConfig(_) => IkStatus::InvalidConfig,
        IkError::NonFinite { .. } | IkError::NonFiniteGradient { .. } => IkStatus::NonFinite,
        IkError::Stage { source, .. } => status_of(source),
        _ => IkStatus::InvalidArgument,
    }
}

struct Failure(IkStatus, String);

impl From<IkError> for Failure {
    fn from(e: IkError) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(IkStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, recording any error or panic for [`ik_last_error_message`].
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> IkStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => IkStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            IkStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn deref_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(IkStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn vec3(p: *const f64, what: &str) -> Result<[f64; 3], Failure> {
    let s = slice(p, 3, what)?;
    Ok([s[0], s[1], s[2]])
}

fn expect_len(expected: usize, actual: usize) -> Result<(), Failure> {
    if expected == actual {
        Ok(())
    } else {
        Err(IkError::Dimension { expected, actual }.into())
    }
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    let out = deref_mut(out, "output handle pointer")?;
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ik_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ik_skeleton_load(path: *const c_char, out: *mut *mut IkSkeleton) -> IkStatus {
    guard(|| {
        let skel = ikdiff::Skeleton::load(c_str(path, "path")?)?;
        store(out, IkSkeleton(skel))
    })
}

/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ik_skeleton_from_json(json: *const c_char, out: *mut *mut IkSkeleton) -> IkStatus {
    guard(|| {
        let skel = ikdiff::Skeleton::from_json(c_str(json, "json")?)?;
        store(out, IkSkeleton(skel))
    })
}

/// The bundled synthetic humanoid upper body.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ik_skeleton_humanoid(out: *mut *mut IkSkeleton) -> IkStatus {
    guard(|| store(out, IkSkeleton(ikdiff::assets::humanoid())))
}

/// # Safety
/// `skel` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ik_skeleton_free(skel: *mut IkSkeleton) {
    free(skel)
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ik_skeleton_bone_count(skel: *const IkSkeleton, out: *mut usize) -> IkStatus {
    guard(|| {
        *deref_mut(out, "out")? = deref(skel, "skeleton")?.0.len();
        Ok(())
    })
}

/// # Safety
/// Pointers must be valid; `name` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ik_skeleton_bone_index(skel: *const IkSkeleton, name: *const c_char, out: *mut usize) -> IkStatus {
    guard(|| {
        let index = deref(skel, "skeleton")?.0.index_of(c_str(name, "name")?)?;
        *deref_mut(out, "out")? = index;
        Ok(())
    })
}

/// Layout over the controlled axes of `names[0..count]`.
///
/// # Safety
/// `names` must point to `count` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn ik_layout_new(
    skel: *const IkSkeleton,
    names: *const *const c_char,
    count: usize,
    out: *mut *mut IkLayout,
) -> IkStatus {
    guard(|| {
        let skel = deref(skel, "skeleton")?;
        let names = slice(names, count, "names")?
            .iter()
            .map(|&n| c_str(n, "bone name"))
            .collect::<Result<Vec<_>, _>>()?;
        store(out, IkLayout(skel.0.dof_layout(&names)?))
    })
}

/// Layout over every controlled axis of the skeleton.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ik_layout_all(skel: *const IkSkeleton, out: *mut *mut IkLayout) -> IkStatus {
    guard(|| {
        let skel = deref(skel, "skeleton")?;
        store(out, IkLayout(ikdiff::DofLayout::all(&skel.0)))
    })
}

/// # Safety
/// `layout` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ik_layout_free(layout: *mut IkLayout) {
    free(layout)
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ik_layout_len(layout: *const IkLayout, out: *mut usize) -> IkStatus {
    guard(|| {
        *deref_mut(out, "out")? = deref(layout, "layout")?.0.len();
        Ok(())
    })
}

/// Copies the lower and upper bounds into arrays of `len` entries.
///
/// # Safety
/// `lower` and `upper` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ik_layout_bounds(layout: *const IkLayout, lower: *mut f64, upper: *mut f64, len: usize) -> IkStatus {
    guard(|| {
        let layout = &deref(layout, "layout")?.0;
        expect_len(layout.len(), len)?;
        slice_mut(lower, len, "lower")?.copy_from_slice(layout.lower());
        slice_mut(upper, len, "upper")?.copy_from_slice(layout.upper());
        Ok(())
    })
}

/// Empty objective; add terms before solving.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ik_objective_new(out: *mut *mut IkObjective) -> IkStatus {
    guard(|| store(out, IkObjective(Vec::new())))
}

/// Objective from the JSON objective-file format, resolved against `skel`
/// and `layout` (the file's own `controlled` list is ignored).
///
/// # Safety
/// Pointers must be valid; `json` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ik_objective_from_json(
    skel: *const IkSkeleton,
    layout: *const IkLayout,
    json: *const c_char,
    out: *mut *mut IkObjective,
) -> IkStatus {
    guard(|| {
        let file = ObjectiveFile::from_json(c_str(json, "json")?)?;
        let spec = file.resolve(&deref(skel, "skeleton")?.0, &deref(layout, "layout")?.0)?;
        store(out, IkObjective(spec.terms().to_vec()))
    })
}

/// # Safety
/// `obj` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ik_objective_free(obj: *mut IkObjective) {
    free(obj)
}

/// # Safety
/// `offset` and `target` must point to 3 doubles.
#[no_mangle]
pub unsafe extern "C" fn ik_objective_add_distance(
    obj: *mut IkObjective,
    weight: f64,
    bone: usize,
    offset: *const f64,
    target: *const f64,
) -> IkStatus {
    guard(|| {
        let term = ObjectiveTerm::distance(weight, bone, vec3(offset, "offset")?, vec3(target, "target")?);
        deref_mut(obj, "objective")?.0.push(term);
        Ok(())
    })
}

/// # Safety
/// `local_axis` and `target_dir` must point to 3 doubles.
#[no_mangle]
pub unsafe extern "C" fn ik_objective_add_look_at(
    obj: *mut IkObjective,
    weight: f64,
    bone: usize,
    local_axis: *const f64,
    target_dir: *const f64,
) -> IkStatus {
    guard(|| {
        let term = ObjectiveTerm::look_at(weight, bone, vec3(local_axis, "local_axis")?, vec3(target_dir, "target_dir")?);
        deref_mut(obj, "objective")?.0.push(term);
        Ok(())
    })
}

/// `mask` entries are treated as booleans (nonzero selects the DOF).
///
/// # Safety
/// `theta_star` and `mask` must hold `len` entries.
#[no_mangle]
pub unsafe extern "C" fn ik_objective_add_known_rotation(
    obj: *mut IkObjective,
    weight: f64,
    theta_star: *const f64,
    mask: *const u8,
    len: usize,
) -> IkStatus {
    guard(|| {
        let star = slice(theta_star, len, "theta_star")?.to_vec();
        let mask = slice(mask, len, "mask")?.iter().map(|&m| m != 0).collect();
        deref_mut(obj, "objective")?.0.push(ObjectiveTerm::known_rotation(weight, star, mask));
        Ok(())
    })
}

/// Smoothness energy of `order` (1, 2 or 3); only meaningful for [`ik_plan`].
///
/// # Safety
/// `obj` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn ik_objective_add_smoothness(obj: *mut IkObjective, weight: f64, order: usize) -> IkStatus {
    guard(|| {
        deref_mut(obj, "objective")?.0.push(ObjectiveTerm::smoothness(weight, order));
        Ok(())
    })
}

/// Moves the target of every distance term; typical per-frame update.
///
/// # Safety
/// `target` must point to 3 doubles.
#[no_mangle]
pub unsafe extern "C" fn ik_objective_set_target(obj: *mut IkObjective, target: *const f64) -> IkStatus {
    guard(|| {
        let t = vec3(target, "target")?;
        for term in &mut deref_mut(obj, "objective")?.0 {
            if let ikdiff::objectives::TermKind::Distance { target, .. } = &mut term.kind {
                *target = t;
            }
        }
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn ik_solver_config_default() -> IkSolverConfig {
    let d = SolverConfig::default();
    IkSolverConfig {
        learning_rate: d.learning_rate,
        beta1: d.beta1,
        beta2: d.beta2,
        epsilon: d.epsilon,
        max_iterations: d.max_iterations as u32,
        loss_threshold: d.loss_threshold,
        time_budget_ms: 0.0,
        cautious: d.cautious,
        cautious_scaling: d.cautious_scaling,
    }
}

impl From<&IkSolverConfig> for SolverConfig {
    fn from(c: &IkSolverConfig) -> Self {
        SolverConfig {
            learning_rate: c.learning_rate,
            beta1: c.beta1,
            beta2: c.beta2,
            epsilon: c.epsilon,
            max_iterations: c.max_iterations as usize,
            loss_threshold: c.loss_threshold,
            time_budget_ms: (c.time_budget_ms > 0.0).then_some(c.time_budget_ms),
            cautious: c.cautious,
            cautious_scaling: c.cautious_scaling,
            record_trace: false,
        }
    }
}

impl From<&SolveReport> for IkSolveResult {
    fn from(r: &SolveReport) -> Self {
        IkSolveResult {
            final_loss: r.final_loss,
            iterations: r.iterations as u32,
            iteration_limit: r.iteration_limit as u32,
            wall_time_ms: r.wall_time.as_secs_f64() * 1e3,
            success: r.success,
            stop_reason: match r.stop_reason {
                StopReason::Threshold => IkStopReason::Threshold,
                StopReason::MaxIterations => IkStopReason::MaxIterations,
                StopReason::TimeBudget => IkStopReason::TimeBudget,
            },
        }
    }
}

unsafe fn spec_of(obj: *const IkObjective) -> Result<ObjectiveSpec, Failure> {
    let terms = &deref(obj, "objective")?.0;
    if terms.is_empty() {
        return Err(Failure(IkStatus::InvalidObjective, "objective has no terms".into()));
    }
    Ok(ObjectiveSpec::new(terms.clone())?)
}

unsafe fn config_or_default(config: *const IkSolverConfig) -> SolverConfig {
    config.as_ref().map_or_else(SolverConfig::default, SolverConfig::from)
}

/// Solves from `theta0` and writes the final angles to `theta_out`. A solve
/// that misses the threshold still returns `Ok`; check `result->success`.
/// `config` may be null for defaults.
///
/// # Safety
/// `theta0` and `theta_out` must hold `len` doubles; other pointers valid.
#[no_mangle]
pub unsafe extern "C" fn ik_solve(
    skel: *const IkSkeleton,
    layout: *const IkLayout,
    obj: *const IkObjective,
    theta0: *const f64,
    len: usize,
    config: *const IkSolverConfig,
    theta_out: *mut f64,
    result: *mut IkSolveResult,
) -> IkStatus {
    guard(|| {
        let (skel, layout) = (&deref(skel, "skeleton")?.0, &deref(layout, "layout")?.0);
        let spec = spec_of(obj)?;
        expect_len(layout.len(), len)?;
        let theta0 = slice(theta0, len, "theta0")?;
        let out = slice_mut(theta_out, len, "theta_out")?;
        let result = deref_mut(result, "result")?;
        let report = ikdiff::solve(skel, layout, &spec, theta0, &config_or_default(config))?;
        out.copy_from_slice(&report.final_theta);
        *result = IkSolveResult::from(&report);
        Ok(())
    })
}

/// Optimizes a trajectory of `n_intermediate + 2` points. The objective's
/// pose terms bind to the last point. `points_out` receives the points
/// point-major (`(n_intermediate + 2) * len` doubles). Every smoothness
/// order gets `smooth_weight`.
///
/// # Safety
/// `start` must hold `len` doubles and `points_out` `(n_intermediate + 2) * len`.
#[no_mangle]
pub unsafe extern "C" fn ik_plan(
    skel: *const IkSkeleton,
    layout: *const IkLayout,
    obj: *const IkObjective,
    start: *const f64,
    len: usize,
    n_intermediate: usize,
    smooth_weight: f64,
    fixed_head: bool,
    config: *const IkSolverConfig,
    points_out: *mut f64,
    result: *mut IkSolveResult,
) -> IkStatus {
    guard(|| {
        let (skel, layout) = (&deref(skel, "skeleton")?.0, &deref(layout, "layout")?.0);
        let spec = spec_of(obj)?;
        expect_len(layout.len(), len)?;
        let start = slice(start, len, "start")?;
        let total = n_intermediate
            .checked_add(2)
            .and_then(|t| t.checked_mul(len))
            .ok_or_else(|| Failure(IkStatus::InvalidArgument, "trajectory too large".into()))?;
        let out = slice_mut(points_out, total, "points_out")?;
        let result = deref_mut(result, "result")?;
        let options = PlanOptions {
            n_intermediate,
            smooth_weights: [smooth_weight; 3],
            fixed_head,
        };
        let (traj, report) = ikdiff::plan(skel, layout, start, &spec, None, &options, &config_or_default(config))?;
        for (chunk, point) in out.chunks_exact_mut(len.max(1)).zip(&traj.points) {
            chunk.copy_from_slice(point);
        }
        *result = IkSolveResult::from(&report);
        Ok(())
    })
}

/// World-space origin of every bone, `3 * bone_count` doubles.
///
/// # Safety
/// `theta` must hold `len` doubles and `positions_out` `3 * bone_count`.
#[no_mangle]
pub unsafe extern "C" fn ik_forward_positions(
    skel: *const IkSkeleton,
    layout: *const IkLayout,
    theta: *const f64,
    len: usize,
    positions_out: *mut f64,
    bone_count: usize,
) -> IkStatus {
    guard(|| {
        let (skel, layout) = (&deref(skel, "skeleton")?.0, &deref(layout, "layout")?.0);
        expect_len(layout.len(), len)?;
        expect_len(skel.len(), bone_count)?;
        let pose = ikdiff::forward(skel, layout, slice(theta, len, "theta")?)?;
        let out = slice_mut(positions_out, 3 * bone_count, "positions_out")?;
        for (chunk, t) in out.chunks_exact_mut(3).zip(pose.transforms()) {
            chunk.copy_from_slice(&t.translation());
        }
        Ok(())
    })
}
