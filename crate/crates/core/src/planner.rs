//! Whole-trajectory optimization: all free points of a joint-angle path are
//! stacked point-major and minimized together with the same projected
//! cautious-Adam loop as single-pose solves.

use std::sync::atomic::{AtomicBool, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{IkError, Result};
use crate::fk::forward;
use crate::grad::{Objective, Scalar};
use crate::objectives::{smoothness_term, Context, ObjectiveSpec};
use crate::skeleton::{DofLayout, Skeleton};
use crate::solver::{minimize, SolveReport, SolverConfig};

/// Default weight of each smoothness order.
pub const DEFAULT_SMOOTHNESS_WEIGHT: f64 = 0.01;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub points: Vec<Vec<f64>>,
    pub fixed_head: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn last(&self) -> &[f64] {
        self.points.last().map(Vec::as_slice).unwrap_or(&[])
    }

    /// World position of `(bone, offset)` at every point.
    pub fn effector_positions(&self, skel: &Skeleton, layout: &DofLayout, bone: usize, offset: [f64; 3]) -> Result<Vec<[f64; 3]>> {
        self.points
            .iter()
            .map(|p| forward(skel, layout, p)?.effector_position(bone, offset))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlanOptions {
    pub n_intermediate: usize,
    /// λ₁..λ₃ for velocity, acceleration and jerk energies.
    pub smooth_weights: [f64; 3],
    /// Pin the first point to the start pose and exclude it from optimization.
    pub fixed_head: bool,
}

impl Default for PlanOptions {
    fn default() -> Self {
        PlanOptions {
            n_intermediate: 0,
            smooth_weights: [DEFAULT_SMOOTHNESS_WEIGHT; 3],
            fixed_head: true,
        }
    }
}

struct TrajectoryObjective<'a> {
    skel: &'a Skeleton,
    layout: &'a DofLayout,
    terminal: &'a ObjectiveSpec,
    path: Option<&'a ObjectiveSpec>,
    smooth_weights: [f64; 3],
    head: Option<&'a [f64]>,
    free_points: usize,
}

impl Objective for TrajectoryObjective<'_> {
    fn dim(&self) -> usize {
        self.free_points * self.layout.len()
    }

    fn eval<S: Scalar>(&self, x: &[S]) -> Result<S> {
        let n = self.layout.len();
        let head: Option<Vec<S>> = self.head.map(|h| h.iter().map(|&v| S::constant(v)).collect());
        let mut points: Vec<&[S]> = Vec::with_capacity(self.free_points + 1);
        if let Some(h) = &head {
            points.push(h);
        }
        points.extend(x.chunks_exact(n.max(1)).take(self.free_points));
        if n == 0 {
            points.resize(self.free_points + usize::from(head.is_some()), &[]);
        }

        let (mut total, _) = self.terminal.evaluate_generic(self.skel, self.layout, Context::Trajectory(&points))?;
        if let Some(path) = self.path {
            let skip = usize::from(head.is_some());
            for p in &points[skip..] {
                let (v, _) = path.evaluate_generic(self.skel, self.layout, Context::Pose(p))?;
                total = total + v;
            }
        }
        for (k, &w) in self.smooth_weights.iter().enumerate() {
            if w != 0.0 {
                total = total + smoothness_term(&points, k + 1)? * w;
            }
        }
        Ok(total)
    }
}

/// Optimizes a trajectory of `n_intermediate + 2` points from `start`.
///
/// Terminal terms bind to the last point, path terms to every free point, and
/// the weighted smoothness energies span the whole trajectory. Success means
/// the total loss fell below the threshold.
pub fn plan(
    skel: &Skeleton,
    layout: &DofLayout,
    start: &[f64],
    terminal: &ObjectiveSpec,
    path: Option<&ObjectiveSpec>,
    options: &PlanOptions,
    config: &SolverConfig,
) -> Result<(Trajectory, SolveReport)> {
    layout.check_len(start.len())?;
    terminal.validate(skel, layout)?;
    if let Some(p) = path {
        p.validate(skel, layout)?;
        if p.has_smoothness() {
            return Err(IkError::InvalidArgument("path objective may not contain smoothness terms".into()));
        }
    }
    if let Some(w) = options.smooth_weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
        return Err(IkError::InvalidArgument(format!("smoothness weight {w} must be finite and >= 0")));
    }

    let n = layout.len();
    let total_points = options.n_intermediate + 2;
    let free_points = if options.fixed_head { total_points - 1 } else { total_points };
    let start_proj = crate::solver::project_bounds(start, layout)?;

    // Orders the trajectory is too short for contribute nothing; drop them
    // here rather than warning on every evaluation. Benchmarks plan
    // thousands of short trajectories, so each order warns once per process.
    static WARNED: [AtomicBool; 3] = [const { AtomicBool::new(false) }; 3];
    let mut smooth_weights = options.smooth_weights;
    for (k, w) in smooth_weights.iter_mut().enumerate() {
        if *w != 0.0 && total_points <= k + 1 {
            let level = if WARNED[k].swap(true, Ordering::Relaxed) { log::Level::Debug } else { log::Level::Warn };
            log::log!(level, "smoothness order {} needs more than {} points, got {total_points}; term is 0", k + 1, k + 1);
            *w = 0.0;
        }
    }

    let objective = TrajectoryObjective {
        skel,
        layout,
        terminal,
        path,
        smooth_weights,
        head: options.fixed_head.then_some(start_proj.as_slice()),
        free_points,
    };
    let lower = layout.lower().repeat(free_points);
    let upper = layout.upper().repeat(free_points);
    let x0 = start_proj.repeat(free_points);
    let report = minimize(&objective, &lower, &upper, &x0, config)?;

    let mut points = Vec::with_capacity(total_points);
    if options.fixed_head {
        points.push(start_proj.clone());
    }
    if n == 0 {
        points.resize(total_points, Vec::new());
    } else {
        points.extend(report.final_theta.chunks_exact(n).map(<[f64]>::to_vec));
    }
    Ok((
        Trajectory {
            points,
            fixed_head: options.fixed_head,
        },
        report,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{smoothness_objective, ObjectiveTerm};
    use crate::skeleton::{AngleUnits, Axis, BoneRecord};
    use crate::solver::solve;
    use std::f64::consts::PI;

    fn link() -> (Skeleton, DofLayout) {
        let skel = Skeleton::from_records(
            AngleUnits::Radians,
            vec![BoneRecord::new("a", None, [0.0; 3]).with_axis(Axis::Z, -PI, PI)],
        )
        .unwrap();
        let layout = DofLayout::all(&skel);
        (skel, layout)
    }

    fn reach(angle: f64) -> ObjectiveSpec {
        ObjectiveSpec::new(vec![ObjectiveTerm::distance(1.0, 0, [1.0, 0.0, 0.0], [angle.cos(), angle.sin(), 0.0])]).unwrap()
    }

    #[test]
    fn degenerate_plan_is_a_solve() {
        let (skel, layout) = link();
        let spec = reach(1.0);
        let config = SolverConfig::default();
        let options = PlanOptions {
            n_intermediate: 0,
            smooth_weights: [0.0; 3],
            fixed_head: true,
        };
        let (traj, planned) = plan(&skel, &layout, &[0.0], &spec, None, &options, &config).unwrap();
        let solved = solve(&skel, &layout, &spec, &[0.0], &config).unwrap();
        assert_eq!(planned.iterations, solved.iterations);
        assert_eq!(planned.final_loss.to_bits(), solved.final_loss.to_bits());
        assert_eq!(traj.last(), solved.final_theta.as_slice());
        assert_eq!(traj.points[0], vec![0.0]);
    }

    #[test]
    fn already_satisfied_is_constant() {
        let (skel, layout) = link();
        let (traj, report) = plan(&skel, &layout, &[0.0], &reach(0.0), None, &PlanOptions { n_intermediate: 4, ..Default::default() }, &SolverConfig::default()).unwrap();
        assert!(report.success);
        assert_eq!(report.iterations, 0);
        assert_eq!(traj.len(), 6);
        for n in 1..=3 {
            assert_eq!(smoothness_objective(&traj.points, n).unwrap(), 0.0);
        }
    }

    #[test]
    fn one_joint_path_is_monotone() {
        let (skel, layout) = link();
        let options = PlanOptions { n_intermediate: 3, ..Default::default() };
        let (traj, report) = plan(&skel, &layout, &[0.0], &reach(1.0), None, &options, &SolverConfig::default()).unwrap();
        assert!(report.success, "{report:?}");
        let angles: Vec<f64> = traj.points.iter().map(|p| p[0]).collect();
        assert_eq!(angles[0], 0.0);
        for w in angles.windows(2) {
            assert!(w[1] > w[0], "{angles:?}");
        }
        assert!((angles[4] - 1.0).abs() < 0.05, "{angles:?}");

        // Dense 1-D oracle: with the interior points at their optimum for a
        // fixed end angle, the velocity energy alone is at least e²/4.
        let e = angles[4];
        let lower_bound = 0.01 * e * e / 4.0;
        let energy: f64 = (1..=3).map(|n| 0.01 * smoothness_objective(&traj.points, n).unwrap()).sum();
        assert!(energy >= lower_bound - 1e-12);
    }

    #[test]
    fn free_head_moves_the_first_point() {
        let (skel, layout) = link();
        let options = PlanOptions { n_intermediate: 2, fixed_head: false, ..Default::default() };
        let (traj, report) = plan(&skel, &layout, &[0.0], &reach(1.0), None, &options, &SolverConfig::default()).unwrap();
        assert!(report.success);
        assert_eq!(traj.len(), 4);
        assert!(traj.points[0][0] > 0.0);
    }

    #[test]
    fn bounds_hold_for_every_point() {
        let skel = Skeleton::from_records(
            AngleUnits::Radians,
            vec![BoneRecord::new("a", None, [0.0; 3]).with_axis(Axis::Z, -0.3, 0.6)],
        )
        .unwrap();
        let layout = DofLayout::all(&skel);
        let options = PlanOptions { n_intermediate: 5, ..Default::default() };
        let (traj, report) = plan(&skel, &layout, &[0.0], &reach(1.5), None, &options, &SolverConfig::default()).unwrap();
        assert!(!report.success);
        assert!(traj.points.iter().all(|p| layout.contains(p)));
    }

    #[test]
    fn path_terms_apply_to_free_points() {
        let (skel, layout) = link();
        let prior = ObjectiveSpec::new(vec![ObjectiveTerm::known_rotation(1.0, vec![0.0], vec![true])]).unwrap();
        let smooth = ObjectiveSpec::new(vec![ObjectiveTerm::smoothness(1.0, 1)]).unwrap();
        let options = PlanOptions::default();
        assert!(plan(&skel, &layout, &[0.0], &reach(1.0), Some(&smooth), &options, &SolverConfig::default()).is_err());
        let (_, report) = plan(&skel, &layout, &[0.0], &reach(1.0), Some(&prior), &options, &SolverConfig::default()).unwrap();
        // The prior pulls the end away from the target: the optimum cannot succeed.
        assert!(!report.success);
    }
}
