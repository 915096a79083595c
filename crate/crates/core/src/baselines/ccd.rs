use crate::error::Result;
use crate::fk::{forward, Transform};
use crate::geom::{self, Vec3};
use crate::objectives::{Context, ObjectiveSpec};
use crate::skeleton::{Axis, DofLayout, Skeleton};
use crate::solver::{project_bounds, IterationClock, SolveReport, SolverConfig, StopReason};

use super::{best_angle_on_interval, planar_angle, ChainSpec};

/// Cyclic coordinate descent. One iteration is one sweep from the effector
/// side to the base; each controlled axis is set to the limited angle that
/// best swings the effector toward `target`. Success is judged with `spec`.
pub fn ccd_solve(
    skel: &Skeleton,
    layout: &DofLayout,
    chain: &ChainSpec,
    target: Vec3,
    spec: &ObjectiveSpec,
    theta0: &[f64],
    config: &SolverConfig,
) -> Result<SolveReport> {
    config.validate()?;
    spec.validate(skel, layout)?;
    let mut clock = IterationClock::start(config);
    let mut theta = project_bounds(theta0, layout)?;
    let mut loss = spec.evaluate(skel, layout, Context::Pose(&theta))?;
    let mut trace = config.record_trace.then(|| vec![loss]);
    let (effector_bone, offset) = chain.effector();

    let stop_reason = loop {
        if loss < config.loss_threshold {
            break StopReason::Threshold;
        }
        if let Some(reason) = clock.exhausted() {
            break reason;
        }
        for &joint in chain.joints().iter().rev() {
            let slots = layout.bone_slots(joint);
            for axis in Axis::ALL {
                let Some(k) = slots[axis.index()] else { continue };
                let pose = forward(skel, layout, &theta)?;
                let frame = joint_frame(skel, pose.transforms(), joint);
                let world_axis = axis_in_world(&frame, slots, &theta, axis);
                let origin = pose.transforms()[joint].translation();
                let effector = pose.transforms()[effector_bone].transform_point(offset);
                let Some(delta) = planar_angle(world_axis, geom::sub(effector, origin), geom::sub(target, origin)) else {
                    continue;
                };
                theta[k] = best_angle_on_interval(theta[k] + delta, layout.lower()[k], layout.upper()[k]);
            }
        }
        loss = spec.evaluate(skel, layout, Context::Pose(&theta))?;
        if let Some(t) = trace.as_mut() {
            t.push(loss);
        }
        clock.tick();
    };
    Ok(clock.report(theta, loss, stop_reason, config.loss_threshold, trace))
}

/// `T_parent · L` for `joint`: its frame before its own rotation.
pub(super) fn joint_frame(skel: &Skeleton, globals: &[Transform], joint: usize) -> Transform {
    let bone = &skel.bones()[joint];
    match bone.parent {
        None => bone.local,
        Some(p) => globals[p].compose(&bone.local),
    }
}

/// World direction of the rotation axis `axis` under `R = R_z R_y R_x`.
pub(super) fn axis_in_world(frame: &Transform, slots: [Option<usize>; 3], theta: &[f64], axis: Axis) -> Vec3 {
    let angle = |a: Axis| slots[a.index()].map_or(0.0, |k| theta[k]);
    let mut t = *frame;
    if axis != Axis::Z {
        t = t.rotate_local(Axis::Z, angle(Axis::Z));
        if axis == Axis::X {
            t = t.rotate_local(Axis::Y, angle(Axis::Y));
        }
    }
    t.transform_vector(axis.unit())
}
