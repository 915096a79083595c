use crate::error::{IkError, Result};
use crate::fk::forward;
use crate::geom::{self, Vec3};
use crate::objectives::{Context, ObjectiveSpec};
use crate::skeleton::{Axis, DofLayout, Skeleton};
use crate::solver::{project_bounds, IterationClock, SolveReport, SolverConfig, StopReason};

use super::ccd::{axis_in_world, joint_frame};
use super::{best_angle_on_interval, ChainSpec};

const FIT_SWEEPS: usize = 3;

fn check_points(points: &[Vec3], lengths: &[f64]) -> Result<()> {
    if points.len() != lengths.len() + 1 {
        return Err(IkError::Dimension { expected: lengths.len() + 1, actual: points.len() });
    }
    if lengths.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
        return Err(IkError::InvalidChain("segment lengths must be positive".into()));
    }
    Ok(())
}

fn place(from: Vec3, toward: Vec3, len: f64) -> Vec3 {
    let d = geom::sub(toward, from);
    let n = geom::norm(d);
    if n < 1e-15 {
        // Coincident points: keep the segment pointing along +x.
        return geom::add(from, [len, 0.0, 0.0]);
    }
    geom::add(from, geom::scale(d, len / n))
}

/// One FABRIK update with the base fixed. An unreachable target straightens
/// the chain toward it; otherwise a backward pass from the target is followed
/// by a forward pass from the base.
pub fn fabrik_pass(points: &mut [Vec3], lengths: &[f64], target: Vec3) {
    let n = lengths.len();
    let base = points[0];
    let reach: f64 = lengths.iter().sum();
    if geom::distance(base, target) > reach {
        for i in 0..n {
            points[i + 1] = place(points[i], target, lengths[i]);
        }
        return;
    }
    points[n] = target;
    for i in (0..n).rev() {
        points[i] = place(points[i + 1], points[i], lengths[i]);
    }
    points[0] = base;
    for i in 0..n {
        points[i + 1] = place(points[i], points[i + 1], lengths[i]);
    }
}

/// Runs passes until the end point is within `tolerance` of `target` or
/// `max_passes` is spent. Returns the points and the number of passes made.
pub fn fabrik_positions(
    points: &[Vec3],
    lengths: &[f64],
    target: Vec3,
    tolerance: f64,
    max_passes: usize,
) -> Result<(Vec<Vec3>, usize)> {
    check_points(points, lengths)?;
    let mut p = points.to_vec();
    let mut passes = 0;
    while passes < max_passes && geom::distance(p[lengths.len()], target) >= tolerance {
        fabrik_pass(&mut p, lengths, target);
        passes += 1;
    }
    Ok((p, passes))
}

/// Fits joint angles to FABRIK's joint positions: sweeps from the base,
/// turning each controlled axis by the angle that best carries all
/// downstream chain points onto their targets, within limits.
fn fit_angles(skel: &Skeleton, layout: &DofLayout, chain: &ChainSpec, points: &[Vec3], theta: &mut [f64]) -> Result<()> {
    let joints = chain.joints();
    for _ in 0..FIT_SWEEPS {
        let mut change: f64 = 0.0;
        for (i, &joint) in joints.iter().enumerate() {
            let slots = layout.bone_slots(joint);
            for axis in [Axis::Z, Axis::Y, Axis::X] {
                let Some(k) = slots[axis.index()] else { continue };
                let pose = forward(skel, layout, theta)?;
                let current = chain.positions(&pose);
                let frame = joint_frame(skel, pose.transforms(), joint);
                let u = axis_in_world(&frame, slots, theta, axis);
                let origin = current[i];
                let (mut sin, mut cos) = (0.0, 0.0);
                for (q, p) in current[i + 1..].iter().zip(&points[i + 1..]) {
                    let a = geom::sub(*q, origin);
                    let b = geom::sub(*p, origin);
                    let a = geom::sub(a, geom::scale(u, geom::dot(a, u)));
                    let b = geom::sub(b, geom::scale(u, geom::dot(b, u)));
                    sin += geom::dot(u, geom::cross(a, b));
                    cos += geom::dot(a, b);
                }
                if sin == 0.0 && cos <= 0.0 {
                    continue;
                }
                let new = best_angle_on_interval(theta[k] + sin.atan2(cos), layout.lower()[k], layout.upper()[k]);
                change = change.max((new - theta[k]).abs());
                theta[k] = new;
            }
        }
        if change < 1e-9 {
            break;
        }
    }
    Ok(())
}

/// FABRIK on the chain's joint positions, followed by recovering joint
/// angles that follow the new positions as closely as the limits allow. One
/// iteration is one position pass plus the angle recovery.
pub fn fabrik_solve(
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
    let lengths = chain.segment_lengths();

    let stop_reason = loop {
        if loss < config.loss_threshold {
            break StopReason::Threshold;
        }
        if let Some(reason) = clock.exhausted() {
            break reason;
        }
        let mut points = chain.positions(&forward(skel, layout, &theta)?);
        fabrik_pass(&mut points, lengths, target);
        fit_angles(skel, layout, chain, &points, &mut theta)?;
        loss = spec.evaluate(skel, layout, Context::Pose(&theta))?;
        if let Some(t) = trace.as_mut() {
            t.push(loss);
        }
        clock.tick();
    };
    Ok(clock.report(theta, loss, stop_reason, config.loss_threshold, trace))
}

#[cfg(test)]
mod tests {
    use super::super::test_chains::{planar, spatial};
    use super::*;
    use crate::objectives::ObjectiveTerm;
    use std::f64::consts::PI;

    fn reach_spec(skel: &Skeleton, target: Vec3) -> ObjectiveSpec {
        let tip = skel.index_of("tip").unwrap();
        ObjectiveSpec::new(vec![ObjectiveTerm::distance(1.0, tip, [0.0; 3], target)]).unwrap()
    }

    fn straight(lengths: &[f64]) -> Vec<Vec3> {
        let mut x = 0.0;
        let mut p = vec![[0.0; 3]];
        for l in lengths {
            x += l;
            p.push([x, 0.0, 0.0]);
        }
        p
    }

    #[test]
    fn unreachable_target_straightens() {
        let lengths = [1.0, 0.5, 0.25];
        let target = [2.0, 3.0, -1.0];
        let (p, passes) = fabrik_positions(&straight(&lengths), &lengths, target, 1e-6, 1).unwrap();
        assert_eq!(passes, 1);
        let unit = geom::normalize(target).unwrap();
        let mut acc = 0.0;
        for (i, l) in lengths.iter().enumerate() {
            acc += l;
            for c in 0..3 {
                assert!((p[i + 1][c] - acc * unit[c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn two_link_reaches_and_keeps_lengths() {
        let lengths = [1.0, 1.0];
        let target = [1.2, 0.8, 0.0];
        let (p, passes) = fabrik_positions(&straight(&lengths), &lengths, target, 1e-3, 50).unwrap();
        assert!(passes <= 50);
        assert!(geom::distance(p[2], target) < 1e-3);
        assert_eq!(p[0], [0.0; 3]);
        for i in 0..2 {
            assert!((geom::distance(p[i], p[i + 1]) - lengths[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn bad_input() {
        assert!(fabrik_positions(&[[0.0; 3]], &[1.0], [1.0, 0.0, 0.0], 1e-3, 5).is_err());
        assert!(fabrik_positions(&[[0.0; 3]; 2], &[0.0], [1.0, 0.0, 0.0], 1e-3, 5).is_err());
    }

    #[test]
    fn one_joint_closed_form() {
        let (skel, layout) = planar(&[1.0], -PI, PI);
        let chain = ChainSpec::from_layout(&skel, &layout, skel.index_of("tip").unwrap(), [0.0; 3]).unwrap();
        let target = [-0.7, 0.9, 0.0];
        let config = SolverConfig { max_iterations: 1, ..Default::default() };
        let r = fabrik_solve(&skel, &layout, &chain, target, &reach_spec(&skel, target), &[0.0], &config).unwrap();
        assert!((r.final_theta[0] - target[1].atan2(target[0])).abs() < 1e-9);
    }

    #[test]
    fn one_joint_limited() {
        let (skel, layout) = planar(&[1.0], -0.5, 0.5);
        let chain = ChainSpec::from_layout(&skel, &layout, skel.index_of("tip").unwrap(), [0.0; 3]).unwrap();
        let target = [1f64.cos(), 1f64.sin(), 0.0];
        let config = SolverConfig { max_iterations: 10, ..Default::default() };
        let r = fabrik_solve(&skel, &layout, &chain, target, &reach_spec(&skel, target), &[0.0], &config).unwrap();
        assert_eq!(r.final_theta, vec![0.5]);
        assert!((r.final_loss - 2.0 * 0.25f64.sin()).abs() < 1e-9);
        assert_eq!(r.iterations, 10);
    }

    #[test]
    fn spatial_chain_converges() {
        let (skel, layout) = spatial(&[1.0, 0.8, 0.5]);
        let tip = skel.index_of("tip").unwrap();
        let chain = ChainSpec::from_layout(&skel, &layout, tip, [0.0; 3]).unwrap();
        let target = [0.6, 1.2, -0.7];
        let r = fabrik_solve(&skel, &layout, &chain, target, &reach_spec(&skel, target), &layout.rest(), &SolverConfig::default()).unwrap();
        assert!(r.success, "{r:?}");
    }

    #[test]
    fn planar_chain_converges() {
        let (skel, layout) = planar(&[1.0, 1.0], -PI, PI);
        let tip = skel.index_of("tip").unwrap();
        let chain = ChainSpec::from_layout(&skel, &layout, tip, [0.0; 3]).unwrap();
        let target = [1.2, 0.8, 0.0];
        let r = fabrik_solve(&skel, &layout, &chain, target, &reach_spec(&skel, target), &[0.0, 0.0], &SolverConfig::default()).unwrap();
        assert!(r.success);
        assert!(r.iterations <= 50);
    }
}
