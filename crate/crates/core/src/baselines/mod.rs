//! Geometric reference solvers (CCD and FABRIK) on a serial chain.
//!
//! Both update joint angles with purely geometric rules that only know the
//! effector target; success is judged with the full objective so results are
//! comparable to the gradient solver.

mod ccd;
mod fabrik;

pub use ccd::ccd_solve;
pub use fabrik::{fabrik_pass, fabrik_positions, fabrik_solve};

use std::f64::consts::{PI, TAU};

use crate::error::{IkError, Result};
use crate::fk::{GlobalPose, Transform};
use crate::geom::{self, Vec3};
use crate::skeleton::{DofLayout, Skeleton};

/// Serial chain from a fixed base joint to an effector point.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainSpec {
    joints: Vec<usize>,
    effector_bone: usize,
    effector_offset: Vec3,
    /// Vector from joint `i` to the next joint (or the effector), in joint
    /// `i`'s rotated frame.
    segments: Vec<Vec3>,
    lengths: Vec<f64>,
}

impl ChainSpec {
    /// `joints` must be a parent→child path whose base has no controlled
    /// ancestors; the effector bone is the last joint or a rigid descendant.
    pub fn new(skel: &Skeleton, layout: &DofLayout, joints: &[usize], effector_bone: usize, effector_offset: Vec3) -> Result<Self> {
        if joints.is_empty() {
            return Err(IkError::InvalidChain("chain has no joints".into()));
        }
        for &j in joints.iter().chain([&effector_bone]) {
            skel.bone(j).map_err(|e| IkError::InvalidChain(e.to_string()))?;
        }
        let controlled = |b: usize| layout.bone_slots(b).iter().any(Option::is_some);
        for pair in joints.windows(2) {
            if skel.bones()[pair[1]].parent != Some(pair[0]) {
                return Err(IkError::InvalidChain(format!(
                    "`{}` is not the parent of `{}`",
                    skel.bones()[pair[0]].name,
                    skel.bones()[pair[1]].name
                )));
            }
        }
        let mut up = skel.bones()[joints[0]].parent;
        while let Some(a) = up {
            if controlled(a) {
                return Err(IkError::InvalidChain(format!(
                    "base ancestor `{}` has controlled axes",
                    skel.bones()[a].name
                )));
            }
            up = skel.bones()[a].parent;
        }

        let last = *joints.last().unwrap();
        // Rigid path from the last joint down to the effector bone.
        let mut path = Vec::new();
        let mut cur = effector_bone;
        while cur != last {
            if controlled(cur) {
                return Err(IkError::InvalidChain(format!(
                    "effector path bone `{}` has controlled axes",
                    skel.bones()[cur].name
                )));
            }
            path.push(cur);
            cur = skel.bones()[cur].parent.ok_or_else(|| {
                IkError::InvalidChain(format!(
                    "effector `{}` does not descend from `{}`",
                    skel.bones()[effector_bone].name,
                    skel.bones()[last].name
                ))
            })?;
        }
        let mut tip = Transform::identity();
        for &b in path.iter().rev() {
            tip = tip.compose(&skel.bones()[b].local);
        }

        let mut segments: Vec<Vec3> = joints[1..].iter().map(|&j| skel.bones()[j].translation).collect();
        segments.push(tip.transform_point(effector_offset));
        let lengths: Vec<f64> = segments.iter().map(|s| geom::norm(*s)).collect();
        if let Some(i) = lengths.iter().position(|&l| l < 1e-12) {
            return Err(IkError::InvalidChain(format!(
                "segment after `{}` has zero length",
                skel.bones()[joints[i]].name
            )));
        }
        Ok(ChainSpec {
            joints: joints.to_vec(),
            effector_bone,
            effector_offset,
            segments,
            lengths,
        })
    }

    /// Chain over every bone with controlled axes in `layout`.
    pub fn from_layout(skel: &Skeleton, layout: &DofLayout, effector_bone: usize, effector_offset: Vec3) -> Result<Self> {
        let mut joints: Vec<usize> = layout.entries().iter().map(|d| d.bone).collect();
        joints.dedup();
        Self::new(skel, layout, &joints, effector_bone, effector_offset)
    }

    pub fn joints(&self) -> &[usize] {
        &self.joints
    }

    pub fn effector(&self) -> (usize, Vec3) {
        (self.effector_bone, self.effector_offset)
    }

    pub fn segment_lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn reach(&self) -> f64 {
        self.lengths.iter().sum()
    }

    /// Joint origins followed by the effector point.
    pub fn positions(&self, pose: &GlobalPose) -> Vec<Vec3> {
        let mut out: Vec<Vec3> = self
            .joints
            .iter()
            .map(|&j| pose.transforms()[j].translation())
            .collect();
        out.push(pose.transforms()[self.effector_bone].transform_point(self.effector_offset));
        out
    }

    pub fn base(&self, skel: &Skeleton, layout: &DofLayout) -> Result<Vec3> {
        let pose = crate::fk::forward(skel, layout, &layout.rest())?;
        Ok(pose.transforms()[self.joints[0]].translation())
    }
}

/// Angle in `[lo, hi]` maximizing `cos(φ − desired)`: `desired` itself (up
/// to a full turn) when admissible, else the bound nearest on the circle.
pub(crate) fn best_angle_on_interval(desired: f64, lo: f64, hi: f64) -> f64 {
    for k in [0.0, TAU, -TAU] {
        let c = desired + k;
        if (lo..=hi).contains(&c) {
            return c;
        }
    }
    let circ = |a: f64| {
        let d = (a - desired).rem_euclid(TAU);
        if d > PI {
            TAU - d
        } else {
            d
        }
    };
    if circ(lo) <= circ(hi) {
        lo
    } else {
        hi
    }
}

/// Rotation angle about unit `axis` taking `u` closest to `w` (after both are
/// projected onto the plane normal to `axis`); `None` if either projection
/// vanishes.
pub(crate) fn planar_angle(axis: Vec3, u: Vec3, w: Vec3) -> Option<f64> {
    let up = geom::sub(u, geom::scale(axis, geom::dot(u, axis)));
    let wp = geom::sub(w, geom::scale(axis, geom::dot(w, axis)));
    let scale = geom::norm(up) * geom::norm(wp);
    if scale < 1e-18 {
        return None;
    }
    let sin = geom::dot(axis, geom::cross(up, wp));
    let cos = geom::dot(up, wp);
    Some(sin.atan2(cos))
}

#[cfg(test)]
pub(crate) mod test_chains {
    use crate::skeleton::{AngleUnits, Axis, BoneRecord, DofLayout, Skeleton};

    /// Planar chain along +x with z-axis joints; the last link ends at an
    /// uncontrolled `tip` bone.
    pub fn planar(lengths: &[f64], lo: f64, hi: f64) -> (Skeleton, DofLayout) {
        let mut records = Vec::new();
        for i in 0..lengths.len() {
            let parent = (i > 0).then(|| format!("j{}", i - 1));
            let offset = if i == 0 { 0.0 } else { lengths[i - 1] };
            records.push(BoneRecord { parent, ..BoneRecord::new(format!("j{i}"), None, [offset, 0.0, 0.0]) }.with_axis(Axis::Z, lo, hi));
        }
        records.push(BoneRecord::new("tip", Some(&format!("j{}", lengths.len() - 1)), [*lengths.last().unwrap(), 0.0, 0.0]));
        let skel = Skeleton::from_records(AngleUnits::Radians, records).unwrap();
        let layout = DofLayout::all(&skel);
        (skel, layout)
    }

    /// Spatial chain with free ball joints.
    pub fn spatial(lengths: &[f64]) -> (Skeleton, DofLayout) {
        let lim = std::f64::consts::PI;
        let mut records = Vec::new();
        for i in 0..lengths.len() {
            let parent = (i > 0).then(|| format!("j{}", i - 1));
            let offset = if i == 0 { 0.0 } else { lengths[i - 1] };
            records.push(
                BoneRecord { parent, ..BoneRecord::new(format!("j{i}"), None, [offset, 0.0, 0.0]) }
                    .with_axis(Axis::X, -lim, lim)
                    .with_axis(Axis::Y, -lim, lim)
                    .with_axis(Axis::Z, -lim, lim),
            );
        }
        records.push(BoneRecord::new("tip", Some(&format!("j{}", lengths.len() - 1)), [*lengths.last().unwrap(), 0.0, 0.0]));
        let skel = Skeleton::from_records(AngleUnits::Radians, records).unwrap();
        let layout = DofLayout::all(&skel);
        (skel, layout)
    }
}
