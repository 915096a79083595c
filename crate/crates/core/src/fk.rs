//! Forward kinematics over the kinematic tree.
//!
//! Every bone's global transform is `T_parent · L · R`, with
//! `R = R_z(θz) · R_y(θy) · R_x(θx)` built from the bone's controlled axes
//! (uncontrolled axes contribute the identity). All routines are generic over
//! [`Scalar`] so the same code produces plain values and tape-recorded values.

use crate::error::{IkError, Result};
use crate::grad::Scalar;
use crate::skeleton::{Axis, DofLayout, Skeleton};

/// Rigid 4×4 homogeneous transform stored as its top three rows; the bottom
/// row is always `[0, 0, 0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transform<S = f64> {
    rows: [[S; 4]; 3],
}

impl<S: Scalar> Transform<S> {
    pub fn identity() -> Self {
        let o = S::zero();
        let l = S::constant(1.0);
        Transform {
            rows: [[l, o, o, o], [o, l, o, o], [o, o, l, o]],
        }
    }

    pub fn from_rows(rows: [[S; 4]; 3]) -> Self {
        Transform { rows }
    }

    /// Constant transform in scalar type `S`.
    pub fn lift(t: &Transform<f64>) -> Self {
        Transform {
            rows: t.rows.map(|r| r.map(S::constant)),
        }
    }

    pub fn rows(&self) -> &[[S; 4]; 3] {
        &self.rows
    }

    pub fn translation(&self) -> [S; 3] {
        [self.rows[0][3], self.rows[1][3], self.rows[2][3]]
    }

    pub fn compose(&self, rhs: &Self) -> Self {
        let a = &self.rows;
        let b = &rhs.rows;
        let mut out = [[S::zero(); 4]; 3];
        for i in 0..3 {
            for j in 0..4 {
                let mut acc = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
                if j == 3 {
                    acc = acc + a[i][3];
                }
                out[i][j] = acc;
            }
        }
        Transform { rows: out }
    }

    /// `self · rhs` for a constant right-hand side. Terms whose constant
    /// factor is exactly 0 are skipped and factors of 1 are not multiplied.
    pub fn compose_const(&self, rhs: &Transform<f64>) -> Self {
        let a = &self.rows;
        let b = &rhs.rows;
        let mut out = [[S::zero(); 4]; 3];
        for i in 0..3 {
            for j in 0..4 {
                let mut acc: Option<S> = None;
                for k in 0..3 {
                    let c = b[k][j];
                    if c == 0.0 {
                        continue;
                    }
                    let term = if c == 1.0 { a[i][k] } else { a[i][k] * c };
                    acc = Some(match acc {
                        None => term,
                        Some(s) => s + term,
                    });
                }
                if j == 3 {
                    acc = Some(match acc {
                        None => a[i][3],
                        Some(s) => s + a[i][3],
                    });
                }
                out[i][j] = acc.unwrap_or_else(S::zero);
            }
        }
        Transform { rows: out }
    }

    /// `self · R_axis(angle)`, touching only the two affected columns.
    pub fn rotate_local(&self, axis: Axis, angle: S) -> Self {
        let (c, s) = (angle.cos(), angle.sin());
        let (p, q) = match axis {
            Axis::X => (1, 2),
            Axis::Y => (2, 0),
            Axis::Z => (0, 1),
        };
        // For each axis the rotation maps column p to c·p + s·q and q to
        // −s·p + c·q (cyclic order x→y→z→x).
        let mut rows = self.rows;
        for row in rows.iter_mut() {
            let (mp, mq) = (row[p], row[q]);
            row[p] = mp * c + mq * s;
            row[q] = mq * c - mp * s;
        }
        Transform { rows }
    }

    pub fn transform_point(&self, p: [S; 3]) -> [S; 3] {
        let r = &self.rows;
        std::array::from_fn(|i| r[i][0] * p[0] + r[i][1] * p[1] + r[i][2] * p[2] + r[i][3])
    }

    /// Applies only the rotation block.
    pub fn transform_vector(&self, v: [S; 3]) -> [S; 3] {
        let r = &self.rows;
        std::array::from_fn(|i| r[i][0] * v[0] + r[i][1] * v[1] + r[i][2] * v[2])
    }

    /// Applies the rotation block to a constant vector, skipping zero entries.
    pub fn transform_const_vector(&self, v: [f64; 3]) -> [S; 3] {
        let r = &self.rows;
        std::array::from_fn(|i| {
            let mut acc: Option<S> = None;
            for k in 0..3 {
                if v[k] != 0.0 {
                    let term = if v[k] == 1.0 { r[i][k] } else { r[i][k] * v[k] };
                    acc = Some(acc.map_or(term, |s| s + term));
                }
            }
            acc.unwrap_or_else(S::zero)
        })
    }

    pub fn transform_const_point(&self, p: [f64; 3]) -> [S; 3] {
        let v = self.transform_const_vector(p);
        std::array::from_fn(|i| v[i] + self.rows[i][3])
    }

    pub fn to_f64(&self) -> Transform<f64> {
        Transform {
            rows: self.rows.map(|r| r.map(|v| v.value())),
        }
    }
}

impl Transform<f64> {
    pub fn from_translation(t: [f64; 3]) -> Self {
        let mut m = Self::identity();
        for (row, v) in m.rows.iter_mut().zip(t) {
            row[3] = v;
        }
        m
    }

    /// Local transform from a `[w, x, y, z]` quaternion and a translation.
    /// The quaternion is used as given; callers validate orthonormality.
    pub fn from_quaternion_translation(q: [f64; 4], t: [f64; 3]) -> Self {
        let [w, x, y, z] = q;
        Transform {
            rows: [
                [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y), t[0]],
                [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x), t[1]],
                [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y), t[2]],
            ],
        }
    }

    /// Full 4×4 row-major matrix.
    pub fn matrix(&self) -> [[f64; 4]; 4] {
        [self.rows[0], self.rows[1], self.rows[2], [0.0, 0.0, 0.0, 1.0]]
    }

    pub fn from_matrix(m: [[f64; 4]; 4]) -> Result<Self> {
        if m[3] != [0.0, 0.0, 0.0, 1.0] {
            return Err(IkError::InvalidArgument(format!(
                "bottom row must be [0, 0, 0, 1], got {:?}",
                m[3]
            )));
        }
        Ok(Transform {
            rows: [m[0], m[1], m[2]],
        })
    }

    pub fn rotation(&self) -> [[f64; 3]; 3] {
        self.rows.map(|r| [r[0], r[1], r[2]])
    }

    /// Largest entry of `|RᵀR − I|`.
    pub fn orthonormality_error(&self) -> f64 {
        let r = self.rotation();
        let mut worst: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| r[k][i] * r[k][j]).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }

    pub fn determinant(&self) -> f64 {
        let r = self.rotation();
        r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1]) - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
            + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0])
    }
}

/// Rotation `R_z(θz) · R_y(θy) · R_x(θx)` as a pure-rotation transform.
pub fn euler_to_rotation<S: Scalar>(theta: [S; 3]) -> Transform<S> {
    Transform::identity()
        .rotate_local(Axis::Z, theta[2])
        .rotate_local(Axis::Y, theta[1])
        .rotate_local(Axis::X, theta[0])
}

/// Global transform of every bone, index-aligned with the skeleton.
#[derive(Clone, Debug, PartialEq)]
pub struct GlobalPose<S = f64> {
    transforms: Vec<Transform<S>>,
}

impl<S: Scalar> GlobalPose<S> {
    pub fn transforms(&self) -> &[Transform<S>] {
        &self.transforms
    }

    pub fn len(&self) -> usize {
        self.transforms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transforms.is_empty()
    }

    pub fn get(&self, bone: usize) -> Result<&Transform<S>> {
        self.transforms.get(bone).ok_or(IkError::BoneIndex {
            index: bone,
            count: self.transforms.len(),
        })
    }

    /// `T_bone · [offset, 1]`.
    pub fn effector_position(&self, bone: usize, offset: [f64; 3]) -> Result<[S; 3]> {
        Ok(self.get(bone)?.transform_const_point(offset))
    }

    /// Rotation block of `T_bone` applied to `local_axis` (not normalized).
    pub fn bone_direction(&self, bone: usize, local_axis: [f64; 3]) -> Result<[S; 3]> {
        if local_axis.iter().all(|&v| v == 0.0) {
            return Err(IkError::InvalidArgument("bone direction axis is zero".into()));
        }
        Ok(self.get(bone)?.transform_const_vector(local_axis))
    }

    pub fn to_f64(&self) -> GlobalPose<f64> {
        GlobalPose {
            transforms: self.transforms.iter().map(Transform::to_f64).collect(),
        }
    }
}

impl GlobalPose<f64> {
    pub fn from_transforms(transforms: Vec<Transform<f64>>) -> Self {
        GlobalPose { transforms }
    }
}

/// Single topological pass over the skeleton.
pub fn forward<S: Scalar>(skel: &Skeleton, layout: &DofLayout, theta: &[S]) -> Result<GlobalPose<S>> {
    layout.check_len(theta.len())?;
    if layout.bone_count() != skel.len() {
        return Err(IkError::Dimension {
            expected: skel.len(),
            actual: layout.bone_count(),
        });
    }
    let mut transforms: Vec<Transform<S>> = Vec::with_capacity(skel.len());
    for (i, bone) in skel.bones().iter().enumerate() {
        let mut t = match bone.parent {
            None => Transform::lift(&bone.local),
            Some(p) => transforms[p].compose_const(&bone.local),
        };
        let slots = layout.bone_slots(i);
        for axis in [Axis::Z, Axis::Y, Axis::X] {
            if let Some(k) = slots[axis.index()] {
                t = t.rotate_local(axis, theta[k]);
            }
        }
        transforms.push(t);
    }
    Ok(GlobalPose { transforms })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::{AngleUnits, BoneRecord};
    use std::f64::consts::FRAC_PI_2;

    fn apply(t: &Transform, v: [f64; 3]) -> [f64; 3] {
        t.transform_vector(v)
    }

    fn close(a: [f64; 3], b: [f64; 3], tol: f64) -> bool {
        a.iter().zip(&b).all(|(x, y)| (x - y).abs() <= tol)
    }

    /// Textbook 3×3 matrices multiplied in full, independent of `rotate_local`.
    fn oracle_rotation(t: [f64; 3]) -> [[f64; 3]; 3] {
        let (cx, sx) = (t[0].cos(), t[0].sin());
        let (cy, sy) = (t[1].cos(), t[1].sin());
        let (cz, sz) = (t[2].cos(), t[2].sin());
        let rx = [[1.0, 0.0, 0.0], [0.0, cx, -sx], [0.0, sx, cx]];
        let ry = [[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]];
        let rz = [[cz, -sz, 0.0], [sz, cz, 0.0], [0.0, 0.0, 1.0]];
        let mul = |a: [[f64; 3]; 3], b: [[f64; 3]; 3]| {
            let mut o = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    o[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
                }
            }
            o
        };
        mul(mul(rz, ry), rx)
    }

    #[test]
    fn zero_angles_give_identity() {
        assert_eq!(euler_to_rotation([0.0; 3]), Transform::identity());
    }

    #[test]
    fn quarter_turn_about_z() {
        let r = euler_to_rotation([0.0, 0.0, FRAC_PI_2]);
        assert!(close(apply(&r, [1.0, 0.0, 0.0]), [0.0, 1.0, 0.0], 1e-15));
    }

    #[test]
    fn composite_rotation_matches_matrix_product() {
        let r = euler_to_rotation([FRAC_PI_2, 0.0, FRAC_PI_2]);
        assert!(close(apply(&r, [0.0, 0.0, 1.0]), [1.0, 0.0, 0.0], 1e-15));
        for t in [[0.3, -1.2, 2.0], [-2.5, 0.7, 0.1], [1.0, 1.0, 1.0]] {
            let got = euler_to_rotation(t).rotation();
            let want = oracle_rotation(t);
            for i in 0..3 {
                for j in 0..3 {
                    assert!((got[i][j] - want[i][j]).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn rotation_is_proper() {
        let r = euler_to_rotation([0.4, -0.9, 2.2]);
        assert!((r.determinant() - 1.0).abs() < 1e-12);
        assert!(r.orthonormality_error() < 1e-12);
        assert_eq!(r.translation(), [0.0; 3]);
        assert_eq!(r.matrix()[3], [0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn quaternion_rest_rotation() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let t = Transform::from_quaternion_translation([h, 0.0, 0.0, h], [1.0, 2.0, 3.0]);
        assert!(close(apply(&t, [1.0, 0.0, 0.0]), [0.0, 1.0, 0.0], 1e-15));
        assert_eq!(t.translation(), [1.0, 2.0, 3.0]);
    }

    fn two_link() -> (Skeleton, DofLayout) {
        let records = vec![
            BoneRecord::new("root", None, [0.0; 3]).with_axis(Axis::Z, -3.2, 3.2),
            BoneRecord::new("child", Some("root"), [1.0, 0.0, 0.0]).with_axis(Axis::Z, -3.2, 3.2),
        ];
        let skel = Skeleton::from_records(AngleUnits::Radians, records).unwrap();
        let layout = skel.dof_layout(&["root", "child"]).unwrap();
        (skel, layout)
    }

    #[test]
    fn single_bone_translation() {
        let skel = Skeleton::from_records(AngleUnits::Radians, vec![BoneRecord::new("a", None, [0.0, 1.0, 0.0])]).unwrap();
        let layout = DofLayout::all(&skel);
        let pose = forward::<f64>(&skel, &layout, &[]).unwrap();
        assert_eq!(pose.transforms()[0], Transform::from_translation([0.0, 1.0, 0.0]));
    }

    #[test]
    fn two_link_planar() {
        let (skel, layout) = two_link();
        let pose = forward(&skel, &layout, &[FRAC_PI_2, 0.0]).unwrap();
        let p = pose.effector_position(1, [1.0, 0.0, 0.0]).unwrap();
        assert!(close(p, [0.0, 2.0, 0.0], 1e-15));
    }

    #[test]
    fn identity_chain() {
        let records: Vec<_> = (0..5)
            .map(|i| {
                let parent = (i > 0).then(|| format!("b{}", i - 1));
                BoneRecord { parent, ..BoneRecord::new(format!("b{i}"), None, [0.0; 3]) }
            })
            .collect();
        let skel = Skeleton::from_records(AngleUnits::Radians, records).unwrap();
        let pose = forward::<f64>(&skel, &DofLayout::all(&skel), &[]).unwrap();
        assert!(pose.transforms().iter().all(|t| *t == Transform::identity()));
    }

    #[test]
    fn effector_and_direction_on_identity() {
        let skel = Skeleton::from_records(AngleUnits::Radians, vec![BoneRecord::new("a", None, [0.0; 3])]).unwrap();
        let pose = forward::<f64>(&skel, &DofLayout::all(&skel), &[]).unwrap();
        assert_eq!(pose.effector_position(0, [0.0; 3]).unwrap(), [0.0; 3]);
        assert_eq!(pose.effector_position(0, [1.0, 2.0, 3.0]).unwrap(), [1.0, 2.0, 3.0]);
        assert_eq!(pose.bone_direction(0, [0.0, 1.0, 0.0]).unwrap(), [0.0, 1.0, 0.0]);
        assert!(pose.bone_direction(0, [0.0; 3]).is_err());
        assert!(matches!(pose.effector_position(3, [0.0; 3]), Err(IkError::BoneIndex { .. })));
    }

    #[test]
    fn bone_direction_after_rotation() {
        let (skel, layout) = two_link();
        let pose = forward(&skel, &layout, &[FRAC_PI_2, 0.0]).unwrap();
        assert!(close(pose.bone_direction(0, [1.0, 0.0, 0.0]).unwrap(), [0.0, 1.0, 0.0], 1e-15));

        let records = vec![BoneRecord::new("a", None, [0.0; 3])
            .with_axis(Axis::X, -2.0, 2.0)
            .with_axis(Axis::Y, -2.0, 2.0)
            .with_axis(Axis::Z, -2.0, 2.0)];
        let skel = Skeleton::from_records(AngleUnits::Radians, records).unwrap();
        let pose = forward(&skel, &DofLayout::all(&skel), &[FRAC_PI_2, 0.0, FRAC_PI_2]).unwrap();
        assert!(close(pose.bone_direction(0, [0.0, 0.0, 1.0]).unwrap(), [1.0, 0.0, 0.0], 1e-15));
    }

    #[test]
    fn dimension_mismatch() {
        let (skel, layout) = two_link();
        assert!(matches!(forward(&skel, &layout, &[0.0]), Err(IkError::Dimension { expected: 2, actual: 1 })));
    }

    #[test]
    fn matches_explicit_product() {
        let records = vec![
            BoneRecord::new("a", None, [0.1, 0.2, 0.3])
                .with_rest_rotation([0.9, 0.1, -0.3, 0.2f64])
                .with_axis(Axis::X, -3.0, 3.0)
                .with_axis(Axis::Z, -3.0, 3.0),
            BoneRecord::new("b", Some("a"), [0.5, -0.2, 0.0])
                .with_axis(Axis::Y, -3.0, 3.0)
                .with_axis(Axis::Z, -3.0, 3.0),
        ];
        // Normalize the quaternion so validation passes.
        let mut records = records;
        let q = records[0].rest_rotation;
        let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        records[0].rest_rotation = q.map(|v| v / n);
        let skel = Skeleton::from_records(AngleUnits::Radians, records).unwrap();
        let layout = DofLayout::all(&skel);
        let theta = [0.7, -1.1, 0.4, 2.0];
        let pose = forward(&skel, &layout, &theta).unwrap();

        let l0 = skel.bones()[0].local;
        let l1 = skel.bones()[1].local;
        let r0 = euler_to_rotation([0.7, 0.0, -1.1]);
        let r1 = euler_to_rotation([0.0, 0.4, 2.0]);
        let want = l0.compose(&r0).compose(&l1).compose(&r1);
        let got = pose.transforms()[1];
        for i in 0..3 {
            for j in 0..4 {
                assert!((got.rows()[i][j] - want.rows()[i][j]).abs() < 1e-12);
            }
        }
        assert_eq!(pose, forward(&skel, &layout, &theta).unwrap());
    }

    #[test]
    fn appending_rigid_bone_changes_nothing() {
        let (skel, layout) = two_link();
        let mut file = skel.to_file();
        file.bones.push(BoneRecord::new("tip", Some("child"), [0.0; 3]));
        let longer = Skeleton::from_file(file).unwrap();
        let longer_layout = longer.dof_layout(&["root", "child"]).unwrap();
        let theta = [0.3, -0.8];
        let a = forward(&skel, &layout, &theta).unwrap();
        let b = forward(&longer, &longer_layout, &theta).unwrap();
        assert_eq!(a.transforms(), &b.transforms()[..2]);
    }
}
