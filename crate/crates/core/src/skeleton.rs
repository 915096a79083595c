//! Kinematic tree, the JSON skeleton file format and the flattening of
//! controlled rotation axes into a bounded angle vector.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{IkError, Result};
use crate::fk::Transform;

pub const FORMAT_VERSION: u32 = 1;

/// Tolerance on `RᵀR = I` for a bone's rest rotation.
pub const ORTHONORMAL_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn unit(self) -> [f64; 3] {
        let mut u = [0.0; 3];
        u[self.index()] = 1.0;
        u
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AngleUnits {
    #[default]
    Radians,
    Degrees,
}

/// One bone as written in a skeleton file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoneRecord {
    pub name: String,
    pub parent: Option<String>,
    /// Offset from the parent's frame, meters.
    pub translation: [f64; 3],
    /// Unit quaternion `[w, x, y, z]`.
    #[serde(default = "identity_quaternion")]
    pub rest_rotation: [f64; 4],
    #[serde(default)]
    pub controlled_axes: Vec<Axis>,
    #[serde(default)]
    pub limits: BTreeMap<Axis, [f64; 2]>,
}

fn identity_quaternion() -> [f64; 4] {
    [1.0, 0.0, 0.0, 0.0]
}

impl BoneRecord {
    pub fn new(name: impl Into<String>, parent: Option<&str>, translation: [f64; 3]) -> Self {
        BoneRecord {
            name: name.into(),
            parent: parent.map(str::to_owned),
            translation,
            rest_rotation: identity_quaternion(),
            controlled_axes: Vec::new(),
            limits: BTreeMap::new(),
        }
    }

    /// Adds a controlled axis with its `[min, max]` limits.
    pub fn with_axis(mut self, axis: Axis, min: f64, max: f64) -> Self {
        if !self.controlled_axes.contains(&axis) {
            self.controlled_axes.push(axis);
        }
        self.limits.insert(axis, [min, max]);
        self
    }

    pub fn with_rest_rotation(mut self, quaternion: [f64; 4]) -> Self {
        self.rest_rotation = quaternion;
        self
    }
}

/// Top-level skeleton document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkeletonFile {
    pub version: u32,
    #[serde(default)]
    pub units: AngleUnits,
    pub bones: Vec<BoneRecord>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Bone {
    pub name: String,
    pub parent: Option<usize>,
    pub translation: [f64; 3],
    pub rest_rotation: [f64; 4],
    /// Fixed local transform: rest rotation plus offset.
    pub local: Transform,
    /// Per-axis `(min, max)` in radians; `None` for uncontrolled axes.
    pub limits: [Option<(f64, f64)>; 3],
}

impl Bone {
    pub fn is_controlled(&self, axis: Axis) -> bool {
        self.limits[axis.index()].is_some()
    }

    pub fn controlled_axes(&self) -> impl Iterator<Item = Axis> + '_ {
        Axis::ALL.into_iter().filter(|a| self.is_controlled(*a))
    }
}

/// Immutable kinematic tree with bones in topological order.
#[derive(Clone, Debug, PartialEq)]
pub struct Skeleton {
    bones: Vec<Bone>,
    by_name: HashMap<String, usize>,
}

impl Skeleton {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| IkError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: SkeletonFile =
            serde_json::from_str(text).map_err(|e| IkError::Parse(e.to_string()))?;
        Self::from_file(file)
    }

    pub fn from_file(file: SkeletonFile) -> Result<Self> {
        if file.version != FORMAT_VERSION {
            return Err(IkError::Parse(format!(
                "unsupported skeleton version {} (expected {FORMAT_VERSION})",
                file.version
            )));
        }
        Self::from_records(file.units, file.bones)
    }

    pub fn from_records(units: AngleUnits, records: Vec<BoneRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(IkError::InvalidSkeleton("skeleton has no bones".into()));
        }
        let mut by_name = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if r.name.is_empty() {
                return Err(IkError::InvalidSkeleton(format!("bone {i} has an empty name")));
            }
            if by_name.insert(r.name.clone(), i).is_some() {
                return Err(IkError::bone(&r.name, "duplicate bone name"));
            }
        }

        let mut bones = Vec::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            let parent = match &r.parent {
                None => None,
                Some(p) => {
                    let Some(&pi) = by_name.get(p) else {
                        return Err(IkError::bone(&r.name, format!("unknown parent `{p}`")));
                    };
                    if pi >= i {
                        return Err(if parent_chain_cycles(&records, &by_name, i) {
                            IkError::bone(&r.name, "parent chain forms a cycle")
                        } else {
                            IkError::bone(&r.name, format!("parent `{p}` appears after its child"))
                        });
                    }
                    Some(pi)
                }
            };

            if r.translation.iter().chain(&r.rest_rotation).any(|v| !v.is_finite()) {
                return Err(IkError::bone(&r.name, "non-finite translation or rotation"));
            }
            let local = Transform::from_quaternion_translation(r.rest_rotation, r.translation);
            let err = local.orthonormality_error();
            if err > ORTHONORMAL_TOLERANCE {
                return Err(IkError::bone(
                    &r.name,
                    format!("rest rotation is not orthonormal (error {err:.3e})"),
                ));
            }

            let mut limits = [None; 3];
            for axis in &r.controlled_axes {
                let Some(&[lo, hi]) = r.limits.get(axis) else {
                    return Err(IkError::bone(&r.name, format!("controlled axis {axis} has no limits")));
                };
                let (lo, hi) = match units {
                    AngleUnits::Radians => (lo, hi),
                    AngleUnits::Degrees => (lo.to_radians(), hi.to_radians()),
                };
                if !(lo.is_finite() && hi.is_finite()) {
                    return Err(IkError::bone(&r.name, format!("non-finite limits on axis {axis}")));
                }
                if lo > hi {
                    return Err(IkError::bone(
                        &r.name,
                        format!("axis {axis} limits have min {lo} > max {hi}"),
                    ));
                }
                if limits[axis.index()].replace((lo, hi)).is_some() {
                    return Err(IkError::bone(&r.name, format!("axis {axis} listed twice")));
                }
            }
            if let Some(axis) = r.limits.keys().find(|a| !r.controlled_axes.contains(a)) {
                return Err(IkError::bone(
                    &r.name,
                    format!("limits given for uncontrolled axis {axis}"),
                ));
            }

            bones.push(Bone {
                name: r.name.clone(),
                parent,
                translation: r.translation,
                rest_rotation: r.rest_rotation,
                local,
                limits,
            });
        }
        Ok(Skeleton { bones, by_name })
    }

    /// Serializable form. Limits are always written in radians.
    pub fn to_file(&self) -> SkeletonFile {
        let bones = self
            .bones
            .iter()
            .map(|b| BoneRecord {
                name: b.name.clone(),
                parent: b.parent.map(|p| self.bones[p].name.clone()),
                translation: b.translation,
                rest_rotation: b.rest_rotation,
                controlled_axes: b.controlled_axes().collect(),
                limits: b
                    .controlled_axes()
                    .map(|a| {
                        let (lo, hi) = b.limits[a.index()].unwrap();
                        (a, [lo, hi])
                    })
                    .collect(),
            })
            .collect();
        SkeletonFile {
            version: FORMAT_VERSION,
            units: AngleUnits::Radians,
            bones,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("skeleton serializes")
    }

    pub fn len(&self) -> usize {
        self.bones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bones.is_empty()
    }

    pub fn bones(&self) -> &[Bone] {
        &self.bones
    }

    pub fn bone(&self, index: usize) -> Result<&Bone> {
        self.bones.get(index).ok_or(IkError::BoneIndex {
            index,
            count: self.bones.len(),
        })
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.by_name
            .get(name)
            .copied()
            .ok_or_else(|| IkError::UnknownBone(name.to_owned()))
    }

    /// True if `ancestor` lies on the parent path of `bone` (or is `bone`).
    pub fn is_ancestor(&self, ancestor: usize, bone: usize) -> bool {
        let mut cur = Some(bone);
        while let Some(i) = cur {
            if i == ancestor {
                return true;
            }
            cur = self.bones[i].parent;
        }
        false
    }

    pub fn dof_layout<S: AsRef<str>>(&self, controlled: &[S]) -> Result<DofLayout> {
        dof_layout(self, controlled)
    }
}

fn parent_chain_cycles(records: &[BoneRecord], by_name: &HashMap<String, usize>, start: usize) -> bool {
    let mut cur = start;
    for _ in 0..=records.len() {
        match records[cur].parent.as_ref().and_then(|p| by_name.get(p)) {
            Some(&p) if p == start => return true,
            Some(&p) => cur = p,
            None => return false,
        }
    }
    true
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dof {
    pub bone: usize,
    pub axis: Axis,
}

/// Ordered (bone, axis) entries of the angle vector with their bounds.
#[derive(Clone, Debug, PartialEq)]
pub struct DofLayout {
    entries: Vec<Dof>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    slots: Vec<[Option<usize>; 3]>,
}

/// Enumerates the controlled axes of the named bones in skeleton order,
/// then axis order x, y, z.
pub fn dof_layout<S: AsRef<str>>(skel: &Skeleton, controlled: &[S]) -> Result<DofLayout> {
    let mut selected = vec![false; skel.len()];
    for name in controlled {
        selected[skel.index_of(name.as_ref())?] = true;
    }
    let mut layout = DofLayout {
        entries: Vec::new(),
        lower: Vec::new(),
        upper: Vec::new(),
        slots: vec![[None; 3]; skel.len()],
    };
    for (i, bone) in skel.bones().iter().enumerate() {
        if !selected[i] {
            continue;
        }
        for axis in bone.controlled_axes() {
            let (lo, hi) = bone.limits[axis.index()].unwrap();
            layout.slots[i][axis.index()] = Some(layout.entries.len());
            layout.entries.push(Dof { bone: i, axis });
            layout.lower.push(lo);
            layout.upper.push(hi);
        }
    }
    Ok(layout)
}

impl DofLayout {
    /// Every controlled axis of every bone.
    pub fn all(skel: &Skeleton) -> Self {
        let names: Vec<&str> = skel.bones().iter().map(|b| b.name.as_str()).collect();
        dof_layout(skel, &names).expect("names come from the skeleton")
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Dof] {
        &self.entries
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn bone_count(&self) -> usize {
        self.slots.len()
    }

    /// Angle-vector index of `(bone, axis)` if it is controlled.
    pub fn slot(&self, bone: usize, axis: Axis) -> Option<usize> {
        self.slots.get(bone).and_then(|s| s[axis.index()])
    }

    pub(crate) fn bone_slots(&self, bone: usize) -> [Option<usize>; 3] {
        self.slots[bone]
    }

    /// All-zero angle vector (the rest pose), projected into bounds.
    pub fn rest(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&lo, &hi)| 0.0f64.clamp(lo, hi))
            .collect()
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.len()
            && theta
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&t, (&lo, &hi))| lo <= t && t <= hi)
    }

    pub(crate) fn check_len(&self, len: usize) -> Result<()> {
        if len == self.len() {
            Ok(())
        } else {
            Err(IkError::Dimension {
                expected: self.len(),
                actual: len,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn chain(n: usize) -> Vec<BoneRecord> {
        (0..n)
            .map(|i| {
                let parent = if i == 0 { None } else { Some(format!("b{}", i - 1)) };
                BoneRecord {
                    parent,
                    ..BoneRecord::new(format!("b{i}"), None, [if i == 0 { 0.0 } else { 1.0 }, 0.0, 0.0])
                }
                .with_axis(Axis::X, -1.0, 1.0)
                .with_axis(Axis::Y, -1.0, 1.0)
                .with_axis(Axis::Z, -1.0, 1.0)
            })
            .collect()
    }

    #[test]
    fn single_identity_bone() {
        let skel = Skeleton::from_records(AngleUnits::Radians, vec![BoneRecord::new("root", None, [0.0; 3])]).unwrap();
        assert_eq!(skel.len(), 1);
        assert_eq!(skel.bones()[0].parent, None);
        assert_eq!(skel.bones()[0].local, Transform::identity());
    }

    #[test]
    fn parent_after_child_is_rejected() {
        let records = vec![
            BoneRecord::new("child", Some("root"), [1.0, 0.0, 0.0]),
            BoneRecord::new("root", None, [0.0; 3]),
        ];
        let err = Skeleton::from_records(AngleUnits::Radians, records).unwrap_err();
        assert!(matches!(&err, IkError::InvalidBone { bone, reason } if bone == "child" && reason.contains("after")), "{err}");
    }

    #[test]
    fn cycle_is_named() {
        let records = vec![
            BoneRecord::new("a", Some("b"), [0.0; 3]),
            BoneRecord::new("b", Some("a"), [0.0; 3]),
        ];
        let err = Skeleton::from_records(AngleUnits::Radians, records).unwrap_err();
        assert!(err.to_string().contains("cycle"), "{err}");
        let selfish = vec![BoneRecord::new("a", Some("a"), [0.0; 3])];
        let err = Skeleton::from_records(AngleUnits::Radians, selfish).unwrap_err();
        assert!(err.to_string().contains("cycle"), "{err}");
    }

    #[test]
    fn validation_errors_name_the_bone() {
        let unknown = vec![BoneRecord::new("a", Some("ghost"), [0.0; 3])];
        let err = Skeleton::from_records(AngleUnits::Radians, unknown).unwrap_err();
        assert!(err.to_string().contains("`a`") && err.to_string().contains("ghost"));

        let inverted = vec![BoneRecord::new("a", None, [0.0; 3]).with_axis(Axis::Z, 1.0, -1.0)];
        let err = Skeleton::from_records(AngleUnits::Radians, inverted).unwrap_err();
        assert!(err.to_string().contains("`a`") && err.to_string().contains("min"));

        let skewed = vec![BoneRecord::new("a", None, [0.0; 3]).with_rest_rotation([1.0, 0.1, 0.0, 0.0])];
        let err = Skeleton::from_records(AngleUnits::Radians, skewed).unwrap_err();
        assert!(err.to_string().contains("orthonormal"));

        let dup = vec![BoneRecord::new("a", None, [0.0; 3]), BoneRecord::new("a", None, [0.0; 3])];
        assert!(Skeleton::from_records(AngleUnits::Radians, dup).is_err());
    }

    #[test]
    fn missing_limits_are_rejected() {
        let mut r = BoneRecord::new("a", None, [0.0; 3]);
        r.controlled_axes.push(Axis::Y);
        assert!(Skeleton::from_records(AngleUnits::Radians, vec![r]).is_err());
    }

    #[test]
    fn degrees_are_converted() {
        let r = BoneRecord::new("a", None, [0.0; 3]).with_axis(Axis::Z, -90.0, 45.0);
        let skel = Skeleton::from_records(AngleUnits::Degrees, vec![r]).unwrap();
        let (lo, hi) = skel.bones()[0].limits[2].unwrap();
        assert_eq!(lo, -PI / 2.0);
        assert_eq!(hi, PI / 4.0);
        assert_eq!(skel.to_file().units, AngleUnits::Radians);
    }

    #[test]
    fn unsupported_version() {
        let text = r#"{"version": 2, "units": "radians", "bones": [{"name": "a", "parent": null, "translation": [0,0,0]}]}"#;
        assert!(matches!(Skeleton::from_json(text), Err(IkError::Parse(_))));
    }

    #[test]
    fn layout_single_axis() {
        let r = BoneRecord::new("a", None, [0.0; 3]).with_axis(Axis::Z, -PI, PI);
        let skel = Skeleton::from_records(AngleUnits::Radians, vec![r]).unwrap();
        let layout = skel.dof_layout(&["a"]).unwrap();
        assert_eq!(layout.len(), 1);
        assert_eq!(layout.lower(), &[-PI]);
        assert_eq!(layout.upper(), &[PI]);
    }

    #[test]
    fn layout_orders_bone_then_axis() {
        let skel = Skeleton::from_records(AngleUnits::Radians, chain(2)).unwrap();
        // Name order must not matter.
        let layout = skel.dof_layout(&["b1", "b0"]).unwrap();
        let got: Vec<(usize, Axis)> = layout.entries().iter().map(|d| (d.bone, d.axis)).collect();
        assert_eq!(
            got,
            vec![(0, Axis::X), (0, Axis::Y), (0, Axis::Z), (1, Axis::X), (1, Axis::Y), (1, Axis::Z)]
        );
        assert_eq!(layout, skel.dof_layout(&["b1", "b0"]).unwrap());
        assert_eq!(layout.slot(1, Axis::Y), Some(4));
    }

    #[test]
    fn layout_unknown_name() {
        let skel = Skeleton::from_records(AngleUnits::Radians, chain(1)).unwrap();
        assert!(matches!(skel.dof_layout(&["nope"]), Err(IkError::UnknownBone(_))));
    }
}
