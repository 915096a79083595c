//! Objective terms and their weighted composition.
//!
//! Terms are written once, generically over [`Scalar`], and shared by the
//! plain evaluator and the gradient engine.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{IkError, Result};
use crate::fk::{forward, GlobalPose};
use crate::grad::Scalar;
use crate::skeleton::{DofLayout, Skeleton};

/// Added inside the Euclidean norm so its gradient stays finite at zero.
pub const NORM_EPSILON: f64 = 1e-12;
/// The look-at cosine is clamped to `[-1 + COS_CLAMP, 1 - COS_CLAMP]`.
pub const COS_CLAMP: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TermKind {
    /// Euclidean distance from an effector point to a target.
    Distance {
        bone: usize,
        offset: [f64; 3],
        target: [f64; 3],
    },
    /// Squared angle between a bone-fixed axis and a target direction.
    LookAt {
        bone: usize,
        local_axis: [f64; 3],
        target_dir: [f64; 3],
        /// Added to `target_dir` before comparison; zero by default.
        #[serde(default)]
        target_offset: [f64; 3],
    },
    /// Masked mean squared deviation from candidate angles.
    KnownRotation { theta_star: Vec<f64>, mask: Vec<bool> },
    /// Squared finite-difference energy of order 1, 2 or 3 over a trajectory.
    Smoothness { order: usize },
}

impl TermKind {
    pub fn name(&self) -> &'static str {
        match self {
            TermKind::Distance { .. } => "distance",
            TermKind::LookAt { .. } => "look_at",
            TermKind::KnownRotation { .. } => "known_rotation",
            TermKind::Smoothness { .. } => "smoothness",
        }
    }

    fn needs_pose(&self) -> bool {
        matches!(self, TermKind::Distance { .. } | TermKind::LookAt { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveTerm {
    pub weight: f64,
    #[serde(flatten)]
    pub kind: TermKind,
}

impl ObjectiveTerm {
    pub fn distance(weight: f64, bone: usize, offset: [f64; 3], target: [f64; 3]) -> Self {
        ObjectiveTerm {
            weight,
            kind: TermKind::Distance { bone, offset, target },
        }
    }

    pub fn look_at(weight: f64, bone: usize, local_axis: [f64; 3], target_dir: [f64; 3]) -> Self {
        ObjectiveTerm {
            weight,
            kind: TermKind::LookAt {
                bone,
                local_axis,
                target_dir,
                target_offset: [0.0; 3],
            },
        }
    }

    pub fn known_rotation(weight: f64, theta_star: Vec<f64>, mask: Vec<bool>) -> Self {
        ObjectiveTerm {
            weight,
            kind: TermKind::KnownRotation { theta_star, mask },
        }
    }

    pub fn smoothness(weight: f64, order: usize) -> Self {
        ObjectiveTerm {
            weight,
            kind: TermKind::Smoothness { order },
        }
    }

    fn label(&self, index: usize) -> String {
        format!("{}#{index}", self.kind.name())
    }
}

/// Where an objective is evaluated: a single pose or a whole trajectory.
/// In a trajectory, pose terms bind to the last point.
#[derive(Clone, Copy, Debug)]
pub enum Context<'a, S> {
    Pose(&'a [S]),
    Trajectory(&'a [&'a [S]]),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EvalStats {
    pub fk_passes: usize,
}

/// Weighted list of objective terms, `J = Σ λ_k · term_k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSpec {
    terms: Vec<ObjectiveTerm>,
}

impl ObjectiveSpec {
    pub fn new(terms: Vec<ObjectiveTerm>) -> Result<Self> {
        if terms.is_empty() {
            return Err(IkError::InvalidArgument("objective needs at least one term".into()));
        }
        for (i, t) in terms.iter().enumerate() {
            if !(t.weight.is_finite() && t.weight >= 0.0) {
                return Err(IkError::term(t.label(i), format!("weight {} must be finite and >= 0", t.weight)));
            }
            match &t.kind {
                TermKind::Smoothness { order } if !(1..=3).contains(order) => {
                    return Err(IkError::term(t.label(i), format!("order {order} not in 1..=3")));
                }
                TermKind::LookAt { local_axis, target_dir, target_offset, .. } => {
                    if is_zero(local_axis) {
                        return Err(IkError::term(t.label(i), "zero bone axis"));
                    }
                    let dir = add3(*target_dir, *target_offset);
                    if is_zero(&dir) {
                        return Err(IkError::term(t.label(i), "zero target direction"));
                    }
                }
                TermKind::KnownRotation { theta_star, mask } if theta_star.len() != mask.len() => {
                    return Err(IkError::term(
                        t.label(i),
                        format!("theta_star has {} entries but mask has {}", theta_star.len(), mask.len()),
                    ));
                }
                _ => {}
            }
        }
        Ok(ObjectiveSpec { terms })
    }

    pub fn terms(&self) -> &[ObjectiveTerm] {
        &self.terms
    }

    pub fn needs_fk(&self) -> bool {
        self.terms.iter().any(|t| t.kind.needs_pose())
    }

    pub fn has_smoothness(&self) -> bool {
        self.terms.iter().any(|t| matches!(t.kind, TermKind::Smoothness { .. }))
    }

    /// Checks bone references and DOF-sized payloads against a skeleton.
    pub fn validate(&self, skel: &Skeleton, layout: &DofLayout) -> Result<()> {
        for (i, t) in self.terms.iter().enumerate() {
            match &t.kind {
                TermKind::Distance { bone, .. } | TermKind::LookAt { bone, .. } => {
                    if *bone >= skel.len() {
                        return Err(IkError::term(
                            t.label(i),
                            format!("bone index {bone} out of range ({} bones)", skel.len()),
                        ));
                    }
                }
                TermKind::KnownRotation { theta_star, .. } => {
                    if theta_star.len() != layout.len() {
                        return Err(IkError::term(
                            t.label(i),
                            format!("expected {} angles, got {}", layout.len(), theta_star.len()),
                        ));
                    }
                }
                TermKind::Smoothness { .. } => {}
            }
        }
        Ok(())
    }

    pub fn evaluate(&self, skel: &Skeleton, layout: &DofLayout, ctx: Context<'_, f64>) -> Result<f64> {
        self.evaluate_generic(skel, layout, ctx).map(|(v, _)| v)
    }

    /// Evaluates the weighted sum with a single FK pass for the bound pose.
    pub fn evaluate_generic<S: Scalar>(
        &self,
        skel: &Skeleton,
        layout: &DofLayout,
        ctx: Context<'_, S>,
    ) -> Result<(S, EvalStats)> {
        let (theta, trajectory) = match ctx {
            Context::Pose(theta) => (theta, None),
            Context::Trajectory(points) => {
                let last = points
                    .last()
                    .ok_or_else(|| IkError::InvalidArgument("empty trajectory".into()))?;
                (*last, Some(points))
            }
        };
        let mut stats = EvalStats::default();
        let pose = if self.needs_fk() {
            stats.fk_passes += 1;
            Some(forward(skel, layout, theta)?)
        } else {
            None
        };

        let mut total = S::zero();
        for (i, term) in self.terms.iter().enumerate() {
            let value = match &term.kind {
                TermKind::Distance { bone, offset, target } => {
                    distance_term(pose.as_ref().unwrap(), *bone, *offset, *target)?
                }
                TermKind::LookAt {
                    bone,
                    local_axis,
                    target_dir,
                    target_offset,
                } => look_at_term(
                    pose.as_ref().unwrap(),
                    *bone,
                    *local_axis,
                    add3(*target_dir, *target_offset),
                )?,
                TermKind::KnownRotation { theta_star, mask } => known_rotation_term(theta, theta_star, mask)?,
                TermKind::Smoothness { order } => match trajectory {
                    Some(points) => smoothness_term(points, *order)?,
                    None => {
                        return Err(IkError::term(
                            term.label(i),
                            "smoothness requires a trajectory context",
                        ))
                    }
                },
            };
            if !value.value().is_finite() {
                return Err(IkError::NonFinite { term: term.label(i) });
            }
            total = total + value * term.weight;
        }
        Ok((total, stats))
    }
}

fn is_zero(v: &[f64; 3]) -> bool {
    v.iter().all(|&x| x == 0.0)
}

fn add3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub(crate) fn distance_term<S: Scalar>(
    pose: &GlobalPose<S>,
    bone: usize,
    offset: [f64; 3],
    target: [f64; 3],
) -> Result<S> {
    let p = pose.effector_position(bone, offset)?;
    let dx = p[0] - target[0];
    let dy = p[1] - target[1];
    let dz = p[2] - target[2];
    Ok((dx * dx + dy * dy + dz * dz + NORM_EPSILON).sqrt())
}

pub(crate) fn look_at_term<S: Scalar>(
    pose: &GlobalPose<S>,
    bone: usize,
    local_axis: [f64; 3],
    target_dir: [f64; 3],
) -> Result<S> {
    let target_norm = (target_dir[0] * target_dir[0] + target_dir[1] * target_dir[1] + target_dir[2] * target_dir[2]).sqrt();
    if target_norm == 0.0 {
        return Err(IkError::InvalidArgument("look-at target direction is zero".into()));
    }
    let d = pose.bone_direction(bone, local_axis)?;
    let dot = d[0] * target_dir[0] + d[1] * target_dir[1] + d[2] * target_dir[2];
    let norm = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    let cos = (dot / norm / target_norm).clamp_value(-1.0 + COS_CLAMP, 1.0 - COS_CLAMP);
    Ok(cos.acos().square())
}

pub(crate) fn known_rotation_term<S: Scalar>(theta: &[S], theta_star: &[f64], mask: &[bool]) -> Result<S> {
    if theta.len() != theta_star.len() || theta.len() != mask.len() {
        return Err(IkError::Dimension {
            expected: theta_star.len(),
            actual: theta.len(),
        });
    }
    let mut sum = S::zero();
    let mut count = 0usize;
    for ((&t, &s), &m) in theta.iter().zip(theta_star).zip(mask) {
        if m {
            sum = sum + (t - s).square();
            count += 1;
        }
    }
    Ok(sum / count.max(1) as f64)
}

pub(crate) fn smoothness_term<S: Scalar>(points: &[&[S]], order: usize) -> Result<S> {
    if !(1..=3).contains(&order) {
        return Err(IkError::term("smoothness", format!("order {order} not in 1..=3")));
    }
    let len = points.len();
    if len <= order {
        warn!("smoothness order {order} needs more than {order} points, got {len}; term is 0");
        return Ok(S::zero());
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(IkError::InvalidArgument("trajectory points differ in length".into()));
    }
    // Repeated first differences rather than binomial weights: equal inputs
    // then cancel exactly at every order.
    let mut total = S::zero();
    let mut column: Vec<S> = Vec::with_capacity(len);
    for j in 0..dim {
        column.clear();
        column.extend(points.iter().map(|p| p[j]));
        for _ in 0..order {
            for t in 0..column.len() - 1 {
                column[t] = column[t + 1] - column[t];
            }
            column.pop();
        }
        for &d in &column {
            total = total + d.square();
        }
    }
    Ok(total)
}

/// `‖t − p‖` for an effector point, smoothed at zero.
pub fn distance_objective(pose: &GlobalPose, bone: usize, offset: [f64; 3], target: [f64; 3]) -> Result<f64> {
    distance_term(pose, bone, offset, target)
}

/// Squared angle between a bone-fixed axis and a target direction.
pub fn look_at_objective(pose: &GlobalPose, bone: usize, local_axis: [f64; 3], target_dir: [f64; 3]) -> Result<f64> {
    look_at_term(pose, bone, local_axis, target_dir)
}

/// Mean of `(θ_i − θ*_i)²` over the DOFs selected by `mask`.
pub fn known_rotation_objective(theta: &[f64], theta_star: &[f64], mask: &[bool]) -> Result<f64> {
    known_rotation_term(theta, theta_star, mask)
}

/// `Σ_t ‖Σ_k (−1)^k C(n,k) θ_{t+n−k}‖²` over a trajectory.
pub fn smoothness_objective<P: AsRef<[f64]>>(trajectory: &[P], order: usize) -> Result<f64> {
    let points: Vec<&[f64]> = trajectory.iter().map(AsRef::as_ref).collect();
    smoothness_term(&points, order)
}

/// Objective file: terms refer to bones by name and are resolved against a
/// skeleton and DOF layout.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveFile {
    /// Controlled bones; when absent every bone with controlled axes is used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controlled: Option<Vec<String>>,
    pub terms: Vec<TermRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TermRecord {
    Distance {
        #[serde(default = "one")]
        weight: f64,
        bone: String,
        #[serde(default)]
        offset: [f64; 3],
        #[serde(default)]
        target: [f64; 3],
    },
    LookAt {
        #[serde(default = "one")]
        weight: f64,
        bone: String,
        local_axis: [f64; 3],
        target_dir: [f64; 3],
        #[serde(default)]
        target_offset: [f64; 3],
    },
    KnownRotation {
        #[serde(default = "one")]
        weight: f64,
        /// Candidate angles; zeros when absent.
        #[serde(default)]
        theta_star: Option<Vec<f64>>,
        /// Explicit per-DOF mask.
        #[serde(default)]
        mask: Option<Vec<bool>>,
        /// Alternative to `mask`: select every DOF of these bones.
        #[serde(default)]
        mask_bones: Option<Vec<String>>,
    },
    Smoothness {
        #[serde(default = "one")]
        weight: f64,
        order: usize,
    },
}

fn one() -> f64 {
    1.0
}

impl ObjectiveFile {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| IkError::Parse(e.to_string()))
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| IkError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn layout(&self, skel: &Skeleton) -> Result<DofLayout> {
        match &self.controlled {
            Some(names) => skel.dof_layout(names),
            None => Ok(DofLayout::all(skel)),
        }
    }

    /// Replaces the target of every distance term.
    pub fn set_distance_target(&mut self, target: [f64; 3]) {
        for t in &mut self.terms {
            if let TermRecord::Distance { target: tt, .. } = t {
                *tt = target;
            }
        }
    }

    pub fn resolve(&self, skel: &Skeleton, layout: &DofLayout) -> Result<ObjectiveSpec> {
        let n = layout.len();
        let mut terms = Vec::with_capacity(self.terms.len());
        for rec in &self.terms {
            let term = match rec {
                TermRecord::Distance { weight, bone, offset, target } => {
                    ObjectiveTerm::distance(*weight, skel.index_of(bone)?, *offset, *target)
                }
                TermRecord::LookAt {
                    weight,
                    bone,
                    local_axis,
                    target_dir,
                    target_offset,
                } => ObjectiveTerm {
                    weight: *weight,
                    kind: TermKind::LookAt {
                        bone: skel.index_of(bone)?,
                        local_axis: *local_axis,
                        target_dir: *target_dir,
                        target_offset: *target_offset,
                    },
                },
                TermRecord::KnownRotation {
                    weight,
                    theta_star,
                    mask,
                    mask_bones,
                } => {
                    let star = theta_star.clone().unwrap_or_else(|| vec![0.0; n]);
                    let mask = match (mask, mask_bones) {
                        (Some(_), Some(_)) => {
                            return Err(IkError::term("known_rotation", "give either mask or mask_bones, not both"))
                        }
                        (Some(m), None) => m.clone(),
                        (None, Some(names)) => mask_for_bones(skel, layout, names)?,
                        (None, None) => vec![true; n],
                    };
                    ObjectiveTerm::known_rotation(*weight, star, mask)
                }
                TermRecord::Smoothness { weight, order } => ObjectiveTerm::smoothness(*weight, *order),
            };
            terms.push(term);
        }
        let spec = ObjectiveSpec::new(terms)?;
        spec.validate(skel, layout)?;
        Ok(spec)
    }
}

/// DOF mask selecting every controlled axis of the named bones.
pub fn mask_for_bones<S: AsRef<str>>(skel: &Skeleton, layout: &DofLayout, names: &[S]) -> Result<Vec<bool>> {
    let mut mask = vec![false; layout.len()];
    for name in names {
        let bone = skel.index_of(name.as_ref())?;
        for (k, dof) in layout.entries().iter().enumerate() {
            if dof.bone == bone {
                mask[k] = true;
            }
        }
    }
    Ok(mask)
}
