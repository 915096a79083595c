//! Bundled humanoid upper body and the objective presets used by the
//! benchmark.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::objectives::{mask_for_bones, ObjectiveSpec, ObjectiveTerm};
use crate::skeleton::{DofLayout, Skeleton};

/// Pelvis, three spine segments, neck, head and two 8-DOF arms ending in
/// index fingertips. Meters, radians. At rest the upper arms lie along ±x
/// and each forearm is bent 0.3 rad forward at the elbow.
pub const HUMANOID_JSON: &str = include_str!("../assets/humanoid_upper_body.json");

pub const RIGHT_ARM: [&str; 4] = ["right_collar", "right_shoulder", "right_elbow", "right_wrist"];
pub const RIGHT_FINGERTIP: &str = "right_index";
pub const RIGHT_HAND: &str = "right_wrist";

/// Palm normal of the right hand in wrist coordinates, and "down".
pub const PALM_NORMAL: [f64; 3] = [0.0, -1.0, 0.0];
pub const DOWN: [f64; 3] = [0.0, -1.0, 0.0];

pub fn humanoid() -> Skeleton {
    Skeleton::from_json(HUMANOID_JSON).expect("bundled skeleton is valid")
}

/// Layout over the eight right-arm angles.
pub fn right_arm_layout(skel: &Skeleton) -> Result<DofLayout> {
    skel.dof_layout(&RIGHT_ARM)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Effector distance only.
    Simple,
    /// Distance, a hand-orientation look-at and a posture prior.
    Custom,
    /// Smooth trajectory whose last point must satisfy the simple preset.
    Trajectory,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Simple => "simple",
            Preset::Custom => "custom",
            Preset::Trajectory => "trajectory",
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "simple" => Ok(Preset::Simple),
            "custom" => Ok(Preset::Custom),
            "trajectory" => Ok(Preset::Trajectory),
            _ => Err(format!("unknown preset `{s}` (expected simple, custom or trajectory)")),
        }
    }
}

/// Bones and weights the presets are built from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PresetParams {
    pub effector: String,
    pub effector_offset: [f64; 3],
    pub distance_weight: f64,
    pub look_at_bone: String,
    pub look_at_axis: [f64; 3],
    pub look_at_target: [f64; 3],
    pub look_at_weight: f64,
    /// Bones held near their rest angles by the known-rotation term.
    pub posture_bones: Vec<String>,
    pub posture_weight: f64,
}

impl Default for PresetParams {
    fn default() -> Self {
        PresetParams {
            effector: RIGHT_FINGERTIP.into(),
            effector_offset: [0.0; 3],
            distance_weight: 1.0,
            look_at_bone: RIGHT_HAND.into(),
            look_at_axis: PALM_NORMAL,
            look_at_target: DOWN,
            look_at_weight: 0.1,
            posture_bones: vec!["right_collar".into()],
            posture_weight: 1.0,
        }
    }
}

impl PresetParams {
    pub fn simple(&self, skel: &Skeleton, target: [f64; 3]) -> Result<ObjectiveSpec> {
        let bone = skel.index_of(&self.effector)?;
        ObjectiveSpec::new(vec![ObjectiveTerm::distance(self.distance_weight, bone, self.effector_offset, target)])
    }

    pub fn custom(&self, skel: &Skeleton, layout: &DofLayout, target: [f64; 3]) -> Result<ObjectiveSpec> {
        let bone = skel.index_of(&self.effector)?;
        let hand = skel.index_of(&self.look_at_bone)?;
        let mask = mask_for_bones(skel, layout, &self.posture_bones)?;
        ObjectiveSpec::new(vec![
            ObjectiveTerm::distance(self.distance_weight, bone, self.effector_offset, target),
            ObjectiveTerm::look_at(self.look_at_weight, hand, self.look_at_axis, self.look_at_target),
            ObjectiveTerm::known_rotation(self.posture_weight, vec![0.0; layout.len()], mask),
        ])
    }

    /// Single-pose objective for `preset`; the trajectory preset uses the
    /// simple objective on its last point.
    pub fn spec(&self, preset: Preset, skel: &Skeleton, layout: &DofLayout, target: [f64; 3]) -> Result<ObjectiveSpec> {
        match preset {
            Preset::Simple | Preset::Trajectory => self.simple(skel, target),
            Preset::Custom => self.custom(skel, layout, target),
        }
    }
}
