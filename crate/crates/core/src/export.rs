//! Plain-text global pose format for external viewers.
//!
//! ```text
//! ikdiff-pose 1
//! frame 0
//! pelvis m00 m01 m02 m03 m10 ... m33
//! spine1 ...
//! frame 1
//! ...
//! ```
//!
//! Each bone line holds the row-major 4×4 global matrix with 17 significant
//! digits, so parsing a written file reproduces every value exactly.

use std::fmt::Write as _;

use crate::error::{IkError, Result};
use crate::fk::{forward, GlobalPose, Transform};
use crate::skeleton::{DofLayout, Skeleton};

const HEADER: &str = "ikdiff-pose 1";

/// One frame: bone names paired with their global matrices.
pub type Frame = Vec<(String, [[f64; 4]; 4])>;

pub fn write_poses(skel: &Skeleton, poses: &[GlobalPose]) -> Result<String> {
    let mut out = String::new();
    out.push_str(HEADER);
    out.push('\n');
    for (f, pose) in poses.iter().enumerate() {
        if pose.len() != skel.len() {
            return Err(IkError::Dimension {
                expected: skel.len(),
                actual: pose.len(),
            });
        }
        writeln!(out, "frame {f}").unwrap();
        for (bone, t) in skel.bones().iter().zip(pose.transforms()) {
            out.push_str(&bone.name);
            for row in t.matrix() {
                for v in row {
                    write!(out, " {v:.16e}").unwrap();
                }
            }
            out.push('\n');
        }
    }
    Ok(out)
}

/// Evaluates FK for every angle vector and writes the resulting frames.
pub fn export_angles<P: AsRef<[f64]>>(skel: &Skeleton, layout: &DofLayout, frames: &[P]) -> Result<String> {
    let poses = frames
        .iter()
        .map(|theta| forward(skel, layout, theta.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    write_poses(skel, &poses)
}

pub fn parse_poses(text: &str) -> Result<Vec<Frame>> {
    let bad = |line: usize, msg: &str| IkError::Parse(format!("pose file line {}: {msg}", line + 1));
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, l)) if l.trim() == HEADER => {}
        _ => return Err(IkError::Parse(format!("pose file must start with `{HEADER}`"))),
    }
    let mut frames: Vec<Frame> = Vec::new();
    for (i, line) in lines {
        let mut fields = line.split_whitespace();
        let name = fields.next().unwrap_or_default();
        if name == "frame" {
            let index: usize = fields
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad(i, "expected a frame index"))?;
            if index != frames.len() {
                return Err(bad(i, "frames out of order"));
            }
            frames.push(Vec::new());
            continue;
        }
        let frame = frames.last_mut().ok_or_else(|| bad(i, "bone line before the first frame"))?;
        let values = fields
            .map(|s| s.parse::<f64>().map_err(|_| bad(i, &format!("bad number `{s}`"))))
            .collect::<Result<Vec<_>>>()?;
        if values.len() != 16 {
            return Err(bad(i, &format!("expected 16 matrix entries, got {}", values.len())));
        }
        let mut m = [[0.0; 4]; 4];
        for (k, v) in values.into_iter().enumerate() {
            m[k / 4][k % 4] = v;
        }
        Transform::from_matrix(m).map_err(|e| bad(i, &e.to_string()))?;
        frame.push((name.to_owned(), m));
    }
    Ok(frames)
}
