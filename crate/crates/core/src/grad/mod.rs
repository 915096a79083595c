//! Reverse-mode differentiation of objectives with respect to the angle
//! vector.

mod scalar;
mod tape;

pub use scalar::Scalar;
pub use tape::{Tape, Var};

use crate::error::{IkError, Result};
use crate::objectives::{Context, ObjectiveSpec};
use crate::skeleton::{DofLayout, Skeleton};

/// A scalar function of a flat parameter vector, evaluable with any
/// [`Scalar`].
pub trait Objective {
    fn dim(&self) -> usize;
    fn eval<S: Scalar>(&self, x: &[S]) -> Result<S>;
}

/// Owns a reusable tape; one engine per thread of evaluation.
#[derive(Default)]
pub struct GradientEngine {
    tape: Tape,
}

impl GradientEngine {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn value_and_gradient<F: Objective>(&mut self, f: &F, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        if x.len() != f.dim() {
            return Err(IkError::Dimension {
                expected: f.dim(),
                actual: x.len(),
            });
        }
        self.tape.clear();
        let tape = &self.tape;
        let vars: Vec<Var<'_>> = x.iter().map(|&v| tape.var(v)).collect();
        let out = f.eval(&vars)?;
        let grad = tape.gradient(out, &vars);
        if let Some(index) = grad.iter().position(|g| !g.is_finite()) {
            return Err(IkError::NonFiniteGradient { index });
        }
        Ok((out.value(), grad))
    }

    /// Number of nodes recorded by the last evaluation.
    pub fn tape_len(&self) -> usize {
        self.tape.len()
    }
}

/// An [`ObjectiveSpec`] bound to a skeleton, evaluated on a single pose.
#[derive(Clone, Copy)]
pub struct PoseObjective<'a> {
    pub spec: &'a ObjectiveSpec,
    pub skeleton: &'a Skeleton,
    pub layout: &'a DofLayout,
}

impl Objective for PoseObjective<'_> {
    fn dim(&self) -> usize {
        self.layout.len()
    }

    fn eval<S: Scalar>(&self, x: &[S]) -> Result<S> {
        self.spec
            .evaluate_generic(self.skeleton, self.layout, Context::Pose(x))
            .map(|(v, _)| v)
    }
}

/// `J(θ)` and `∇J(θ)` for a single pose.
pub fn value_and_gradient(
    spec: &ObjectiveSpec,
    skel: &Skeleton,
    layout: &DofLayout,
    theta: &[f64],
) -> Result<(f64, Vec<f64>)> {
    spec.validate(skel, layout)?;
    let objective = PoseObjective {
        spec,
        skeleton: skel,
        layout,
    };
    GradientEngine::new().value_and_gradient(&objective, theta)
}

/// Central differences, for tests and diagnostics.
pub fn central_difference<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}
