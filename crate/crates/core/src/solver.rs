//! Projected cautious-Adam descent with iteration, loss and time-budget
//! stopping rules.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{IkError, Result};
use crate::grad::{GradientEngine, Objective, PoseObjective};
use crate::objectives::ObjectiveSpec;
use crate::skeleton::{DofLayout, Skeleton};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub max_iterations: usize,
    pub loss_threshold: f64,
    /// Wall-clock budget in milliseconds; enables the dynamic iteration cap.
    pub time_budget_ms: Option<f64>,
    pub cautious: bool,
    /// Apply the `dim / (nnz(m̂ > 0) + 1)` rescaling in the cautious update.
    pub cautious_scaling: bool,
    pub record_trace: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            learning_rate: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            max_iterations: 500,
            loss_threshold: 0.005,
            time_budget_ms: None,
            cautious: true,
            cautious_scaling: true,
            record_trace: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(IkError::InvalidConfig(msg));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return bad(format!("{name} must be in (0, 1), got {b}"));
            }
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return bad(format!("epsilon must be > 0, got {}", self.epsilon));
        }
        if self.max_iterations < 1 {
            return bad("max_iterations must be >= 1".into());
        }
        if self.loss_threshold.is_nan() || self.loss_threshold <= 0.0 {
            return bad(format!("loss_threshold must be > 0, got {}", self.loss_threshold));
        }
        if let Some(t) = self.time_budget_ms {
            if !(t > 0.0 && t.is_finite()) {
                return bad(format!("time_budget_ms must be > 0, got {t}"));
            }
        }
        Ok(())
    }

    pub fn time_budget(&self) -> Option<Duration> {
        self.time_budget_ms.map(|ms| Duration::from_secs_f64(ms / 1000.0))
    }
}

/// First and second moment estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(dim: usize) -> Self {
        AdamState {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
        }
    }
}

/// Masks out coordinates whose momentum and gradient disagree in sign:
/// `M = I(m̂∘g > 0) / max(mean(I), ε)`, `m̃ = α(m̂)·(m̂∘M)` with
/// `α(m̂) = dim / (nnz(m̂ > 0) + 1)` when `scaling` is on.
pub fn cautious_momentum(m_hat: &[f64], grad: &[f64], epsilon: f64, scaling: bool) -> Vec<f64> {
    let dim = m_hat.len();
    let agree: Vec<bool> = m_hat.iter().zip(grad).map(|(m, g)| m * g > 0.0).collect();
    let mean = agree.iter().filter(|&&a| a).count() as f64 / dim.max(1) as f64;
    let denom = mean.max(epsilon);
    let alpha = if scaling {
        dim as f64 / (m_hat.iter().filter(|&&m| m > 0.0).count() as f64 + 1.0)
    } else {
        1.0
    };
    m_hat
        .iter()
        .zip(&agree)
        .map(|(&m, &a)| if a { alpha * (m * (1.0 / denom)) } else { 0.0 })
        .collect()
}

/// One Adam update. Returns the new state and the unprojected angles.
pub fn adam_step(state: &AdamState, theta: &[f64], grad: &[f64], config: &SolverConfig) -> Result<(AdamState, Vec<f64>)> {
    let dim = theta.len();
    for len in [grad.len(), state.m.len(), state.v.len()] {
        if len != dim {
            return Err(IkError::Dimension { expected: dim, actual: len });
        }
    }
    if let Some(index) = grad.iter().position(|g| !g.is_finite()) {
        return Err(IkError::NonFiniteGradient { index });
    }
    let t = state.t + 1;
    let (b1, b2) = (config.beta1, config.beta2);
    let m: Vec<f64> = state.m.iter().zip(grad).map(|(m, g)| b1 * m + (1.0 - b1) * g).collect();
    let v: Vec<f64> = state.v.iter().zip(grad).map(|(v, g)| b2 * v + (1.0 - b2) * g * g).collect();
    let exponent = i32::try_from(t).unwrap_or(i32::MAX);
    let c1 = 1.0 - b1.powi(exponent);
    let c2 = 1.0 - b2.powi(exponent);
    let m_hat: Vec<f64> = m.iter().map(|m| m / c1).collect();
    let direction = if config.cautious {
        cautious_momentum(&m_hat, grad, config.epsilon, config.cautious_scaling)
    } else {
        m_hat
    };
    let next = theta
        .iter()
        .zip(&direction)
        .zip(&v)
        .map(|((&th, &d), &v)| th - config.learning_rate * d / ((v / c2).sqrt() + config.epsilon))
        .collect();
    Ok((AdamState { m, v, t }, next))
}

/// Element-wise clamp into the layout's bounds.
pub fn project_bounds(theta: &[f64], layout: &DofLayout) -> Result<Vec<f64>> {
    layout.check_len(theta.len())?;
    Ok(clamp_into(theta, layout.lower(), layout.upper()))
}

pub(crate) fn clamp_into(theta: &[f64], lower: &[f64], upper: &[f64]) -> Vec<f64> {
    theta
        .iter()
        .zip(lower.iter().zip(upper))
        .map(|(&t, (&lo, &hi))| t.clamp(lo, hi))
        .collect()
}

/// `min(N_max, ⌊T_max / mean(iteration_times)⌋)`, never below 1.
pub fn dynamic_budget(max_iterations: usize, time_budget: Duration, iteration_times: &[Duration]) -> usize {
    if iteration_times.is_empty() {
        return max_iterations;
    }
    let total: Duration = iteration_times.iter().sum();
    budget_from_mean(max_iterations, time_budget, total.as_secs_f64() / iteration_times.len() as f64)
}

fn budget_from_mean(max_iterations: usize, time_budget: Duration, mean_secs: f64) -> usize {
    if mean_secs <= 0.0 {
        return max_iterations.max(1);
    }
    let allowed = (time_budget.as_secs_f64() / mean_secs).floor();
    let allowed = if allowed >= max_iterations as f64 { max_iterations } else { allowed as usize };
    allowed.clamp(1, max_iterations.max(1))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Threshold,
    MaxIterations,
    TimeBudget,
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StopReason::Threshold => "threshold",
            StopReason::MaxIterations => "max_iterations",
            StopReason::TimeBudget => "time_budget",
        })
    }
}

mod duration_ms {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64() * 1000.0)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let ms = f64::deserialize(d)?;
        Duration::try_from_secs_f64(ms / 1000.0).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub final_theta: Vec<f64>,
    pub final_loss: f64,
    pub iterations: usize,
    #[serde(rename = "wall_time_ms", with = "duration_ms")]
    pub wall_time: Duration,
    pub success: bool,
    pub stop_reason: StopReason,
    /// Smallest iteration cap in force during the solve.
    pub iteration_limit: usize,
    /// True when a time budget made the result depend on wall-clock time.
    pub time_budget_active: bool,
    #[serde(rename = "last_iteration_ms", with = "duration_ms")]
    pub last_iteration_time: Duration,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss_trace: Option<Vec<f64>>,
}

impl SolveReport {
    /// Mean time per iteration, counting at least one iteration.
    pub fn ms_per_iteration(&self) -> f64 {
        self.wall_time.as_secs_f64() * 1000.0 / self.iterations.max(1) as f64
    }
}

/// Iteration counter enforcing `N_max` and the dynamic time-budget cap.
pub(crate) struct IterationClock {
    start: Instant,
    last_mark: Instant,
    last_iteration_time: Duration,
    iterations: usize,
    max_iterations: usize,
    limit: usize,
    budget: Option<Duration>,
}

impl IterationClock {
    pub(crate) fn start(config: &SolverConfig) -> Self {
        let now = Instant::now();
        IterationClock {
            start: now,
            last_mark: now,
            last_iteration_time: Duration::ZERO,
            iterations: 0,
            max_iterations: config.max_iterations,
            limit: config.max_iterations,
            budget: config.time_budget(),
        }
    }

    pub(crate) fn exhausted(&self) -> Option<StopReason> {
        if self.iterations < self.limit {
            None
        } else if self.limit < self.max_iterations {
            Some(StopReason::TimeBudget)
        } else {
            Some(StopReason::MaxIterations)
        }
    }

    /// Marks the end of an iteration; the first one includes setup time.
    pub(crate) fn tick(&mut self) {
        self.iterations += 1;
        let now = Instant::now();
        self.last_iteration_time = now - self.last_mark;
        self.last_mark = now;
        if let Some(budget) = self.budget {
            let mean = (now - self.start).as_secs_f64() / self.iterations as f64;
            self.limit = self.limit.min(budget_from_mean(self.max_iterations, budget, mean));
        }
    }

    pub(crate) fn report(
        &self,
        final_theta: Vec<f64>,
        final_loss: f64,
        stop_reason: StopReason,
        loss_threshold: f64,
        loss_trace: Option<Vec<f64>>,
    ) -> SolveReport {
        SolveReport {
            final_theta,
            final_loss,
            iterations: self.iterations,
            wall_time: self.last_mark - self.start,
            success: final_loss < loss_threshold,
            stop_reason,
            iteration_limit: self.limit,
            time_budget_active: self.budget.is_some(),
            last_iteration_time: self.last_iteration_time,
            loss_trace,
        }
    }
}

/// Minimizes `objective` from `x0` inside `[lower, upper]`.
///
/// Each iteration takes one Adam step, projects, and evaluates value and
/// gradient at the new point; the first iteration's time includes the
/// initial evaluation.
pub fn minimize<F: Objective>(
    objective: &F,
    lower: &[f64],
    upper: &[f64],
    x0: &[f64],
    config: &SolverConfig,
) -> Result<SolveReport> {
    config.validate()?;
    let dim = objective.dim();
    for len in [lower.len(), upper.len(), x0.len()] {
        if len != dim {
            return Err(IkError::Dimension { expected: dim, actual: len });
        }
    }
    let mut clock = IterationClock::start(config);
    let mut engine = GradientEngine::new();
    let mut x = clamp_into(x0, lower, upper);
    let (mut loss, mut grad) = engine.value_and_gradient(objective, &x)?;
    let mut trace = config.record_trace.then(|| vec![loss]);
    let mut state = AdamState::new(dim);

    let stop_reason = loop {
        if loss < config.loss_threshold {
            break StopReason::Threshold;
        }
        if let Some(reason) = clock.exhausted() {
            break reason;
        }
        let (next_state, next) = adam_step(&state, &x, &grad, config)?;
        state = next_state;
        x = clamp_into(&next, lower, upper);
        (loss, grad) = engine.value_and_gradient(objective, &x)?;
        if let Some(t) = trace.as_mut() {
            t.push(loss);
        }
        clock.tick();
    };
    Ok(clock.report(x, loss, stop_reason, config.loss_threshold, trace))
}

/// Solves a single-pose IK problem from `theta0` (projected into bounds first).
pub fn solve(
    skel: &Skeleton,
    layout: &DofLayout,
    spec: &ObjectiveSpec,
    theta0: &[f64],
    config: &SolverConfig,
) -> Result<SolveReport> {
    spec.validate(skel, layout)?;
    layout.check_len(theta0.len())?;
    let objective = PoseObjective {
        spec,
        skeleton: skel,
        layout,
    };
    minimize(&objective, layout.lower(), layout.upper(), theta0, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::ObjectiveTerm;
    use crate::skeleton::{AngleUnits, Axis, BoneRecord};
    use std::f64::consts::PI;

    /// Textbook Adam, written independently of `adam_step`.
    fn reference_adam(steps: &[Vec<f64>], theta0: &[f64], lr: f64) -> Vec<f64> {
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
        let mut m = vec![0.0; theta0.len()];
        let mut v = vec![0.0; theta0.len()];
        let mut theta = theta0.to_vec();
        for (t, g) in steps.iter().enumerate() {
            let t = (t + 1) as i32;
            for i in 0..theta.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let mh = m[i] / (1.0 - b1.powi(t));
                let vh = v[i] / (1.0 - b2.powi(t));
                theta[i] -= lr * mh / (vh.sqrt() + eps);
            }
        }
        theta
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let config = SolverConfig::default();
        let (state, theta) = adam_step(&AdamState::new(3), &[0.1, 0.2, 0.3], &[0.0; 3], &config).unwrap();
        assert_eq!(theta, vec![0.1, 0.2, 0.3]);
        assert_eq!(state.m, vec![0.0; 3]);
        assert_eq!(state.v, vec![0.0; 3]);
        assert_eq!(state.t, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let config = SolverConfig {
            cautious: false,
            ..SolverConfig::default()
        };
        let g = 0.37;
        let (_, theta) = adam_step(&AdamState::new(1), &[0.0], &[g], &config).unwrap();
        let expected = -config.learning_rate * g / (g.abs() + config.epsilon);
        assert!((theta[0] - expected).abs() < 1e-15);
        assert!((theta[0] + 0.1).abs() < 1e-7);
    }

    #[test]
    fn cautious_mask_hand_example() {
        let m = cautious_momentum(&[1.0, -1.0], &[1.0, 1.0], 1e-8, true);
        assert_eq!(m, vec![2.0, 0.0]);
    }

    #[test]
    fn cautious_zeroes_disagreeing_coordinates() {
        let config = SolverConfig::default();
        let state = AdamState {
            m: vec![0.5, -0.5, 0.2],
            v: vec![0.1, 0.1, 0.1],
            t: 3,
        };
        // Gradient small enough that m̂ keeps its sign on coordinate 1.
        let grad = [0.1, 0.01, 0.3];
        let theta = [0.4, -0.3, 0.9];
        let (next_state, next) = adam_step(&state, &theta, &grad, &config).unwrap();
        assert!(next_state.m[1] < 0.0);
        assert_eq!(next[1], theta[1]);
        assert_ne!(next[0], theta[0]);
    }

    #[test]
    fn plain_adam_matches_reference() {
        let config = SolverConfig {
            cautious: false,
            ..SolverConfig::default()
        };
        let grads = vec![vec![0.3, -1.0], vec![0.1, -0.5], vec![-0.2, 0.4], vec![0.05, 0.0]];
        let mut state = AdamState::new(2);
        let mut theta = vec![0.5, -0.5];
        for g in &grads {
            let (s, t) = adam_step(&state, &theta, g, &config).unwrap();
            state = s;
            theta = t;
        }
        let want = reference_adam(&grads, &[0.5, -0.5], 0.1);
        for (a, b) in theta.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let config = SolverConfig::default();
        let err = adam_step(&AdamState::new(2), &[0.0, 0.0], &[0.0, f64::NAN], &config).unwrap_err();
        assert!(matches!(err, IkError::NonFiniteGradient { index: 1 }));
    }

    #[test]
    fn projection() {
        let skel = Skeleton::from_records(
            AngleUnits::Radians,
            vec![BoneRecord::new("a", None, [0.0; 3])
                .with_axis(Axis::X, -PI, PI)
                .with_axis(Axis::Y, -PI, PI)
                .with_axis(Axis::Z, -PI, 1.5)],
        )
        .unwrap();
        let layout = DofLayout::all(&skel);
        assert_eq!(project_bounds(&[0.1, 0.2, 0.3], &layout).unwrap(), vec![0.1, 0.2, 0.3]);
        assert_eq!(project_bounds(&[0.0, 0.0, 2.0], &layout).unwrap()[2], 1.5);
        assert_eq!(project_bounds(&[-4.0, 0.0, 0.0], &layout).unwrap()[0], -PI);
        assert_eq!(project_bounds(&[0.0, 4.0, 0.0], &layout).unwrap()[1], PI);
    }

    #[test]
    fn budget_arithmetic() {
        let ms = Duration::from_millis;
        let half = Duration::from_micros(500);
        assert_eq!(dynamic_budget(500, ms(100), &[half, half, half]), 200);
        assert_eq!(dynamic_budget(500, ms(100), &[ms(150)]), 1);
        assert_eq!(dynamic_budget(500, ms(100), &[ms(100)]), 1);
        assert_eq!(dynamic_budget(500, ms(100), &[Duration::from_nanos(1)]), 500);
        assert_eq!(dynamic_budget(500, ms(100), &[]), 500);
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        for bad in [
            SolverConfig { learning_rate: 0.0, ..Default::default() },
            SolverConfig { beta1: 1.0, ..Default::default() },
            SolverConfig { beta2: 0.0, ..Default::default() },
            SolverConfig { max_iterations: 0, ..Default::default() },
            SolverConfig { loss_threshold: 0.0, ..Default::default() },
            SolverConfig { time_budget_ms: Some(-1.0), ..Default::default() },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }

    fn unit_link(lo: f64, hi: f64) -> (Skeleton, DofLayout) {
        let skel = Skeleton::from_records(
            AngleUnits::Radians,
            vec![BoneRecord::new("a", None, [0.0; 3]).with_axis(Axis::Z, lo, hi)],
        )
        .unwrap();
        let layout = DofLayout::all(&skel);
        (skel, layout)
    }

    fn reach(target: [f64; 3]) -> ObjectiveSpec {
        ObjectiveSpec::new(vec![ObjectiveTerm::distance(1.0, 0, [1.0, 0.0, 0.0], target)]).unwrap()
    }

    #[test]
    fn already_converged() {
        let (skel, layout) = unit_link(-PI, PI);
        let report = solve(&skel, &layout, &reach([1.0, 0.0, 0.0]), &[0.0], &SolverConfig::default()).unwrap();
        assert!(report.success);
        assert_eq!(report.iterations, 0);
        assert_eq!(report.stop_reason, StopReason::Threshold);
    }

    #[test]
    fn reachable_one_joint() {
        let (skel, layout) = unit_link(-PI, PI);
        let target = [1f64.cos(), 1f64.sin(), 0.0];
        let report = solve(&skel, &layout, &reach(target), &[0.0], &SolverConfig::default()).unwrap();
        assert!(report.success, "{report:?}");
        // θ* = atan2(t_y, t_x) = 1.0
        assert!((report.final_theta[0] - target[1].atan2(target[0])).abs() < 0.005);
    }

    #[test]
    fn unreachable_one_joint() {
        let (skel, layout) = unit_link(-PI, PI);
        let target = [3f64 * 1f64.cos(), 3.0 * 1f64.sin(), 0.0];
        let report = solve(&skel, &layout, &reach(target), &[0.0], &SolverConfig::default()).unwrap();
        assert!(!report.success);
        assert_eq!(report.stop_reason, StopReason::MaxIterations);
        assert_eq!(report.iterations, 500);
        assert!(report.final_loss >= 2.0 - 0.005);
    }

    #[test]
    fn trace_and_bounds() {
        let (skel, layout) = unit_link(-0.5, 0.5);
        let config = SolverConfig {
            record_trace: true,
            max_iterations: 50,
            ..Default::default()
        };
        let report = solve(&skel, &layout, &reach([0.0, 1.0, 0.0]), &[3.0], &config).unwrap();
        assert_eq!(report.final_theta, vec![0.5]);
        assert_eq!(report.loss_trace.as_ref().unwrap().len(), report.iterations + 1);
        let json = serde_json::to_string(&report).unwrap();
        let back: SolveReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.final_theta, report.final_theta);
        assert_eq!(back.stop_reason, report.stop_reason);
    }
}
