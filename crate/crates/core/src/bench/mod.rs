//! Benchmark harness: sample targets around the chain, keep the solvable
//! ones, pick representatives by k-means, then solve each from the rest pose
//! with every solver over several runs.

mod kmeans;
mod report;

pub use kmeans::{kmeans, KMeans};
pub use report::{write_raw_csv, write_summary_csv, BenchRow, RawRecord};

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assets::{self, Preset, PresetParams};
use crate::baselines::{ccd_solve, fabrik_solve, ChainSpec};
use crate::error::{IkError, Result};
use crate::fk::forward;
use crate::geom::{self, Vec3};
use crate::planner::{plan, PlanOptions, DEFAULT_SMOOTHNESS_WEIGHT};
use crate::skeleton::{DofLayout, Skeleton};
use crate::solver::{solve, SolveReport, SolverConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Gradient,
    Ccd,
    Fabrik,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Gradient => "gradient",
            SolverKind::Ccd => "ccd",
            SolverKind::Fabrik => "fabrik",
        }
    }
}

impl std::str::FromStr for SolverKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "gradient" => Ok(SolverKind::Gradient),
            "ccd" => Ok(SolverKind::Ccd),
            "fabrik" => Ok(SolverKind::Fabrik),
            _ => Err(format!("unknown solver `{s}` (expected gradient, ccd or fabrik)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectorySettings {
    pub n_intermediate: Vec<usize>,
    pub smooth_weight: f64,
    pub fixed_head: bool,
}

impl Default for TrajectorySettings {
    fn default() -> Self {
        TrajectorySettings {
            n_intermediate: vec![0, 5, 10],
            smooth_weight: DEFAULT_SMOOTHNESS_WEIGHT,
            fixed_head: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchPlan {
    /// Skeleton file; the bundled humanoid when absent.
    pub skeleton: Option<PathBuf>,
    pub controlled: Vec<String>,
    pub objective: PresetParams,
    pub presets: Vec<Preset>,
    pub sample_count: usize,
    pub kmeans_k: usize,
    pub kmeans_max_iters: usize,
    pub warmup_count: usize,
    pub runs: usize,
    pub solvers: Vec<SolverKind>,
    pub gradient: SolverConfig,
    pub ccd: SolverConfig,
    pub fabrik: SolverConfig,
    pub trajectory: TrajectorySettings,
    /// Explicit targets replacing sampling, filtering and clustering. The
    /// first `warmup_count` of them are warm-up only.
    pub targets: Option<Vec<Vec3>>,
    pub seed: u64,
}

impl Default for BenchPlan {
    fn default() -> Self {
        BenchPlan {
            skeleton: None,
            controlled: assets::RIGHT_ARM.iter().map(|s| s.to_string()).collect(),
            objective: PresetParams::default(),
            presets: vec![Preset::Simple, Preset::Custom],
            sample_count: 20_000,
            kmeans_k: 210,
            kmeans_max_iters: 100,
            warmup_count: 10,
            runs: 5,
            solvers: vec![SolverKind::Gradient, SolverKind::Ccd, SolverKind::Fabrik],
            gradient: SolverConfig::default(),
            ccd: SolverConfig::default(),
            fabrik: SolverConfig::default(),
            trajectory: TrajectorySettings::default(),
            targets: None,
            seed: 0,
        }
    }
}

impl BenchPlan {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| IkError::Parse(format!("bench plan: {e}")))
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| IkError::Io { path: path.into(), source })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(IkError::InvalidConfig(msg));
        if self.solvers.is_empty() {
            return bad("solver list is empty".into());
        }
        if self.presets.is_empty() {
            return bad("preset list is empty".into());
        }
        if self.runs == 0 {
            return bad("runs must be at least 1".into());
        }
        let selected = match &self.targets {
            Some(t) => t.len(),
            None => {
                if self.sample_count == 0 {
                    return bad("sample_count must be at least 1".into());
                }
                if self.kmeans_k == 0 {
                    return bad("kmeans_k must be at least 1".into());
                }
                self.kmeans_k
            }
        };
        if self.warmup_count >= selected {
            return bad(format!("warmup_count {} must be below the {selected} selected targets", self.warmup_count));
        }
        if self.presets.contains(&Preset::Trajectory) && self.trajectory.n_intermediate.is_empty() {
            return bad("trajectory preset needs at least one n_intermediate".into());
        }
        for c in [&self.gradient, &self.ccd, &self.fabrik] {
            c.validate()?;
        }
        Ok(())
    }

    pub fn config(&self, solver: SolverKind) -> &SolverConfig {
        match solver {
            SolverKind::Gradient => &self.gradient,
            SolverKind::Ccd => &self.ccd,
            SolverKind::Fabrik => &self.fabrik,
        }
    }
}

/// Skeleton, controlled angles and chain a plan operates on.
#[derive(Clone, Debug)]
pub struct BenchProblem {
    pub skeleton: Skeleton,
    pub layout: DofLayout,
    pub chain: ChainSpec,
    pub objective: PresetParams,
}

impl BenchProblem {
    pub fn from_plan(plan: &BenchPlan) -> Result<Self> {
        let skeleton = match &plan.skeleton {
            Some(path) => Skeleton::load(path)?,
            None => assets::humanoid(),
        };
        let layout = skeleton.dof_layout(&plan.controlled)?;
        let effector = skeleton.index_of(&plan.objective.effector)?;
        let chain = ChainSpec::from_layout(&skeleton, &layout, effector, plan.objective.effector_offset)?;
        Ok(BenchProblem { skeleton, layout, chain, objective: plan.objective.clone() })
    }

    /// Chain base and 1.1 × reach.
    pub fn sampling_ball(&self) -> Result<(Vec3, f64)> {
        Ok((self.chain.base(&self.skeleton, &self.layout)?, 1.1 * self.chain.reach()))
    }

    pub fn rest_effector(&self) -> Result<Vec3> {
        let pose = forward(&self.skeleton, &self.layout, &self.layout.rest())?;
        Ok(*self.chain.positions(&pose).last().unwrap())
    }

    /// Solves one target from the rest pose. Returns the report and every
    /// pose it produced (one, or the trajectory points).
    pub fn solve_target(
        &self,
        solver: SolverKind,
        preset: Preset,
        n_intermediate: usize,
        trajectory: &TrajectorySettings,
        config: &SolverConfig,
        target: Vec3,
    ) -> Result<(SolveReport, Vec<Vec<f64>>)> {
        let (skel, layout) = (&self.skeleton, &self.layout);
        let spec = self.objective.spec(preset, skel, layout, target)?;
        let rest = layout.rest();
        let report = match (preset, solver) {
            (Preset::Trajectory, SolverKind::Gradient) => {
                let options = PlanOptions {
                    n_intermediate,
                    smooth_weights: [trajectory.smooth_weight; 3],
                    fixed_head: trajectory.fixed_head,
                };
                let (traj, report) = plan(skel, layout, &rest, &spec, None, &options, config)?;
                return Ok((report, traj.points));
            }
            (Preset::Trajectory, _) => {
                return Err(IkError::InvalidConfig(format!("the trajectory preset needs the gradient solver, not {}", solver.name())))
            }
            (_, SolverKind::Gradient) => solve(skel, layout, &spec, &rest, config)?,
            (_, SolverKind::Ccd) => ccd_solve(skel, layout, &self.chain, target, &spec, &rest, config)?,
            (_, SolverKind::Fabrik) => fabrik_solve(skel, layout, &self.chain, target, &spec, &rest, config)?,
        };
        let pose = report.final_theta.clone();
        Ok((report, vec![pose]))
    }
}

/// Uniform samples in the ball of `radius` around `center`.
pub fn sample_targets(center: Vec3, radius: f64, count: usize, seed: u64) -> Vec<Vec3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let p: Vec3 = [rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)];
        if geom::dot(p, p) <= 1.0 {
            out.push(geom::add(center, geom::scale(p, radius)));
        }
    }
    out
}

fn map_targets<T, F>(targets: &[Vec3], jobs: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, Vec3) -> Result<T> + Sync,
{
    if jobs <= 1 {
        return targets.iter().enumerate().map(|(i, t)| f(i, *t)).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| IkError::InvalidConfig(format!("thread pool: {e}")))?;
    pool.install(|| targets.par_iter().enumerate().map(|(i, t)| f(i, *t)).collect())
}

/// Keeps the targets at least one solver reaches under the simple objective,
/// in their original order. Targets beyond reach are dropped without solving.
pub fn filter_solvable(
    problem: &BenchProblem,
    targets: &[Vec3],
    solvers: &[(SolverKind, SolverConfig)],
    jobs: usize,
) -> Result<Vec<Vec3>> {
    if solvers.is_empty() {
        return Err(IkError::InvalidConfig("solver list is empty".into()));
    }
    let base = problem.chain.base(&problem.skeleton, &problem.layout)?;
    let reach = problem.chain.reach();
    let trajectory = TrajectorySettings::default();
    let keep = map_targets(targets, jobs, |_, target| {
        for (solver, config) in solvers {
            if geom::distance(base, target) > reach + config.loss_threshold / problem.objective.distance_weight {
                return Ok(false);
            }
            let (report, _) = problem.solve_target(*solver, Preset::Simple, 0, &trajectory, config, target)?;
            if report.success {
                return Ok(true);
            }
        }
        Ok(false)
    })?;
    Ok(targets.iter().zip(keep).filter(|(_, k)| *k).map(|(t, _)| *t).collect())
}

/// Cluster representatives: each centroid replaced by the nearest member of
/// its cluster so every selected target is a solvable sample.
pub fn select_representatives(points: &[Vec3], k: usize, seed: u64, max_iters: usize) -> Result<Vec<Vec3>> {
    let km = kmeans(points, k, seed, max_iters)?;
    Ok(km
        .centroids
        .iter()
        .enumerate()
        .map(|(j, c)| {
            let members = points.iter().zip(&km.assignments).filter(|(_, a)| **a == j).map(|(p, _)| p);
            let pool: Vec<&Vec3> = members.collect();
            let pool: Vec<&Vec3> = if pool.is_empty() { points.iter().collect() } else { pool };
            let mut best = *pool[0];
            for p in pool {
                if geom::distance(*p, *c) < geom::distance(best, *c) {
                    best = *p;
                }
            }
            best
        })
        .collect())
}

/// Sampling, filtering and clustering; the first `warmup_count` of the
/// result are warm-up targets.
pub fn select_targets(plan: &BenchPlan, problem: &BenchProblem, jobs: usize) -> Result<Vec<Vec3>> {
    if let Some(t) = &plan.targets {
        return Ok(t.clone());
    }
    let (center, radius) = problem.sampling_ball().map_err(|e| e.in_stage("sample"))?;
    let samples = sample_targets(center, radius, plan.sample_count, plan.seed);
    let solvers: Vec<_> = plan.solvers.iter().map(|s| (*s, plan.config(*s).clone())).collect();
    let solvable = filter_solvable(problem, &samples, &solvers, jobs).map_err(|e| e.in_stage("filter"))?;
    log::info!("{} of {} sampled targets are solvable", solvable.len(), samples.len());
    select_representatives(&solvable, plan.kmeans_k, plan.seed, plan.kmeans_max_iters).map_err(|e| e.in_stage("kmeans"))
}

/// Benchmark result: summary rows and one raw record per solve.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchOutput {
    /// Evaluated targets (warm-up excluded).
    pub targets: Vec<Vec3>,
    pub rows: Vec<BenchRow>,
    pub records: Vec<RawRecord>,
}

fn check_bounds(layout: &DofLayout, poses: &[Vec<f64>]) -> Result<()> {
    for pose in poses {
        for (k, &v) in pose.iter().enumerate() {
            let (lo, hi) = (layout.lower()[k], layout.upper()[k]);
            if !(lo <= v && v <= hi) {
                return Err(IkError::BoundsViolation { index: k, value: v, lower: lo, upper: hi });
            }
        }
    }
    Ok(())
}

/// Cases a plan expands to: (preset, solver, n_intermediate).
fn cases(plan: &BenchPlan) -> Vec<(Preset, SolverKind, usize)> {
    let mut out = Vec::new();
    for &preset in &plan.presets {
        if preset == Preset::Trajectory {
            for &n in &plan.trajectory.n_intermediate {
                out.push((preset, SolverKind::Gradient, n));
            }
        } else {
            for &solver in &plan.solvers {
                out.push((preset, solver, 0));
            }
        }
    }
    out
}

/// Solves warm-up targets (discarded), then every remaining target for each
/// run and case.
pub fn evaluate_targets(plan: &BenchPlan, problem: &BenchProblem, selected: &[Vec3], jobs: usize) -> Result<BenchOutput> {
    let (warmup, targets) = selected.split_at(plan.warmup_count.min(selected.len()));
    let cases = cases(plan);
    for &(preset, solver, n) in &cases {
        map_targets(warmup, jobs, |_, t| problem.solve_target(solver, preset, n, &plan.trajectory, plan.config(solver), t))?;
    }

    let mut records = Vec::new();
    for run in 0..plan.runs {
        for &(preset, solver, n) in &cases {
            let config = plan.config(solver);
            let batch = map_targets(targets, jobs, |i, target| {
                let (report, poses) = problem.solve_target(solver, preset, n, &plan.trajectory, config, target)?;
                check_bounds(&problem.layout, &poses)?;
                Ok(RawRecord::new(run, solver, preset, n, plan.seed, i, target, &report))
            })?;
            records.extend(batch);
        }
    }
    let rows = cases.iter().map(|&(p, s, n)| BenchRow::aggregate(p, s, n, &records)).collect();
    Ok(BenchOutput { targets: targets.to_vec(), rows, records })
}

/// Full pipeline; a failing stage is reported by name.
pub fn run_benchmark(plan: &BenchPlan, jobs: usize) -> Result<BenchOutput> {
    plan.validate()?;
    let problem = BenchProblem::from_plan(plan).map_err(|e| e.in_stage("setup"))?;
    let selected = select_targets(plan, &problem, jobs)?;
    evaluate_targets(plan, &problem, &selected, jobs).map_err(|e| e.in_stage("solve"))
}
