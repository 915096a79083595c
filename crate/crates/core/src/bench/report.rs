use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::assets::Preset;
use crate::error::{IkError, Result};
use crate::geom::Vec3;
use crate::solver::{SolveReport, StopReason};

use super::SolverKind;

/// One solve of one target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub run: usize,
    pub solver: SolverKind,
    pub preset: Preset,
    pub n_intermediate: usize,
    pub seed: u64,
    pub target_index: usize,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub iterations: usize,
    pub iteration_limit: usize,
    pub loss: f64,
    pub time_ms: f64,
    pub stop_reason: StopReason,
    pub success: bool,
}

impl RawRecord {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn new(
        run: usize,
        solver: SolverKind,
        preset: Preset,
        n_intermediate: usize,
        seed: u64,
        target_index: usize,
        target: Vec3,
        report: &SolveReport,
    ) -> Self {
        RawRecord {
            run,
            solver,
            preset,
            n_intermediate,
            seed,
            target_index,
            x: target[0],
            y: target[1],
            z: target[2],
            iterations: report.iterations,
            iteration_limit: report.iteration_limit,
            loss: report.final_loss,
            time_ms: report.wall_time.as_secs_f64() * 1e3,
            stop_reason: report.stop_reason,
            success: report.success,
        }
    }

    pub fn ms_per_iteration(&self) -> f64 {
        self.time_ms / self.iterations.max(1) as f64
    }
}

/// Mean and population standard deviation over all runs and targets of one
/// (solver, preset) case. Success is a per-solve 0/100 indicator.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRow {
    /// `gradient`, `ccd`, `fabrik`, or `planner_n{k}` for trajectories.
    pub solver: String,
    pub custom_objective: bool,
    pub solve_ms_mean: f64,
    pub solve_ms_std: f64,
    pub iters_mean: f64,
    pub iters_std: f64,
    pub ms_per_iter_mean: f64,
    pub ms_per_iter_std: f64,
    pub success_pct_mean: f64,
    pub success_pct_std: f64,
    #[serde(skip)]
    pub preset: Option<Preset>,
    #[serde(skip)]
    pub n_intermediate: usize,
    #[serde(skip)]
    pub solve_ms_median: f64,
    #[serde(skip)]
    pub iters_median: f64,
    #[serde(skip)]
    pub samples: usize,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub(crate) fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

impl BenchRow {
    pub(crate) fn aggregate(preset: Preset, solver: SolverKind, n: usize, records: &[RawRecord]) -> Self {
        let mine: Vec<&RawRecord> = records
            .iter()
            .filter(|r| r.preset == preset && r.solver == solver && r.n_intermediate == n)
            .collect();
        let times: Vec<f64> = mine.iter().map(|r| r.time_ms).collect();
        let iters: Vec<f64> = mine.iter().map(|r| r.iterations as f64).collect();
        let per: Vec<f64> = mine.iter().map(|r| r.ms_per_iteration()).collect();
        let success: Vec<f64> = mine.iter().map(|r| if r.success { 100.0 } else { 0.0 }).collect();
        let (solve_ms_mean, solve_ms_std) = mean_std(&times);
        let (iters_mean, iters_std) = mean_std(&iters);
        let (ms_per_iter_mean, ms_per_iter_std) = mean_std(&per);
        let (success_pct_mean, success_pct_std) = mean_std(&success);
        BenchRow {
            solver: match preset {
                Preset::Trajectory => format!("planner_n{n}"),
                _ => solver.name().to_string(),
            },
            custom_objective: preset == Preset::Custom,
            solve_ms_mean,
            solve_ms_std,
            iters_mean,
            iters_std,
            ms_per_iter_mean,
            ms_per_iter_std,
            success_pct_mean,
            success_pct_std,
            preset: Some(preset),
            n_intermediate: n,
            solve_ms_median: median(&times),
            iters_median: median(&iters),
            samples: mine.len(),
        }
    }
}

fn csv_error(e: csv::Error) -> IkError {
    IkError::Output(e.to_string())
}

fn write_csv<T: Serialize>(out: impl Write, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(csv_error)?;
    }
    w.flush().map_err(|e| IkError::Output(e.to_string()))
}

pub fn write_summary_csv(out: impl Write, rows: &[BenchRow]) -> Result<()> {
    write_csv(out, rows)
}

pub fn write_raw_csv(out: impl Write, records: &[RawRecord]) -> Result<()> {
    write_csv(out, records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn statistics() {
        let (m, s) = mean_std(&[0.0, 100.0, 100.0, 100.0]);
        assert_eq!(m, 75.0);
        assert!((s - 43.30127018922193).abs() < 1e-12);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn summary_header() {
        let mut buf = Vec::new();
        let row = BenchRow::aggregate(Preset::Simple, SolverKind::Ccd, 0, &[]);
        write_summary_csv(&mut buf, &[row]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "solver,custom_objective,solve_ms_mean,solve_ms_std,iters_mean,iters_std,ms_per_iter_mean,ms_per_iter_std,success_pct_mean,success_pct_std"
        );
    }
}
