//! `ikdiff` command line.
//!
//! Exit codes: 0 on success, 1 when a solve or plan ran but did not reach the
//! loss threshold, 2 on bad input or usage.

use std::ffi::OsString;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::assets;
use crate::bench::{run_benchmark, write_raw_csv, write_summary_csv, BenchPlan};
use crate::error::{IkError, Result};
use crate::export::export_angles;
use crate::objectives::{ObjectiveFile, ObjectiveSpec, TermKind};
use crate::planner::{plan, PlanOptions, Trajectory, DEFAULT_SMOOTHNESS_WEIGHT};
use crate::skeleton::{DofLayout, Skeleton};
use crate::solver::{solve, SolveReport, SolverConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_NOT_CONVERGED: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

/// Environment variable naming the default solver config file.
pub const CONFIG_ENV: &str = "IKDIFF_CONFIG";

#[derive(Debug, Parser)]
#[command(name = "ikdiff", version, about = "Differentiable inverse kinematics with joint limits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve a single pose and print the report.
    Solve(SolveArgs),
    /// Optimize a trajectory from the start pose to the target.
    Plan(PlanArgs),
    /// Run the benchmark protocol and write summary and raw CSVs.
    Bench(BenchArgs),
    /// Convert a solve or plan report to the global pose text format.
    Export(ExportArgs),
    /// Check a skeleton file.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
struct OutputArgs {
    /// Write to this file instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Allow --out to replace an existing file.
    #[arg(long)]
    force: bool,
    /// Print numbers with 17 significant digits instead of 6.
    #[arg(long)]
    exact: bool,
}

#[derive(Debug, Args)]
struct ProblemArgs {
    /// Skeleton file; the bundled humanoid when omitted.
    #[arg(long)]
    skeleton: Option<PathBuf>,
    /// Objective file.
    #[arg(long)]
    objective: PathBuf,
    /// Replaces the target of every distance term.
    #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
    target: Option<[f64; 3]>,
    /// Solver config file.
    #[arg(long, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    /// Start angles, comma separated; the rest pose when omitted.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    start: Option<Vec<f64>>,
    /// Accepted for uniformity; solving is deterministic.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Record the per-iteration loss in the report.
    #[arg(long)]
    trace: bool,
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct PlanArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Number of intermediate points.
    #[arg(long, default_value_t = 5)]
    points: usize,
    /// Weight of each smoothness order.
    #[arg(long, default_value_t = DEFAULT_SMOOTHNESS_WEIGHT)]
    smooth: f64,
    /// Optimize the first point too instead of pinning it to the start pose.
    #[arg(long)]
    free_head: bool,
    /// Objective applied to every free point (e.g. a posture prior).
    #[arg(long)]
    path_objective: Option<PathBuf>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Bench plan file; the default desk-scale plan when omitted.
    #[arg(long)]
    plan: Option<PathBuf>,
    /// Directory for summary.csv and raw.csv; summary goes to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Allow replacing existing CSV files.
    #[arg(long)]
    force: bool,
    /// Keep full precision in the CSV decimal columns.
    #[arg(long)]
    exact: bool,
    /// Overrides the plan's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for solving targets.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Debug, Args)]
struct ExportArgs {
    /// Skeleton the report was solved on; the bundled humanoid when omitted.
    #[arg(long)]
    skeleton: Option<PathBuf>,
    /// Report written by `solve` or `plan`.
    #[arg(long)]
    input: PathBuf,
    /// Write to this file instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Allow --out to replace an existing file.
    #[arg(long)]
    force: bool,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    /// Skeleton file; the bundled humanoid when omitted.
    #[arg(long)]
    skeleton: Option<PathBuf>,
}

/// Output of `solve`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveDocument {
    pub controlled: Vec<String>,
    /// Effector position of the final pose, when the objective has a distance term.
    pub effector: Option<[f64; 3]>,
    pub report: SolveReport,
}

/// Output of `plan`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanDocument {
    pub controlled: Vec<String>,
    pub trajectory: Trajectory,
    pub effector_positions: Vec<[f64; 3]>,
    pub report: SolveReport,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Document {
    Plan(PlanDocument),
    Solve(SolveDocument),
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Solve(args) => run_solve(args),
        Command::Plan(args) => run_plan(args),
        Command::Bench(args) => run_bench(args),
        Command::Export(args) => run_export(args),
        Command::Validate(args) => run_validate(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INPUT
        }
    }
}

fn parse_vec3(s: &str) -> std::result::Result<[f64; 3], String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected x,y,z, got `{s}`"));
    }
    let mut v = [0.0f64; 3];
    for (slot, p) in v.iter_mut().zip(parts) {
        *slot = p.trim().parse().map_err(|_| format!("bad number `{p}`"))?;
        if !slot.is_finite() {
            return Err(format!("non-finite coordinate `{p}`"));
        }
    }
    Ok(v)
}

fn load_skeleton(path: Option<&Path>) -> Result<Skeleton> {
    match path {
        Some(p) => Skeleton::load(p),
        None => Ok(assets::humanoid()),
    }
}

fn load_config(path: Option<&Path>) -> Result<SolverConfig> {
    let config = match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|source| IkError::Io { path: p.into(), source })?;
            serde_json::from_str(&text).map_err(|e| IkError::Parse(format!("{}: {e}", p.display())))?
        }
        None => SolverConfig::default(),
    };
    config.validate()?;
    Ok(config)
}

fn controlled_names(skel: &Skeleton, layout: &DofLayout) -> Vec<String> {
    let mut names: Vec<String> = Vec::new();
    for dof in layout.entries() {
        let name = &skel.bones()[dof.bone].name;
        if names.last() != Some(name) {
            names.push(name.clone());
        }
    }
    names
}

fn first_effector(spec: &ObjectiveSpec) -> Option<(usize, [f64; 3])> {
    spec.terms().iter().find_map(|t| match t.kind {
        TermKind::Distance { bone, offset, .. } => Some((bone, offset)),
        _ => None,
    })
}

struct Problem {
    skel: Skeleton,
    layout: DofLayout,
    spec: ObjectiveSpec,
    config: SolverConfig,
    start: Vec<f64>,
}

impl ProblemArgs {
    fn load(&self) -> Result<Problem> {
        let skel = load_skeleton(self.skeleton.as_deref())?;
        let mut file = ObjectiveFile::load(&self.objective)?;
        if let Some(t) = self.target {
            file.set_distance_target(t);
        }
        let layout = file.layout(&skel)?;
        let spec = file.resolve(&skel, &layout)?;
        let mut config = load_config(self.config.as_deref())?;
        config.record_trace |= self.trace;
        let start = match &self.start {
            Some(s) => {
                layout.check_len(s.len())?;
                s.clone()
            }
            None => layout.rest(),
        };
        Ok(Problem { skel, layout, spec, config, start })
    }
}

fn run_solve(args: SolveArgs) -> Result<i32> {
    let p = args.problem.load()?;
    let report = solve(&p.skel, &p.layout, &p.spec, &p.start, &p.config)?;
    let effector = match first_effector(&p.spec) {
        Some((bone, offset)) => Some(crate::fk::forward(&p.skel, &p.layout, &report.final_theta)?.effector_position(bone, offset)?),
        None => None,
    };
    let success = report.success;
    let doc = SolveDocument {
        controlled: controlled_names(&p.skel, &p.layout),
        effector,
        report,
    };
    emit(&format_json(&doc, args.output.exact)?, &args.output)?;
    Ok(if success { EXIT_OK } else { EXIT_NOT_CONVERGED })
}

fn run_plan(args: PlanArgs) -> Result<i32> {
    let p = args.problem.load()?;
    let path_spec = match &args.path_objective {
        Some(path) => Some(ObjectiveFile::load(path)?.resolve(&p.skel, &p.layout)?),
        None => None,
    };
    let options = PlanOptions {
        n_intermediate: args.points,
        smooth_weights: [args.smooth; 3],
        fixed_head: !args.free_head,
    };
    let (trajectory, report) = plan(&p.skel, &p.layout, &p.start, &p.spec, path_spec.as_ref(), &options, &p.config)?;
    let effector_positions = match first_effector(&p.spec) {
        Some((bone, offset)) => trajectory.effector_positions(&p.skel, &p.layout, bone, offset)?,
        None => Vec::new(),
    };
    let success = report.success;
    let doc = PlanDocument {
        controlled: controlled_names(&p.skel, &p.layout),
        trajectory,
        effector_positions,
        report,
    };
    emit(&format_json(&doc, args.output.exact)?, &args.output)?;
    Ok(if success { EXIT_OK } else { EXIT_NOT_CONVERGED })
}

fn run_bench(args: BenchArgs) -> Result<i32> {
    let mut plan = match &args.plan {
        Some(p) => BenchPlan::load(p)?,
        None => BenchPlan::default(),
    };
    if let Some(seed) = args.seed {
        plan.seed = seed;
    }
    if args.jobs == 0 {
        return Err(IkError::InvalidArgument("--jobs must be at least 1".into()));
    }
    let summary_path = args.out.as_ref().map(|d| d.join("summary.csv"));
    let raw_path = args.out.as_ref().map(|d| d.join("raw.csv"));
    // Refuse before spending minutes on the benchmark.
    if !args.force {
        for path in summary_path.iter().chain(&raw_path) {
            if path.exists() {
                return Err(exists_error(path));
            }
        }
    }

    let output = run_benchmark(&plan, args.jobs)?;
    let mut summary = Vec::new();
    write_summary_csv(&mut summary, &output.rows)?;
    let summary = round_csv(&summary, args.exact)?;
    match (&args.out, summary_path, raw_path) {
        (Some(dir), Some(summary_path), Some(raw_path)) => {
            fs::create_dir_all(dir).map_err(|source| IkError::Io { path: dir.clone(), source })?;
            let mut raw = Vec::new();
            write_raw_csv(&mut raw, &output.records)?;
            write_file(&summary_path, summary.as_bytes(), args.force)?;
            write_file(&raw_path, round_csv(&raw, args.exact)?.as_bytes(), args.force)?;
            stdout(&summary);
        }
        _ => stdout(&summary),
    }
    Ok(EXIT_OK)
}

fn run_export(args: ExportArgs) -> Result<i32> {
    let skel = load_skeleton(args.skeleton.as_deref())?;
    let text = fs::read_to_string(&args.input).map_err(|source| IkError::Io { path: args.input.clone(), source })?;
    let doc: Document = serde_json::from_str(&text)
        .map_err(|e| IkError::Parse(format!("{}: not a solve or plan report ({e})", args.input.display())))?;
    let (controlled, frames) = match doc {
        Document::Plan(d) => (d.controlled, d.trajectory.points),
        Document::Solve(d) => (d.controlled, vec![d.report.final_theta]),
    };
    let layout = skel.dof_layout(&controlled)?;
    let out = export_angles(&skel, &layout, &frames)?;
    match &args.out {
        Some(path) => write_file(path, out.as_bytes(), args.force)?,
        None => stdout(&out),
    }
    Ok(EXIT_OK)
}

fn run_validate(args: ValidateArgs) -> Result<i32> {
    let skel = load_skeleton(args.skeleton.as_deref())?;
    let layout = DofLayout::all(&skel);
    let controlled = controlled_names(&skel, &layout);
    stdout(&format!("ok: {} bones, {} controlled bones, {} degrees of freedom\n", skel.len(), controlled.len(), layout.len()));
    Ok(EXIT_OK)
}

fn exists_error(path: &Path) -> IkError {
    IkError::Output(format!("{} exists (pass --force to overwrite)", path.display()))
}

fn write_file(path: &Path, bytes: &[u8], force: bool) -> Result<()> {
    let mut options = OpenOptions::new();
    options.write(true);
    if force {
        options.create(true).truncate(true);
    } else {
        options.create_new(true);
    }
    let mut file = options.open(path).map_err(|source| {
        if source.kind() == std::io::ErrorKind::AlreadyExists {
            exists_error(path)
        } else {
            IkError::Io { path: path.into(), source }
        }
    })?;
    file.write_all(bytes).map_err(|source| IkError::Io { path: path.into(), source })
}

fn emit(text: &str, output: &OutputArgs) -> Result<()> {
    match &output.out {
        Some(path) => write_file(path, text.as_bytes(), output.force),
        None => {
            stdout(&format!("{text}\n"));
            Ok(())
        }
    }
}

/// Writes to standard output; a closed pipe (e.g. `| head`) is not an error.
fn stdout(text: &str) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    if let Err(e) = out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        if e.kind() != std::io::ErrorKind::BrokenPipe {
            log::warn!("writing to standard output failed: {e}");
        }
    }
}

/// Rounds `x` to `digits` significant digits.
pub fn round_significant(x: f64, digits: usize) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", digits.saturating_sub(1), x).parse().unwrap_or(x)
}

fn round_value(v: &mut serde_json::Value) {
    use serde_json::Value;
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(r) = n.as_f64().map(|x| round_significant(x, 6)).and_then(serde_json::Number::from_f64) {
                *n = r;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_value),
        Value::Object(map) => map.values_mut().for_each(round_value),
        _ => {}
    }
}

/// Pretty JSON; floats keep full precision with `exact`, else 6 significant digits.
pub fn format_json<T: Serialize>(value: &T, exact: bool) -> Result<String> {
    let mut v = serde_json::to_value(value).map_err(|e| IkError::Output(e.to_string()))?;
    if !exact {
        round_value(&mut v);
    }
    serde_json::to_string_pretty(&v).map_err(|e| IkError::Output(e.to_string()))
}

fn round_csv(bytes: &[u8], exact: bool) -> Result<String> {
    let text = String::from_utf8(bytes.to_vec()).map_err(|e| IkError::Output(e.to_string()))?;
    if exact {
        return Ok(text);
    }
    let mut out = String::with_capacity(text.len());
    for line in text.lines() {
        let fields: Vec<String> = line
            .split(',')
            .map(|f| match f.parse::<f64>() {
                Ok(x) if f.contains(['.', 'e', 'E']) && f.starts_with(|c: char| c.is_ascii_digit() || c == '-') => {
                    round_significant(x, 6).to_string()
                }
                _ => f.to_owned(),
            })
            .collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    Ok(out)
}
