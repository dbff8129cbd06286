//! Experiment harness: runs scenarios, sweeps drop rates and reduces traces
//! to the summary metrics.

mod metrics;
mod scenario;
mod sweep;
mod trace;

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::allocation::FsmState;
use crate::simworld::{RobotKind, World, WorldConfig, WorldError};

pub use metrics::{
    bandwidth_moving_average, max_bandwidth_ratio, moving_average, neighbor_ratio_by_state,
    MetricsError, DEFAULT_WINDOW,
};
pub use scenario::{RobotGroup, Scenario, ScenarioError, DEFAULT_STEP_CAP};
pub use sweep::{median, sweep_droprate, Execution, RateSummary, SweepRun, SweepTable};
pub use trace::{read_trace, write_trace, TraceError, TraceRow, TraceWriter};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("drop rate {0} is outside [0, 1]")]
    Rate(f64),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotSummary {
    pub id: u16,
    pub kind: RobotKind,
    pub label: Option<u16>,
    pub join_step: Option<u64>,
    pub join_time_s: Option<f64>,
    /// Steps at which the robot passed a barrier, in order.
    pub barrier_passes: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub seed: u64,
    pub drop_prob: f64,
    pub completed: bool,
    pub total_steps: u64,
    pub completion_step: Option<u64>,
    pub completion_time_s: Option<f64>,
    pub robots: Vec<RobotSummary>,
    pub max_bytes_out: usize,
    pub max_bandwidth_ratio: f64,
    pub neighbor_ratio_by_state: BTreeMap<FsmState, f64>,
    /// Label -> robot, from the robots' own labels.
    pub assignment: BTreeMap<u16, u16>,
    pub label_violations: Vec<String>,
}

impl Summary {
    /// Join times in the order robots joined.
    pub fn join_times(&self) -> Vec<f64> {
        let mut t: Vec<f64> = self.robots.iter().filter_map(|r| r.join_time_s).collect();
        t.sort_by(f64::total_cmp);
        t
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: Vec<TraceRow>,
    pub summary: Summary,
}

/// Check that labels are held uniquely: no two robots share a label, no
/// robot holds two, and every replica of the assignment table agrees with
/// the holders. Returns one message per violation.
pub fn check_labels(world: &World) -> Vec<String> {
    let mut problems = Vec::new();
    let mut holders: BTreeMap<u16, u16> = BTreeMap::new();
    for r in world.robots() {
        if let Some(label) = r.alloc().state().my_label {
            if let Some(other) = holders.insert(label, r.id()) {
                problems.push(format!("label {label} held by robots {other} and {}", r.id()));
            }
        }
    }
    for r in world.robots() {
        let table = r.alloc().assignment();
        let mut seen: BTreeMap<u16, u16> = BTreeMap::new();
        for label in world.graph().labels() {
            let Some(robot) = r.alloc().assigned(label) else {
                continue;
            };
            if let Some(prev) = seen.insert(robot, label) {
                problems.push(format!(
                    "robot {}'s table maps labels {prev} and {label} to robot {robot}",
                    r.id()
                ));
            }
            if holders.get(&label).is_some_and(|h| *h != robot) {
                problems.push(format!(
                    "robot {}'s table gives label {label} to {robot}, held by {}",
                    r.id(),
                    holders[&label]
                ));
            }
        }
        debug_assert_eq!(table.id(), crate::allocation::ASSIGNMENT_TABLE);
    }
    problems
}

/// Step `world` until completion or `step_cap` steps, keeping the trace.
pub fn run_world(cfg: &WorldConfig, step_cap: u64) -> Result<RunOutput, WorldError> {
    let mut world = World::new(cfg)?;
    let mut trace = Vec::new();
    let mut completion_step = None;
    while world.step_count() < step_cap {
        let rows = world.step();
        let step = rows.first().map_or(0, |r| r.step);
        trace.extend(rows);
        if world.is_complete() {
            completion_step = Some(step);
            break;
        }
    }
    let summary = summarize(&world, cfg, &trace, completion_step);
    Ok(RunOutput { trace, summary })
}

fn summarize(
    world: &World,
    cfg: &WorldConfig,
    trace: &[TraceRow],
    completion_step: Option<u64>,
) -> Summary {
    let period = world.step_period();
    let mut join_step: BTreeMap<u16, u64> = BTreeMap::new();
    for row in trace.iter().filter(|r| r.state == FsmState::Joined) {
        join_step.entry(row.robot).or_insert(row.step);
    }
    let robots = world
        .robots()
        .iter()
        .map(|r| RobotSummary {
            id: r.id(),
            kind: r.body.kind,
            label: r.alloc().state().my_label,
            join_step: join_step.get(&r.id()).copied(),
            join_time_s: join_step.get(&r.id()).map(|s| *s as f64 * period),
            barrier_passes: r.alloc().barrier_passes().to_vec(),
        })
        .collect();
    let n = world.robots().len();
    Summary {
        seed: cfg.seed,
        drop_prob: cfg.drop_prob,
        completed: completion_step.is_some(),
        total_steps: world.step_count(),
        completion_step,
        completion_time_s: completion_step.map(|s| s as f64 * period),
        robots,
        max_bytes_out: trace.iter().map(|r| r.bytes_out).max().unwrap_or(0),
        max_bandwidth_ratio: max_bandwidth_ratio(trace, DEFAULT_WINDOW).unwrap_or(0.0),
        neighbor_ratio_by_state: if n >= 2 {
            neighbor_ratio_by_state(trace, n).unwrap_or_default()
        } else {
            BTreeMap::new()
        },
        assignment: world
            .robots()
            .iter()
            .filter_map(|r| r.alloc().state().my_label.map(|l| (l, r.id())))
            .collect(),
        label_violations: check_labels(world),
    }
}

/// Run one scenario. `seed` overrides the scenario's own seed.
pub fn run_scenario(scenario: &Scenario, seed: Option<u64>) -> Result<RunOutput, HarnessError> {
    let cfg = scenario.world_config(seed.unwrap_or(scenario.seed));
    Ok(run_world(&cfg, scenario.step_cap)?)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_owned(),
        source,
    }
}

/// Write `trace.csv` and `summary.json` into `dir`.
pub fn write_run(dir: &Path, run: &RunOutput) -> Result<(PathBuf, PathBuf), HarnessError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let trace_path = dir.join("trace.csv");
    let file = File::create(&trace_path).map_err(io_err(&trace_path))?;
    write_trace(BufWriter::new(file), &run.trace)?;
    let summary_path = dir.join("summary.json");
    let file = File::create(&summary_path).map_err(io_err(&summary_path))?;
    serde_json::to_writer_pretty(BufWriter::new(file), &run.summary)?;
    Ok((trace_path, summary_path))
}
