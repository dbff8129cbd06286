//! Deterministic discrete-time world.
//!
//! Each step runs every robot in ascending id order against the frames it
//! received last step, then moves the bodies, then routes the new frames
//! through the lossy channel. A world owns one seeded random stream and
//! nothing else is random, so a `(config, seed)` pair fixes the whole run.

mod channel;
mod kinematics;
mod robot;

use std::collections::BTreeSet;
use std::sync::Arc;

use thiserror::Error;

use crate::allocation::{AllocConfig, FormationGraph, FsmState, GraphError, Shape};
use crate::comms::{Envelope, FrameLayout, Pose};
use crate::harness::TraceRow;
use crate::record::Record;

pub use channel::Channel;
pub use kinematics::{kinematics_step, Motion, RobotBody, RobotKind};
pub use robot::{Robot, StepStats, AERIAL_SWARM, GROUND_SWARM};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldError {
    #[error("a world needs at least one robot")]
    NoRobots,
    #[error("robot id {0} appears more than once")]
    DuplicateId(u16),
    #[error("drop probability {0} is outside [0, 1]")]
    DropProb(f64),
    #[error("step period must be positive, got {0}")]
    StepPeriod(f64),
    #[error("communication range must be positive, got {0}")]
    CommRange(f64),
    #[error("initial pose of robot {0} is not finite")]
    Pose(u16),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobotSpec {
    pub id: u16,
    pub kind: RobotKind,
    pub pose: Pose,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldConfig {
    pub robots: Vec<RobotSpec>,
    pub drop_prob: f64,
    pub comm_range: f64,
    pub step_period: f64,
    pub seed: u64,
    pub shape: Shape,
    pub spacing: f64,
    /// Formation size; defaults to the robot count when `None`.
    pub nodes: Option<usize>,
    pub start_step: u64,
    pub alloc: AllocConfig,
    pub layout: FrameLayout,
}

impl WorldConfig {
    /// `aerial` aerial robots followed by `ground` ground robots, ids from 1,
    /// parked 3 m apart on a line south of the formation origin.
    pub fn fleet(aerial: usize, ground: usize, shape: Shape, drop_prob: f64, seed: u64) -> Self {
        let robots = (0..aerial + ground)
            .map(|i| RobotSpec {
                id: i as u16 + 1,
                kind: if i < aerial {
                    RobotKind::Aerial
                } else {
                    RobotKind::Ground
                },
                pose: default_parking(i),
            })
            .collect();
        Self {
            robots,
            drop_prob,
            comm_range: 200.0,
            step_period: 0.1,
            seed,
            shape,
            spacing: 5.0,
            nodes: None,
            start_step: 0,
            alloc: AllocConfig::default(),
            layout: FrameLayout::default(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.unwrap_or(self.robots.len())
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        if self.robots.is_empty() {
            return Err(WorldError::NoRobots);
        }
        let mut ids = BTreeSet::new();
        for r in &self.robots {
            if !ids.insert(r.id) {
                return Err(WorldError::DuplicateId(r.id));
            }
            if !r.pose.is_finite() {
                return Err(WorldError::Pose(r.id));
            }
        }
        if !(0.0..=1.0).contains(&self.drop_prob) {
            return Err(WorldError::DropProb(self.drop_prob));
        }
        if !(self.step_period > 0.0 && self.step_period.is_finite()) {
            return Err(WorldError::StepPeriod(self.step_period));
        }
        if self.comm_range.is_nan() || self.comm_range <= 0.0 {
            return Err(WorldError::CommRange(self.comm_range));
        }
        FormationGraph::generate(self.shape, self.node_count(), self.spacing)?;
        Ok(())
    }
}

/// Parking spot of the `i`-th robot when none is given.
pub fn default_parking(i: usize) -> Pose {
    Pose::new(-10.0 + 3.0 * i as f64, -20.0, 0.0)
}

#[derive(Debug, Clone)]
pub struct World {
    robots: Vec<Robot>,
    inboxes: Vec<Vec<Envelope<Record>>>,
    channel: Channel,
    graph: Arc<FormationGraph>,
    step: u64,
    step_period: f64,
    start_step: u64,
}

impl World {
    pub fn new(cfg: &WorldConfig) -> Result<Self, WorldError> {
        cfg.validate()?;
        let graph = Arc::new(FormationGraph::generate(cfg.shape, cfg.node_count(), cfg.spacing)?);
        let mut specs = cfg.robots.clone();
        specs.sort_by_key(|r| r.id);
        let robots: Vec<Robot> = specs
            .iter()
            .map(|s| {
                Robot::new(
                    RobotBody::new(s.id, s.kind, s.pose),
                    graph.clone(),
                    specs.len(),
                    cfg.spacing,
                    cfg.alloc.clone(),
                    cfg.layout,
                )
            })
            .collect();
        Ok(Self {
            inboxes: vec![Vec::new(); robots.len()],
            robots,
            channel: Channel::new(cfg.drop_prob, cfg.comm_range, cfg.seed),
            graph,
            step: 0,
            step_period: cfg.step_period,
            start_step: cfg.start_step,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn step_period(&self) -> f64 {
        self.step_period
    }

    pub fn robots(&self) -> &[Robot] {
        &self.robots
    }

    pub fn robots_mut(&mut self) -> &mut [Robot] {
        &mut self.robots
    }

    pub fn graph(&self) -> &FormationGraph {
        &self.graph
    }

    pub fn channel(&self) -> &Channel {
        &self.channel
    }

    /// Frames waiting to be read by each robot on the next step.
    pub fn inboxes(&self) -> &[Vec<Envelope<Record>>] {
        &self.inboxes
    }

    /// Every label is held and every holder has passed the closing barrier.
    pub fn is_complete(&self) -> bool {
        let locked = self
            .robots
            .iter()
            .filter(|r| r.alloc().fsm() == FsmState::Lock)
            .count();
        locked == self.graph.len().min(self.robots.len())
    }

    /// Advance one step and return its trace rows, one per robot.
    pub fn step(&mut self) -> Vec<TraceRow> {
        let now = self.step;
        if now == self.start_step {
            // the operator talks to the lowest-id robot
            if let Some(r) = self.robots.first_mut() {
                r.inject(Record::Start);
            }
        }

        let send_poses: Vec<(u16, Pose)> = self.robots.iter().map(|r| (r.id(), r.body.pose)).collect();
        let mut envelopes = Vec::with_capacity(self.robots.len());
        let mut rows = Vec::with_capacity(self.robots.len());
        for (robot, inbox) in self.robots.iter_mut().zip(self.inboxes.iter_mut()) {
            let (env, motion, stats) = robot.step(std::mem::take(inbox), now);
            kinematics_step(&mut robot.body, motion, self.step_period);
            let pose = robot.body.pose;
            rows.push(TraceRow {
                step: now,
                robot: robot.id(),
                state: robot.alloc().fsm(),
                x: pose.x,
                y: pose.y,
                z: pose.z,
                bytes_out: env.byte_size,
                records_in: stats.records_in,
                neighbor_msgs_in: stats.neighbor_msgs_in,
            });
            envelopes.push(env);
        }
        self.inboxes = self.channel.step(&envelopes, &send_poses);
        self.step += 1;
        rows
    }
}
