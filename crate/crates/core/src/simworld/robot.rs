use std::sync::Arc;

use crate::allocation::{AllocConfig, Allocator, FormationGraph, Perception};
use crate::comms::{Envelope, FrameLayout, NeighborTable, OutQueue};
use crate::membership::{SwarmId, SwarmView};
use crate::record::Record;

use super::kinematics::{Motion, RobotBody, RobotKind};

pub const AERIAL_SWARM: u8 = 0;
pub const GROUND_SWARM: u8 = 1;

/// Receive-side counts of one step, for tracing.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepStats {
    pub neighbor_msgs_in: usize,
    pub records_in: usize,
}

/// Everything one robot runs: body, radio, membership and behavior.
#[derive(Debug, Clone)]
pub struct Robot {
    pub body: RobotBody,
    queue: OutQueue<Record>,
    neighbors: NeighborTable,
    swarms: SwarmView,
    alloc: Allocator,
    layout: FrameLayout,
    injected: Vec<Record>,
}

impl Robot {
    pub fn new(
        body: RobotBody,
        graph: Arc<FormationGraph>,
        swarm_size: usize,
        spacing: f64,
        cfg: AllocConfig,
        layout: FrameLayout,
    ) -> Self {
        let id = body.id;
        let mut swarms = SwarmView::new(id);
        let sid = match body.kind {
            RobotKind::Aerial => AERIAL_SWARM,
            RobotKind::Ground => GROUND_SWARM,
        };
        swarms.join(SwarmId::new(sid).expect("fixed swarm ids are in range"));
        Self {
            neighbors: NeighborTable::new(id, cfg.max_age),
            alloc: Allocator::new(id, graph, swarm_size, spacing, cfg),
            queue: OutQueue::new(layout),
            swarms,
            body,
            layout,
            injected: Vec::new(),
        }
    }

    pub fn id(&self) -> u16 {
        self.body.id
    }

    pub fn alloc(&self) -> &Allocator {
        &self.alloc
    }

    pub fn neighbors(&self) -> &NeighborTable {
        &self.neighbors
    }

    pub fn swarms(&self) -> &SwarmView {
        &self.swarms
    }

    pub fn queued(&self) -> usize {
        self.queue.len()
    }

    /// Hand a record to the robot from outside the radio (operator input).
    pub fn inject(&mut self, record: Record) {
        self.injected.push(record);
    }

    fn enqueue_all(&mut self, records: Vec<Record>) {
        for r in records {
            self.queue
                .enqueue(r)
                .expect("protocol records are far smaller than a frame");
        }
    }

    /// One pass of the robot loop: dispatch the inbox, read the pose, run
    /// the control step, assemble the outbound frame, emit motion.
    pub fn step(&mut self, inbox: Vec<Envelope<Record>>, now: u64) -> (Envelope<Record>, Motion, StepStats) {
        let mut stats = StepStats::default();
        let mut replies = Vec::new();
        for env in inbox {
            stats.neighbor_msgs_in += 1;
            stats.records_in += env.records.len();
            let sender = env.sender;
            if let Some(bitmap) = env.memberships {
                self.swarms.observe(sender, bitmap);
            }
            for rec in self.neighbors.on_envelope(env, now) {
                self.alloc.handle(sender, rec, now, &mut replies);
            }
        }
        for rec in std::mem::take(&mut self.injected) {
            self.alloc.handle(self.body.id, rec, now, &mut replies);
        }
        self.enqueue_all(replies);

        let aerial = self
            .swarms
            .is_member(SwarmId::new(AERIAL_SWARM).expect("valid"), self.body.id);
        let perception = Perception {
            self_id: self.body.id,
            now,
            pose: self.body.pose,
            aerial,
            altitude: self.body.working_altitude(),
            neighbors: &self.neighbors,
        };

        let mut produced = Vec::new();
        let motion = self.alloc.control_step(&perception, &mut produced);
        self.enqueue_all(produced);

        let env = self.queue.assemble_frame(
            self.body.id,
            self.body.pose,
            Some(self.swarms.bitmap()),
            self.layout,
        );
        (env, motion, stats)
    }
}
