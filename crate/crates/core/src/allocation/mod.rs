//! Acyclic task allocation: robots take off, pass a barrier, elect a root
//! and then grow a graph formation outward from it. Free robots circle the
//! formation, ask the holder of a label's parent for an open label, and fly
//! to the target computed from the parent's position. Once every label is
//! held the swarm passes a second barrier and locks in place.
//!
//! All coordination flows through frame records: a dedicated stigmergy
//! table maps labels to robot ids, and `AllocRecord`s carry the
//! advertise/request/grant handshake.

mod fsm;
mod graph;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::barrier::{BarrierOutcome, BarrierState, DEFAULT_TIMEOUT};
use crate::comms::{NeighborTable, Pose, DEFAULT_MAX_AGE};
use crate::record::{Record, StateTag};
use crate::simworld::Motion;
use crate::stigmergy::{StigKey, StigRecord, StigTable, StigValue};

pub use fsm::{check_edges, FsmState, UnknownState};
pub use graph::{FormationGraph, GraphError, GraphNode, Shape};

/// Stigmergy table id holding the label -> robot assignment.
pub const ASSIGNMENT_TABLE: u8 = 100;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum AllocRecord {
    Open {
        labels: Vec<u16>,
        advertiser: u16,
        advertiser_label: u16,
    },
    Req { label: u16, requester: u16 },
    Grant { label: u16, grantee: u16 },
    Joined { label: u16, robot: u16 },
}

impl AllocRecord {
    /// tag 1 B, robot id 2 B, 2 B per label carried.
    pub fn wire_size(&self) -> usize {
        match self {
            AllocRecord::Open { labels, .. } => 1 + 2 + 2 * (labels.len() + 1),
            _ => 1 + 2 + 2,
        }
    }
}

/// Tunables of the allocation behavior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AllocConfig {
    /// Steps the root claim must stay unchanged before it is final.
    pub settle_steps: u64,
    /// Orbit radius as a multiple of the graph spacing.
    pub orbit_factor: f64,
    pub ask_timeout: u32,
    pub grant_timeout: u64,
    /// Arrival tolerance in meters.
    pub arrival_tolerance: f64,
    pub max_age: u64,
    pub barrier_timeout: u32,
    /// Presence threshold of both barriers; swarm size - 1 when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub barrier_threshold: Option<usize>,
}

impl Default for AllocConfig {
    fn default() -> Self {
        Self {
            settle_steps: 20,
            orbit_factor: 1.5,
            ask_timeout: 50,
            grant_timeout: 100,
            arrival_tolerance: 0.5,
            max_age: DEFAULT_MAX_AGE,
            barrier_timeout: DEFAULT_TIMEOUT,
            barrier_threshold: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AskTarget {
    pub label: u16,
    pub parent: u16,
    pub parent_label: u16,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocState {
    pub fsm: FsmState,
    pub my_label: Option<u16>,
    pub parent: Option<u16>,
    pub parent_label: Option<u16>,
    pub ask_target: Option<AskTarget>,
    pub ask_timer: u32,
    pub target: Option<Pose>,
    /// Distance to the computed target at the moment the robot joined.
    pub join_error: Option<f64>,
    /// Set while a joining robot cannot see its parent.
    pub parent_lost: bool,
}

impl Default for AllocState {
    fn default() -> Self {
        Self {
            fsm: FsmState::TurnedOff,
            my_label: None,
            parent: None,
            parent_label: None,
            ask_target: None,
            ask_timer: 0,
            target: None,
            join_error: None,
            parent_lost: false,
        }
    }
}

/// What the control step may read about the robot and its surroundings.
#[derive(Debug, Clone, Copy)]
pub struct Perception<'a> {
    pub self_id: u16,
    pub now: u64,
    pub pose: Pose,
    pub aerial: bool,
    /// Working altitude: cruise altitude for aerial robots, 0 for ground.
    pub altitude: f64,
    pub neighbors: &'a NeighborTable,
}

#[derive(Debug, Clone, Copy)]
struct OpenAd {
    advertiser: u16,
    advertiser_label: u16,
    seen: u64,
}

#[derive(Debug, Clone, Copy)]
struct PendingGrant {
    grantee: u16,
    last_sign: u64,
}

#[derive(Debug, Clone, Copy)]
struct ClaimWindow {
    version: Option<(u16, u16)>,
    last_change: u64,
    opened: u64,
}

/// Target of `my_label` given where its parent actually is. Only the planar
/// offset is used; the altitude is the robot's own working altitude.
pub fn compute_target(
    parent_pose: Pose,
    parent_label: u16,
    my_label: u16,
    graph: &FormationGraph,
    altitude: f64,
) -> Option<Pose> {
    let mine = graph.node(my_label)?.offset;
    let parent = graph.node(parent_label)?.offset;
    Some(Pose::new(
        parent_pose.x + (mine.x - parent.x),
        parent_pose.y + (mine.y - parent.y),
        altitude,
    ))
}

/// One robot's allocation behavior.
#[derive(Debug, Clone)]
pub struct Allocator {
    self_id: u16,
    cfg: AllocConfig,
    graph: Arc<FormationGraph>,
    swarm_size: usize,
    spacing: f64,
    state: AllocState,
    barrier: BarrierState,
    assignment: StigTable,
    started: bool,
    claim: Option<ClaimWindow>,
    inbox: Vec<AllocRecord>,
    open_seen: BTreeMap<u16, OpenAd>,
    pending: BTreeMap<u16, PendingGrant>,
    joined_seen: BTreeSet<u16>,
    peer_states: BTreeMap<u16, (StateTag, u64)>,
    last_formation_pose: Option<Pose>,
    passes: Vec<u64>,
}

impl Allocator {
    pub fn new(
        self_id: u16,
        graph: Arc<FormationGraph>,
        swarm_size: usize,
        spacing: f64,
        cfg: AllocConfig,
    ) -> Self {
        let barrier = BarrierState::new(cfg.barrier_timeout);
        Self {
            self_id,
            cfg,
            graph,
            swarm_size,
            spacing,
            state: AllocState::default(),
            barrier,
            assignment: StigTable::create(ASSIGNMENT_TABLE),
            started: false,
            claim: None,
            inbox: Vec::new(),
            open_seen: BTreeMap::new(),
            pending: BTreeMap::new(),
            joined_seen: BTreeSet::new(),
            peer_states: BTreeMap::new(),
            last_formation_pose: None,
            passes: Vec::new(),
        }
    }

    pub fn id(&self) -> u16 {
        self.self_id
    }

    pub fn state(&self) -> &AllocState {
        &self.state
    }

    pub fn fsm(&self) -> FsmState {
        self.state.fsm
    }

    pub fn barrier(&self) -> &BarrierState {
        &self.barrier
    }

    pub fn assignment(&self) -> &StigTable {
        &self.assignment
    }

    /// Steps at which a barrier released this robot.
    pub fn barrier_passes(&self) -> &[u64] {
        &self.passes
    }

    pub fn graph(&self) -> &FormationGraph {
        &self.graph
    }

    /// Labels this robot currently advertises as open.
    pub fn open_labels(&self) -> Vec<u16> {
        let Some(label) = self.state.my_label else {
            return Vec::new();
        };
        self.graph
            .owned_successors(label)
            .into_iter()
            .filter(|l| !self.filled(*l) && !self.pending.contains_key(l))
            .collect()
    }

    pub fn state_tag(&self) -> StateTag {
        StateTag {
            state: self.state.fsm,
            label: self.state.my_label,
        }
    }

    /// Everyone must be airborne before allocation starts.
    pub fn opening_threshold(&self) -> usize {
        self.cfg
            .barrier_threshold
            .unwrap_or(self.swarm_size.saturating_sub(1))
    }

    /// Only label holders reach the closing barrier, so surplus robots
    /// are not waited for.
    pub fn closing_threshold(&self) -> usize {
        let holders = self.swarm_size.min(self.graph.len());
        self.cfg
            .barrier_threshold
            .map_or(holders.saturating_sub(1), |t| t.min(holders.saturating_sub(1)))
    }

    fn go(&mut self, next: FsmState) {
        debug_assert!(
            self.state.fsm.can_transition(next),
            "illegal transition {} -> {}",
            self.state.fsm,
            next
        );
        self.state.fsm = next;
    }

    /// Label -> robot as currently known from the assignment table.
    pub fn assigned(&self, label: u16) -> Option<u16> {
        self.assignment
            .entry(&StigKey::Int(label))
            .and_then(|e| e.value.as_int())
            .and_then(|v| u16::try_from(v).ok())
    }

    fn filled(&self, label: u16) -> bool {
        self.assigned(label).is_some() || self.joined_seen.contains(&label)
    }

    fn taken(&self, label: u16, now: u64) -> bool {
        self.filled(label)
            || self.peer_states.values().any(|(tag, seen)| {
                tag.state.in_formation()
                    && tag.label == Some(label)
                    && now.saturating_sub(*seen) <= self.cfg.max_age
            })
    }

    /// Dispatch one received record. Stigmergy replies are pushed on `out`.
    pub fn handle(&mut self, sender: u16, record: Record, now: u64, out: &mut Vec<Record>) {
        match record {
            Record::Stig(rec) => {
                let reply = if rec.table_id() == ASSIGNMENT_TABLE {
                    self.assignment.handle(&rec)
                } else {
                    self.barrier.table_mut().and_then(|t| t.handle(&rec))
                };
                out.extend(reply.map(Record::Stig));
            }
            Record::Alloc(rec) => {
                match &rec {
                    AllocRecord::Open {
                        labels,
                        advertiser,
                        advertiser_label,
                    } => {
                        for &label in labels {
                            self.open_seen.insert(
                                label,
                                OpenAd {
                                    advertiser: *advertiser,
                                    advertiser_label: *advertiser_label,
                                    seen: now,
                                },
                            );
                        }
                    }
                    AllocRecord::Joined { label, .. } => {
                        self.joined_seen.insert(*label);
                    }
                    AllocRecord::Req { .. } | AllocRecord::Grant { .. } => {}
                }
                self.inbox.push(rec);
            }
            Record::State(tag) => {
                if tag.state != FsmState::TurnedOff {
                    self.started = true;
                }
                if let (Some(label), true) = (
                    tag.label,
                    matches!(tag.state, FsmState::Joined | FsmState::BarrierB | FsmState::Lock),
                ) {
                    self.joined_seen.insert(label);
                }
                self.peer_states.insert(sender, (tag, now));
            }
            Record::Start => self.started = true,
        }
    }

    /// Control phase of one robot step. Returns the motion command; records
    /// to broadcast are pushed on `out`, ending with the state tag.
    pub fn control_step(&mut self, p: &Perception<'_>, out: &mut Vec<Record>) -> Motion {
        let motion = match self.state.fsm {
            FsmState::TurnedOff => {
                if self.started {
                    self.go(FsmState::TakeOff);
                }
                Motion::Hold
            }
            FsmState::TakeOff => self.takeoff_step(p),
            FsmState::BarrierA => self.barrier_a_step(p, out),
            FsmState::Free => self.free_step(p, out),
            FsmState::Asking => {
                self.asking_step(p, out);
                Motion::Hold
            }
            FsmState::Joining => self.joining_step(p, out),
            FsmState::Joined => self.joined_step(p, out),
            FsmState::BarrierB => {
                self.barrier_b_step(p, out);
                self.hold(p)
            }
            FsmState::Lock => self.hold(p),
        };
        self.inbox.clear();
        // keep the root assignment circulating so late robots never claim
        out.extend(self.assignment.advertise(&StigKey::Int(0)).map(Record::Stig));
        out.push(Record::State(self.state_tag()));
        motion
    }

    fn hold(&self, p: &Perception<'_>) -> Motion {
        match self.state.target {
            Some(t) => Motion::GoTo(t),
            None => Motion::GoTo(p.pose),
        }
    }

    fn takeoff_step(&mut self, p: &Perception<'_>) -> Motion {
        if !p.aerial || p.pose.z >= p.altitude {
            self.go(FsmState::BarrierA);
            self.barrier.create();
            return Motion::Hold;
        }
        Motion::GoTo(Pose::new(p.pose.x, p.pose.y, p.altitude))
    }

    fn barrier_a_step(&mut self, p: &Perception<'_>, out: &mut Vec<Record>) -> Motion {
        if self.claim.is_some() {
            self.settle_claim(p, out);
            return Motion::GoTo(p.pose);
        }
        let mut recs = Vec::new();
        let outcome = self
            .barrier
            .step(p.self_id, self.opening_threshold(), &mut recs)
            .expect("barrier table created on entry");
        out.extend(recs.into_iter().map(Record::Stig));
        match outcome {
            BarrierOutcome::Proceed => {
                self.passes.push(p.now);
                self.claim_root(p, out);
            }
            BarrierOutcome::TimedOut => self.barrier.create(),
            BarrierOutcome::Waiting => {}
        }
        Motion::GoTo(p.pose)
    }

    /// Leaving the first barrier: try to become the root unless someone
    /// already holds label 0.
    pub fn claim_root(&mut self, p: &Perception<'_>, out: &mut Vec<Record>) {
        let root_known = self.assignment.entry(&StigKey::Int(0)).is_some()
            || self
                .peer_states
                .values()
                .any(|(tag, _)| tag.label == Some(0) && tag.state.in_formation());
        if root_known {
            self.go(FsmState::Free);
            return;
        }
        let (entry, rec) = self
            .assignment
            .put(StigKey::Int(0), StigValue::Int(i32::from(p.self_id)), p.self_id)
            .expect("integer entry");
        out.push(Record::Stig(rec));
        self.claim = Some(ClaimWindow {
            version: Some(entry.version()),
            last_change: p.now,
            opened: p.now,
        });
    }

    /// A claim settles once it has been unchanged for `settle_steps` and
    /// every peer has been heard from since it last changed (each peer's
    /// frame carries its view of the root). A window open for ten times the
    /// settle time settles on stability alone.
    fn claim_tick(&mut self, p: &Perception<'_>) -> Option<bool> {
        let version = self.assignment.entry(&StigKey::Int(0)).map(|e| e.version());
        let window = self.claim.as_mut().expect("claim window open");
        if version != window.version {
            window.version = version;
            window.last_change = p.now;
        }
        let window = *window;
        // only a settled root writes key 0 twice
        let settled = self
            .assignment
            .entry(&StigKey::Int(0))
            .is_some_and(|e| e.lamport >= 2 && e.writer != p.self_id);
        if settled {
            self.claim = None;
            return Some(false);
        }
        if p.now.saturating_sub(window.last_change) < self.cfg.settle_steps {
            return None;
        }
        let heard = self
            .peer_states
            .values()
            .filter(|(_, seen)| *seen > window.last_change)
            .count();
        let patient = p.now.saturating_sub(window.opened) >= 10 * self.cfg.settle_steps;
        if heard + 1 < self.swarm_size && !patient {
            return None;
        }
        self.claim = None;
        Some(self.assigned(0) == Some(p.self_id))
    }

    fn settle_claim(&mut self, p: &Perception<'_>, out: &mut Vec<Record>) {
        match self.claim_tick(p) {
            None => {}
            Some(true) => {
                // a second write outranks any fresh claim made later
                let (_, rec) = self
                    .assignment
                    .put(StigKey::Int(0), StigValue::Int(i32::from(p.self_id)), p.self_id)
                    .expect("integer entry");
                out.push(Record::Stig(rec));
                self.state.my_label = Some(0);
                self.state.target = Some(p.pose);
                self.state.join_error = Some(0.0);
                self.go(FsmState::Joined);
                out.push(Record::Alloc(AllocRecord::Joined {
                    label: 0,
                    robot: p.self_id,
                }));
            }
            Some(false) => self.go(FsmState::Free),
        }
    }

    /// Robot currently known to hold `label`, if fresh in the neighbor table.
    fn visible_holder(&self, label: u16, ad: &OpenAd, p: &Perception<'_>) -> bool {
        let holder = if label == ad.advertiser_label {
            Some(ad.advertiser)
        } else {
            self.assigned(label).or_else(|| {
                self.peer_states
                    .iter()
                    .find(|(_, (tag, _))| tag.state.in_formation() && tag.label == Some(label))
                    .map(|(id, _)| *id)
            })
        };
        holder.is_some_and(|id| p.neighbors.is_fresh(id, p.now, self.cfg.max_age))
    }

    /// Pick a label to ask for. Open labels whose predecessors are all in
    /// sight are matched greedily, nearest pair first, against this robot
    /// and the free robots it can see; the robot asks only for the label it
    /// is matched with. With a shared view every robot computes the same
    /// matching, so requests do not collide.
    fn eligible_label(&self, p: &Perception<'_>) -> Option<AskTarget> {
        let candidates: Vec<(AskTarget, Pose)> = self
            .open_seen
            .iter()
            .filter(|(label, _)| !self.taken(**label, p.now))
            .filter_map(|(&label, ad)| {
                let node = self.graph.node(label)?;
                if !node.predecessors.iter().all(|pred| self.visible_holder(*pred, ad, p)) {
                    return None;
                }
                let parent = p.neighbors.get(ad.advertiser)?.pose;
                let target = compute_target(parent, ad.advertiser_label, label, &self.graph, p.altitude)?;
                let ask = AskTarget {
                    label,
                    parent: ad.advertiser,
                    parent_label: ad.advertiser_label,
                };
                Some((ask, target))
            })
            .collect();
        if candidates.is_empty() {
            return None;
        }
        let mut free: Vec<(u16, Pose)> = vec![(p.self_id, p.pose)];
        free.extend(
            self.peer_states
                .iter()
                .filter(|(_, (tag, seen))| {
                    tag.state == FsmState::Free && p.now.saturating_sub(*seen) <= self.cfg.max_age
                })
                .filter_map(|(id, _)| p.neighbors.get(*id).map(|n| (*id, n.pose))),
        );
        let mut pairs: Vec<(f64, u16, usize)> = free
            .iter()
            .flat_map(|(id, pose)| {
                candidates
                    .iter()
                    .enumerate()
                    .map(move |(i, (_, target))| (pose.planar_distance(target), *id, i))
            })
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut robots_done = BTreeSet::new();
        let mut labels_done = BTreeSet::new();
        for (_, id, i) in pairs {
            if robots_done.contains(&id) || labels_done.contains(&i) {
                continue;
            }
            if id == p.self_id {
                return Some(candidates[i].0);
            }
            robots_done.insert(id);
            labels_done.insert(i);
        }
        None
    }

    pub fn free_step(&mut self, p: &Perception<'_>, out: &mut Vec<Record>) -> Motion {
        let max_age = self.cfg.max_age;
        self.open_seen
            .retain(|_, ad| p.now.saturating_sub(ad.seen) <= max_age);
        let stale: Vec<u16> = self
            .open_seen
            .keys()
            .copied()
            .filter(|l| self.taken(*l, p.now))
            .collect();
        for l in stale {
            self.open_seen.remove(&l);
        }

        if let Some(target) = self.eligible_label(p) {
            self.state.ask_target = Some(target);
            self.state.ask_timer = 0;
            self.go(FsmState::Asking);
            out.push(Record::Alloc(AllocRecord::Req {
                label: target.label,
                requester: p.self_id,
            }));
            return Motion::Hold;
        }
        self.orbit(p)
    }

    fn orbit(&mut self, p: &Perception<'_>) -> Motion {
        let nearest = self
            .peer_states
            .iter()
            .filter(|(_, (tag, _))| tag.state.in_formation())
            .filter_map(|(id, _)| {
                p.neighbors
                    .get(*id)
                    .filter(|_| p.neighbors.is_fresh(*id, p.now, self.cfg.max_age))
            })
            .min_by(|a, b| {
                p.pose
                    .planar_distance(&a.pose)
                    .total_cmp(&p.pose.planar_distance(&b.pose))
            })
            .map(|n| n.pose);
        let Some(center) = nearest.or(self.last_formation_pose) else {
            return Motion::Hold;
        };
        if nearest.is_none() {
            return Motion::GoTo(Pose::new(center.x, center.y, p.altitude));
        }
        self.last_formation_pose = Some(center);
        let radius = self.cfg.orbit_factor * self.spacing;
        let (dx, dy) = (p.pose.x - center.x, p.pose.y - center.y);
        let theta = if dx == 0.0 && dy == 0.0 { 0.0 } else { dy.atan2(dx) };
        // aim a little ahead on the circle so the robot keeps circling
        let lead = theta + 0.3;
        Motion::GoTo(Pose::new(
            center.x + radius * lead.cos(),
            center.y + radius * lead.sin(),
            p.altitude,
        ))
    }

    pub fn asking_step(&mut self, p: &Perception<'_>, out: &mut Vec<Record>) {
        let ask = self.state.ask_target.expect("asking without a target");
        let verdict = self.inbox.iter().find_map(|r| match r {
            AllocRecord::Grant { label, grantee } if *label == ask.label => Some(*grantee),
            _ => None,
        });
        match verdict {
            Some(grantee) if grantee == p.self_id => {
                self.state.my_label = Some(ask.label);
                self.state.parent = Some(ask.parent);
                self.state.parent_label = Some(ask.parent_label);
                self.state.ask_target = None;
                self.go(FsmState::Joining);
            }
            Some(_) => {
                self.open_seen.remove(&ask.label);
                self.state.ask_target = None;
                self.go(FsmState::Free);
            }
            None => {
                self.state.ask_timer += 1;
                if self.state.ask_timer >= self.cfg.ask_timeout {
                    self.state.ask_target = None;
                    self.go(FsmState::Free);
                } else {
                    out.push(Record::Alloc(AllocRecord::Req {
                        label: ask.label,
                        requester: p.self_id,
                    }));
                }
            }
        }
    }

    pub fn joining_step(&mut self, p: &Perception<'_>, out: &mut Vec<Record>) -> Motion {
        let (label, parent, parent_label) = match (
            self.state.my_label,
            self.state.parent,
            self.state.parent_label,
        ) {
            (Some(l), Some(pr), Some(pl)) => (l, pr, pl),
            _ => unreachable!("joining robot always has label and parent"),
        };
        let parent_pose = p
            .neighbors
            .get(parent)
            .filter(|_| p.neighbors.is_fresh(parent, p.now, 3 * self.cfg.max_age))
            .map(|n| n.pose);
        let Some(parent_pose) = parent_pose else {
            self.state.parent_lost = true;
            return Motion::GoTo(p.pose);
        };
        self.state.parent_lost = false;
        let target = compute_target(parent_pose, parent_label, label, &self.graph, p.altitude)
            .expect("labels come from the graph");
        self.state.target = Some(target);
        let error = p.pose.distance(&target);
        if error <= self.cfg.arrival_tolerance {
            self.state.join_error = Some(error);
            self.go(FsmState::Joined);
            let (_, rec) = self
                .assignment
                .put(StigKey::Int(label), StigValue::Int(i32::from(p.self_id)), p.self_id)
                .expect("integer entry");
            out.push(Record::Stig(rec));
            out.push(Record::Alloc(AllocRecord::Joined {
                label,
                robot: p.self_id,
            }));
            return Motion::GoTo(target);
        }
        Motion::GoTo(target)
    }

    /// Serve label requests for the successors this robot owns.
    pub fn grant_step(&mut self, p: &Perception<'_>, out: &mut Vec<Record>) {
        let Some(my_label) = self.state.my_label else {
            return;
        };
        let owned = self.graph.owned_successors(my_label);

        let filled: Vec<u16> = self
            .pending
            .keys()
            .copied()
            .filter(|l| self.filled(*l))
            .collect();
        for l in filled {
            self.pending.remove(&l);
        }
        for (label, grant) in self.pending.iter_mut() {
            let alive = self.peer_states.get(&grant.grantee).is_some_and(|(tag, seen)| {
                *seen == p.now && tag.state.in_formation() && tag.label == Some(*label)
            });
            if alive {
                grant.last_sign = p.now;
            }
        }
        let timeout = self.cfg.grant_timeout;
        self.pending
            .retain(|_, g| p.now.saturating_sub(g.last_sign) < timeout);

        let mut regrant = BTreeSet::new();
        let mut fresh: BTreeMap<u16, u16> = BTreeMap::new();
        for rec in &self.inbox {
            let AllocRecord::Req { label, requester } = *rec else {
                continue;
            };
            if !owned.contains(&label) || self.filled(label) {
                continue;
            }
            if let Some(g) = self.pending.get_mut(&label) {
                if g.grantee == requester {
                    g.last_sign = p.now;
                }
                regrant.insert(label);
                continue;
            }
            fresh
                .entry(label)
                .and_modify(|r| *r = (*r).min(requester))
                .or_insert(requester);
        }
        if let Some((&label, &grantee)) = fresh.iter().next() {
            self.pending.insert(
                label,
                PendingGrant {
                    grantee,
                    last_sign: p.now,
                },
            );
            out.push(Record::Alloc(AllocRecord::Grant { label, grantee }));
        }
        for label in regrant {
            let grantee = self.pending[&label].grantee;
            out.push(Record::Alloc(AllocRecord::Grant { label, grantee }));
        }
        let open = self.open_labels();
        if !open.is_empty() {
            out.push(Record::Alloc(AllocRecord::Open {
                labels: open,
                advertiser: p.self_id,
                advertiser_label: my_label,
            }));
        }
    }

    /// Whether every label of the graph appears in the assignment table.
    pub fn formation_complete(&self) -> bool {
        self.graph.labels().all(|l| self.assigned(l).is_some())
    }

    fn joined_step(&mut self, p: &Perception<'_>, out: &mut Vec<Record>) -> Motion {
        self.grant_step(p, out);
        self.completion_step(out);
        self.hold(p)
    }

    /// Move into the closing barrier once the assignment table is full.
    /// While labels are missing, query the lowest one so gaps get filled.
    pub fn completion_step(&mut self, out: &mut Vec<Record>) {
        if self.formation_complete() {
            self.go(FsmState::BarrierB);
            self.barrier.create();
            return;
        }
        if let Some(missing) = self.graph.labels().find(|l| self.assigned(*l).is_none()) {
            let (_, query) = self.assignment.get(&StigKey::Int(missing));
            out.extend(query.map(Record::Stig));
        }
    }

    fn barrier_b_step(&mut self, p: &Perception<'_>, out: &mut Vec<Record>) {
        let threshold = self.closing_threshold();
        let mut recs: Vec<StigRecord> = Vec::new();
        let outcome = self
            .barrier
            .step(p.self_id, threshold, &mut recs)
            .expect("barrier table created on entry");
        out.extend(recs.into_iter().map(Record::Stig));
        match outcome {
            BarrierOutcome::Proceed => {
                self.passes.push(p.now);
                self.go(FsmState::Lock);
            }
            BarrierOutcome::TimedOut => self.barrier.create(),
            BarrierOutcome::Waiting => {}
        }
    }

    #[cfg(test)]
    pub(crate) fn force_state(&mut self, state: AllocState) {
        self.state = state;
    }
}
