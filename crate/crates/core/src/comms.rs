//! Situated broadcast: frame assembly under a byte budget, neighbor tracking
//! and range/bearing between poses.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Radio frame capacity in bytes.
pub const FRAME_CAPACITY: usize = 250;
/// sender (2) + pose (3 x 4) + record count (2)
pub const HEADER_SIZE: usize = 16;
/// Size of the membership bitmap appended to the header when enabled.
pub const MEMBERSHIP_BITMAP_SIZE: usize = 2;
pub const DEFAULT_MAX_AGE: u64 = 10;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CommsError {
    #[error("record of {size} bytes cannot fit a frame (at most {max} bytes of payload)")]
    RecordTooLarge { size: usize, max: usize },
}

/// Anything that can ride in a frame.
pub trait WireSize {
    fn wire_size(&self) -> usize;
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Pose {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn distance(&self, other: &Pose) -> f64 {
        ((other.x - self.x).powi(2) + (other.y - self.y).powi(2) + (other.z - self.z).powi(2)).sqrt()
    }

    pub fn planar_distance(&self, other: &Pose) -> f64 {
        (other.x - self.x).hypot(other.y - self.y)
    }
}

/// Frame layout parameters shared by every robot of a world.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameLayout {
    pub capacity: usize,
    pub membership: bool,
}

impl Default for FrameLayout {
    fn default() -> Self {
        Self {
            capacity: FRAME_CAPACITY,
            membership: true,
        }
    }
}

impl FrameLayout {
    pub fn header_size(&self) -> usize {
        HEADER_SIZE + if self.membership { MEMBERSHIP_BITMAP_SIZE } else { 0 }
    }

    pub fn max_record(&self) -> usize {
        self.capacity.saturating_sub(self.header_size())
    }
}

/// One per-step broadcast frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Envelope<R> {
    pub sender: u16,
    pub pose: Pose,
    pub memberships: Option<u16>,
    pub records: Vec<R>,
    pub byte_size: usize,
}

/// FIFO of records waiting for a frame.
#[derive(Debug, Clone)]
pub struct OutQueue<R> {
    records: VecDeque<R>,
    max_record: usize,
}

impl<R: WireSize> OutQueue<R> {
    pub fn new(layout: FrameLayout) -> Self {
        Self {
            records: VecDeque::new(),
            max_record: layout.max_record(),
        }
    }

    pub fn enqueue(&mut self, record: R) -> Result<(), CommsError> {
        let size = record.wire_size();
        if size > self.max_record {
            return Err(CommsError::RecordTooLarge {
                size,
                max: self.max_record,
            });
        }
        self.records.push_back(record);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &R> {
        self.records.iter()
    }

    /// Build this step's frame from the longest FIFO prefix that fits.
    /// Whatever does not fit stays queued for the next step.
    pub fn assemble_frame(
        &mut self,
        sender: u16,
        pose: Pose,
        memberships: Option<u16>,
        layout: FrameLayout,
    ) -> Envelope<R> {
        let mut byte_size = layout.header_size();
        let mut records = Vec::new();
        while let Some(next) = self.records.front() {
            let size = next.wire_size();
            if byte_size + size > layout.capacity {
                break;
            }
            byte_size += size;
            records.extend(self.records.pop_front());
        }
        Envelope {
            sender,
            pose,
            memberships: memberships.filter(|_| layout.membership),
            records,
            byte_size,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeighborRecord {
    pub id: u16,
    pub pose: Pose,
    pub last_seen: u64,
}

#[derive(Debug, Clone)]
pub struct NeighborTable {
    self_id: u16,
    entries: BTreeMap<u16, NeighborRecord>,
    pub max_age: u64,
}

impl NeighborTable {
    pub fn new(self_id: u16, max_age: u64) -> Self {
        Self {
            self_id,
            entries: BTreeMap::new(),
            max_age,
        }
    }

    /// Record the sender's position and hand back the payload for dispatch.
    /// Frames echoing our own id are discarded.
    pub fn on_envelope<R>(&mut self, env: Envelope<R>, now: u64) -> Vec<R> {
        if env.sender == self.self_id {
            return Vec::new();
        }
        self.entries.insert(
            env.sender,
            NeighborRecord {
                id: env.sender,
                pose: env.pose,
                last_seen: now,
            },
        );
        env.records
    }

    pub fn get(&self, id: u16) -> Option<&NeighborRecord> {
        self.entries.get(&id)
    }

    /// Neighbors heard from within `max_age` steps, ascending by id.
    pub fn neighbors_list(&self, now: u64, max_age: u64) -> Vec<NeighborRecord> {
        self.entries
            .values()
            .filter(|n| now.saturating_sub(n.last_seen) <= max_age)
            .copied()
            .collect()
    }

    pub fn fresh(&self, now: u64) -> Vec<NeighborRecord> {
        self.neighbors_list(now, self.max_age)
    }

    pub fn is_fresh(&self, id: u16, now: u64, max_age: u64) -> bool {
        self.entries
            .get(&id)
            .is_some_and(|n| now.saturating_sub(n.last_seen) <= max_age)
    }
}

/// Range (m), azimuth from +x in (-pi, pi] and elevation (rad) of `other`
/// as seen from `origin`. Coincident poses give all zeros.
pub fn range_bearing(origin: &Pose, other: &Pose) -> (f64, f64, f64) {
    let (dx, dy, dz) = (other.x - origin.x, other.y - origin.y, other.z - origin.z);
    let range = (dx * dx + dy * dy + dz * dz).sqrt();
    if range == 0.0 {
        return (0.0, 0.0, 0.0);
    }
    let planar = dx.hypot(dy);
    let mut azimuth = if planar == 0.0 { 0.0 } else { dy.atan2(dx) };
    if azimuth <= -std::f64::consts::PI {
        azimuth += 2.0 * std::f64::consts::PI;
    }
    (range, azimuth, dz.atan2(planar))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[derive(Debug, Clone, PartialEq)]
    struct Blob(usize);

    impl WireSize for Blob {
        fn wire_size(&self) -> usize {
            self.0
        }
    }

    fn plain() -> FrameLayout {
        FrameLayout {
            capacity: FRAME_CAPACITY,
            membership: false,
        }
    }

    #[test]
    fn enqueue_keeps_order() {
        let mut q = OutQueue::new(plain());
        for n in [3, 1, 2] {
            q.enqueue(Blob(n)).unwrap();
        }
        assert_eq!(q.iter().cloned().collect::<Vec<_>>(), [Blob(3), Blob(1), Blob(2)]);
    }

    #[test]
    fn oversized_record_rejected() {
        let mut q = OutQueue::new(plain());
        assert_eq!(
            q.enqueue(Blob(300)),
            Err(CommsError::RecordTooLarge { size: 300, max: 234 })
        );
        assert!(q.enqueue(Blob(235)).is_err());
        assert!(q.enqueue(Blob(234)).is_ok());
    }

    #[test]
    fn empty_queue_is_a_beacon() {
        let mut q: OutQueue<Blob> = OutQueue::new(plain());
        let env = q.assemble_frame(1, Pose::default(), None, plain());
        assert_eq!(env.byte_size, 16);
        assert!(env.records.is_empty());
        let mut q: OutQueue<Blob> = OutQueue::new(FrameLayout::default());
        let env = q.assemble_frame(1, Pose::default(), Some(0b1), FrameLayout::default());
        assert_eq!(env.byte_size, 18);
        assert_eq!(env.memberships, Some(1));
    }

    #[test]
    fn overflow_is_deferred() {
        let mut q = OutQueue::new(plain());
        for _ in 0..3 {
            q.enqueue(Blob(100)).unwrap();
        }
        let env = q.assemble_frame(1, Pose::default(), None, plain());
        assert_eq!(env.records.len(), 2);
        assert_eq!(env.byte_size, 216);
        assert_eq!(q.len(), 1);
        q.enqueue(Blob(5)).unwrap();
        let env = q.assemble_frame(1, Pose::default(), None, plain());
        assert_eq!(env.records, [Blob(100), Blob(5)]);
        assert!(q.is_empty());
        q.enqueue(Blob(1)).unwrap();
        assert_eq!(q.len(), 1);
    }

    #[test]
    fn small_queue_fits_entirely() {
        let mut q = OutQueue::new(plain());
        for n in [30, 30, 20] {
            q.enqueue(Blob(n)).unwrap();
        }
        let env = q.assemble_frame(1, Pose::default(), None, plain());
        assert_eq!(env.records.len(), 3);
        assert_eq!(env.byte_size, 96);
    }

    #[test]
    fn neighbor_upsert_and_dispatch() {
        let mut t = NeighborTable::new(1, DEFAULT_MAX_AGE);
        let env = Envelope {
            sender: 4,
            pose: Pose::new(1.0, 2.0, 3.0),
            memberships: None,
            records: vec![Blob(1), Blob(2)],
            byte_size: 19,
        };
        let out = t.on_envelope(env.clone(), 3);
        assert_eq!(out, [Blob(1), Blob(2)]);
        let mut moved = env;
        moved.pose = Pose::new(5.0, 5.0, 5.0);
        t.on_envelope(moved, 4);
        let list = t.neighbors_list(4, 10);
        assert_eq!(list.len(), 1);
        assert_eq!(list[0].pose, Pose::new(5.0, 5.0, 5.0));
        assert_eq!(list[0].last_seen, 4);
    }

    #[test]
    fn own_frames_never_become_neighbors() {
        let mut t = NeighborTable::new(1, DEFAULT_MAX_AGE);
        let env = Envelope {
            sender: 1,
            pose: Pose::default(),
            memberships: None,
            records: vec![Blob(1)],
            byte_size: 17,
        };
        assert!(t.on_envelope(env, 0).is_empty());
        assert!(t.neighbors_list(0, 10).is_empty());
    }

    #[test]
    fn neighbor_aging_and_order() {
        let mut t = NeighborTable::new(1, DEFAULT_MAX_AGE);
        let beacon = |sender| Envelope::<Blob> {
            sender,
            pose: Pose::default(),
            memberships: None,
            records: vec![],
            byte_size: 16,
        };
        t.on_envelope(beacon(9), 5);
        t.on_envelope(beacon(7), 15);
        t.on_envelope(beacon(2), 15);
        t.on_envelope(beacon(5), 16);
        let ids: Vec<u16> = t.neighbors_list(16, 10).iter().map(|n| n.id).collect();
        assert_eq!(ids, [2, 5, 7]);
    }

    #[test]
    fn range_bearing_examples() {
        let o = Pose::default();
        let (r, az, el) = range_bearing(&o, &Pose::new(3.0, 4.0, 0.0));
        assert_eq!(r, 5.0);
        assert!((az - 0.927_295_218).abs() < 1e-9);
        assert_eq!(el, 0.0);
        assert_eq!(range_bearing(&o, &o), (0.0, 0.0, 0.0));
        let (r, az, el) = range_bearing(&o, &Pose::new(0.0, 0.0, 5.0));
        assert_eq!((r, az), (5.0, 0.0));
        assert!((el - PI / 2.0).abs() < 1e-12);
        // the negative x axis maps to +pi, never -pi
        let (_, az, _) = range_bearing(&o, &Pose::new(-1.0, -0.0, 0.0));
        assert_eq!(az, PI);
    }

    proptest! {
        #[test]
        fn range_bearing_symmetry(
            ax in -1e3f64..1e3, ay in -1e3f64..1e3, az in -1e3f64..1e3,
            bx in -1e3f64..1e3, by in -1e3f64..1e3, bz in -1e3f64..1e3,
        ) {
            let a = Pose::new(ax, ay, az);
            let b = Pose::new(bx, by, bz);
            let (r1, az1, el1) = range_bearing(&a, &b);
            let (r2, az2, el2) = range_bearing(&b, &a);
            prop_assert!((r1 - r2).abs() <= 1e-9 * r1.max(1.0));
            prop_assert!(az1 > -PI && az1 <= PI);
            if a.planar_distance(&b) > 1e-6 {
                let diff = (az1 - az2).rem_euclid(2.0 * PI);
                prop_assert!((diff - PI).abs() < 1e-9);
            }
            prop_assert!((el1 + el2).abs() < 1e-9);
        }

        #[test]
        fn frames_respect_budget_and_conserve(sizes in proptest::collection::vec(1usize..=232, 0..40)) {
            let layout = FrameLayout::default();
            let mut q = OutQueue::new(layout);
            for &s in &sizes {
                q.enqueue(Blob(s)).unwrap();
            }
            let mut seen = Vec::new();
            while !q.is_empty() {
                let env = q.assemble_frame(1, Pose::default(), Some(0), layout);
                prop_assert!(env.byte_size <= FRAME_CAPACITY);
                prop_assert!(!env.records.is_empty());
                let total: usize = env.records.iter().map(|r| r.0).sum();
                prop_assert_eq!(env.byte_size, layout.header_size() + total);
                seen.extend(env.records.into_iter().map(|b| b.0));
            }
            prop_assert_eq!(seen, sizes);
        }
    }
}
