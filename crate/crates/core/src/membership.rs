//! Sub-swarm membership. Each robot advertises the swarms it belongs to as
//! a 16-bit bitmap in its frame header; peers record the latest bitmap seen.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

pub const MAX_SWARMS: u8 = 16;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("swarm id {0} is out of range (at most {MAX_SWARMS} swarms)")]
pub struct SwarmIdError(pub u8);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SwarmId(u8);

impl SwarmId {
    pub fn new(id: u8) -> Result<Self, SwarmIdError> {
        if id < MAX_SWARMS {
            Ok(Self(id))
        } else {
            Err(SwarmIdError(id))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }

    fn bit(self) -> u16 {
        1 << self.0
    }
}

#[derive(Debug, Clone)]
pub struct SwarmView {
    self_id: u16,
    own_flags: u16,
    peers: BTreeMap<u16, u16>,
}

impl SwarmView {
    pub fn new(self_id: u16) -> Self {
        Self {
            self_id,
            own_flags: 0,
            peers: BTreeMap::new(),
        }
    }

    pub fn join(&mut self, sid: SwarmId) {
        self.own_flags |= sid.bit();
    }

    /// Leaving a swarm that was never joined is a no-op.
    pub fn leave(&mut self, sid: SwarmId) {
        self.own_flags &= !sid.bit();
    }

    pub fn bitmap(&self) -> u16 {
        self.own_flags
    }

    pub fn own_flags(&self) -> BTreeSet<SwarmId> {
        flags_to_set(self.own_flags)
    }

    /// Record the bitmap carried by a peer's frame.
    pub fn observe(&mut self, sender: u16, bitmap: u16) {
        if sender != self.self_id {
            self.peers.insert(sender, bitmap);
        }
    }

    pub fn is_member(&self, sid: SwarmId, robot: u16) -> bool {
        let flags = if robot == self.self_id {
            self.own_flags
        } else {
            self.peers.get(&robot).copied().unwrap_or(0)
        };
        flags & sid.bit() != 0
    }

    /// Known members of `sid`, including self when joined.
    pub fn members(&self, sid: SwarmId) -> BTreeSet<u16> {
        let mut out: BTreeSet<u16> = self
            .peers
            .iter()
            .filter(|(_, flags)| *flags & sid.bit() != 0)
            .map(|(id, _)| *id)
            .collect();
        if self.own_flags & sid.bit() != 0 {
            out.insert(self.self_id);
        }
        out
    }
}

fn flags_to_set(flags: u16) -> BTreeSet<SwarmId> {
    (0..MAX_SWARMS)
        .filter(|i| flags & (1 << i) != 0)
        .map(SwarmId)
        .collect()
}
