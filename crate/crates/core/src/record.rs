//! Payload records carried in a robot's frame.

use serde::{Deserialize, Serialize};

use crate::allocation::{AllocRecord, FsmState};
use crate::comms::WireSize;
use crate::stigmergy::StigRecord;

/// Current behavior state, broadcast by every robot on every step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateTag {
    pub state: FsmState,
    pub label: Option<u16>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Record {
    Stig(StigRecord),
    Alloc(AllocRecord),
    State(StateTag),
    /// Mission start order from the operator.
    Start,
}

impl WireSize for Record {
    fn wire_size(&self) -> usize {
        match self {
            Record::Stig(r) => r.wire_size(),
            Record::Alloc(r) => r.wire_size(),
            // tag, state, label
            Record::State(_) => 1 + 1 + 2,
            Record::Start => 1,
        }
    }
}

impl From<StigRecord> for Record {
    fn from(r: StigRecord) -> Self {
        Record::Stig(r)
    }
}

impl From<AllocRecord> for Record {
    fn from(r: AllocRecord) -> Self {
        Record::Alloc(r)
    }
}
