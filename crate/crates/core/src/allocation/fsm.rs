use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FsmState {
    TurnedOff,
    TakeOff,
    BarrierA,
    Free,
    Asking,
    Joining,
    Joined,
    BarrierB,
    Lock,
}

impl FsmState {
    pub const ALL: [FsmState; 9] = [
        FsmState::TurnedOff,
        FsmState::TakeOff,
        FsmState::BarrierA,
        FsmState::Free,
        FsmState::Asking,
        FsmState::Joining,
        FsmState::Joined,
        FsmState::BarrierB,
        FsmState::Lock,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FsmState::TurnedOff => "TurnedOff",
            FsmState::TakeOff => "TakeOff",
            FsmState::BarrierA => "BarrierA",
            FsmState::Free => "Free",
            FsmState::Asking => "Asking",
            FsmState::Joining => "Joining",
            FsmState::Joined => "Joined",
            FsmState::BarrierB => "BarrierB",
            FsmState::Lock => "Lock",
        }
    }

    /// Part of the formation: holds (or is heading to) a label.
    pub fn in_formation(self) -> bool {
        matches!(
            self,
            FsmState::Joining | FsmState::Joined | FsmState::BarrierB | FsmState::Lock
        )
    }

    /// Whether `self -> next` is an edge of the behavior state machine.
    /// Staying in place is always allowed.
    pub fn can_transition(self, next: FsmState) -> bool {
        use FsmState::*;
        self == next
            || matches!(
                (self, next),
                (TurnedOff, TakeOff)
                    | (TakeOff, BarrierA)
                    | (BarrierA, Free)
                    | (BarrierA, Joined)
                    | (Free, Asking)
                    | (Asking, Free)
                    | (Asking, Joining)
                    | (Joining, Joined)
                    | (Joined, BarrierB)
                    | (BarrierB, Lock)
            )
    }
}

impl fmt::Display for FsmState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, thiserror::Error)]
#[error("unknown state {0:?}")]
pub struct UnknownState(pub String);

impl FromStr for FsmState {
    type Err = UnknownState;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FsmState::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| UnknownState(s.to_owned()))
    }
}

/// Check that a state sequence only follows machine edges. Returns the
/// first offending transition.
pub fn check_edges(trace: &[FsmState]) -> Result<(), (FsmState, FsmState)> {
    trace
        .windows(2)
        .find(|w| !w[0].can_transition(w[1]))
        .map_or(Ok(()), |w| Err((w[0], w[1])))
}
