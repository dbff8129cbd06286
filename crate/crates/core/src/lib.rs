//! Swarm coordination over virtual stigmergy, with a deterministic lossy
//! network simulator to exercise it.
//!
//! The coordination layers build on each other:
//!
//! - [`stigmergy`]: replicated key/value tables versioned by Lamport clocks.
//! - [`comms`]: per-step broadcast frames under a 250-byte budget, neighbor
//!   tracking, range and bearing.
//! - [`membership`]: sub-swarm flags carried in frame headers.
//! - [`barrier`]: a presence barrier built on a stigmergy table.
//! - [`allocation`]: the state machine that assigns formation labels.
//!
//! [`simworld`] steps a fleet of robots through a Bernoulli-loss channel and
//! [`harness`] runs scenarios and sweeps and reduces traces to metrics.
//! Independent worlds run in parallel through [`par`] when the `parallel`
//! feature is enabled (the default).

pub mod allocation;
pub mod barrier;
pub mod comms;
pub mod harness;
pub mod membership;
pub mod par;
pub mod record;
pub mod simworld;
pub mod stigmergy;
