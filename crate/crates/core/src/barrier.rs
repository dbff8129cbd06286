//! Consensus barrier over a virtual stigmergy table.
//!
//! Every waiting robot writes its id into a shared table each step. A robot
//! leaves once the table holds `threshold + 1` keys or the done flag `"d"` is
//! set, and it sets the flag on the way out so stragglers follow. After
//! `timeout` unsuccessful steps the table is dropped and the caller resumes.

use thiserror::Error;

use crate::stigmergy::{StigKey, StigRecord, StigTable, StigValue};

pub const DEFAULT_TIMEOUT: u32 = 600;
pub const DONE_KEY: &str = "d";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BarrierError {
    #[error("barrier stepped without an active table; call create first")]
    NoTable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BarrierOutcome {
    Proceed,
    Waiting,
    TimedOut,
}

#[derive(Debug, Clone)]
pub struct BarrierState {
    vstig_counter: u8,
    table: Option<StigTable>,
    wait_timer: u32,
    timeout: u32,
}

impl Default for BarrierState {
    fn default() -> Self {
        Self::new(DEFAULT_TIMEOUT)
    }
}

impl BarrierState {
    pub fn new(timeout: u32) -> Self {
        Self {
            vstig_counter: 0,
            table: None,
            wait_timer: 0,
            timeout,
        }
    }

    /// Open a fresh barrier table. An existing table is discarded and the
    /// table id advances; a table already dropped by a timeout is not
    /// counted again, so a retry reuses the id its peers are still on.
    pub fn create(&mut self) {
        self.wait_timer = 0;
        if self.table.take().is_some() {
            self.vstig_counter = self.vstig_counter.wrapping_add(1);
        }
        self.table = Some(StigTable::create(self.vstig_counter));
    }

    pub fn table(&self) -> Option<&StigTable> {
        self.table.as_ref()
    }

    pub fn table_mut(&mut self) -> Option<&mut StigTable> {
        self.table.as_mut()
    }

    pub fn counter(&self) -> u8 {
        self.vstig_counter
    }

    pub fn wait_timer(&self) -> u32 {
        self.wait_timer
    }

    pub fn timeout(&self) -> u32 {
        self.timeout
    }

    /// Run one barrier step for `self_id`. Records to broadcast are pushed
    /// onto `out` in the order the table produced them.
    pub fn step(
        &mut self,
        self_id: u16,
        threshold: usize,
        out: &mut Vec<StigRecord>,
    ) -> Result<BarrierOutcome, BarrierError> {
        let table = self.table.as_mut().ok_or(BarrierError::NoTable)?;
        let me = StigKey::Int(self_id);
        let done = StigKey::Text(DONE_KEY.to_owned());

        let (_, rec) = table
            .put(me.clone(), StigValue::Int(1), self_id)
            .expect("integer keys and values are always valid");
        out.push(rec);
        let (_, miss) = table.get(&me);
        out.extend(miss);

        let (flag, miss) = table.get(&done);
        let flag_set = flag.and_then(StigValue::as_int) == Some(1);
        out.extend(miss);

        if table.size().saturating_sub(1) >= threshold || flag_set {
            let (_, rec) = table
                .put(done, StigValue::Int(1), self_id)
                .expect("done key is valid");
            out.push(rec);
            self.wait_timer = 0;
            Ok(BarrierOutcome::Proceed)
        } else if self.wait_timer >= self.timeout {
            self.table = None;
            self.wait_timer = 0;
            Ok(BarrierOutcome::TimedOut)
        } else {
            self.wait_timer += 1;
            Ok(BarrierOutcome::Waiting)
        }
    }
}
