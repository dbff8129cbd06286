use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::allocation::FsmState;
use crate::comms::FRAME_CAPACITY;

/// One robot's record of one step. Column order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: u64,
    pub robot: u16,
    pub state: FsmState,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub bytes_out: usize,
    pub records_in: usize,
    pub neighbor_msgs_in: usize,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("robot {robot} sent {bytes} bytes at step {step}, over the {FRAME_CAPACITY}-byte frame")]
    FrameOverrun { step: u64, robot: u16, bytes: usize },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub struct TraceWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(out: W) -> Self {
        Self {
            inner: csv::Writer::from_writer(out),
        }
    }

    pub fn write_row(&mut self, row: &TraceRow) -> Result<(), TraceError> {
        if row.bytes_out > FRAME_CAPACITY {
            return Err(TraceError::FrameOverrun {
                step: row.step,
                robot: row.robot,
                bytes: row.bytes_out,
            });
        }
        self.inner.serialize(row)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W, TraceError> {
        self.inner.flush()?;
        self.inner
            .into_inner()
            .map_err(|e| TraceError::Io(e.into_error()))
    }
}

pub fn write_trace<W: Write>(out: W, rows: &[TraceRow]) -> Result<W, TraceError> {
    let mut w = TraceWriter::new(out);
    for row in rows {
        w.write_row(row)?;
    }
    w.finish()
}

pub fn read_trace<R: Read>(input: R) -> Result<Vec<TraceRow>, TraceError> {
    let mut reader = csv::Reader::from_reader(input);
    let rows = reader.deserialize().collect::<Result<Vec<TraceRow>, _>>()?;
    Ok(rows)
}
