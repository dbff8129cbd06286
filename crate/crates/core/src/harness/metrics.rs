//! Metrics computed over completed traces.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::allocation::FsmState;
use crate::comms::FRAME_CAPACITY;

use super::TraceRow;

pub const DEFAULT_WINDOW: usize = 30;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("neighbor ratio needs a swarm of at least 2 robots, got {0}")]
    SwarmTooSmall(usize),
    #[error("moving-average window must be at least 1")]
    ZeroWindow,
}

/// Mean fraction of the other `n - 1` robots heard from, per state.
///
/// Rows of step 0 are skipped: nothing can have been sent before it.
pub fn neighbor_ratio_by_state(
    rows: &[TraceRow],
    n: usize,
) -> Result<BTreeMap<FsmState, f64>, MetricsError> {
    if n < 2 {
        return Err(MetricsError::SwarmTooSmall(n));
    }
    let mut acc: BTreeMap<FsmState, (usize, usize)> = BTreeMap::new();
    for row in rows.iter().filter(|r| r.step > 0) {
        let e = acc.entry(row.state).or_default();
        e.0 += row.neighbor_msgs_in;
        e.1 += 1;
    }
    let peers = (n - 1) as f64;
    Ok(acc
        .into_iter()
        .map(|(state, (msgs, count))| (state, msgs as f64 / (count as f64 * peers)))
        .collect())
}

/// Trailing mean over `window` samples; the first points average over what
/// is available.
pub fn moving_average(series: &[f64], window: usize) -> Result<Vec<f64>, MetricsError> {
    if window == 0 {
        return Err(MetricsError::ZeroWindow);
    }
    let mut out = Vec::with_capacity(series.len());
    let mut sum = 0.0;
    for (i, v) in series.iter().enumerate() {
        sum += v;
        if i >= window {
            sum -= series[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    Ok(out)
}

/// Per robot: moving average of `bytes_out / 250`, in step order.
pub fn bandwidth_moving_average(
    rows: &[TraceRow],
    window: usize,
) -> Result<BTreeMap<u16, Vec<f64>>, MetricsError> {
    let mut series: BTreeMap<u16, Vec<(u64, f64)>> = BTreeMap::new();
    for row in rows {
        series
            .entry(row.robot)
            .or_default()
            .push((row.step, row.bytes_out as f64 / FRAME_CAPACITY as f64));
    }
    series
        .into_iter()
        .map(|(robot, mut s)| {
            s.sort_by_key(|(step, _)| *step);
            let values: Vec<f64> = s.into_iter().map(|(_, v)| v).collect();
            moving_average(&values, window).map(|avg| (robot, avg))
        })
        .collect()
}

/// Largest moving-average bandwidth ratio of any robot.
pub fn max_bandwidth_ratio(rows: &[TraceRow], window: usize) -> Result<f64, MetricsError> {
    Ok(bandwidth_moving_average(rows, window)?
        .values()
        .flatten()
        .copied()
        .fold(0.0, f64::max))
}
