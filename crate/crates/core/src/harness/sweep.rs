//! Drop-rate sweeps: one independent world per (rate, seed) pair.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::par;

use super::{run_world, HarnessError, Scenario};

pub use crate::par::Execution;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRun {
    pub rate: f64,
    pub seed: u64,
    pub completed: bool,
    pub completion_step: Option<u64>,
    pub completion_time_s: Option<f64>,
    pub total_steps: u64,
    pub max_bytes_out: usize,
    pub max_bandwidth_ratio: f64,
    pub label_violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSummary {
    pub rate: f64,
    pub runs: usize,
    pub completed: usize,
    pub completion_ratio: f64,
    /// Median over all seeds; unfinished runs count as the step cap.
    pub median_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepTable {
    pub runs: Vec<SweepRun>,
    pub rates: Vec<RateSummary>,
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    Some(if values.len().is_multiple_of(2) {
        (values[mid - 1] + values[mid]) / 2.0
    } else {
        values[mid]
    })
}

pub fn sweep_droprate(
    scenario: &Scenario,
    rates: &[f64],
    seeds: &[u64],
    exec: Execution,
) -> Result<SweepTable, HarnessError> {
    if let Some(bad) = rates.iter().find(|r| !(0.0..=1.0).contains(*r)) {
        return Err(HarnessError::Rate(*bad));
    }
    let jobs: Vec<(f64, u64)> = rates
        .iter()
        .flat_map(|&r| seeds.iter().map(move |&s| (r, s)))
        .collect();
    let results = par::map(&jobs, exec, |&(rate, seed)| {
        let mut sc = scenario.clone();
        sc.drop_prob = rate;
        let cfg = sc.world_config(seed);
        run_world(&cfg, sc.step_cap).map(|out| {
            let s = out.summary;
            SweepRun {
                rate,
                seed,
                completed: s.completed,
                completion_step: s.completion_step,
                completion_time_s: s.completion_time_s,
                total_steps: s.total_steps,
                max_bytes_out: s.max_bytes_out,
                max_bandwidth_ratio: s.max_bandwidth_ratio,
                label_violations: s.label_violations.len(),
            }
        })
    });
    let runs = results.into_iter().collect::<Result<Vec<_>, _>>()?;

    let cap_time = scenario.step_cap as f64 * scenario.step_period;
    let summaries = rates
        .iter()
        .map(|&rate| {
            let of_rate: Vec<&SweepRun> = runs.iter().filter(|r| r.rate == rate).collect();
            let completed = of_rate.iter().filter(|r| r.completed).count();
            let mut times: Vec<f64> = of_rate
                .iter()
                .map(|r| r.completion_time_s.unwrap_or(cap_time))
                .collect();
            RateSummary {
                rate,
                runs: of_rate.len(),
                completed,
                completion_ratio: if of_rate.is_empty() {
                    0.0
                } else {
                    completed as f64 / of_rate.len() as f64
                },
                median_time_s: median(&mut times).unwrap_or(cap_time),
            }
        })
        .collect();
    Ok(SweepTable {
        runs,
        rates: summaries,
    })
}

impl SweepTable {
    pub fn write_runs<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.runs {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_rates<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rates {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn all_completed(&self) -> bool {
        self.runs.iter().all(|r| r.completed)
    }
}
