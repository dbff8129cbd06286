//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use swarmstig::allocation::{FsmState, Shape};
use swarmstig::barrier::{BarrierOutcome, BarrierState, DEFAULT_TIMEOUT};
use swarmstig::comms::FRAME_CAPACITY;
use swarmstig::harness::{
    run_scenario, sweep_droprate, write_run, Execution, RunOutput, Scenario, SweepTable,
};
use swarmstig::stigmergy::StigKey;

const RATES: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 0.9];
const SEEDS: u64 = 10;

struct Verdict {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn verdict(name: &'static str, pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        name,
        pass,
        detail: detail.into(),
    }
}

fn nominal(drop: f64) -> Scenario {
    Scenario::fleet(6, 0, Shape::Y, drop)
}

fn sweep() -> SweepTable {
    let seeds: Vec<u64> = (1..=SEEDS).collect();
    sweep_droprate(&nominal(0.0), &RATES, &seeds, Execution::Parallel).expect("sweep runs")
}

fn consensus(table: &SweepTable) -> Verdict {
    let done = table.runs.iter().filter(|r| r.completed).count();
    let slowest = table
        .runs
        .iter()
        .filter_map(|r| r.completion_step)
        .max()
        .unwrap_or(0);
    verdict(
        "consensus under loss",
        done == table.runs.len() && table.runs.len() == RATES.len() * SEEDS as usize,
        format!("{done}/{} runs reached all-Lock, slowest at step {slowest}", table.runs.len()),
    )
}

fn trend(table: &SweepTable) -> Verdict {
    let medians: Vec<f64> = table.rates.iter().map(|r| r.median_time_s).collect();
    let monotone = medians.windows(2).all(|w| w[0] <= w[1]);
    let shown: Vec<String> = table
        .rates
        .iter()
        .map(|r| format!("{:.2}:{:.1}s", r.rate, r.median_time_s))
        .collect();
    verdict("drop-rate trend", monotone, format!("medians {}", shown.join(" ")))
}

fn timeout_exactness() -> Verdict {
    let expected = common::timeout_call(DEFAULT_TIMEOUT);
    let mut b = BarrierState::default();
    b.create();
    let mut waits = 0;
    let mut call = 0;
    let mut timer_at_timeout = None;
    loop {
        call += 1;
        let before = b.wait_timer();
        match b.step(1, 5, &mut Vec::new()).expect("table exists") {
            BarrierOutcome::Waiting => waits += 1,
            BarrierOutcome::TimedOut => {
                timer_at_timeout = Some(before);
                break;
            }
            BarrierOutcome::Proceed => break,
        }
    }
    verdict(
        "barrier timeout exactness",
        call == expected && waits == DEFAULT_TIMEOUT && timer_at_timeout == Some(DEFAULT_TIMEOUT),
        format!("{waits} waits, timed out on call {call} (oracle {expected})"),
    )
}

fn confluence() -> Verdict {
    let key = StigKey::text("k").expect("short key");
    let writes = [(0, key.clone(), 11), (1, key.clone(), 22)];
    let want = common::expected_entry(&writes, &key).expect("two writes");
    let start = Instant::now();
    let ex = common::explore(3, &writes, true);
    let elapsed = start.elapsed();
    let want = format!("{want:?}");
    let agree = ex.finals.len() == 1
        && ex
            .finals
            .iter()
            .all(|f| f.iter().all(|replica| replica.as_slice() == [want.clone()]));
    verdict(
        "stigmergy confluence",
        agree && elapsed.as_secs_f64() < 1.0,
        format!(
            "{} states, {} distinct final table set(s), {:.0} ms",
            ex.states,
            ex.finals.len(),
            elapsed.as_secs_f64() * 1e3
        ),
    )
}

fn uniqueness(table: &SweepTable, extra: &[&RunOutput]) -> Verdict {
    let sweep_bad: usize = table.runs.iter().map(|r| r.label_violations).sum();
    let extra_bad: usize = extra.iter().map(|r| r.summary.label_violations.len()).sum();
    verdict(
        "label uniqueness",
        sweep_bad + extra_bad == 0,
        format!(
            "{} violations over {} runs",
            sweep_bad + extra_bad,
            table.runs.len() + extra.len()
        ),
    )
}

fn bandwidth(table: &SweepTable, nominal_run: &RunOutput, extra: &[&RunOutput]) -> Verdict {
    let max_bytes = table
        .runs
        .iter()
        .map(|r| r.max_bytes_out)
        .chain(extra.iter().flat_map(|r| r.trace.iter().map(|t| t.bytes_out)))
        .max()
        .unwrap_or(0);
    let ratio = nominal_run.summary.max_bandwidth_ratio;
    let soft = if ratio <= 0.5 { "within" } else { "above" };
    verdict(
        "bandwidth bound",
        max_bytes <= FRAME_CAPACITY && ratio <= 1.0,
        format!("max bytes_out {max_bytes}, nominal max moving-average ratio {ratio:.3} ({soft} 0.5)"),
    )
}

fn neighbor_ratio(lossless: &RunOutput, lossy: &RunOutput) -> Verdict {
    let exact = lossless
        .summary
        .neighbor_ratio_by_state
        .values()
        .all(|r| *r == 1.0);
    let peers = 5.0;
    let mut worst: f64 = 0.0;
    let mut inside = true;
    for (state, ratio) in &lossy.summary.neighbor_ratio_by_state {
        let rows = lossy
            .trace
            .iter()
            .filter(|r| r.step > 0 && r.state == *state)
            .count() as f64;
        let sigma = (0.25 / (rows * peers)).sqrt();
        let z = (ratio - 0.5).abs() / sigma;
        worst = worst.max(z);
        inside &= z <= 3.0;
    }
    let states_seen: Vec<String> = lossy
        .summary
        .neighbor_ratio_by_state
        .keys()
        .map(FsmState::to_string)
        .collect();
    verdict(
        "neighbor-ratio sanity",
        exact && inside && !states_seen.is_empty(),
        format!(
            "drop 0 ratios all 1.0: {exact}; drop 0.5 worst deviation {worst:.2} sigma over {} states",
            states_seen.len()
        ),
    )
}

fn determinism(sc: &Scenario) -> Verdict {
    let dirs = [tempfile::tempdir().expect("tempdir"), tempfile::tempdir().expect("tempdir")];
    let files: Vec<Vec<u8>> = dirs
        .iter()
        .map(|d| {
            let run = run_scenario(sc, Some(7)).expect("run");
            let (trace, _) = write_run(d.path(), &run).expect("write");
            std::fs::read(trace).expect("read trace")
        })
        .collect();
    verdict(
        "determinism",
        !files[0].is_empty() && files[0] == files[1],
        format!("two traces of {} bytes, identical: {}", files[0].len(), files[0] == files[1]),
    )
}

fn main() -> ExitCode {
    let start = Instant::now();
    let table = sweep();
    let nominal_run = run_scenario(&nominal(0.0), Some(1)).expect("nominal run");
    let lossy_run = run_scenario(&nominal(0.5), Some(1)).expect("lossy run");
    let extra = [&nominal_run, &lossy_run];

    let verdicts = [
        consensus(&table),
        trend(&table),
        timeout_exactness(),
        confluence(),
        uniqueness(&table, &extra),
        bandwidth(&table, &nominal_run, &extra),
        neighbor_ratio(&nominal_run, &lossy_run),
        determinism(&nominal(0.5)),
    ];
    for v in &verdicts {
        println!("{} {}: {}", if v.pass { "PASS" } else { "FAIL" }, v.name, v.detail);
    }
    let failed = verdicts.iter().filter(|v| !v.pass).count();
    println!(
        "acceptance: {} passed, {failed} failed in {:.1} s",
        verdicts.len() - failed,
        start.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
