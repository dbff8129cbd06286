use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use swarmstig::harness::{
    bandwidth_moving_average, neighbor_ratio_by_state, read_trace, run_scenario, sweep_droprate,
    write_run, Execution, HarnessError, Scenario, DEFAULT_WINDOW,
};

#[derive(Parser)]
#[command(name = "swarmstig", version, about = "Swarm coordination simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its trace and summary.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a scenario over several drop rates and seeds.
    Sweep {
        scenario: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        rates: Vec<f64>,
        /// Number of seeds, counted up from the scenario seed.
        #[arg(long)]
        seeds: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run worlds one after another.
        #[arg(long)]
        sequential: bool,
    },
    /// Neighbor-message ratios and bandwidth from a trace file.
    Metrics {
        trace: PathBuf,
        #[arg(long, default_value_t = DEFAULT_WINDOW)]
        window: usize,
    },
}

fn out_dir(cli: Option<PathBuf>, scenario: &Scenario) -> PathBuf {
    cli.or_else(|| scenario.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_owned(),
        source,
    }
}

fn run(cli: Cli) -> Result<bool, Box<dyn std::error::Error>> {
    match cli.command {
        Command::Run {
            scenario,
            seed,
            out,
        } => {
            let sc = Scenario::load(&scenario)?;
            let dir = out_dir(out, &sc);
            let run = run_scenario(&sc, seed)?;
            let (trace, summary) = write_run(&dir, &run)?;
            let s = &run.summary;
            match s.completion_time_s {
                Some(t) => println!("completed at step {} ({t:.1} s)", s.total_steps - 1),
                None => println!("incomplete after {} steps", s.total_steps),
            }
            for r in &s.robots {
                let join = r
                    .join_time_s
                    .map_or_else(|| "-".to_owned(), |t| format!("{t:.1} s"));
                let label = r.label.map_or_else(|| "-".to_owned(), |l| l.to_string());
                println!("robot {:>3}  label {label:>3}  joined {join}", r.id);
            }
            println!("max bandwidth ratio (30-sample mean): {:.3}", s.max_bandwidth_ratio);
            for v in &s.label_violations {
                eprintln!("label violation: {v}");
            }
            println!("trace: {}\nsummary: {}", trace.display(), summary.display());
            Ok(s.completed && s.label_violations.is_empty())
        }
        Command::Sweep {
            scenario,
            rates,
            seeds,
            out,
            sequential,
        } => {
            let sc = Scenario::load(&scenario)?;
            let dir = out_dir(out, &sc);
            let seed_list: Vec<u64> = (0..seeds).map(|i| sc.seed + i).collect();
            let exec = if sequential {
                Execution::Sequential
            } else {
                Execution::Parallel
            };
            let table = sweep_droprate(&sc, &rates, &seed_list, exec)?;
            std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
            let runs_path = dir.join("sweep.csv");
            table.write_runs(BufWriter::new(File::create(&runs_path).map_err(io_err(&runs_path))?))?;
            let rates_path = dir.join("sweep_summary.csv");
            table.write_rates(BufWriter::new(File::create(&rates_path).map_err(io_err(&rates_path))?))?;
            println!("{:>6} {:>5} {:>10} {:>12}", "rate", "runs", "completed", "median (s)");
            for r in &table.rates {
                println!(
                    "{:>6.2} {:>5} {:>10.2} {:>12.1}",
                    r.rate, r.runs, r.completion_ratio, r.median_time_s
                );
            }
            println!("runs: {}\nsummary: {}", runs_path.display(), rates_path.display());
            Ok(table.all_completed())
        }
        Command::Metrics { trace, window } => {
            let file = File::open(&trace).map_err(io_err(&trace))?;
            let rows = read_trace(file)?;
            let n = rows
                .iter()
                .map(|r| r.robot)
                .collect::<std::collections::BTreeSet<_>>()
                .len();
            println!("robots: {n}");
            if n >= 2 {
                println!("neighbor-message ratio by state:");
                for (state, ratio) in neighbor_ratio_by_state(&rows, n)? {
                    println!("  {state:<10} {ratio:.3}");
                }
            }
            println!("bandwidth ({window}-sample moving average of bytes/250):");
            for (robot, series) in bandwidth_moving_average(&rows, window)? {
                let max = series.iter().copied().fold(0.0, f64::max);
                let mean = series.iter().sum::<f64>() / series.len().max(1) as f64;
                println!("  robot {robot:>3}  max {max:.3}  mean {mean:.3}");
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
