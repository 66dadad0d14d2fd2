//! Command-line harness: training runs, zero-shot evaluation over serialized
//! scenario sets, gate sweeps, scripted baselines, bound verification, and
//! self-check suites. Exit codes: 0 success, 1 failure, 2 config error.

mod ops;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use copa_core::eval::BaselinePolicy;
use copa_core::verify::SuiteKind;

#[derive(Parser)]
#[command(
    name = "copa",
    version,
    about = "Coach-player multi-agent Q-learning workbench"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a model; writes metrics.csv, config.txt, and model.ckpt.
    Train {
        /// Run configuration file (key = value lines).
        #[arg(long)]
        config: PathBuf,
        /// Master seed; every stream derives from it.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory, uniquely owned by this run.
        #[arg(long)]
        out: PathBuf,
        /// Resume from a checkpoint (counters and ε schedule continue).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Greedy (ε = 0) evaluation of checkpoints over a scenario set.
    Eval {
        #[arg(long)]
        config: PathBuf,
        /// One or more checkpoints; several give an across-models stderr.
        #[arg(long, required = true, num_args = 1..)]
        checkpoint: Vec<PathBuf>,
        /// Scenario set file (one `seed n_a n_e d_c chars…` line each).
        #[arg(long)]
        scenarios: PathBuf,
        /// Broadcast gate threshold.
        #[arg(long, default_value_t = 0.0)]
        beta: f64,
        /// Broadcast period override (defaults to the config's).
        #[arg(long)]
        period: Option<usize>,
        /// Write the per-scenario table here (stdout summary either way).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep the gate threshold; replays frozen proposals and re-evaluates.
    SweepBeta {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        scenarios: PathBuf,
        /// Comma-separated β values.
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.0, 2.0, 3.0, 5.0, 8.0])]
        beta: Vec<f64>,
        #[arg(long)]
        period: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Play a scripted baseline over a scenario set.
    Baseline {
        /// One of: random, greedy-expert, greedy-matcher, oracle.
        #[arg(value_parser = parse_policy)]
        policy: BaselinePolicy,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        scenarios: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run self-check suites; nonzero exit on any failure.
    Verify {
        /// One of: gradcheck, monotonicity, bound, gaussian (default: all).
        #[arg(value_parser = parse_suite)]
        suite: Option<SuiteKind>,
        /// Instances per suite (defaults to each suite's standard scale).
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export one evaluation episode as a per-step trace table.
    ExportTrace {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        scenarios: PathBuf,
        /// Which scenario of the set to trace.
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long, default_value_t = 0.0)]
        beta: f64,
        #[arg(long)]
        period: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw a scenario set from the config's distribution and serialize it.
    GenScenarios {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 200)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_policy(s: &str) -> Result<BaselinePolicy, String> {
    BaselinePolicy::parse(s)
        .ok_or_else(|| format!("unknown baseline `{s}` (random, greedy-expert, greedy-matcher, oracle)"))
}

fn parse_suite(s: &str) -> Result<SuiteKind, String> {
    SuiteKind::parse(s)
        .ok_or_else(|| format!("unknown suite `{s}` (gradcheck, monotonicity, bound, gaussian)"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Train { config, seed, out, checkpoint } => ops::train(&config, seed, &out, checkpoint.as_deref()),
        Cmd::Eval { config, checkpoint, scenarios, beta, period, out } => {
            ops::eval(&config, &checkpoint, &scenarios, beta, period, out.as_deref())
        }
        Cmd::SweepBeta { config, checkpoint, scenarios, beta, period, out } => {
            ops::sweep_beta(&config, &checkpoint, &scenarios, &beta, period, out.as_deref())
        }
        Cmd::Baseline { policy, config, scenarios, out } => {
            ops::baseline(policy, &config, &scenarios, out.as_deref())
        }
        Cmd::Verify { suite, trials, seed, out } => ops::verify(suite, trials, seed, out.as_deref()),
        Cmd::ExportTrace { config, checkpoint, scenarios, index, beta, period, out } => {
            ops::export_trace(&config, &checkpoint, &scenarios, index, beta, period, out.as_deref())
        }
        Cmd::GenScenarios { config, count, seed, out } => ops::gen_scenarios(&config, count, seed, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
