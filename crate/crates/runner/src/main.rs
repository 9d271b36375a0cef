use std::fs::{self, File};
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anonbft::Execution;
use anonbft_runner::bench::{self, BenchOp, BenchRow};
use anonbft_runner::report::{write_csv, RunRow};
use anonbft_runner::{parse_seeds, run_seeds, scaling, TRule};
use anonbft_simnet::{Protocol, SimConfig};
use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "anonbft",
    version,
    about = "Run anonbft scenarios, scaling tables and crypto benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file for one seed or a seed range.
    Run(RunArgs),
    /// Fault-free message totals for a list of process counts.
    Scaling(ScalingArgs),
    /// Median timings for crypto operations.
    Bench(BenchArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long, conflicts_with = "seeds")]
    seed: Option<u64>,
    /// Inclusive range `A..B`.
    #[arg(long, value_parser = parse_seeds)]
    seeds: Option<std::ops::RangeInclusive<u64>>,
    /// CSV destination; stdout if absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = true, action = ArgAction::Set)]
    check_properties: bool,
    /// Writes the event trace of a single-seed run.
    #[arg(long, conflicts_with = "seeds")]
    trace: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Mode::Parallel)]
    exec: Mode,
}

#[derive(Args)]
struct ScalingArgs {
    #[arg(long, value_delimiter = ',', default_value = "4,8")]
    n: Vec<usize>,
    #[arg(long, default_value = "max")]
    t: TRule,
    #[arg(long, value_enum, default_value_t = ProtocolArg::Vector)]
    protocol: ProtocolArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Mode::Parallel)]
    exec: Mode,
}

#[derive(Args)]
struct BenchArgs {
    /// Operation name, or `all`.
    #[arg(long, default_value = "all")]
    bench: String,
    #[arg(long, value_delimiter = ',', default_value = "10,40,70,100")]
    n: Vec<usize>,
    #[arg(long, default_value = "max")]
    t: TRule,
    #[arg(long, default_value_t = bench::MIN_ITERATIONS)]
    iterations: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Mode::Parallel)]
    exec: Mode,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Sequential,
    Parallel,
}

impl From<Mode> for Execution {
    fn from(m: Mode) -> Execution {
        match m {
            Mode::Sequential => Execution::Sequential,
            Mode::Parallel => Execution::Parallel,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ProtocolArg {
    Broadcast,
    Binary,
    Vector,
    Election,
}

impl From<ProtocolArg> for Protocol {
    fn from(p: ProtocolArg) -> Protocol {
        match p {
            ProtocolArg::Broadcast => Protocol::Broadcast,
            ProtocolArg::Binary => Protocol::Binary,
            ProtocolArg::Vector => Protocol::Vector,
            ProtocolArg::Election => Protocol::Election,
        }
    }
}

enum Failure {
    Properties,
    Usage(String),
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<anonbft_simnet::ConfigError> for Failure {
    fn from(e: anonbft_simnet::ConfigError) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn sink(out: &Option<PathBuf>) -> io::Result<Box<dyn Write>> {
    Ok(match out {
        Some(path) => Box::new(File::create(path)?),
        None => Box::new(io::stdout().lock()),
    })
}

fn cmd_run(args: RunArgs) -> Result<(), Failure> {
    let text = fs::read_to_string(&args.scenario)?;
    let mut cfg = SimConfig::from_json(&text)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let seeds: Vec<u64> = match &args.seeds {
        Some(range) => range.clone().collect(),
        None => vec![cfg.seed],
    };
    let name = args
        .scenario
        .file_stem()
        .map_or_else(String::new, |s| s.to_string_lossy().into_owned());
    if let Some(path) = &args.trace {
        fs::write(path, anonbft_simnet::run(&cfg)?.trace_text())?;
    }
    let results = run_seeds(&cfg, &seeds, args.exec.into())?;
    let rows: Vec<RunRow> = results
        .iter()
        .map(|r| {
            RunRow::new(
                &name,
                &SimConfig {
                    seed: r.seed,
                    ..cfg.clone()
                },
                r,
            )
        })
        .collect();
    write_csv(&rows, sink(&args.out)?)?;
    let mut all_passed = true;
    for r in &results {
        for p in &r.report.results {
            if !p.pass {
                all_passed = false;
                let step = p
                    .counterexample
                    .map_or_else(|| "-".to_string(), |s| s.to_string());
                eprintln!(
                    "seed {}: FAIL {} at step {}: {}",
                    r.seed, p.name, step, p.detail
                );
            }
        }
    }
    if all_passed {
        eprintln!("{} run(s): all properties pass", results.len());
    }
    if args.check_properties && !all_passed {
        return Err(Failure::Properties);
    }
    Ok(())
}

fn cmd_scaling(args: ScalingArgs) -> Result<(), Failure> {
    let rows = scaling(
        args.protocol.into(),
        &args.n,
        args.t,
        args.seed,
        args.exec.into(),
    )?;
    write_csv(&rows, sink(&args.out)?)?;
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<(), Failure> {
    let ops: Vec<BenchOp> = if args.bench == "all" {
        BenchOp::ALL.to_vec()
    } else {
        vec![args.bench.parse().map_err(Failure::Usage)?]
    };
    let mut rows: Vec<BenchRow> = Vec::new();
    for op in ops {
        for &n in &args.n {
            let t = args.t.resolve(n);
            if n < 2 || n <= 3 * t {
                return Err(Failure::Usage(format!(
                    "need n > 3t and n >= 2 (n={n}, t={t})"
                )));
            }
            rows.push(bench::measure(
                op,
                n,
                t,
                args.iterations,
                args.exec.into(),
                n as u64,
            ));
        }
    }
    write_csv(&rows, sink(&args.out)?)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Scaling(a) => cmd_scaling(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Properties) => ExitCode::from(1),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
