use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tracemc::{BenchmarkId, Scheme};
use tracemc_cli::{recompute_kl_curve, run, write_kl_curve, Engine, Pooling, RunConfig, KL_FILE};

#[derive(Parser)]
#[command(name = "tracemc", about = "Sequential Monte Carlo inference over benchmark model programs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an engine and write samples.csv and diagnostics.csv (and kl_curve.csv with --eval).
    Run(RunArgs),
    /// Recompute kl_curve.csv from the samples and diagnostics of an earlier run.
    Eval(EvalArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_parser = parse_model)]
    model: BenchmarkId,
    #[arg(long, value_parser = parse_engine)]
    engine: Engine,
    #[arg(long, default_value_t = 100)]
    particles: usize,
    #[arg(long, default_value_t = 1)]
    iterations: usize,
    /// ESS threshold for resampling; defaults to half the particle count.
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long, default_value_t = Scheme::Systematic, value_parser = parse_scheme)]
    scheme: Scheme,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Also write kl_curve.csv against the exact posterior.
    #[arg(long)]
    eval: bool,
    /// How iterations are pooled for --eval: `sweep` (equal mass) or `evidence` (smc only).
    #[arg(long, default_value_t = Pooling::Sweep, value_parser = parse_pool)]
    pool: Pooling,
    /// Render real-valued predicts with full round-trip precision instead of six decimals.
    #[arg(long)]
    full_precision: bool,
    /// Write 0 in the timing columns so repeated runs give identical files.
    #[arg(long)]
    no_wallclock: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long, value_parser = parse_model)]
    model: BenchmarkId,
    /// Directory holding samples.csv and diagnostics.csv.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, default_value_t = Pooling::Sweep, value_parser = parse_pool)]
    pool: Pooling,
    /// Where to write the curve; defaults to kl_curve.csv in the run directory.
    #[arg(long)]
    output: Option<PathBuf>,
}

fn parse_model(s: &str) -> Result<BenchmarkId, String> {
    s.parse().map_err(|e: tracemc::Error| e.to_string())
}

fn parse_engine(s: &str) -> Result<Engine, String> {
    s.parse().map_err(|e: anyhow::Error| e.to_string())
}

fn parse_pool(s: &str) -> Result<Pooling, String> {
    s.parse().map_err(|e: anyhow::Error| e.to_string())
}

fn parse_scheme(s: &str) -> Result<Scheme, String> {
    s.parse().map_err(|e: tracemc::Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => {
            let cfg = RunConfig {
                model: a.model,
                engine: a.engine,
                particles: a.particles,
                iterations: a.iterations,
                tau: a.tau,
                scheme: a.scheme,
                seed: a.seed,
                workers: a.workers,
                out: a.out,
                eval: a.eval,
                pool: a.pool,
                full_precision: a.full_precision,
                wallclock: !a.no_wallclock,
            };
            match cfg.validate() {
                Err(e) => {
                    eprintln!("error: {e:#}");
                    return ExitCode::from(2);
                }
                Ok(()) => run(&cfg).map(|s| {
                    if let Some(r) = s.acceptance_rate {
                        eprintln!("acceptance rate {r}");
                    }
                }),
            }
        }
        Command::Eval(a) => recompute_kl_curve(a.model, a.pool, &a.out).and_then(|rows| {
            let path = a.output.unwrap_or_else(|| a.out.join(KL_FILE));
            write_kl_curve(&rows, &path)
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
