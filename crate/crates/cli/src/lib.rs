//! Experiment harness for ladder aggregation models.
//!
//! Every subcommand reads one JSON config (`--config`), applies
//! `--dotted.key value` overrides on top, and writes CSV/JSON results plus a
//! `provenance.json` into `output`.

pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod output;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::RunConfig;
pub use error::{CliError, CliResult, EXIT_IO, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE};

#[derive(Debug, Parser)]
#[command(
    name = "ladder",
    version,
    about = "Train, sweep, ablate and search hop-aware ladder models",
    after_help = "Any config field can be overridden with --dotted.path value, e.g. --train.epochs 100 --profile.k 5.\n\
                  LADDER_THREADS caps the worker pool."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Sequential numerics and no worker pool; reruns produce identical files.
    #[arg(long, global = true)]
    pub deterministic: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Train one model per seed; writes metrics.json and a checkpoint.
    Train,
    /// Mean test accuracy over a (K, d) grid.
    Sweep,
    /// Concatenation against addition aggregation.
    Ablate,
    /// Hop-k homophily histograms.
    Homophily,
    /// Progressive hop-width search.
    Search,
    /// Accuracy of a checkpoint bucketed by node homophily.
    EvalHomophily,
    /// Write a synthetic graph bundle.
    Synth,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Train => "train",
            Command::Sweep => "sweep",
            Command::Ablate => "ablate",
            Command::Homophily => "homophily",
            Command::Search => "search",
            Command::EvalHomophily => "eval-homophily",
            Command::Synth => "synth",
        }
    }
}

fn configure_threads() {
    if let Some(n) = std::env::var("LADDER_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        // Fails harmlessly if the pool was already built in this process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

pub fn execute(command: Command, cfg: &RunConfig) -> CliResult<()> {
    match command {
        Command::Train => {
            let r = commands::train(cfg)?;
            println!("test accuracy {} over {} seeds, dims {:?}", r.summary.test_acc.percent(), r.seeds.len(), r.dims);
        }
        Command::Sweep => {
            for c in commands::sweep(cfg)? {
                println!("K={} d={} test {}", c.k, c.d, c.test_acc.percent());
            }
        }
        Command::Ablate => {
            let r = commands::ablate(cfg)?;
            println!("concat {}  addition {}", r.concat.percent(), r.addition.percent());
        }
        Command::Homophily => {
            for h in commands::homophily(cfg)? {
                println!("hop {} mean ratio {}", h.hop, output::opt_field(h.mean_ratio));
            }
        }
        Command::Search => {
            let r = commands::search(cfg)?;
            println!("best {} reward {} after {} evaluations ({} trained)", r.best, r.reward, r.evaluated, r.trained);
            if let Some(e) = &r.exhaustive {
                println!("exhaustive best {} reward {} over {} candidates", e.best, e.reward, e.evaluated);
            }
        }
        Command::EvalHomophily => {
            for b in commands::eval_homophily(cfg)? {
                println!("[{:.2}, {:.2}) n={} acc={:.4}", b.lo, b.hi, b.count, b.accuracy);
            }
        }
        Command::Synth => {
            commands::synth(cfg)?;
            println!("bundle written to {}", cfg.output.display());
        }
    }
    Ok(())
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run(args: &[String]) -> i32 {
    match run_inner(args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}

fn run_inner(args: &[String]) -> CliResult<i32> {
    let (kept, overrides) = config::split_overrides(args.get(1..).unwrap_or_default())?;
    let argv = args.iter().take(1).chain(&kept);
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return Ok(code);
        }
    };
    let mut cfg = RunConfig::load(cli.config.as_deref(), &overrides)?;
    cfg.deterministic |= cli.deterministic;
    configure_threads();
    log::info!("{} with config {}", cli.command.name(), cfg.hash());
    execute(cli.command, &cfg)?;
    Ok(EXIT_OK)
}
