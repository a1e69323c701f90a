mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use epidetect::ModelVariant;

use commands::{Classify, Failure};
use config::{Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "epidetect", version, about = "Optimal detection of a spreading epidemic")]
struct Cli {
    /// Maximum number of worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Master seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Model variant: full3d or lp2d.
    #[arg(long)]
    variant: Option<ModelVariant>,
}

#[derive(Subcommand)]
enum Command {
    /// Build detection maps and write them with boundary traces.
    Solve {
        #[command(flatten)]
        common: Common,
        /// False-alarm cost; overrides the config.
        #[arg(long)]
        c_fa: Option<f64>,
    },
    /// Evaluate maps and threshold rules on a frozen scenario set.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Map document written by `solve`; repeatable.
        #[arg(long = "map")]
        maps: Vec<PathBuf>,
        /// Accept maps built under other epidemic or cost parameters.
        #[arg(long)]
        allow_mismatch: bool,
        /// Score every map with the costs it was built under (cost sweeps).
        #[arg(long)]
        use_map_costs: bool,
    },
    /// Write sample trajectories of the reduced (and optionally full) model.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Export a map document as plottable CSV grids.
    ExportMap {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Lattice points per axis.
        #[arg(long, default_value_t = 50)]
        grid: usize,
    },
}

fn load(common: &Common, c_fa: Option<f64>) -> Result<RunConfig, Failure> {
    let overrides = Overrides {
        seed: common.seed,
        variant: common.variant,
        out: common.out.clone(),
        c_fa,
    };
    RunConfig::load(&common.config)
        .and_then(|c| c.resolve(&overrides))
        .config()
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(Failure::Config(anyhow::anyhow!("--workers must be positive")));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .runtime()?;
    }
    match cli.command {
        Command::Solve { common, c_fa } => commands::solve(&load(&common, c_fa)?),
        Command::Evaluate {
            common,
            maps,
            allow_mismatch,
            use_map_costs,
        } => commands::evaluate(&load(&common, None)?, &maps, allow_mismatch, use_map_costs),
        Command::Simulate { common } => commands::simulate(&load(&common, None)?),
        Command::ExportMap { map, out, grid } => commands::export_map(&map, &out, grid),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {:#}", failure.error());
            ExitCode::from(failure.exit_code() as u8)
        }
    }
}
