use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;

use commands::Failure;

/// Alert-Panic-Control crowd simulator.
#[derive(Debug, Parser)]
#[command(name = "apc", version, about)]
struct Cli {
    /// More log output (repeat for debug)
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// Built-in scenario name (scenario1..scenario3) or config file path
    config: String,
    /// Override one key, e.g. `--set transport.d2=0`
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
    /// Output directory (default: $APC_OUT_DIR/<name> or apc-out/<name>)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Snapshot times, comma-separated
    #[arg(long, value_name = "T1,T2,...")]
    snapshots: Option<String>,
    /// Grid resolution
    #[arg(long, value_name = "NX,NY")]
    grid: Option<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario and write snapshots, time series and ledger
    Run(ConfigArgs),
    /// Integrate the spatially homogeneous model
    Ode {
        /// Built-in scenario name or config file supplying the parameters
        #[arg(default_value = "scenario1")]
        config: String,
        #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
        set: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// End time (default: run.t_end of the config)
        #[arg(long)]
        t_end: Option<f64>,
        #[arg(long, default_value_t = 0.01)]
        dt: f64,
        /// rk4 or euler
        #[arg(long, default_value = "rk4")]
        method: String,
        /// Keep every k-th step in the trajectory file
        #[arg(long, default_value_t = 1)]
        store_every: usize,
    },
    /// Run the invariant suite
    Validate {
        /// Step safety factor of the positivity run
        #[arg(long, default_value_t = 0.5)]
        cfl_safety: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Debug hook: flip the sign of the panic/control term in one equation
        #[arg(long, hide = true)]
        flip_h_sign: bool,
    },
    /// Cartesian parameter sweep
    Sweep {
        #[command(flatten)]
        base: ConfigArgs,
        /// Swept key with its values, e.g. `--param transport.v2_out=0.05,0.1`
        #[arg(long = "param", value_name = "SECTION.KEY=V1,V2,...")]
        params: Vec<String>,
        /// Points run at the same time
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { Failure::CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.command {
        Command::Run(a) => commands::run(&a.into()),
        Command::Ode {
            config,
            set,
            out,
            t_end,
            dt,
            method,
            store_every,
        } => commands::ode(&commands::OdeOptions {
            config,
            set,
            out,
            t_end,
            dt,
            method,
            store_every,
        }),
        Command::Validate {
            cfl_safety,
            seed,
            flip_h_sign,
        } => commands::validate(cfl_safety, seed, flip_h_sign),
        Command::Sweep { base, params, jobs } => commands::sweep(&base.into(), &params, jobs),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

impl From<ConfigArgs> for commands::RunOptions {
    fn from(a: ConfigArgs) -> Self {
        Self {
            config: a.config,
            set: a.set,
            out: a.out,
            snapshots: a.snapshots,
            grid: a.grid,
        }
    }
}
