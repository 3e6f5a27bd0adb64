//! Scenario-runner command line. All heavy lifting lives in the library;
//! this binary parses flags, dispatches, and writes CSV.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use mumimo::config::{ScenarioFile, SystemConfig};
use mumimo::experiments::{
    reproduce_table1, rows_to_csv, run_scenario, training_sweep, write_csv, ScenarioSpec,
};
use mumimo::rates::Scheme;

const SCHEME_HELP: &str = "\
Scheme identifiers (optionally suffixed with `:fp<n>` for n forward pilots):
  zf        zero-forcing, unit parameters, all users served
  zf-sch    zero-forcing with top-norm user selection (count optimized)
  gzf-opt   generalized ZF with water-filling-optimized parameters
  gzf-sch   optimized parameters plus weighted-norm selection
  svh       fixed-point sum-rate precoder run on the estimate
  mod-svh   fixed-point precoder averaged over sampled estimation errors
Examples: `zf`, `zf-sch:fp1`, `mod-svh:fp2`.
`--upper-bound` adds the genie bound (exact gain knowledge at the users)
for the same precoder.";

#[derive(Parser)]
#[command(
    name = "mumimo",
    about = "Monte Carlo link-level simulator for the multiuser MIMO TDD downlink",
    after_help = SCHEME_HELP,
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads for the Monte Carlo loops (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output CSV path (default: stdout).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the statistics trial budget (transmission trials scale as
    /// trials/20).
    #[arg(long, global = true)]
    trials: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the scenario in a config file (single point, or its sweep
    /// if one is declared).
    Run {
        /// Scenario file (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Scheme identifier, overriding the file's `scheme` key.
        #[arg(long)]
        scheme: Option<String>,
        /// Also evaluate the genie upper bound per point.
        #[arg(long)]
        upper_bound: bool,
    },
    /// Evaluate the full benchmark grid (M = K = 8, tau_r = 8, T = 30,
    /// reverse SNR 10 dB below forward, 5..30 dB).
    Table1 {
        /// Restarts for the Mod-SVH bound search.
        #[arg(long, default_value_t = 10)]
        restarts: usize,
    },
    /// Evaluate a sweep declared in the config file (requires sweep_axis).
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        scheme: Option<String>,
        #[arg(long)]
        upper_bound: bool,
    },
    /// Optimal reverse training length per forward SNR (reverse SNR runs
    /// 10 dB lower).
    TrainingSweep {
        /// Base system config file; defaults to M = 32, K = 8, T = 30.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Scheme to optimize (default zf-sch).
        #[arg(long, default_value = "zf-sch")]
        scheme: String,
        /// Forward SNR grid in dB.
        #[arg(long, value_delimiter = ',', default_value = "-10,-5,0,5,10,15,20,25,30")]
        snr_db: Vec<f64>,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .expect("thread pool is configured once");
    }
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> mumimo::Result<()> {
    let rows = match &cli.command {
        Command::Run {
            config,
            scheme,
            upper_bound,
        }
        | Command::Sweep {
            config,
            scheme,
            upper_bound,
        } => {
            let mut file = ScenarioFile::load(config)?;
            if let Some(seed) = cli.seed {
                file.seed = seed;
            }
            if let Some(trials) = cli.trials {
                file.trials = trials;
            }
            let mut spec = ScenarioSpec::from_file(file, scheme.as_deref())?;
            spec.options = mumimo::experiments::options_for_trials(spec.file.trials);
            spec.upper_bound = *upper_bound;
            if matches!(cli.command, Command::Sweep { .. }) && spec.sweep.is_none() {
                return Err(mumimo::Error::Config(
                    "sweep requires sweep_axis/sweep_values in the config file".into(),
                ));
            }
            run_scenario(&spec)?
        }
        Command::Table1 { restarts } => reproduce_table1(
            cli.seed.unwrap_or(1),
            cli.trials.unwrap_or(10_000),
            *restarts,
        )?,
        Command::TrainingSweep {
            config,
            scheme,
            snr_db,
        } => {
            let base: SystemConfig = match config {
                Some(path) => ScenarioFile::load(path)?.system_config()?,
                None => SystemConfig::homogeneous(32, 8, 30, 8, 0, 1.0, 0.1)
                    .validate()
                    .expect("default base is valid"),
            };
            let scheme = Scheme::parse(scheme)?;
            let opts =
                mumimo::experiments::options_for_trials(cli.trials.unwrap_or(10_000));
            training_sweep(&base, scheme, snr_db, cli.seed.unwrap_or(1), &opts)?
        }
    };

    match &cli.out {
        Some(path) => write_csv(&rows, path)?,
        None => print!("{}", rows_to_csv(&rows)),
    }
    Ok(())
}
