mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rovertrack::env::TrajectoryKind;
use rovertrack::Regime;

/// Rover waypoint tracking: terrain generation, PPO training, evaluation and serving.
#[derive(Debug, Parser)]
#[command(name = "rovertrack", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Run configuration file (TOML); defaults are used when absent.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "runs")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate terrains and write heightfield files.
    GenTerrain {
        /// Terrain seed; overrides the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Number of consecutive seeds to generate.
        #[arg(long, default_value_t = 1)]
        count: u64,
        /// Also write a grey-scale PGM image per terrain.
        #[arg(long)]
        pgm: bool,
    },
    /// Train a PPO policy.
    Train {
        #[arg(long)]
        regime: Option<Regime>,
        /// Total environment steps.
        #[arg(long)]
        steps: Option<u64>,
        /// Trainer seed (also used as the simulation master seed).
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        n_envs: Option<usize>,
        /// Simulation worker threads (0 = all cores).
        #[arg(long)]
        workers: Option<usize>,
        /// Disable every domain-randomization source.
        #[arg(long)]
        no_randomization: bool,
        /// Write a checkpoint every N updates.
        #[arg(long, default_value_t = 10)]
        checkpoint_every: u64,
    },
    /// Evaluate one (trajectory, speed, filter) cell.
    Eval {
        /// Policy artifact; defaults to <out>/policy.rtp.
        #[arg(long, conflicts_with = "controller")]
        policy: Option<PathBuf>,
        /// Scripted controller instead of a policy: proportional, zero or random.
        #[arg(long)]
        controller: Option<String>,
        #[arg(long, default_value = "capsule")]
        trajectory: TrajectoryKind,
        /// Target speed in m/s.
        #[arg(long, default_value_t = 0.15)]
        speed: f64,
        /// none, ma, sg, sg-endpoint or bw.
        #[arg(long, default_value = "none")]
        filter: String,
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Evaluate every policy over trajectories × speeds × filters and print tables.
    Sweep {
        /// NAME=PATH of a policy artifact, or a scripted controller name. Repeatable.
        #[arg(long = "policy")]
        policies: Vec<String>,
        #[arg(long = "trajectory")]
        trajectories: Vec<TrajectoryKind>,
        #[arg(long = "speed")]
        speeds: Vec<f64>,
        #[arg(long = "filter")]
        filters: Vec<String>,
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Serve batched environments over TCP.
    Serve {
        #[arg(long, default_value = "127.0.0.1:7878")]
        listen: String,
        /// Exit after this many client sessions.
        #[arg(long)]
        sessions: Option<usize>,
    },
    /// Render an episode log CSV as an overhead SVG.
    Plot {
        log: PathBuf,
        /// Output file; defaults to the log path with an .svg extension.
        #[arg(long = "svg")]
        svg: Option<PathBuf>,
        /// Draw obstacles of the terrain generated from this seed.
        #[arg(long)]
        terrain_seed: Option<u64>,
    },
    /// Print a hyperparameter preset for an external trainer (td3, dreamer_v3, ppo_lstm).
    Preset { name: String },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ROVERTRACK_LOG", "info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let c = &cli.common;
    match cli.command {
        Command::GenTerrain { seed, count, pgm } => commands::gen_terrain(c, seed, count, pgm),
        Command::Train {
            regime,
            steps,
            seed,
            n_envs,
            workers,
            no_randomization,
            checkpoint_every,
        } => commands::train(
            c,
            commands::TrainOverrides {
                regime,
                steps,
                seed,
                n_envs,
                workers,
                no_randomization,
                checkpoint_every,
            },
        ),
        Command::Eval {
            policy,
            controller,
            trajectory,
            speed,
            filter,
            episodes,
        } => commands::eval(c, policy, controller, trajectory, speed, &filter, episodes),
        Command::Sweep {
            policies,
            trajectories,
            speeds,
            filters,
            episodes,
        } => commands::sweep(c, &policies, trajectories, speeds, &filters, episodes),
        Command::Serve { listen, sessions } => commands::serve(c, &listen, sessions),
        Command::Plot { log, svg, terrain_seed } => commands::plot(c, &log, svg, terrain_seed),
        Command::Preset { name } => commands::preset(&name),
    }
}
