use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use teamplan::adapt::{AdaptationLevel, HumanSource};
use teamplan::fetch::HumanArchetype;
use teamplan_cli::{commands, serve, CliError, Config};

#[derive(Parser)]
#[command(name = "teamplan", version, about = "Multi-cycle human-robot plan adaptation")]
struct Cli {
    /// JSON configuration file; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Debug logging.
    #[arg(long, short, global = true)]
    verbose: bool,
    /// Replace existing output files.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate demonstrations and train the motion policy artifact.
    TrainPolicy,
    /// Run the adaptation loop against a scripted human.
    Run {
        /// space+time, space, time or none.
        #[arg(long)]
        level: Option<AdaptationLevel>,
        /// fast-middle, fast-outside, slow-middle or slow-outside.
        #[arg(long)]
        archetype: Option<HumanArchetype>,
        /// Number of interaction cycles.
        #[arg(long)]
        cycles: Option<usize>,
    },
    /// Run every archetype against every adaptation level.
    Ablation {
        /// Trials per cell.
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Render an ablation table (.json) or run log (.jsonl) as SVG.
    Plot { input: PathBuf },
    /// Serve live sessions for the play client.
    Serve {
        /// Listen address.
        #[arg(long)]
        addr: Option<String>,
        /// Exit after this many sessions.
        #[arg(long)]
        sessions: Option<usize>,
    },
    /// Print a stored run log, optionally re-running it to check it reproduces.
    Replay {
        input: PathBuf,
        #[arg(long)]
        verify: bool,
    },
    /// Print the effective configuration.
    Config,
}

fn execute(cli: Cli) -> Result<(), CliError> {
    // a replay defaults to the configuration its run recorded
    let recorded = match &cli.command {
        Command::Replay { input, .. } => Some(input.with_file_name("config.json")).filter(|p| p.exists()),
        _ => None,
    };
    let mut cfg = match cli.config.as_ref().or(recorded.as_ref()) {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.override_seed(seed);
    }
    match &cli.command {
        Command::Run { level, archetype, cycles } => {
            if let Some(l) = level {
                cfg.run.level = *l;
            }
            if let Some(a) = archetype {
                cfg.run.human = HumanSource::Archetype(*a);
            }
            if let Some(c) = cycles {
                cfg.run.cycles = *c;
            }
        }
        Command::Ablation { trials: Some(t) } => cfg.ablation.trials = *t,
        Command::Serve { addr: Some(a), .. } => cfg.serve.addr = a.clone(),
        _ => {}
    }
    cfg.validate()?;
    let (out, force) = (&cli.out, cli.force);
    match cli.command {
        Command::TrainPolicy => commands::train_policy(&cfg, out, force),
        Command::Run { .. } => commands::run_cmd(&cfg, out, force),
        Command::Ablation { .. } => commands::ablation_cmd(&cfg, out, force),
        Command::Plot { input } => commands::plot_cmd(&input, out, force),
        Command::Serve { sessions, .. } => serve::serve_cmd(&cfg, out, force, sessions),
        Command::Replay { input, verify } => commands::replay_cmd(&cfg, &input, verify),
        Command::Config => {
            println!("{}", cfg.to_json());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { log::LevelFilter::Debug } else { log::LevelFilter::Info };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
