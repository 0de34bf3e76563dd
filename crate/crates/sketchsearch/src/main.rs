//! `sketchsearch` command line: batch experiments, transcript replay,
//! reports and the live operator gateway.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use sketchsearch::config::{ExperimentConfig, Preset};
use sketchsearch::harness::{experiment_map, run_batch, BatchOptions};
use sketchsearch::logio::load_log;
use sketchsearch::mapfile::load_map;
use sketchsearch::report::{build_report, load_results};
use sketchsearch::service::{Server, ServerConfig};
use sketchsearch_core::episode::replay;
use sketchsearch_core::sim_human::InteractionMode;
use sketchsearch_core::world::RoadNetwork;

#[derive(Parser)]
#[command(name = "sketchsearch", version, about = "Human-assisted search for a moving target")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every arm of an experiment file.
    Run(BatchArgs),
    /// Run an experiment file that sweeps human parameters and report the
    /// marginals over each axis.
    Sweep(BatchArgs),
    /// Re-execute a transcript and check it reproduces itself.
    Replay {
        log: PathBuf,
    },
    /// Summarize a finished (or partial) batch directory.
    Report {
        dir: PathBuf,
        /// Arm to test the others against; defaults to the configured control.
        #[arg(long)]
        control: Option<String>,
    },
    /// Serve live operator sessions over WebSocket.
    Serve(ServeArgs),
}

#[derive(Args)]
struct BatchArgs {
    config: PathBuf,
    /// Output directory; defaults to `results/<experiment name>`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Discard earlier results in the output directory instead of resuming.
    #[arg(long)]
    fresh: bool,
    /// Do not write per-episode transcripts.
    #[arg(long)]
    no_logs: bool,
    /// Worker threads; defaults to one per core.
    #[arg(long)]
    threads: Option<usize>,
    /// Override the episode count per arm.
    #[arg(long)]
    episodes: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Active,
    Passive,
    Both,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8765")]
    bind: std::net::SocketAddr,
    #[arg(long, value_enum, default_value = "active")]
    mode: ModeArg,
    /// Simulated seconds per wall-clock second.
    #[arg(long, default_value_t = 1.0)]
    speed: f64,
    #[arg(long)]
    map: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for session transcripts.
    #[arg(long, default_value = "transcripts")]
    transcripts: PathBuf,
    /// Use the reduced desk budget instead of the study settings.
    #[arg(long)]
    desk: bool,
}

fn batch(args: BatchArgs, sweep: bool) -> Result<()> {
    let mut cfg = ExperimentConfig::load(&args.config).with_context(|| format!("loading {}", args.config.display()))?;
    if let Some(n) = args.episodes {
        cfg.episodes = n;
        for arm in &mut cfg.arms {
            arm.episodes = None;
        }
    }
    if sweep && cfg.sweep.is_empty() {
        bail!("{} has no [sweep] table; use `run` for fixed arms", args.config.display());
    }
    let out = args.out.unwrap_or_else(|| PathBuf::from("results").join(&cfg.name));
    let opts = BatchOptions {
        out_dir: Some(out.clone()),
        resume: !args.fresh,
        write_logs: !args.no_logs,
        limit: None,
        threads: args.threads,
    };
    let table = run_batch(&cfg, &opts)?;
    let report = build_report(&cfg, &table, None)?;
    report.write(&out)?;
    print!("{}", report.render());
    println!("\nresults in {}", out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run(args) => batch(args, false)?,
        Command::Sweep(args) => batch(args, true)?,
        Command::Replay { log } => {
            let original = load_log(&log).with_context(|| format!("reading {}", log.display()))?;
            let again = replay(&original)?;
            if let Some(o) = again.outcome() {
                println!(
                    "captured: {}  time: {}  decisions: {}  queries asked/answered: {}/{}  sketches: {}",
                    o.captured,
                    o.time_to_capture.map(|t| format!("{t:.0} s")).unwrap_or_else(|| "-".into()),
                    o.decisions,
                    o.queries_asked,
                    o.queries_answered,
                    o.sketches
                );
            }
            if again != original {
                let at = original.events.iter().zip(&again.events).position(|(a, b)| a != b);
                let at = at.unwrap_or(original.events.len().min(again.events.len()));
                eprintln!("replay diverged from the transcript at event {at}");
                return Ok(false);
            }
            println!("replay reproduces all {} events", original.events.len());
        }
        Command::Report { dir, control } => {
            let (cfg, table) = load_results(&dir)?;
            let report = build_report(&cfg, &table, control.as_deref())?;
            report.write(&dir)?;
            print!("{}", report.render());
        }
        Command::Serve(args) => {
            let map = match &args.map {
                Some(p) => load_map(p)?,
                None => RoadNetwork::default_map(),
            };
            let mut episode = if args.desk { Preset::Desk.episode() } else { Preset::Study.episode() };
            episode.seed = args.seed;
            episode.query_timeout = Preset::Study.episode().query_timeout;
            let mode = match args.mode {
                ModeArg::Active => InteractionMode::Active,
                ModeArg::Passive => InteractionMode::Passive,
                ModeArg::Both => InteractionMode::Both,
            };
            let cfg = ServerConfig {
                bind: args.bind,
                episode,
                map,
                mode,
                speed: args.speed,
                heartbeat: Duration::from_secs(5),
                transcript_dir: Some(args.transcripts),
                ..ServerConfig::default()
            };
            let server = Server::bind(cfg)?;
            log::info!("listening on ws://{}", server.local_addr()?);
            server.serve()?;
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    // Validate the map early so a bad file fails before any work starts.
    let cli = Cli::parse();
    if let Command::Run(a) | Command::Sweep(a) = &cli.command {
        if let Ok(cfg) = ExperimentConfig::load(&a.config) {
            if let Err(e) = experiment_map(&cfg) {
                eprintln!("error: {e}");
                return ExitCode::FAILURE;
            }
        }
    }
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
