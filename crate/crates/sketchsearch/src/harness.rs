//! Batch experiments: runs every (arm, episode) pair, persists each result as
//! soon as it exists, and resumes interrupted batches from what is on disk.
//!
//! Output directory layout:
//!
//! ```text
//! <out>/config.toml            the experiment, echoed
//! <out>/metrics.jsonl          one RunMetrics per finished episode (append-only)
//! <out>/metrics.csv            the sorted table, rewritten at the end
//! <out>/summary.csv            per-arm aggregates
//! <out>/logs/<arm>/<i>.jsonl   episode transcripts
//! ```

use std::collections::BTreeSet;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sketchsearch_core::episode::{run_episode, EpisodeLog};
use sketchsearch_core::world::RoadNetwork;
use thiserror::Error;

use crate::config::{arm_episode, episode_seed, ConfigError, ExperimentConfig};
use crate::logio::save_log;
use crate::mapfile::{load_map, MapError};
use crate::summary::{summarize, write_summary_csv};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error("{path}: {message}")]
    Metrics { path: PathBuf, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Result of one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub arm: String,
    pub episode: usize,
    pub seed: u64,
    pub captured: bool,
    /// Present exactly when the target was captured.
    pub time_to_capture: Option<f64>,
    pub end_time: f64,
    pub decisions: usize,
    pub queries_asked: usize,
    pub queries_answered: usize,
    pub sketches: usize,
    pub statements: usize,
    pub score: f64,
    /// Set when the episode failed; the other fields are then zero.
    pub error: Option<String>,
}

impl RunMetrics {
    fn failed(arm: &str, episode: usize, seed: u64, error: String) -> Self {
        RunMetrics {
            arm: arm.into(),
            episode,
            seed,
            captured: false,
            time_to_capture: None,
            end_time: 0.0,
            decisions: 0,
            queries_asked: 0,
            queries_answered: 0,
            sketches: 0,
            statements: 0,
            score: 0.0,
            error: Some(error),
        }
    }

    fn from_log(arm: &str, episode: usize, seed: u64, log: &EpisodeLog) -> Self {
        match log.outcome() {
            Some(o) => RunMetrics {
                arm: arm.into(),
                episode,
                seed,
                captured: o.captured,
                time_to_capture: o.time_to_capture,
                end_time: o.end_time,
                decisions: o.decisions,
                queries_asked: o.queries_asked,
                queries_answered: o.queries_answered,
                sketches: o.sketches,
                statements: o.statements,
                score: o.score,
                error: None,
            },
            None => Self::failed(arm, episode, seed, "episode ended without an outcome".into()),
        }
    }
}

/// Knobs that do not change results.
#[derive(Debug, Clone)]
pub struct BatchOptions {
    pub out_dir: Option<PathBuf>,
    /// Skip episodes already recorded in the output directory.
    pub resume: bool,
    pub write_logs: bool,
    /// Stop after this many new episodes (used to exercise resumption).
    pub limit: Option<usize>,
    pub threads: Option<usize>,
}

impl Default for BatchOptions {
    fn default() -> Self {
        BatchOptions { out_dir: None, resume: true, write_logs: true, limit: None, threads: None }
    }
}

/// Map used by an experiment.
pub fn experiment_map(cfg: &ExperimentConfig) -> Result<RoadNetwork, HarnessError> {
    Ok(match &cfg.map {
        Some(path) => load_map(path)?,
        None => RoadNetwork::default_map(),
    })
}

fn safe_name(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || "-_=.".contains(c) { c } else { '_' }).collect()
}

/// Reads the append-only metrics file; a torn final line from an
/// interrupted write is ignored.
pub fn read_metrics(path: &Path) -> Result<Vec<RunMetrics>, HarnessError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let lines: Vec<String> = BufReader::new(file).lines().collect::<Result<_, _>>()?;
    let mut out = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<RunMetrics>(line) {
            Ok(m) => out.push(m),
            Err(_) if i + 1 == lines.len() => log::warn!("ignoring torn last line of {}", path.display()),
            Err(e) => {
                return Err(HarnessError::Metrics { path: path.into(), message: format!("line {}: {e}", i + 1) })
            }
        }
    }
    Ok(out)
}

pub fn write_metrics_csv<W: Write>(table: &[RunMetrics], out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    for m in table {
        w.serialize(m).map_err(|e| HarnessError::Io(std::io::Error::other(e)))?;
    }
    w.flush()?;
    Ok(())
}

struct Job {
    arm: crate::config::ArmConfig,
    episode: usize,
    seed: u64,
}

/// Runs (or resumes) a batch and returns the full table sorted by arm order
/// then episode index.
pub fn run_batch(cfg: &ExperimentConfig, opts: &BatchOptions) -> Result<Vec<RunMetrics>, HarnessError> {
    cfg.validate()?;
    let arms = cfg.expanded_arms()?;
    let base = cfg.base_episode()?;
    let net = experiment_map(cfg)?;

    let metrics_path = opts.out_dir.as_ref().map(|d| d.join("metrics.jsonl"));
    let mut done: Vec<RunMetrics> = Vec::new();
    if let Some(dir) = &opts.out_dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("config.toml"), cfg.to_toml())?;
        let path = metrics_path.as_ref().expect("set with out_dir");
        if opts.resume {
            done = read_metrics(path)?;
            // Rewrite so a torn trailing record is not followed by new ones.
            let mut text = String::new();
            for m in &done {
                text.push_str(&serde_json::to_string(m).map_err(std::io::Error::other)?);
                text.push('\n');
            }
            std::fs::write(path, text)?;
        } else {
            let _ = std::fs::remove_file(path);
        }
    }
    let have: BTreeSet<(String, usize)> = done.iter().map(|m| (m.arm.clone(), m.episode)).collect();

    let mut jobs = Vec::new();
    for arm in &arms {
        for episode in 0..arm.episodes.unwrap_or(cfg.episodes) {
            if have.contains(&(arm.name.clone(), episode)) {
                continue;
            }
            let seed = episode_seed(cfg.base_seed, arm, episode);
            jobs.push(Job { arm: arm.clone(), episode, seed });
        }
    }
    if let Some(limit) = opts.limit {
        jobs.truncate(limit);
    }
    log::info!("{}: {} episodes to run, {} already recorded", cfg.name, jobs.len(), done.len());

    let (tx, rx) = mpsc::channel::<(RunMetrics, Option<EpisodeLog>)>();
    let writer_dir = opts.out_dir.clone();
    let write_logs = opts.write_logs;
    // The writer thread is the only place that touches the output files.
    let writer = std::thread::spawn(move || -> Result<Vec<RunMetrics>, HarnessError> {
        let mut file = match &writer_dir {
            Some(dir) => Some(OpenOptions::new().create(true).append(true).open(dir.join("metrics.jsonl"))?),
            None => None,
        };
        let mut fresh = Vec::new();
        for (m, log) in rx {
            if let (Some(dir), Some(log)) = (&writer_dir, log.as_ref()) {
                if write_logs {
                    let arm_dir = dir.join("logs").join(safe_name(&m.arm));
                    std::fs::create_dir_all(&arm_dir)?;
                    if let Err(e) = save_log(log, &arm_dir.join(format!("{:04}.jsonl", m.episode))) {
                        log::warn!("could not save log for {} #{}: {e}", m.arm, m.episode);
                    }
                }
            }
            if let Some(f) = file.as_mut() {
                let line = serde_json::to_string(&m).map_err(std::io::Error::other)?;
                writeln!(f, "{line}")?;
                f.flush()?;
            }
            fresh.push(m);
        }
        Ok(fresh)
    });

    let run = |job: &Job| {
        let (ecfg, human) = arm_episode(&base, &job.arm, job.seed);
        let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| run_episode(ecfg, net.clone(), human)));
        let (metrics, log) = match result {
            Ok(Ok(log)) => (RunMetrics::from_log(&job.arm.name, job.episode, job.seed, &log), Some(log)),
            Ok(Err(e)) => (RunMetrics::failed(&job.arm.name, job.episode, job.seed, e.to_string()), None),
            Err(panic) => {
                let msg = panic
                    .downcast_ref::<&str>()
                    .map(|s| s.to_string())
                    .or_else(|| panic.downcast_ref::<String>().cloned())
                    .unwrap_or_else(|| "episode panicked".into());
                (RunMetrics::failed(&job.arm.name, job.episode, job.seed, msg), None)
            }
        };
        (metrics, log)
    };
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(t) = opts.threads {
            b = b.num_threads(t);
        }
        b.build().map_err(std::io::Error::other)?
    };
    pool.install(|| {
        jobs.par_iter().for_each_with(tx, |tx, job| {
            let _ = tx.send(run(job));
        })
    });
    let fresh = writer.join().map_err(|_| std::io::Error::other("result writer panicked"))??;

    let order: Vec<String> = arms.iter().map(|a| a.name.clone()).collect();
    let mut table: Vec<RunMetrics> = done.into_iter().chain(fresh).filter(|m| order.contains(&m.arm)).collect();
    table.sort_by_key(|m| (order.iter().position(|a| *a == m.arm).unwrap_or(usize::MAX), m.episode));
    table.dedup_by(|a, b| a.arm == b.arm && a.episode == b.episode);

    if let Some(dir) = &opts.out_dir {
        write_metrics_csv(&table, File::create(dir.join("metrics.csv"))?)?;
        let summaries = summarize(&table);
        write_summary_csv(&summaries, File::create(dir.join("summary.csv"))?)?;
    }
    Ok(table)
}
