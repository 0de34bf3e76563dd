//! Episode transcripts as line-delimited JSON, one event per line. The first
//! line is the header carrying the seed, configuration and map, which is
//! everything needed for a bit-exact replay.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use sketchsearch_core::episode::{EpisodeLog, LogEvent};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LogError {
    #[error("line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error("log is empty")]
    Empty,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn write_log<W: Write>(log: &EpisodeLog, mut out: W) -> Result<(), LogError> {
    for event in &log.events {
        serde_json::to_writer(&mut out, event).map_err(|source| LogError::Json { line: 0, source })?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_log<R: BufRead>(input: R) -> Result<EpisodeLog, LogError> {
    let mut events = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let event: LogEvent = serde_json::from_str(&line).map_err(|source| LogError::Json { line: i + 1, source })?;
        events.push(event);
    }
    if events.is_empty() {
        return Err(LogError::Empty);
    }
    Ok(EpisodeLog { events })
}

/// Writes through a temporary file so readers never see half a log.
pub fn save_log(log: &EpisodeLog, path: &Path) -> Result<(), LogError> {
    let tmp = path.with_extension("jsonl.part");
    write_log(log, BufWriter::new(File::create(&tmp)?))?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_log(path: &Path) -> Result<EpisodeLog, LogError> {
    read_log(BufReader::new(File::open(path)?))
}
