//! JSON-lines stream files: one utterance or probe per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use thiserror::Error;
use tidemem_core::StreamEvent;

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl StreamError {
    fn at(line: usize, message: impl Into<String>) -> Self {
        StreamError::Invalid {
            line,
            message: message.into(),
        }
    }

    pub fn line(&self) -> Option<usize> {
        match self {
            StreamError::Invalid { line, .. } => Some(*line),
            StreamError::Io { .. } => None,
        }
    }
}

/// Parses and validates a stream. Blank lines are skipped; line numbers in
/// errors are 1-based.
pub fn parse_stream(reader: impl BufRead) -> Result<Vec<StreamEvent>, StreamError> {
    let mut events = Vec::new();
    let mut last_turn: Option<(u64, usize)> = None;
    for (idx, line) in reader.lines().enumerate() {
        let n = idx + 1;
        let line = line.map_err(|e| StreamError::at(n, format!("unreadable line: {e}")))?;
        if line.trim().is_empty() {
            continue;
        }
        let ev: StreamEvent = serde_json::from_str(&line)
            .map_err(|e| StreamError::at(n, format!("malformed event: {e}")))?;
        let turn = ev.turn();
        if let Some((prev, prev_line)) = last_turn {
            if turn <= prev {
                return Err(StreamError::at(
                    n,
                    format!("turn {turn} does not follow turn {prev} (line {prev_line})"),
                ));
            }
        }
        match &ev {
            StreamEvent::Utterance(u) => {
                if u.text.trim().is_empty() {
                    return Err(StreamError::at(
                        n,
                        format!("utterance at turn {turn} has empty text"),
                    ));
                }
            }
            StreamEvent::Probe(p) => {
                if p.question.trim().is_empty() {
                    return Err(StreamError::at(
                        n,
                        format!("probe at turn {turn} has an empty question"),
                    ));
                }
                if let Err(e) = p.check_no_look_ahead() {
                    return Err(StreamError::at(
                        n,
                        format!("look-ahead violation: {}", e.root()),
                    ));
                }
            }
        }
        last_turn = Some((turn, n));
        events.push(ev);
    }
    Ok(events)
}

pub fn load_stream(path: &Path) -> Result<Vec<StreamEvent>, StreamError> {
    let file = File::open(path).map_err(|source| StreamError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_stream(BufReader::new(file))
}

pub fn write_stream(writer: impl Write, events: &[StreamEvent]) -> std::io::Result<()> {
    let mut w = BufWriter::new(writer);
    for ev in events {
        serde_json::to_writer(&mut w, ev)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn save_stream(path: &Path, events: &[StreamEvent]) -> std::io::Result<()> {
    write_stream(File::create(path)?, events)
}
