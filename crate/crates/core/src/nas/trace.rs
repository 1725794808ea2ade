//! Append-only JSON-lines log of every candidate evaluation.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nas::space::CandidateArch;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub arch: CandidateArch,
    pub reward: f64,
    pub phase: usize,
    pub wall_ms: u64,
    pub seed: u64,
}

pub struct TraceWriter {
    file: File,
}

impl TraceWriter {
    /// Opens `path` for appending, creating it if needed. A partial last line
    /// left by a killed run is cut off first.
    pub fn append(path: &Path) -> Result<Self> {
        if path.exists() {
            let bytes = std::fs::read(path)?;
            let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
            if keep < bytes.len() {
                OpenOptions::new().write(true).open(path)?.set_len(keep as u64)?;
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(TraceWriter { file })
    }

    /// Starts a fresh trace, discarding any previous content.
    pub fn create(path: &Path) -> Result<Self> {
        Ok(TraceWriter {
            file: File::create(path)?,
        })
    }

    /// Writes one line and flushes, so a killed run loses at most the record in flight.
    pub fn write(&mut self, record: &TraceRecord) -> Result<()> {
        let mut line = serde_json::to_string(record)?;
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.file.flush()?;
        Ok(())
    }
}

/// Reads a trace. A final line cut short by a kill is ignored; any other bad line is an error.
pub fn read_trace(path: &Path) -> Result<Vec<TraceRecord>> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let reader = BufReader::new(File::open(path)?);
    let lines: Vec<String> = reader.lines().collect::<std::io::Result<_>>()?;
    let ends_with_newline = std::fs::read(path)?.last() == Some(&b'\n');
    let mut out = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(r) => out.push(r),
            Err(_) if i + 1 == lines.len() && !ends_with_newline => {
                log::warn!("{}: ignoring truncated last record", path.display());
            }
            Err(e) => {
                return Err(Error::Parse {
                    path: PathBuf::from(path),
                    line: i + 1,
                    msg: e.to_string(),
                })
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(d: usize) -> TraceRecord {
        TraceRecord {
            arch: CandidateArch::new(vec![d, 1]),
            reward: 0.5,
            phase: 1,
            wall_ms: 3,
            seed: 9,
        }
    }

    #[test]
    fn round_trip_and_format() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.jsonl");
        let mut w = TraceWriter::create(&path).unwrap();
        w.write(&record(4)).unwrap();
        w.write(&record(2)).unwrap();
        drop(w);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(r#"{"arch":[4,1],"reward":0.5,"phase":1,"wall_ms":3,"seed":9}"#));
        assert_eq!(read_trace(&path).unwrap(), vec![record(4), record(2)]);
    }

    #[test]
    fn truncated_tail_is_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.jsonl");
        let mut w = TraceWriter::create(&path).unwrap();
        w.write(&record(4)).unwrap();
        drop(w);
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(br#"{"arch":[2,"#).unwrap();
        assert_eq!(read_trace(&path).unwrap(), vec![record(4)]);

        let mut w = TraceWriter::append(&path).unwrap();
        w.write(&record(8)).unwrap();
        assert_eq!(read_trace(&path).unwrap(), vec![record(4), record(8)]);
    }

    #[test]
    fn corrupt_middle_line_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.jsonl");
        std::fs::write(&path, "garbage\n{}\n").unwrap();
        assert!(matches!(read_trace(&path), Err(Error::Parse { line: 1, .. })));
    }
}
