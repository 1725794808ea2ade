use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Mean and sample standard deviation; `std` is absent below two values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub std: Option<f64>,
    pub n: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        let n = values.len();
        let mean = if n == 0 { f64::NAN } else { values.iter().sum::<f64>() / n as f64 };
        let std = (n >= 2).then(|| {
            let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
            (ss / (n - 1) as f64).sqrt()
        });
        Summary { mean, std, n }
    }

    /// `mean±std` in percent, or just the mean for a single run.
    pub fn percent(&self) -> String {
        match self.std {
            Some(s) => format!("{:.2}±{:.2}", 100.0 * self.mean, 100.0 * s),
            None => format!("{:.2}", 100.0 * self.mean),
        }
    }
}

pub fn create_output_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(format!("cannot create {}: {e}", dir.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::io(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))
}

/// Comma separated, header first, LF line endings.
pub fn csv_writer(path: &Path) -> CliResult<csv::Writer<fs::File>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))
}

pub fn opt_field(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

#[derive(Serialize)]
struct Provenance<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config_hash: String,
    seeds: Vec<u64>,
    config: &'a RunConfig,
}

/// Records what produced the files in `dir`.
pub fn write_provenance(dir: &Path, command: &str, cfg: &RunConfig) -> CliResult<()> {
    let mut config = cfg.clone();
    config.output = Default::default();
    write_json(
        &dir.join("provenance.json"),
        &Provenance {
            tool: "ladder",
            version: VERSION,
            command,
            config_hash: cfg.hash(),
            seeds: cfg.seeds(),
            config: &config,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_uses_sample_std() {
        let s = Summary::of(&[0.7, 0.8, 0.9]);
        assert!((s.mean - 0.8).abs() < 1e-15);
        assert!((s.std.unwrap() - 0.1).abs() < 1e-12);
        assert_eq!(Summary::of(&[0.5]).std, None);
        assert_eq!(Summary::of(&[0.747]).percent(), "74.70");
    }

    #[test]
    fn csv_uses_lf() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        let mut w = csv_writer(&path).unwrap();
        w.write_record(["a", "b"]).unwrap();
        w.write_record(["1", ""]).unwrap();
        w.flush().unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "a,b\n1,\n");
    }
}
