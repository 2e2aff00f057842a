//! Run manifest, config hashing and deterministic file emission.

use std::fs;
use std::path::PathBuf;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config_sha256: String,
    pub tool_version: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub started_unix: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_clock_seconds: Option<f64>,
    pub outputs: Vec<String>,
}

/// Fixed 17-significant-digit rendering for CSV cells.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

/// SHA-256 over the subcommand, its canonical arguments and the resolved config.
pub fn config_hash(subcommand: &str, args: &str, config: Option<&str>) -> String {
    let mut h = Sha256::new();
    for part in [subcommand, args, config.unwrap_or("")] {
        h.update(part.as_bytes());
        h.update([0u8]);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Sends outputs either to files under `--out` or, for the primary output, to stdout.
pub struct Emitter {
    dir: Option<PathBuf>,
    timestamps: bool,
    start: Instant,
    pub manifest: RunManifest,
}

impl Emitter {
    pub fn new(subcommand: &str, hash: String, dir: Option<PathBuf>, timestamps: bool) -> Result<Self, CliError> {
        if let Some(d) = &dir {
            fs::create_dir_all(d).map_err(|source| CliError::Io { path: d.display().to_string(), source })?;
        }
        let started_unix =
            timestamps.then(|| SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0));
        Ok(Self {
            dir,
            timestamps,
            start: Instant::now(),
            manifest: RunManifest {
                subcommand: subcommand.to_string(),
                config_sha256: hash,
                tool_version: env!("CARGO_PKG_VERSION"),
                started_unix,
                wall_clock_seconds: None,
                outputs: Vec::new(),
            },
        })
    }

    pub fn hash(&self) -> &str {
        &self.manifest.config_sha256
    }

    pub fn has_dir(&self) -> bool {
        self.dir.is_some()
    }

    pub fn timestamp_comment(&self) -> Option<String> {
        self.manifest.started_unix.filter(|_| self.timestamps).map(|t| format!("generated at unix time {t}"))
    }

    fn write(&mut self, name: &str, body: &str, primary: bool) -> Result<(), CliError> {
        match &self.dir {
            Some(d) => {
                let path = d.join(name);
                fs::write(&path, body).map_err(|source| CliError::Io { path: path.display().to_string(), source })?;
                self.manifest.outputs.push(name.to_string());
            }
            None if primary => print!("{body}"),
            None => eprintln!("note: {name} is written only with --out"),
        }
        Ok(())
    }

    /// CSV with a leading `# config_sha256=…` line.
    pub fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>], primary: bool) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        let data = w.into_inner().map_err(|e| CliError::Csv(e.into_error().into()))?;
        let body = format!("# config_sha256={}\n{}", self.hash(), String::from_utf8_lossy(&data));
        self.write(name, &body, primary)
    }

    /// JSON object `{"config_sha256": …, "report": …}`.
    pub fn json<T: Serialize>(&mut self, name: &str, report: &T, primary: bool) -> Result<(), CliError> {
        let v = serde_json::json!({ "config_sha256": self.hash(), "report": report });
        let body = serde_json::to_string_pretty(&v)? + "\n";
        self.write(name, &body, primary)
    }

    pub fn raw(&mut self, name: &str, body: &str) -> Result<(), CliError> {
        self.write(name, body, false)
    }

    /// Write `manifest.json` when an output directory is set.
    pub fn finish(mut self) -> Result<(), CliError> {
        let Some(d) = self.dir.clone() else { return Ok(()) };
        if self.timestamps {
            self.manifest.wall_clock_seconds = Some(self.start.elapsed().as_secs_f64());
        }
        let path = d.join("manifest.json");
        let body = serde_json::to_string_pretty(&self.manifest)? + "\n";
        fs::write(&path, body).map_err(|source| CliError::Io { path: path.display().to_string(), source })
    }
}
