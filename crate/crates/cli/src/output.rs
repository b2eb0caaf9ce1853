//! Versioned JSON and CSV writers plus the run manifest.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::CliError;

pub const ACCOUNT_SCHEMA: &str = "fedgdp.account/v1";
pub const CALIBRATE_SCHEMA: &str = "fedgdp.calibrate/v1";
pub const SWEEP_SCHEMA: &str = "fedgdp.sweep/v1";
pub const TRADEOFF_SCHEMA: &str = "fedgdp.tradeoff/v1";
pub const TRACE_SCHEMA: &str = "fedgdp.sim-trace/v1";
pub const SUMMARY_SCHEMA: &str = "fedgdp.sim-summary/v1";
pub const MANIFEST_SCHEMA: &str = "fedgdp.manifest/v1";

/// Twelve significant digits in scientific notation.
pub fn float(x: f64) -> String {
    format!("{x:.11e}")
}

pub fn opt_float(x: Option<f64>) -> String {
    x.map(float).unwrap_or_default()
}

/// CSV text with a `# schema:` line, a header row and data rows.
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(schema: &str, header: &[&str]) -> Self {
        let mut text = format!("# schema: {schema}\n");
        text.push_str(&header.join(","));
        text.push('\n');
        Csv { text }
    }

    pub fn row(&mut self, cells: &[String]) {
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    pub fn into_string(self) -> String {
        self.text
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Writes to `path`, or to stdout when absent.
pub fn emit(text: &str, path: Option<&Path>) -> Result<(), CliError> {
    match path {
        Some(p) => write_file(p, text),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).map_err(|e| CliError::Io(e.to_string()))
        }
    }
}

pub fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

/// Everything needed to re-run a command and reproduce its outputs.
#[derive(Debug, Serialize, serde::Deserialize)]
pub struct RunManifest {
    pub schema: String,
    pub tool_version: String,
    pub command: String,
    /// Arguments after the program name, replayed verbatim.
    pub args: Vec<String>,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub timestamp: String,
}

/// `SOURCE_DATE_EPOCH` when set, otherwise the current time, as RFC 3339.
pub fn timestamp() -> String {
    let now = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse::<u64>().ok())
        .map(|secs| std::time::UNIX_EPOCH + std::time::Duration::from_secs(secs))
        .unwrap_or_else(std::time::SystemTime::now);
    humantime::format_rfc3339_seconds(now).to_string()
}

impl RunManifest {
    pub fn new<C: Serialize>(command: &str, args: &[String], config: &C, seed: Option<u64>) -> Result<Self, CliError> {
        Ok(RunManifest {
            schema: MANIFEST_SCHEMA.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            args: args.to_vec(),
            config: serde_json::to_value(config).map_err(|e| CliError::Io(e.to_string()))?,
            seed,
            timestamp: timestamp(),
        })
    }
}
