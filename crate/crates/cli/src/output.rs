//! Output plumbing: metadata, formats and all-or-nothing file writes.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct OutputFlags {
    /// Output file (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output format; each command has its own default.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

/// What a command produced, before anything is written.
pub struct Report {
    /// Deterministic result; the JSON `result` field.
    pub payload: Value,
    /// Flat table for CSV output, if the command has one.
    pub csv: Option<String>,
    /// Headline numbers, kept next to a CSV table in its metadata sidecar.
    pub summary: Value,
    /// Additional CSV files (path, contents), written with their own sidecars.
    pub extra_csv: Vec<(PathBuf, String)>,
    pub seed: Option<u64>,
    /// Non-deterministic diagnostics (timings); metadata only.
    pub timing: Option<Value>,
    /// 0, or 3 when the command completed but an audit failed.
    pub exit: u8,
}

impl Report {
    pub fn new(payload: Value) -> Self {
        Self {
            payload,
            csv: None,
            summary: Value::Null,
            extra_csv: Vec::new(),
            seed: None,
            timing: None,
            exit: 0,
        }
    }

    pub fn with_csv(mut self, csv: String, summary: Value) -> Self {
        self.csv = Some(csv);
        self.summary = summary;
        self
    }
}

pub fn meta(command: &str, config: &Value, report: &Report, threads: Option<usize>) -> Value {
    let mut m = json!({
        "tool": "stepup",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "config": config,
    });
    if let Some(seed) = report.seed {
        m["seed"] = json!(seed);
        m["rng"] = json!(stepup_core::montecarlo::RNG_ID);
    }
    if let Some(t) = threads {
        m["threads"] = json!(t);
    }
    if let Some(t) = &report.timing {
        m["timing"] = t.clone();
    }
    m
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s: OsString = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

fn pretty(v: &Value) -> Result<String, CliError> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

/// Render everything first, then write each file through a temporary
/// sibling and a rename, so a failure leaves no partial output behind.
pub fn emit(report: &Report, flags: &OutputFlags, default: Format, meta: Value) -> Result<(), CliError> {
    let format = match (flags.format, &report.csv) {
        (Some(Format::Csv), None) => return Err(CliError::Usage("this command has no CSV output".into())),
        (Some(f), _) => f,
        (None, None) => Format::Json,
        (None, Some(_)) => default,
    };
    let mut files: Vec<(PathBuf, String)> = Vec::new();
    let mut stdout = None;
    let main = match format {
        Format::Json => pretty(&json!({ "meta": meta, "result": report.payload }))?,
        Format::Csv => report.csv.clone().unwrap_or_default(),
    };
    match &flags.out {
        Some(path) => {
            if format == Format::Csv {
                let mut side = meta.clone();
                side["summary"] = report.summary.clone();
                files.push((sidecar(path), pretty(&side)?));
            }
            files.push((path.clone(), main));
        }
        None => {
            stdout = Some(main);
            if format == Format::Csv && !report.summary.is_null() {
                eprintln!("{}", serde_json::to_string(&report.summary)?);
            }
        }
    }
    for (path, body) in &report.extra_csv {
        files.push((sidecar(path), pretty(&meta)?));
        files.push((path.clone(), body.clone()));
    }
    write_all(&files)?;
    if let Some(s) = stdout {
        std::io::stdout()
            .write_all(s.as_bytes())
            .map_err(|source| CliError::Write { path: "<stdout>".into(), source })?;
    }
    Ok(())
}

fn write_all(files: &[(PathBuf, String)]) -> Result<(), CliError> {
    let mut staged = Vec::new();
    let cleanup = |staged: &[(PathBuf, PathBuf)]| {
        for (tmp, _) in staged {
            let _ = std::fs::remove_file(tmp);
        }
    };
    for (path, body) in files {
        let mut tmp: OsString = path.as_os_str().to_owned();
        tmp.push(".partial");
        let tmp = PathBuf::from(tmp);
        if let Err(source) = std::fs::write(&tmp, body) {
            cleanup(&staged);
            return Err(CliError::Write { path: path.clone(), source });
        }
        staged.push((tmp, path.clone()));
    }
    for (tmp, path) in &staged {
        std::fs::rename(tmp, path).map_err(|source| CliError::Write { path: path.clone(), source })?;
    }
    Ok(())
}

/// Serialize rows into an RFC-4180 CSV string.
pub fn csv_table(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv writer emits UTF-8"))
}

/// Shortest round-trip formatting; NaN as an empty field.
pub fn real(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:?}")
    }
}

/// Capture a writer-based exporter into a string.
pub fn capture(f: impl FnOnce(&mut Vec<u8>) -> stepup_core::Result<()>) -> Result<String, CliError> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(String::from_utf8(buf).expect("exporters emit UTF-8"))
}
