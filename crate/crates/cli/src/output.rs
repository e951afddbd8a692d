//! CSV/JSON writers with provenance headers, and the run manifest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{Context, Result};
use clap::ValueEnum;
use qst_core::{ChainSpec, ReceiverOrder, Units};
use serde::Serialize;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const OUTPUT_DIR_ENV: &str = "QST_OUTPUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// Explicit path, else `$QST_OUTPUT_DIR/<stem>.<ext>`, else `./<stem>.<ext>`.
pub fn resolve_path(out: Option<&Path>, stem: &str, format: Format) -> PathBuf {
    if let Some(p) = out {
        return p.to_path_buf();
    }
    let dir = std::env::var_os(OUTPUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."));
    dir.join(format!("{stem}.{}", format.extension()))
}

pub fn describe_spec(spec: &ChainSpec) -> String {
    let units = match spec.units {
        Units::Pauli => "pauli",
        Units::Fermion => "fermion",
    };
    let order = match spec.receiver_order {
        ReceiverOrder::Direct => "direct",
        ReceiverOrder::Mirrored => "mirrored",
    };
    let couplings = if spec.couplings.iter().all(|&j| j == 1.0) {
        "uniform".to_string()
    } else {
        format!("{:?}", spec.couplings)
    };
    format!(
        "N={} h={} senders=({},{}) receivers=({},{}) barriers=({},{}) units={units} receiver_order={order} couplings={couplings}",
        spec.n,
        spec.barrier_field,
        spec.senders.0,
        spec.senders.1,
        spec.receivers.0,
        spec.receivers.1,
        spec.barriers.0,
        spec.barriers.1,
    )
}

/// A table of already-formatted cells.
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }
}

pub fn num(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x}")
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        }
    }
    Ok(())
}

pub fn write_csv(path: &Path, comments: &[String], table: &Table) -> Result<()> {
    ensure_parent(path)?;
    let mut buf: Vec<u8> = Vec::new();
    for c in comments {
        writeln!(buf, "# {c}")?;
    }
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(&table.header)?;
        for r in &table.rows {
            w.write_record(r)?;
        }
        w.flush()?;
    }
    fs::write(path, buf).with_context(|| format!("cannot write {}", path.display()))
}

/// JSON counterpart of the CSV comment header: `value` gains a "header" key.
pub fn write_json_output(
    path: &Path,
    header: &[String],
    mut value: serde_json::Value,
) -> Result<()> {
    if let Some(obj) = value.as_object_mut() {
        obj.insert("header".into(), serde_json::json!(header));
    }
    write_json(path, &value)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    ensure_parent(path)?;
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("cannot write {}", path.display()))
}

#[derive(Serialize)]
pub struct Manifest<'a, C: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: &'a str,
    pub config: &'a C,
    pub outputs: Vec<String>,
    pub wall_time_seconds: f64,
    pub exit_code: i32,
}

pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output
        .file_stem()
        .map(|s| s.to_os_string())
        .unwrap_or_default();
    name.push(".manifest.json");
    output.with_file_name(name)
}

pub fn write_manifest<C: Serialize>(
    output: &Path,
    subcommand: &str,
    config: &C,
    outputs: &[PathBuf],
    wall: Duration,
    exit_code: i32,
) -> Result<PathBuf> {
    let path = manifest_path(output);
    let m = Manifest {
        tool: "qst",
        version: VERSION,
        subcommand,
        config,
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
        wall_time_seconds: wall.as_secs_f64(),
        exit_code,
    };
    write_json(&path, &m)?;
    Ok(path)
}
