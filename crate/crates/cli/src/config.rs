//! Chain spec resolution: optional TOML file, then command-line overrides.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, ValueEnum};
use qst_core::{ChainSpec, ReceiverOrder, Units};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitsArg {
    Pauli,
    Fermion,
}

impl From<UnitsArg> for Units {
    fn from(u: UnitsArg) -> Self {
        match u {
            UnitsArg::Pauli => Units::Pauli,
            UnitsArg::Fermion => Units::Fermion,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrderArg {
    Direct,
    Mirrored,
}

impl From<OrderArg> for ReceiverOrder {
    fn from(o: OrderArg) -> Self {
        match o {
            OrderArg::Direct => ReceiverOrder::Direct,
            OrderArg::Mirrored => ReceiverOrder::Mirrored,
        }
    }
}

/// Keys accepted in a config file; every key is optional.
#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct FileSpec {
    #[serde(rename = "N")]
    pub n: Option<usize>,
    pub h: Option<f64>,
    pub couplings: Option<Vec<f64>>,
    pub fields: Option<Vec<f64>>,
    pub senders: Option<[usize; 2]>,
    pub receivers: Option<[usize; 2]>,
    pub barriers: Option<[usize; 2]>,
    pub units: Option<UnitsArg>,
    pub receiver_order: Option<OrderArg>,
}

#[derive(Debug, Clone, Args)]
pub struct SpecArgs {
    /// TOML config file (N, h, couplings, fields, senders, receivers, barriers, units, receiver_order)
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Chain length
    #[arg(long = "N", alias = "n")]
    pub n: Option<usize>,
    /// Barrier field
    #[arg(long)]
    pub h: Option<f64>,
    /// Per-bond couplings, comma separated (N-1 values)
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub couplings: Option<Vec<f64>>,
    /// Per-site fields, comma separated (N values)
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub fields: Option<Vec<f64>>,
    /// Sender sites, 1-based (default 1 2)
    #[arg(long, value_delimiter = ',', num_args = 2)]
    pub senders: Option<Vec<usize>>,
    /// Receiver sites, 1-based (default N-1 N)
    #[arg(long, value_delimiter = ',', num_args = 2)]
    pub receivers: Option<Vec<usize>>,
    /// Barrier sites, 1-based (default 3 N-2)
    #[arg(long, value_delimiter = ',', num_args = 2)]
    pub barriers: Option<Vec<usize>>,
    /// Energy convention of the hopping matrix
    #[arg(long, value_enum)]
    pub units: Option<UnitsArg>,
    /// Which receiver holds the copy of the first sender qubit
    #[arg(long, value_enum)]
    pub receiver_order: Option<OrderArg>,
}

pub fn read_file_spec(path: &Path) -> Result<FileSpec> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))?;
    toml::from_str(&text).map_err(|e| anyhow!("config {}: {}", path.display(), e.message()))
}

fn pair(name: &str, v: &[usize]) -> Result<(usize, usize)> {
    match v {
        [a, b] => Ok((*a, *b)),
        _ => bail!("{name}: expected two sites, got {}", v.len()),
    }
}

impl SpecArgs {
    /// Resolved spec plus the merged key set (for the run manifest).
    pub fn resolve(&self) -> Result<(ChainSpec, FileSpec)> {
        let mut merged = match &self.config {
            Some(p) => read_file_spec(p)?,
            None => FileSpec::default(),
        };
        if let Some(v) = self.n {
            merged.n = Some(v);
        }
        if let Some(v) = self.h {
            merged.h = Some(v);
        }
        if let Some(v) = &self.couplings {
            merged.couplings = Some(v.clone());
        }
        if let Some(v) = &self.fields {
            merged.fields = Some(v.clone());
        }
        if let Some(v) = &self.senders {
            let (a, b) = pair("senders", v)?;
            merged.senders = Some([a, b]);
        }
        if let Some(v) = &self.receivers {
            let (a, b) = pair("receivers", v)?;
            merged.receivers = Some([a, b]);
        }
        if let Some(v) = &self.barriers {
            let (a, b) = pair("barriers", v)?;
            merged.barriers = Some([a, b]);
        }
        if let Some(v) = self.units {
            merged.units = Some(v);
        }
        if let Some(v) = self.receiver_order {
            merged.receiver_order = Some(v);
        }
        let spec = build_spec(&merged)?;
        Ok((spec, merged))
    }
}

pub fn build_spec(f: &FileSpec) -> Result<ChainSpec> {
    let n =
        f.n.ok_or_else(|| anyhow!("N: missing chain length (use --N or a config file)"))?;
    let h = f.h.unwrap_or(0.0);
    let mut spec = ChainSpec::new(n, h).map_err(|e| anyhow!("N: {e}"))?;
    if let Some([a, b]) = f.senders {
        spec.senders = (a, b);
    }
    if let Some([a, b]) = f.receivers {
        spec.receivers = (a, b);
    }
    if let Some([a, b]) = f.barriers {
        spec.barriers = (a, b);
        if a == 0 || b == 0 || a > n || b > n {
            bail!("barriers: site outside [1, {n}]");
        }
        spec.fields = vec![0.0; n];
        spec.fields[a - 1] = h;
        spec.fields[b - 1] = h;
    }
    if let Some(c) = &f.couplings {
        spec.couplings = c.clone();
    }
    if let Some(fl) = &f.fields {
        spec.fields = fl.clone();
    }
    if let Some(u) = f.units {
        spec.units = u.into();
    }
    if let Some(o) = f.receiver_order {
        spec.receiver_order = o.into();
    }
    spec.validate().map_err(|e| {
        let key = match e {
            qst_core::Error::LengthMismatch { name, .. } => name,
            qst_core::Error::Parameter { name, .. } => name,
            qst_core::Error::Geometry(_) => "geometry",
            _ => "spec",
        };
        anyhow!("{key}: {e}")
    })?;
    Ok(spec)
}
