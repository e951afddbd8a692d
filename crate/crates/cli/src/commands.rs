//! Subcommand implementations. Each returns the files it wrote and whether
//! verification passed.

use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use qst_core::amplitudes::{pair_amplitude, propagator};
use qst_core::fidelity::{
    breakdown_from_amplitudes, haar_average_oracle, haar_average_with, worst_case_kernel,
    AverageFidelity,
};
use qst_core::perturbation::cubic_residual;
use qst_core::sector::{FidelityKernel, SenderEvolution};
use qst_core::spectral::extended_indices;
use qst_core::verify::{run_verification, VerifyOptions};
use qst_core::{
    build_single_particle, channel_occupation, classify_chain, diagonalize, find_transfer_time,
    localization_profile, localized_indices, perturbative_energies, rabi_frequencies, scan,
    transfer_time_estimate, ChainSpec, Regime, ScanAxis, SectorOracle, WorstCaseOptions,
};
use serde::Serialize;
use serde_json::json;

use crate::output::{
    describe_spec, num, resolve_path, write_csv, write_json_output, Format, Table, VERSION,
};

/// Above this length the dense two-excitation oracle is replaced by
/// free-fermion determinants for Monte-Carlo and worst-case runs.
const ORACLE_MAX_N: usize = 120;

#[derive(Debug, Clone, Args, Serialize)]
pub struct OutputArgs {
    /// Output file (default: $QST_OUTPUT_DIR/<command>.<ext>)
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GridArgs {
    /// Single time point
    #[arg(long, allow_hyphen_values = true)]
    pub t: Option<f64>,
    /// Grid start
    #[arg(long)]
    pub t0: Option<f64>,
    /// Grid end (inclusive)
    #[arg(long)]
    pub t1: Option<f64>,
    /// Number of grid points
    #[arg(long, default_value_t = 101)]
    pub steps: usize,
}

impl GridArgs {
    pub fn times(&self) -> Result<Vec<f64>> {
        match (self.t, self.t0, self.t1) {
            (Some(t), None, None) => Ok(vec![t]),
            (None, Some(a), Some(b)) => {
                if self.steps == 0 {
                    bail!("steps: must be at least 1");
                }
                if !(a.is_finite() && b.is_finite()) || b < a {
                    bail!("t0/t1: need finite t0 <= t1");
                }
                if self.steps == 1 {
                    return Ok(vec![a]);
                }
                let dt = (b - a) / (self.steps - 1) as f64;
                Ok((0..self.steps).map(|i| a + i as f64 * dt).collect())
            }
            (None, None, None) => bail!("t: give --t or --t0/--t1"),
            _ => bail!("t: use either --t or --t0 with --t1"),
        }
    }
}

pub struct Outcome {
    pub outputs: Vec<PathBuf>,
    pub verification_failed: bool,
}

fn header(spec: &ChainSpec, command: &str) -> Vec<String> {
    vec![
        format!("qst {VERSION} {command}"),
        format!("spec: {}", describe_spec(spec)),
    ]
}

fn finish(path: PathBuf) -> Outcome {
    Outcome {
        outputs: vec![path],
        verification_failed: false,
    }
}

// ---------------------------------------------------------------- spectrum

#[derive(Debug, Clone, Args, Serialize)]
pub struct SpectrumArgs {
    /// Sites whose |a_kn| are listed (default: senders and receivers)
    #[arg(long, value_delimiter = ',')]
    pub sites: Option<Vec<usize>>,
    /// Dump |a_kn| for every site
    #[arg(long)]
    pub full: bool,
}

pub fn spectrum(spec: &ChainSpec, args: &SpectrumArgs, out: &OutputArgs) -> Result<Outcome> {
    let sd = diagonalize(&build_single_particle(spec)?)?;
    let sites: Vec<usize> = if args.full {
        (1..=spec.n).collect()
    } else {
        args.sites.clone().unwrap_or_else(|| {
            vec![
                spec.senders.0,
                spec.senders.1,
                spec.receivers.0,
                spec.receivers.1,
            ]
        })
    };
    if let Some(s) = sites.iter().find(|&&s| s == 0 || s > spec.n) {
        bail!("sites: {s} outside [1, {}]", spec.n);
    }
    let weight = localization_profile(&sd, &sites)?;
    let path = resolve_path(out.out.as_deref(), "spectrum", out.format);
    match out.format {
        Format::Csv => {
            let mut cols = vec!["k".to_string(), "eps_k".to_string()];
            cols.extend(sites.iter().map(|s| format!("abs_a_{s}")));
            cols.push("weight".into());
            let mut t = Table {
                header: cols,
                rows: Vec::new(),
            };
            for k in 0..spec.n {
                let mut row = vec![(k + 1).to_string(), num(sd.eigenvalues[k])];
                row.extend(sites.iter().map(|&s| num(sd.a(k, s - 1).abs())));
                row.push(num(weight[k]));
                t.push(row);
            }
            let mut comments = header(spec, "spectrum");
            comments.push(format!(
                "regime={} localized={:?} extended={:?}",
                classify_chain(spec.n),
                localized_indices(spec.n),
                extended_indices(spec.n)
            ));
            write_csv(&path, &comments, &t)?;
        }
        Format::Json => {
            let rows: Vec<_> = (0..spec.n)
                .map(|k| {
                    json!({
                        "k": k + 1,
                        "eps_k": sd.eigenvalues[k],
                        "abs_a": sites.iter().map(|&s| sd.a(k, s - 1).abs()).collect::<Vec<_>>(),
                        "weight": weight[k],
                    })
                })
                .collect();
            write_json_output(
                &path,
                &header(spec, "spectrum"),
                json!({
                    "spec": spec,
                    "sites": sites,
                    "regime": classify_chain(spec.n),
                    "localized": localized_indices(spec.n),
                    "extended": extended_indices(spec.n),
                    "rows": rows,
                }),
            )?;
        }
    }
    Ok(finish(path))
}

// -------------------------------------------------------------- amplitudes

#[derive(Debug, Clone, Args, Serialize)]
pub struct AmplitudeArgs {
    #[command(flatten)]
    pub grid: GridArgs,
    /// Single-particle entries as from:to, comma separated (e.g. 1:29,2:30)
    #[arg(long = "f", value_delimiter = ',')]
    pub f_entries: Option<Vec<String>>,
    /// Two-particle entries as n-m:r-s, comma separated (e.g. 1-2:29-30)
    #[arg(long = "g", value_delimiter = ',')]
    pub g_entries: Option<Vec<String>>,
}

fn parse_site_pair(s: &str, sep: char) -> Result<(usize, usize)> {
    let (a, b) = s
        .split_once(sep)
        .ok_or_else(|| anyhow!("expected '{sep}' in {s}"))?;
    Ok((a.trim().parse()?, b.trim().parse()?))
}

pub fn amplitudes(spec: &ChainSpec, args: &AmplitudeArgs, out: &OutputArgs) -> Result<Outcome> {
    let times = args.grid.times()?;
    let sd = diagonalize(&build_single_particle(spec)?)?;
    let (s1, s2) = spec.senders;
    let (r1, r2) = spec.receivers;
    let f_list: Vec<(usize, usize)> = match &args.f_entries {
        Some(v) => v
            .iter()
            .map(|s| parse_site_pair(s, ':').with_context(|| format!("f: bad entry {s}")))
            .collect::<Result<_>>()?,
        None => vec![(s1, r1), (s1, r2), (s2, r1), (s2, r2)],
    };
    let g_list: Vec<((usize, usize), (usize, usize))> = match &args.g_entries {
        Some(v) => v
            .iter()
            .map(|s| -> Result<_> {
                let (a, b) = s
                    .split_once(':')
                    .ok_or_else(|| anyhow!("g: bad entry {s}"))?;
                Ok((parse_site_pair(a, '-')?, parse_site_pair(b, '-')?))
            })
            .collect::<Result<_>>()?,
        None => vec![((s1, s2), (r1, r2))],
    };
    for &(a, b) in &f_list {
        if a == 0 || b == 0 || a > spec.n || b > spec.n {
            bail!("f: site outside [1, {}]", spec.n);
        }
    }
    for &((a, b), (c, d)) in &g_list {
        if a >= b || c >= d {
            bail!("g: pairs must be increasing (n<m, r<s), got {a}-{b}:{c}-{d}");
        }
        if a == 0 || c == 0 || b > spec.n || d > spec.n {
            bail!("g: site outside [1, {}]", spec.n);
        }
    }
    let mut cols = vec!["t".to_string()];
    for (a, b) in &f_list {
        for p in ["re", "im", "abs"] {
            cols.push(format!("{p}_f_{a}_{b}"));
        }
    }
    for ((a, b), (c, d)) in &g_list {
        for p in ["re", "im", "abs"] {
            cols.push(format!("{p}_g_{a}{b}_{c}{d}"));
        }
    }
    cols.push("channel_occupation".into());
    let mut table = Table {
        header: cols,
        rows: Vec::new(),
    };
    for &t in &times {
        let amp = propagator(&sd, t);
        let mut row = vec![num(t)];
        for &(a, b) in &f_list {
            let z = amp.f(a, b);
            row.extend([num(z.re), num(z.im), num(z.norm())]);
        }
        for &(from, to) in &g_list {
            let z = pair_amplitude(&amp, from, to).map_err(|e| anyhow!("g: {e}"))?;
            row.extend([num(z.re), num(z.im), num(z.norm())]);
        }
        row.push(num(channel_occupation(&amp, spec)));
        table.push(row);
    }
    let path = resolve_path(out.out.as_deref(), "amplitudes", out.format);
    emit_table(&path, out.format, &header(spec, "amplitudes"), &table)?;
    Ok(finish(path))
}

fn emit_table(
    path: &std::path::Path,
    format: Format,
    comments: &[String],
    table: &Table,
) -> Result<()> {
    match format {
        Format::Csv => write_csv(path, comments, table),
        Format::Json => {
            let rows: Vec<serde_json::Map<String, serde_json::Value>> = table
                .rows
                .iter()
                .map(|r| {
                    table
                        .header
                        .iter()
                        .zip(r)
                        .map(|(k, v)| {
                            let val = v
                                .parse::<f64>()
                                .map(|x| json!(x))
                                .unwrap_or_else(|_| json!(v));
                            (k.clone(), val)
                        })
                        .collect()
                })
                .collect();
            write_json_output(path, comments, json!({ "rows": rows }))
        }
    }
}

// ---------------------------------------------------------------- fidelity

#[derive(Debug, Clone, Args, Serialize)]
pub struct FidelityArgs {
    #[command(flatten)]
    pub grid: GridArgs,
    /// Evaluate at the optimal transfer time instead of a grid
    #[arg(long)]
    pub t_star: bool,
    /// Haar Monte-Carlo samples per time point (0 disables)
    #[arg(long, default_value_t = 0)]
    pub mc_samples: usize,
    /// Random seed; required with --mc-samples or --worst-case
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also search for the worst-case input state
    #[arg(long)]
    pub worst_case: bool,
}

enum Engine {
    Oracle(Box<SectorOracle>),
    FreeFermion,
}

impl Engine {
    fn kernel(&self, spec: &ChainSpec, sd: &qst_core::SpectralData, t: f64) -> FidelityKernel {
        match self {
            Engine::Oracle(o) => o.kernel(t),
            Engine::FreeFermion => FidelityKernel::new(
                spec,
                &SenderEvolution::from_amplitudes(spec, &propagator(sd, t)),
            ),
        }
    }
}

pub fn fidelity(spec: &ChainSpec, args: &FidelityArgs, out: &OutputArgs) -> Result<Outcome> {
    let needs_seed = args.mc_samples > 0 || args.worst_case;
    let seed = match (needs_seed, args.seed) {
        (true, None) => bail!("seed: required with --mc-samples or --worst-case"),
        (_, s) => s.unwrap_or(0),
    };
    if args.mc_samples > 0 && args.mc_samples < 100 {
        bail!("mc-samples: need at least 100");
    }
    let sd = diagonalize(&build_single_particle(spec)?)?;
    let mut t_star_info = None;
    let times = if args.t_star {
        if args.grid.t.is_some() || args.grid.t0.is_some() || args.grid.t1.is_some() {
            bail!("t-star: cannot be combined with --t or --t0/--t1");
        }
        let tt = find_transfer_time(spec)?;
        let t = tt.t_star;
        t_star_info = Some(tt);
        vec![t]
    } else {
        args.grid.times()?
    };
    let engine = if needs_seed {
        if spec.n <= ORACLE_MAX_N {
            Engine::Oracle(Box::new(SectorOracle::new(spec)?))
        } else {
            Engine::FreeFermion
        }
    } else {
        Engine::FreeFermion
    };
    let avg = AverageFidelity::new(spec, &sd);
    let mut table = Table::new(&[
        "t",
        "F_exact",
        "F_approx",
        "F_mc_mean",
        "F_mc_stderr",
        "F_min",
    ]);
    let mut details = Vec::new();
    for (i, &t) in times.iter().enumerate() {
        let amp = propagator(&sd, t);
        let b = breakdown_from_amplitudes(spec, &amp);
        let approx = avg.approx_at(t);
        let (mc_mean, mc_err) = if args.mc_samples > 0 {
            let est = match &engine {
                Engine::Oracle(o) => {
                    haar_average_oracle(o, t, args.mc_samples, seed.wrapping_add(i as u64))?
                }
                Engine::FreeFermion => {
                    let k = engine.kernel(spec, &sd, t);
                    haar_average_with(
                        |p| k.fidelity(p),
                        args.mc_samples,
                        seed.wrapping_add(i as u64),
                    )
                }
            };
            (est.mean, est.stderr)
        } else {
            (f64::NAN, f64::NAN)
        };
        let worst = if args.worst_case {
            let opts = WorstCaseOptions {
                seed: seed.wrapping_add(i as u64),
                ..WorstCaseOptions::default()
            };
            Some(worst_case_kernel(&engine.kernel(spec, &sd, t), &opts))
        } else {
            None
        };
        table.push(vec![
            num(t),
            num(b.value),
            num(approx),
            num(mc_mean),
            num(mc_err),
            num(worst.as_ref().map_or(f64::NAN, |w| w.f_min)),
        ]);
        details.push(json!({ "t": t, "breakdown": b, "worst_case": worst }));
    }
    let path = resolve_path(out.out.as_deref(), "fidelity", out.format);
    match out.format {
        Format::Csv => {
            let mut comments = header(spec, "fidelity");
            comments.push(format!(
                "mc_samples={} seed={} worst_case={} engine={}",
                args.mc_samples,
                if needs_seed {
                    seed.to_string()
                } else {
                    "none".into()
                },
                args.worst_case,
                match engine {
                    Engine::Oracle(_) => "sector-oracle",
                    Engine::FreeFermion => "free-fermion",
                }
            ));
            write_csv(&path, &comments, &table)?;
        }
        Format::Json => write_json_output(
            &path,
            &header(spec, "fidelity"),
            json!({ "spec": spec, "rows": table_rows(&table), "details": details, "transfer_time": t_star_info }),
        )?,
    }
    Ok(finish(path))
}

fn table_rows(t: &Table) -> Vec<serde_json::Value> {
    t.rows
        .iter()
        .map(|r| {
            let m: serde_json::Map<_, _> = t
                .header
                .iter()
                .zip(r)
                .map(|(k, v)| {
                    (
                        k.clone(),
                        v.parse::<f64>()
                            .map(|x| json!(x))
                            .unwrap_or(serde_json::Value::Null),
                    )
                })
                .collect();
            serde_json::Value::Object(m)
        })
        .collect()
}

// ----------------------------------------------------------------- perturb

pub fn perturb(spec: &ChainSpec, out: &OutputArgs) -> Result<Outcome> {
    if classify_chain(spec.n) == Regime::QuasiRabi {
        bail!("N: perturbative quartet needs N != 3n-1 (got {})", spec.n);
    }
    let h = spec.barrier_field;
    let sd = diagonalize(&build_single_particle(spec)?)?;
    let p = perturbative_energies(spec.n, h)?;
    let pert = p.chain_energies(spec.units);
    let idx = localized_indices(spec.n);
    let exact: Vec<f64> = idx.iter().map(|&k| sd.eigenvalues[k - 1]).collect();
    let fe = rabi_frequencies([exact[0], exact[1], exact[2], exact[3]]);
    let fp = rabi_frequencies(pert);
    let t1_closed = transfer_time_estimate(spec.n, h)
        .map(|t| t * spec.units.time_scale())
        .ok();

    let mut table = Table::new(&["quantity", "exact", "perturbative"]);
    for (i, k) in idx.iter().enumerate() {
        table.push(vec![format!("eps_{k}"), num(exact[i]), num(pert[i])]);
    }
    for (name, a, b) in [
        ("omega0_minus", fe.omega0_minus, fp.omega0_minus),
        ("omega0_plus", fe.omega0_plus, fp.omega0_plus),
        ("omega1_minus", fe.omega1_minus, fp.omega1_minus),
        ("omega1_plus", fe.omega1_plus, fp.omega1_plus),
        ("t1", fe.t1(), fp.t1()),
    ] {
        table.push(vec![name.to_string(), num(a), num(b)]);
    }
    table.push(vec![
        "t1_closed_form".into(),
        num(t1_closed.unwrap_or(f64::NAN)),
        String::new(),
    ]);
    for (i, x) in p.roots.iter().enumerate() {
        table.push(vec![format!("root_{}", i + 1), String::new(), num(*x)]);
    }

    for row in &table.rows {
        println!("{:<16} {:>24} {:>24}", row[0], row[1], row[2]);
    }
    let path = resolve_path(out.out.as_deref(), "perturb", out.format);
    match out.format {
        Format::Csv => write_csv(&path, &header(spec, "perturb"), &table)?,
        Format::Json => write_json_output(
            &path,
            &header(spec, "perturb"),
            json!({
                "spec": spec,
                "indices": idx,
                "exact": exact,
                "perturbative": p,
                "perturbative_chain_energies": pert,
                "root_residuals": p.roots.iter().map(|&x| cubic_residual(x, h)).collect::<Vec<_>>(),
                "frequencies_exact": fe,
                "frequencies_perturbative": fp,
                "t1_closed_form": t1_closed,
            }),
        )?,
    }
    Ok(finish(path))
}

// ----------------------------------------------------- transfer-time / scan

const SCAN_COLUMNS: [&str; 10] = [
    "N",
    "h",
    "regime",
    "t_star",
    "F_exact",
    "F_approx",
    "t1_estimate",
    "search_window_lo",
    "search_window_hi",
    "error",
];

fn scan_table(records: &[qst_core::ScanRecord]) -> Table {
    let mut t = Table::new(&SCAN_COLUMNS);
    for r in records {
        t.push(vec![
            r.n.to_string(),
            num(r.h),
            r.regime.clone(),
            num(r.t_star),
            num(r.f_exact),
            num(r.f_approx),
            num(r.t1_estimate),
            num(r.search_window.0),
            num(r.search_window.1),
            r.error.clone().unwrap_or_default(),
        ]);
    }
    t
}

pub fn transfer_time(spec: &ChainSpec, out: &OutputArgs) -> Result<Outcome> {
    let records = scan(spec, ScanAxis::H, &[spec.barrier_field])?;
    let rec = &records[0];
    if let Some(e) = &rec.error {
        bail!("transfer-time: {e}");
    }
    let path = resolve_path(out.out.as_deref(), "transfer_time", out.format);
    match out.format {
        Format::Csv => write_csv(&path, &header(spec, "transfer-time"), &scan_table(&records))?,
        Format::Json => {
            let diag = find_transfer_time(spec)?;
            write_json_output(
                &path,
                &header(spec, "transfer-time"),
                json!({ "spec": spec, "record": rec, "diagnostics": diag }),
            )?
        }
    }
    println!(
        "N={} h={} regime={} t*={} F={} F_a={}",
        rec.n, rec.h, rec.regime, rec.t_star, rec.f_exact, rec.f_approx
    );
    Ok(finish(path))
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ScanArgs {
    /// Parameter varied across the scan
    #[arg(long, value_parser = parse_axis)]
    #[serde(skip)]
    pub axis: ScanAxis,
    /// Explicit values, comma separated
    #[arg(long, value_delimiter = ',')]
    pub values: Option<Vec<f64>>,
    /// start:stop:step (inclusive)
    #[arg(long)]
    pub range: Option<String>,
}

fn parse_axis(s: &str) -> std::result::Result<ScanAxis, String> {
    match s {
        "h" => Ok(ScanAxis::H),
        "N" | "n" => Ok(ScanAxis::N),
        _ => Err(format!("unknown axis {s} (expected h or N)")),
    }
}

pub fn scan_values(args: &ScanArgs) -> Result<Vec<f64>> {
    match (&args.values, &args.range) {
        (Some(v), None) => Ok(v.clone()),
        (None, Some(r)) => {
            let parts: Vec<f64> = r
                .split(':')
                .map(|p| p.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| anyhow!("range: {e}"))?;
            let [a, b, s] = parts[..] else {
                bail!("range: expected start:stop:step");
            };
            if !(s > 0.0) || b < a {
                bail!("range: need step > 0 and start <= stop");
            }
            let n = ((b - a) / s + 1e-9).floor() as usize;
            Ok((0..=n).map(|i| a + i as f64 * s).collect())
        }
        _ => bail!("values: give exactly one of --values or --range"),
    }
}

pub fn scan_cmd(spec: &ChainSpec, args: &ScanArgs, out: &OutputArgs) -> Result<Outcome> {
    let values = scan_values(args)?;
    let records = scan(spec, args.axis, &values)?;
    let path = resolve_path(out.out.as_deref(), "scan", out.format);
    match out.format {
        Format::Csv => {
            let mut comments = header(spec, "scan");
            comments.push(format!(
                "axis={} values={:?}",
                if args.axis == ScanAxis::H { "h" } else { "N" },
                values
            ));
            write_csv(&path, &comments, &scan_table(&records))?
        }
        Format::Json => write_json_output(
            &path,
            &header(spec, "scan"),
            json!({ "template": spec, "records": records }),
        )?,
    }
    Ok(finish(path))
}

// ------------------------------------------------------------------ verify

#[derive(Debug, Clone, Args, Serialize)]
pub struct VerifyArgs {
    /// Monte-Carlo samples per time point for the Haar cross-check
    #[arg(long, default_value_t = 20_000)]
    pub mc_samples: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

pub fn verify(spec: &ChainSpec, args: &VerifyArgs, out: &OutputArgs) -> Result<Outcome> {
    if spec.n > ORACLE_MAX_N {
        bail!("N: the sector oracle is limited to N <= {ORACLE_MAX_N}");
    }
    let opts = VerifyOptions {
        mc_samples: args.mc_samples,
        seed: args.seed,
        ..VerifyOptions::default()
    };
    let checks = run_verification(spec, &opts)?;
    let mut table = Table::new(&["check", "worst", "tolerance", "passed"]);
    let mut failed = false;
    for c in &checks {
        println!(
            "{:<48} worst {:>12.3e}  tol {:>8.1e}  {}",
            c.name,
            c.worst,
            c.tolerance,
            if c.passed { "ok" } else { "FAIL" }
        );
        failed |= !c.passed;
        table.push(vec![
            c.name.clone(),
            num(c.worst),
            num(c.tolerance),
            c.passed.to_string(),
        ]);
    }
    let path = resolve_path(out.out.as_deref(), "verify", out.format);
    match out.format {
        Format::Csv => write_csv(&path, &header(spec, "verify"), &table)?,
        Format::Json => write_json_output(
            &path,
            &header(spec, "verify"),
            json!({ "spec": spec, "checks": checks }),
        )?,
    }
    Ok(Outcome {
        outputs: vec![path],
        verification_failed: failed,
    })
}
