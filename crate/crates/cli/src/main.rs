use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;

mod commands;
mod config;
mod output;

use commands::{AmplitudeArgs, FidelityArgs, OutputArgs, ScanArgs, SpectrumArgs, VerifyArgs};
use config::{FileSpec, SpecArgs};

/// Two-qubit state transfer through XX chains with barrier fields.
#[derive(Debug, Parser)]
#[command(name = "qst", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Single-particle spectrum and eigenvector amplitudes
    Spectrum {
        #[command(flatten)]
        spec: SpecArgs,
        #[command(flatten)]
        args: SpectrumArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Transfer amplitudes and channel occupation over time
    Amplitudes {
        #[command(flatten)]
        spec: SpecArgs,
        #[command(flatten)]
        args: AmplitudeArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Exact, approximate, Monte-Carlo and worst-case fidelities
    Fidelity {
        #[command(flatten)]
        spec: SpecArgs,
        #[command(flatten)]
        args: FidelityArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Perturbative quartet, frequencies and transfer-time estimates
    Perturb {
        #[command(flatten)]
        spec: SpecArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Optimal transfer time for one chain
    TransferTime {
        #[command(flatten)]
        spec: SpecArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Transfer time and fidelity across a range of h or N
    Scan {
        #[command(flatten)]
        spec: SpecArgs,
        #[command(flatten)]
        args: ScanArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Cross-check the fast path against the sector oracle
    Verify {
        #[command(flatten)]
        spec: SpecArgs,
        #[command(flatten)]
        args: VerifyArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
}

#[derive(Serialize)]
struct Resolved<'a, A: Serialize> {
    spec: &'a qst_core::ChainSpec,
    keys: &'a FileSpec,
    args: &'a A,
    out: &'a OutputArgs,
}

fn run<A: Serialize>(
    name: &str,
    spec_args: &SpecArgs,
    args: &A,
    out: &OutputArgs,
    body: impl FnOnce(&qst_core::ChainSpec) -> anyhow::Result<commands::Outcome>,
) -> ExitCode {
    let start = Instant::now();
    let (spec, keys) = match spec_args.resolve() {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(1);
        }
    };
    match body(&spec) {
        Ok(outcome) => {
            let code = if outcome.verification_failed { 2 } else { 0 };
            let primary = outcome.outputs[0].clone();
            let resolved = Resolved {
                spec: &spec,
                keys: &keys,
                args,
                out,
            };
            match output::write_manifest(
                &primary,
                name,
                &resolved,
                &outcome.outputs,
                start.elapsed(),
                code,
            ) {
                Ok(m) => eprintln!("wrote {} ({})", primary.display(), m.display()),
                Err(e) => {
                    eprintln!("error: {e:#}");
                    return ExitCode::from(1);
                }
            }
            ExitCode::from(code as u8)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match &cli.command {
        Command::Spectrum { spec, args, out } => run("spectrum", spec, args, out, |s| {
            commands::spectrum(s, args, out)
        }),
        Command::Amplitudes { spec, args, out } => run("amplitudes", spec, args, out, |s| {
            commands::amplitudes(s, args, out)
        }),
        Command::Fidelity { spec, args, out } => run("fidelity", spec, args, out, |s| {
            commands::fidelity(s, args, out)
        }),
        Command::Perturb { spec, out } => {
            run("perturb", spec, &(), out, |s| commands::perturb(s, out))
        }
        Command::TransferTime { spec, out } => run("transfer-time", spec, &(), out, |s| {
            commands::transfer_time(s, out)
        }),
        Command::Scan { spec, args, out } => run("scan", spec, args, out, |s| {
            commands::scan_cmd(s, args, out)
        }),
        Command::Verify { spec, args, out } => run("verify", spec, args, out, |s| {
            commands::verify(s, args, out)
        }),
    }
}
