//! Oracle equivalence and property checks, one worst residual per check.

use nalgebra::{Matrix4, SymmetricEigen};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::amplitudes::{determinant, propagator};
use crate::chain::{build_single_particle, ChainSpec};
use crate::error::Result;
use crate::fidelity::{average_fidelity_exact, closed_form, haar_average_oracle, haar_state};
use crate::sector::{reduced_receiver_state, SectorOracle, TwoQubitState};
use crate::spectral::{diagonalize, max_scaled_residual};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub worst: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    fn new(name: &str, worst: f64, tolerance: f64) -> Self {
        Check {
            name: name.to_string(),
            worst,
            tolerance,
            passed: worst <= tolerance,
        }
    }
}

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub times: Vec<f64>,
    pub mc_samples: usize,
    pub seed: u64,
    /// Compare every pair-to-pair amplitude up to this length.
    pub exhaustive_up_to: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            times: vec![0.0, 0.37, 1.9, 5.0, 17.3, 123.4],
            mc_samples: 20_000,
            seed: 1,
            exhaustive_up_to: 12,
        }
    }
}

pub fn run_verification(spec: &ChainSpec, opts: &VerifyOptions) -> Result<Vec<Check>> {
    let m = build_single_particle(spec)?;
    let sd = diagonalize(&m)?;
    let oracle = SectorOracle::new(spec)?;
    let n = spec.n;
    let mut checks = Vec::new();

    checks.push(Check::new(
        "eigen residual",
        max_scaled_residual(&m, &sd),
        1e-10,
    ));
    let mut ortho: f64 = 0.0;
    for k in 0..n {
        for l in k..n {
            let dot: f64 = sd
                .eigenvector(k)
                .iter()
                .zip(sd.eigenvector(l))
                .map(|(a, b)| a * b)
                .sum();
            ortho = ortho.max((dot - if k == l { 1.0 } else { 0.0 }).abs());
        }
    }
    checks.push(Check::new("eigenvector orthonormality", ortho, 1e-12));

    let dense = oracle.one_particle_energies();
    let eig = sd
        .eigenvalues
        .iter()
        .zip(&dense)
        .map(|(a, b)| (a - b).abs() / a.abs().max(1.0))
        .fold(0.0, f64::max);
    checks.push(Check::new("eigenvalues vs dense solver", eig, 1e-10));

    let mut sums = Vec::with_capacity(n * (n - 1) / 2);
    for k in 0..n {
        for l in k + 1..n {
            sums.push(sd.eigenvalues[k] + sd.eigenvalues[l]);
        }
    }
    sums.sort_by(f64::total_cmp);
    let scale = sd.eigenvalues.iter().fold(1.0f64, |a, e| a.max(e.abs()));
    let pairing = sums
        .iter()
        .zip(oracle.two_particle_energies())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
        / scale;
    checks.push(Check::new(
        "two-particle spectrum = pairwise sums",
        pairing,
        1e-9,
    ));

    let mut f_err: f64 = 0.0;
    let mut g_err: f64 = 0.0;
    let mut unitarity: f64 = 0.0;
    let mut rho_err: f64 = 0.0;
    let mut fid_err: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let pairs = oracle.basis.two_exc.clone();
    for &t in &opts.times {
        let amp = propagator(&sd, t);
        for a in 1..=n {
            let col = oracle.one_particle_column(a, t);
            for (b, c) in col.iter().enumerate() {
                f_err = f_err.max((amp.f(a, b + 1) - c).norm());
            }
            let norm: f64 = amp.row(a).iter().map(|z| z.norm_sqr()).sum();
            unitarity = unitarity.max((norm - 1.0).abs());
        }
        let starts: Vec<(usize, usize)> = if n <= opts.exhaustive_up_to {
            pairs.clone()
        } else {
            vec![spec.senders]
        };
        for &(a, b) in &starts {
            let col = oracle.two_particle_column(a, b, t);
            for (&(x, y), c) in pairs.iter().zip(&col) {
                g_err = g_err.max((determinant(&amp, a, b, x, y) - c).norm());
            }
        }
        for _ in 0..4 {
            let psi = TwoQubitState::normalized(haar_state(&mut rng))?;
            let rho = reduced_receiver_state(spec, &oracle.evolve(&psi, t));
            rho_err = rho_err.max(density_defect(&rho));
        }
        let b = average_fidelity_exact(spec, t)?;
        let a = b.amplitudes;
        fid_err = fid_err.max((closed_form(a.f_aa, a.f_bb, a.g) - b.value).abs());
        let s: f64 = b.terms.iter().map(|(_, v)| v).sum();
        fid_err = fid_err.max((s - b.value).abs());
    }
    checks.push(Check::new("propagator vs sector evolution", f_err, 1e-10));
    checks.push(Check::new(
        "pair determinant vs sector evolution",
        g_err,
        1e-10,
    ));
    checks.push(Check::new("unitarity", unitarity, 1e-10));
    checks.push(Check::new(
        "receiver state trace/hermiticity/positivity",
        rho_err,
        1e-10,
    ));
    checks.push(Check::new(
        "average fidelity terms vs closed form",
        fid_err,
        1e-12,
    ));
    let f0 = average_fidelity_exact(spec, 0.0)?.value;
    checks.push(Check::new(
        "average fidelity at t=0 equals 1/4",
        (f0 - 0.25).abs(),
        1e-12,
    ));

    if opts.mc_samples >= 100 {
        let mut worst_sigma: f64 = 0.0;
        for (i, &t) in opts.times.iter().enumerate() {
            let exact = average_fidelity_exact(spec, t)?.value;
            let mc = haar_average_oracle(
                &oracle,
                t,
                opts.mc_samples,
                opts.seed.wrapping_add(i as u64),
            )?;
            let z = if mc.stderr > 0.0 {
                (mc.mean - exact).abs() / mc.stderr
            } else {
                (mc.mean - exact).abs() / 1e-12
            };
            worst_sigma = worst_sigma.max(z);
        }
        checks.push(Check::new(
            "average fidelity vs Haar Monte Carlo (sigmas)",
            worst_sigma,
            3.0,
        ));
    }
    Ok(checks)
}

/// Largest of |tr ρ − 1|, ‖ρ − ρ†‖ and −λ_min(ρ).
pub fn density_defect(rho: &Matrix4<Complex64>) -> f64 {
    let tr = (rho.trace() - 1.0).norm();
    let herm = (rho - rho.adjoint())
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    let hermitian = (rho + rho.adjoint()) * Complex64::new(0.5, 0.0);
    let lmin = SymmetricEigen::new(hermitian).eigenvalues.min();
    tr.max(herm).max(-lmin)
}
