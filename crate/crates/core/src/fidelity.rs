//! Average fidelity over Haar-random inputs, its small-amplitude
//! approximation, Monte-Carlo averaging and worst-case search.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::amplitudes::{pair_amplitude, propagator, AmplitudeProbe, AmplitudeSet};
use crate::chain::{build_single_particle, ChainSpec};
use crate::error::{Error, Result};
use crate::optim::nelder_mead;
use crate::sector::{FidelityKernel, SectorOracle, TwoQubitState};
use crate::spectral::{diagonalize, SpectralData};

const MC_CHUNK: usize = 1024;
const WORST_CASE_STREAM: u64 = 1 << 32;
const CERTIFY_STREAM: u64 = 1 << 33;

/// The amplitudes that enter the average: f from each sender to each
/// receiver qubit, and the pair amplitude onto both receivers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransferAmplitudes {
    /// s1 -> receiver of qubit A
    pub f_aa: Complex64,
    /// s1 -> receiver of qubit B
    pub f_ab: Complex64,
    /// s2 -> receiver of qubit A
    pub f_ba: Complex64,
    /// s2 -> receiver of qubit B
    pub f_bb: Complex64,
    pub g: Complex64,
}

impl TransferAmplitudes {
    pub fn from_set(spec: &ChainSpec, amp: &AmplitudeSet) -> Self {
        let (s1, s2) = spec.senders;
        let (r1, r2) = spec.receivers;
        let (ra, rb) = spec.readout_sites();
        TransferAmplitudes {
            f_aa: amp.f(s1, ra),
            f_ab: amp.f(s1, rb),
            f_ba: amp.f(s2, ra),
            f_bb: amp.f(s2, rb),
            g: amp.f(s1, r1) * amp.f(s2, r2) - amp.f(s1, r2) * amp.f(s2, r1),
        }
    }
}

/// (4 + |1 + f_aa + f_bb + g|²) / 20, the average once unitarity is used.
#[inline]
pub fn closed_form(f_aa: Complex64, f_bb: Complex64, g: Complex64) -> f64 {
    (4.0 + (1.0 + f_aa + f_bb + g).norm_sqr()) / 20.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityBreakdown {
    pub value: f64,
    pub terms: Vec<(String, f64)>,
    pub amplitudes: TransferAmplitudes,
}

impl FidelityBreakdown {
    pub fn term(&self, name: &str) -> Option<f64> {
        self.terms.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }
}

pub const TERM_NAMES: [&str; 10] = [
    "constant",
    "linear_f",
    "cross_f",
    "diagonal_f",
    "linear_g",
    "abs_g",
    "fg_interference",
    "channel_single",
    "channel_mixed",
    "leakage",
];

/// Term-by-term average fidelity from a full amplitude set. Works for any
/// amplitude matrix, unitary or not; the terms always sum to `value`.
pub fn breakdown_from_amplitudes(spec: &ChainSpec, amp: &AmplitudeSet) -> FidelityBreakdown {
    let (s1, s2) = spec.senders;
    let (ra, rb) = spec.readout_sites();
    let ta = TransferAmplitudes::from_set(spec, amp);
    let (a, b, g) = (ta.f_aa, ta.f_bb, ta.g);
    let outside = spec.non_receiver_sites();

    let channel_single: f64 = outside
        .iter()
        .map(|&n| amp.f(s1, n).norm_sqr() + amp.f(s2, n).norm_sqr())
        .sum();
    let channel_mixed: f64 = outside
        .iter()
        .map(|&n| pair_norm(amp, (s1, s2), (n, ra)) + pair_norm(amp, (s1, s2), (n, rb)))
        .sum();
    let mut leakage = 0.0;
    for (i, &n) in outside.iter().enumerate() {
        for &m in &outside[i + 1..] {
            leakage += pair_norm(amp, (s1, s2), (n, m));
        }
    }

    let terms = vec![
        ("constant", 0.1),
        ("linear_f", 0.1 * (a + b).re + 0.1 * (b * a.conj()).re),
        ("cross_f", 0.05 * (ta.f_ab.norm_sqr() + ta.f_ba.norm_sqr())),
        ("diagonal_f", 0.1 * (a.norm_sqr() + b.norm_sqr())),
        ("linear_g", 0.1 * g.re),
        ("abs_g", 0.1 * g.norm_sqr()),
        ("fg_interference", 0.1 * ((a + b) * g.conj()).re),
        ("channel_single", 0.05 * channel_single),
        ("channel_mixed", 0.05 * channel_mixed),
        ("leakage", 0.05 * leakage),
    ];
    let value = terms.iter().map(|(_, v)| v).sum();
    FidelityBreakdown {
        value,
        terms: terms.into_iter().map(|(n, v)| (n.to_string(), v)).collect(),
        amplitudes: ta,
    }
}

fn pair_norm(amp: &AmplitudeSet, from: (usize, usize), to: (usize, usize)) -> f64 {
    pair_amplitude(amp, from, to).map_or(0.0, |g| g.norm_sqr())
}

pub fn average_fidelity_exact(spec: &ChainSpec, t: f64) -> Result<FidelityBreakdown> {
    let sd = diagonalize(&build_single_particle(spec)?)?;
    Ok(breakdown_from_amplitudes(spec, &propagator(&sd, t)))
}

/// The printed ten-term expansion with coefficients 1/4, 5/54, 1/54, 5/108,
/// 7/54, 1/27. Kept for comparison; it does not agree with direct Haar
/// averaging away from t = 0 and perfect transfer (see README).
pub fn reference_expansion(spec: &ChainSpec, amp: &AmplitudeSet) -> f64 {
    let (s1, s2) = spec.senders;
    let (r1, r2) = spec.receivers;
    let f = |n, m| amp.f(n, m);
    let g = |x, y| pair_amplitude(amp, (s1, s2), (x, y)).unwrap_or_default();
    let (a, b) = (f(s1, r1), f(s2, r2));
    let grr = g(r1, r2);
    let outside = spec.non_receiver_sites();
    let mut leak = 0.0;
    for (i, &n) in outside.iter().enumerate() {
        for &m in &outside[i + 1..] {
            leak += g(n, m).norm_sqr();
        }
    }
    let cross: f64 = outside
        .iter()
        .map(|&n| (f(s2, n).conj() * g(n, r1) + f(s1, n).conj() * g(n, r2)).re)
        .sum();
    0.25 + 5.0 / 54.0 * (a + b + 1.4 * b * a.conj()).re
        + (f(s2, r1).norm_sqr() + f(s1, r2).norm_sqr()) / 54.0
        + 5.0 / 108.0 * (b.norm_sqr() + a.norm_sqr())
        + 7.0 / 54.0 * grr.re
        + 5.0 / 108.0 * grr.norm_sqr()
        - (1.0 - leak) / 54.0
        + 5.0 / 54.0 * ((a + b) * grr.conj()).re
        - cross / 27.0
}

/// O(N) evaluator of the average fidelity at arbitrary times.
#[derive(Debug, Clone)]
pub struct AverageFidelity {
    probe: AmplitudeProbe,
    mirrored: bool,
}

impl AverageFidelity {
    pub fn new(spec: &ChainSpec, sd: &SpectralData) -> Self {
        let (s1, s2) = spec.senders;
        let (r1, r2) = spec.receivers;
        AverageFidelity {
            probe: AmplitudeProbe::new(sd, &[(s1, r1), (s1, r2), (s2, r1), (s2, r2)]),
            mirrored: spec.readout_sites() != spec.receivers,
        }
    }

    pub fn from_spec(spec: &ChainSpec) -> Result<Self> {
        Ok(Self::new(
            spec,
            &diagonalize(&build_single_particle(spec)?)?,
        ))
    }

    pub fn probe(&self) -> &AmplitudeProbe {
        &self.probe
    }

    /// From (f_{s1}^{r1}, f_{s1}^{r2}, f_{s2}^{r1}, f_{s2}^{r2}).
    #[inline]
    pub fn value_from(&self, f: &[Complex64]) -> f64 {
        let g = f[0] * f[3] - f[1] * f[2];
        if self.mirrored {
            closed_form(f[1], f[2], g)
        } else {
            closed_form(f[0], f[3], g)
        }
    }

    /// Small-amplitude approximation from the same four amplitudes.
    #[inline]
    pub fn approx_from(&self, f: &[Complex64]) -> f64 {
        approx_formula(f[0], f[1], f[2])
    }

    pub fn at(&self, t: f64) -> f64 {
        self.value_from(&self.probe.eval(t))
    }

    pub fn approx_at(&self, t: f64) -> f64 {
        self.approx_from(&self.probe.eval(t))
    }
}

fn approx_formula(a: Complex64, b: Complex64, c: Complex64) -> f64 {
    let a2 = a.norm_sqr();
    0.25 + 10.0 / 54.0 * a.re
        + 7.0 / 54.0 * (a * a).re
        + 12.0 / 54.0 * a2
        + 2.0 / 54.0 * b.norm_sqr()
        + 10.0 / 54.0 * a2 * a.re
        - 10.0 / 54.0 * (a.conj() * b * c).re
        - 7.0 / 54.0 * (b * c).re
}

/// Approximate average fidelity from f_1^{N−1}, f_1^N and f_2^{N−1}.
pub fn average_fidelity_approx(f11: Complex64, f1n: Complex64, f2n1: Complex64) -> Result<f64> {
    let s = f11.norm_sqr() + f1n.norm_sqr();
    if s > 1.0 + 1e-9 {
        return Err(Error::Constraint(s));
    }
    Ok(approx_formula(f11, f1n, f2n1))
}

/// Normalised complex Gaussian vector: a Haar-random pure state.
pub fn haar_state<R: Rng + ?Sized>(rng: &mut R) -> [Complex64; 4] {
    loop {
        let mut v = [Complex64::new(0.0, 0.0); 4];
        for z in v.iter_mut() {
            *z = Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
        }
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm > 1e-150 {
            return v.map(|z| z / norm);
        }
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
}

#[derive(Clone, Copy)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn merge(self, o: Moments) -> Moments {
        if self.n == 0.0 {
            return o;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        Moments {
            n,
            mean: self.mean + d * o.n / n,
            m2: self.m2 + o.m2 + d * d * self.n * o.n / n,
        }
    }
}

/// Haar average of an arbitrary per-state fidelity. Sample `i` always comes
/// from chunk `i / 1024` with its own ChaCha stream, and chunks are merged
/// in order, so the result does not depend on the thread count.
pub fn haar_average_with<F>(fidelity: F, samples: usize, seed: u64) -> McEstimate
where
    F: Fn(&[Complex64; 4]) -> f64 + Sync,
{
    let chunks = samples.div_ceil(MC_CHUNK);
    let parts: Vec<Moments> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(seed, c as u64);
            let count = MC_CHUNK.min(samples - c * MC_CHUNK);
            let mut m = Moments {
                n: 0.0,
                mean: 0.0,
                m2: 0.0,
            };
            for _ in 0..count {
                let f = fidelity(&haar_state(&mut rng));
                m.n += 1.0;
                let d = f - m.mean;
                m.mean += d / m.n;
                m.m2 += d * (f - m.mean);
            }
            m
        })
        .collect();
    let total = parts.into_iter().fold(
        Moments {
            n: 0.0,
            mean: 0.0,
            m2: 0.0,
        },
        Moments::merge,
    );
    let var = if total.n > 1.0 {
        total.m2 / (total.n - 1.0)
    } else {
        0.0
    };
    McEstimate {
        mean: total.mean,
        stderr: (var / total.n).sqrt(),
        samples,
    }
}

/// Monte-Carlo Haar average of the state fidelity computed by the sector
/// oracle at time `t`.
pub fn haar_average_mc(spec: &ChainSpec, t: f64, samples: usize, seed: u64) -> Result<McEstimate> {
    let oracle = SectorOracle::new(spec)?;
    haar_average_oracle(&oracle, t, samples, seed)
}

pub fn haar_average_oracle(
    oracle: &SectorOracle,
    t: f64,
    samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    if samples < 100 {
        return Err(Error::Parameter {
            name: "samples",
            reason: format!("{samples} < 100"),
        });
    }
    let kernel = oracle.kernel(t);
    Ok(haar_average_with(|psi| kernel.fidelity(psi), samples, seed))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstCase {
    pub state: TwoQubitState,
    pub f_min: f64,
    /// Minimum over the certification sample.
    pub haar_min: f64,
    pub certified: bool,
    /// Set when no restart met the tolerance within its budget.
    pub budget_exceeded: bool,
    pub restarts: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct WorstCaseOptions {
    pub restarts: usize,
    pub seed: u64,
    pub ftol: f64,
    pub max_evals: usize,
    pub certify_samples: usize,
}

impl Default for WorstCaseOptions {
    fn default() -> Self {
        WorstCaseOptions {
            restarts: 16,
            seed: 0,
            ftol: 1e-8,
            max_evals: 6000,
            certify_samples: 10_000,
        }
    }
}

/// Chart around basis index `j`: ψ_j = 1, the other three amplitudes free.
fn chart_state(j: usize, x: &[f64]) -> [Complex64; 4] {
    let mut v = [Complex64::new(0.0, 0.0); 4];
    let mut p = 0;
    for (i, z) in v.iter_mut().enumerate() {
        if i == j {
            *z = Complex64::new(1.0, 0.0);
        } else {
            *z = Complex64::new(x[2 * p], x[2 * p + 1]);
            p += 1;
        }
    }
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.map(|z| z / norm)
}

fn chart_coords(psi: &[Complex64; 4]) -> (usize, Vec<f64>) {
    let j = (0..4)
        .max_by(|&a, &b| psi[a].norm_sqr().total_cmp(&psi[b].norm_sqr()))
        .unwrap_or(0);
    let mut x = Vec::with_capacity(6);
    for (i, z) in psi.iter().enumerate() {
        if i != j {
            let r = z / psi[j];
            x.push(r.re);
            x.push(r.im);
        }
    }
    (j, x)
}

fn descend(
    kernel: &FidelityKernel,
    start: &[Complex64; 4],
    opts: &WorstCaseOptions,
) -> ([Complex64; 4], f64, bool) {
    let (j, x0) = chart_coords(start);
    let step: Vec<f64> = x0.iter().map(|v| 0.25f64.max(0.2 * v.abs())).collect();
    let obj = |x: &[f64]| kernel.fidelity(&chart_state(j, x));
    let first = nelder_mead(obj, &x0, &step, opts.ftol, opts.max_evals);
    // a second pass from the converged point guards against simplex collapse
    let psi = chart_state(j, &first.x);
    let (j2, x1) = chart_coords(&psi);
    let step2: Vec<f64> = x1.iter().map(|v| 0.05f64.max(0.05 * v.abs())).collect();
    let obj2 = |x: &[f64]| kernel.fidelity(&chart_state(j2, x));
    let second = nelder_mead(obj2, &x1, &step2, opts.ftol, opts.max_evals);
    if second.value <= first.value {
        (chart_state(j2, &second.x), second.value, second.converged)
    } else {
        (psi, first.value, first.converged)
    }
}

pub fn worst_case_kernel(kernel: &FidelityKernel, opts: &WorstCaseOptions) -> WorstCase {
    let runs: Vec<([Complex64; 4], f64, bool)> = (0..opts.restarts.max(1))
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(opts.seed, WORST_CASE_STREAM + r as u64);
            descend(kernel, &haar_state(&mut rng), opts)
        })
        .collect();
    let converged_any = runs.iter().any(|r| r.2);
    let (mut best, mut f_min) = runs
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|r| (r.0, r.1))
        .expect("at least one restart");

    let mut rng = stream_rng(opts.seed, CERTIFY_STREAM);
    let mut haar_min = f64::INFINITY;
    let mut haar_arg = best;
    for _ in 0..opts.certify_samples {
        let psi = haar_state(&mut rng);
        let f = kernel.fidelity(&psi);
        if f < haar_min {
            haar_min = f;
            haar_arg = psi;
        }
    }
    if haar_min < f_min {
        let (psi, f, _) = descend(kernel, &haar_arg, opts);
        if f < f_min {
            best = psi;
            f_min = f;
        }
    }
    WorstCase {
        state: TwoQubitState::normalized(best).expect("chart states are nonzero"),
        f_min,
        haar_min,
        certified: f_min <= haar_min,
        budget_exceeded: !converged_any,
        restarts: opts.restarts.max(1),
    }
}

pub fn worst_case_fidelity(spec: &ChainSpec, t: f64) -> Result<WorstCase> {
    let oracle = SectorOracle::new(spec)?;
    Ok(worst_case_kernel(
        &oracle.kernel(t),
        &WorstCaseOptions::default(),
    ))
}
