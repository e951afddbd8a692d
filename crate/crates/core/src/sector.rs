//! Brute-force evolution in the zero-, one- and two-excitation sectors.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, Matrix4, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::amplitudes::{determinant, AmplitudeSet};
use crate::chain::{build_single_particle, ChainSpec, SymTridiag};
use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Lexicographic enumeration of one- and two-excitation configurations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SectorBasis {
    pub n: usize,
    pub two_exc: Vec<(usize, usize)>,
}

impl SectorBasis {
    pub fn new(n: usize) -> Self {
        let mut two_exc = Vec::with_capacity(n * (n - 1) / 2);
        for a in 1..=n {
            for b in a + 1..=n {
                two_exc.push((a, b));
            }
        }
        SectorBasis { n, two_exc }
    }

    pub fn two_dim(&self) -> usize {
        self.two_exc.len()
    }

    /// Index of |a,b⟩ (1-based, a < b).
    pub fn pair_index(&self, a: usize, b: usize) -> usize {
        debug_assert!(a < b && b <= self.n);
        let a0 = a - 1;
        a0 * (2 * self.n - a0 - 1) / 2 + (b - a - 1)
    }
}

/// α|00⟩ + β|01⟩ + γ|10⟩ + δ|11⟩; the first slot is sender s1, the second s2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoQubitState {
    pub amplitudes: [Complex64; 4],
}

impl TwoQubitState {
    pub fn new(amplitudes: [Complex64; 4]) -> Result<Self> {
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::Parameter {
                name: "state",
                reason: format!("squared norm {norm} differs from 1"),
            });
        }
        Ok(TwoQubitState { amplitudes })
    }

    /// Rescales any nonzero vector to unit norm.
    pub fn normalized(amplitudes: [Complex64; 4]) -> Result<Self> {
        let norm = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::Parameter {
                name: "state",
                reason: "zero or non-finite vector".into(),
            });
        }
        Ok(TwoQubitState {
            amplitudes: amplitudes.map(|a| a / norm),
        })
    }

    /// Computational basis state, index 0..4 for |00⟩, |01⟩, |10⟩, |11⟩.
    pub fn basis(index: usize) -> Self {
        let mut amplitudes = [ZERO; 4];
        amplitudes[index] = ONE;
        TwoQubitState { amplitudes }
    }

    pub fn alpha(&self) -> Complex64 {
        self.amplitudes[0]
    }
    pub fn beta(&self) -> Complex64 {
        self.amplitudes[1]
    }
    pub fn gamma(&self) -> Complex64 {
        self.amplitudes[2]
    }
    pub fn delta(&self) -> Complex64 {
        self.amplitudes[3]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolvedState {
    pub c0: Complex64,
    pub c1: Vec<Complex64>,
    pub c2: Vec<Complex64>,
}

impl EvolvedState {
    pub fn norm_sqr(&self) -> f64 {
        self.c0.norm_sqr()
            + self.c1.iter().map(|c| c.norm_sqr()).sum::<f64>()
            + self.c2.iter().map(|c| c.norm_sqr()).sum::<f64>()
    }
}

pub struct SectorHamiltonians {
    pub basis: SectorBasis,
    pub h1: DMatrix<f64>,
    pub h2: DMatrix<f64>,
}

pub fn build_sector_hamiltonians(spec: &ChainSpec) -> Result<SectorHamiltonians> {
    let m = build_single_particle(spec)?;
    let n = spec.n;
    let (basis, h2) = two_excitation_matrix(&m);
    let h1 = DMatrix::from_fn(n, n, |i, j| m.element(i, j));
    Ok(SectorHamiltonians { basis, h1, h2 })
}

/// Hard-core two-particle Hamiltonian generated by a nearest-neighbour
/// single-particle matrix.
pub fn two_excitation_matrix(m: &SymTridiag) -> (SectorBasis, DMatrix<f64>) {
    let n = m.dim();
    let basis = SectorBasis::new(n);
    let d = basis.two_dim();
    let mut h2 = DMatrix::zeros(d, d);
    for (idx, &(a, b)) in basis.two_exc.iter().enumerate() {
        h2[(idx, idx)] = m.diagonal[a - 1] + m.diagonal[b - 1];
        // hop the left particle, then the right one; never onto the other
        let moves = [(a - 1, b, a), (a + 1, b, a), (a, b - 1, b), (a, b + 1, b)];
        for (na, nb, from) in moves {
            if na == 0 || nb > n || na >= nb {
                continue;
            }
            let to = if from == a { na } else { nb };
            h2[(basis.pair_index(na, nb), idx)] = m.off_diagonal[from.min(to) - 1];
        }
    }
    (basis, h2)
}

/// Evolved images of the three sender excitations: e_{s1}, e_{s2} in the
/// one-excitation sector and e_{(s1,s2)} in the two-excitation sector.
#[derive(Debug, Clone)]
pub struct SenderEvolution {
    pub t: f64,
    pub from_s1: Vec<Complex64>,
    pub from_s2: Vec<Complex64>,
    pub from_pair: Vec<Complex64>,
}

impl SenderEvolution {
    /// Same object built from free-fermion amplitudes (determinants).
    pub fn from_amplitudes(spec: &ChainSpec, amp: &AmplitudeSet) -> Self {
        let (s1, s2) = spec.senders;
        let basis = SectorBasis::new(spec.n);
        SenderEvolution {
            t: amp.t,
            from_s1: amp.row(s1).to_vec(),
            from_s2: amp.row(s2).to_vec(),
            from_pair: basis
                .two_exc
                .iter()
                .map(|&(x, y)| determinant(amp, s1, s2, x, y))
                .collect(),
        }
    }
}

/// Dense eigendecompositions of H1 and H2, computed once per spec.
pub struct SectorOracle {
    pub spec: ChainSpec,
    pub basis: SectorBasis,
    e1: DVector<f64>,
    v1: DMatrix<f64>,
    e2: DVector<f64>,
    v2: DMatrix<f64>,
}

impl SectorOracle {
    pub fn new(spec: &ChainSpec) -> Result<Self> {
        let hs = build_sector_hamiltonians(spec)?;
        let s1 = SymmetricEigen::new(hs.h1);
        let s2 = SymmetricEigen::new(hs.h2);
        Ok(SectorOracle {
            spec: spec.clone(),
            basis: hs.basis,
            e1: s1.eigenvalues,
            v1: s1.eigenvectors,
            e2: s2.eigenvalues,
            v2: s2.eigenvectors,
        })
    }

    pub fn one_particle_energies(&self) -> Vec<f64> {
        let mut e: Vec<f64> = self.e1.iter().copied().collect();
        e.sort_by(f64::total_cmp);
        e
    }

    pub fn two_particle_energies(&self) -> Vec<f64> {
        let mut e: Vec<f64> = self.e2.iter().copied().collect();
        e.sort_by(f64::total_cmp);
        e
    }

    fn apply(e: &DVector<f64>, v: &DMatrix<f64>, col: usize, t: f64) -> Vec<Complex64> {
        let dim = e.len();
        let coeff: Vec<Complex64> = (0..dim)
            .map(|k| {
                let (s, c) = (e[k] * t).sin_cos();
                Complex64::new(c, -s) * v[(col, k)]
            })
            .collect();
        (0..dim)
            .map(|i| {
                let mut acc = ZERO;
                for (k, c) in coeff.iter().enumerate() {
                    acc += c * v[(i, k)];
                }
                acc
            })
            .collect()
    }

    /// ⟨m| e^{−iH₁t} |n⟩ with 1-based sites.
    pub fn one_particle_column(&self, n: usize, t: f64) -> Vec<Complex64> {
        Self::apply(&self.e1, &self.v1, n - 1, t)
    }

    /// e^{−iH₂t} |a,b⟩ over the two-excitation basis.
    pub fn two_particle_column(&self, a: usize, b: usize, t: f64) -> Vec<Complex64> {
        Self::apply(&self.e2, &self.v2, self.basis.pair_index(a, b), t)
    }

    pub fn sender_evolution(&self, t: f64) -> SenderEvolution {
        let (s1, s2) = self.spec.senders;
        SenderEvolution {
            t,
            from_s1: self.one_particle_column(s1, t),
            from_s2: self.one_particle_column(s2, t),
            from_pair: self.two_particle_column(s1, s2, t),
        }
    }

    pub fn evolve(&self, state: &TwoQubitState, t: f64) -> EvolvedState {
        combine(&self.sender_evolution(t), state)
    }

    pub fn state_fidelity(&self, state: &TwoQubitState, t: f64) -> f64 {
        let es = self.evolve(state, t);
        fidelity_from_rho(&reduced_receiver_state(&self.spec, &es), state)
    }

    pub fn kernel(&self, t: f64) -> FidelityKernel {
        FidelityKernel::new(&self.spec, &self.sender_evolution(t))
    }
}

fn combine(ev: &SenderEvolution, state: &TwoQubitState) -> EvolvedState {
    let (b, g, d) = (state.beta(), state.gamma(), state.delta());
    EvolvedState {
        c0: state.alpha(),
        c1: ev
            .from_s1
            .iter()
            .zip(&ev.from_s2)
            .map(|(u1, u2)| b * u2 + g * u1)
            .collect(),
        c2: ev.from_pair.iter().map(|w| d * w).collect(),
    }
}

pub fn evolve(spec: &ChainSpec, state: &TwoQubitState, t: f64) -> Result<EvolvedState> {
    Ok(SectorOracle::new(spec)?.evolve(state, t))
}

pub fn state_fidelity(spec: &ChainSpec, state: &TwoQubitState, t: f64) -> Result<f64> {
    Ok(SectorOracle::new(spec)?.state_fidelity(state, t))
}

/// Environment configuration key: no excitation, one site, or a pair.
type EnvKey = (usize, usize);

/// Receiver-qubit index of a site: 2 for qubit A, 1 for qubit B.
fn receiver_bit(spec: &ChainSpec, site: usize) -> Option<usize> {
    let (ra, rb) = spec.readout_sites();
    if site == ra {
        Some(2)
    } else if site == rb {
        Some(1)
    } else {
        None
    }
}

/// Splits a one-excitation configuration into (environment, receiver index).
fn split_single(spec: &ChainSpec, x: usize) -> (EnvKey, usize) {
    match receiver_bit(spec, x) {
        Some(q) => ((0, 0), q),
        None => ((x, 0), 0),
    }
}

fn split_pair(spec: &ChainSpec, x: usize, y: usize) -> (EnvKey, usize) {
    match (receiver_bit(spec, x), receiver_bit(spec, y)) {
        (Some(a), Some(b)) => ((0, 0), a + b),
        (Some(a), None) => ((y, 0), a),
        (None, Some(b)) => ((x, 0), b),
        (None, None) => ((x, y), 0),
    }
}

/// ρ_R over receiver qubits (A, B) in the basis |00⟩, |01⟩, |10⟩, |11⟩.
pub fn reduced_receiver_state(spec: &ChainSpec, es: &EvolvedState) -> Matrix4<Complex64> {
    let basis = SectorBasis::new(spec.n);
    let mut groups: BTreeMap<EnvKey, [Complex64; 4]> = BTreeMap::new();
    groups.entry((0, 0)).or_insert([ZERO; 4])[0] += es.c0;
    for (i, c) in es.c1.iter().enumerate() {
        let (env, q) = split_single(spec, i + 1);
        groups.entry(env).or_insert([ZERO; 4])[q] += c;
    }
    for (&(x, y), c) in basis.two_exc.iter().zip(&es.c2) {
        let (env, q) = split_pair(spec, x, y);
        groups.entry(env).or_insert([ZERO; 4])[q] += c;
    }
    let mut rho = Matrix4::zeros();
    for v in groups.values() {
        for i in 0..4 {
            for j in 0..4 {
                rho[(i, j)] += v[i] * v[j].conj();
            }
        }
    }
    rho
}

pub fn fidelity_from_rho(rho: &Matrix4<Complex64>, state: &TwoQubitState) -> f64 {
    let psi = &state.amplitudes;
    let mut acc = ZERO;
    for i in 0..4 {
        for j in 0..4 {
            acc += psi[i].conj() * rho[(i, j)] * psi[j];
        }
    }
    acc.re
}

/// Quadratic form giving the state fidelity of any input at a fixed time:
/// F(ψ) = x† K x with x_{qp} = ψ_q* ψ_p.
#[derive(Debug, Clone)]
pub struct FidelityKernel {
    pub t: f64,
    k: [[Complex64; 16]; 16],
}

impl FidelityKernel {
    pub fn new(spec: &ChainSpec, ev: &SenderEvolution) -> Self {
        let basis = SectorBasis::new(spec.n);
        // maps[env][q][p]: amplitude to receiver config q from input p
        let mut maps: BTreeMap<EnvKey, [[Complex64; 4]; 4]> = BTreeMap::new();
        maps.entry((0, 0)).or_insert([[ZERO; 4]; 4])[0][0] += ONE;
        for x in 1..=spec.n {
            let (env, q) = split_single(spec, x);
            let a = maps.entry(env).or_insert([[ZERO; 4]; 4]);
            a[q][1] += ev.from_s2[x - 1];
            a[q][2] += ev.from_s1[x - 1];
        }
        for (&(x, y), w) in basis.two_exc.iter().zip(&ev.from_pair) {
            let (env, q) = split_pair(spec, x, y);
            maps.entry(env).or_insert([[ZERO; 4]; 4])[q][3] += w;
        }
        let mut k = [[ZERO; 16]; 16];
        for a in maps.values() {
            let flat: Vec<Complex64> = (0..16).map(|i| a[i / 4][i % 4]).collect();
            for i in 0..16 {
                if flat[i] == ZERO {
                    continue;
                }
                let ci = flat[i].conj();
                for j in 0..16 {
                    k[i][j] += ci * flat[j];
                }
            }
        }
        FidelityKernel { t: ev.t, k }
    }

    #[inline]
    pub fn fidelity(&self, psi: &[Complex64; 4]) -> f64 {
        let mut x = [ZERO; 16];
        for q in 0..4 {
            let c = psi[q].conj();
            for p in 0..4 {
                x[q * 4 + p] = c * psi[p];
            }
        }
        let mut acc = 0.0;
        for i in 0..16 {
            let mut row = ZERO;
            for j in 0..16 {
                row += self.k[i][j] * x[j];
            }
            acc += (x[i].conj() * row).re;
        }
        acc
    }
}
