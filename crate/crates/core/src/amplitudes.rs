//! One- and two-particle transfer amplitudes from the single-particle spectrum.

use num_complex::Complex64;

use crate::chain::ChainSpec;
use crate::error::{Error, Result};
use crate::spectral::SpectralData;

/// Steps of the phase recurrence between exact resynchronisations.
const RESYNC: usize = 512;

/// f_n^m(t) = ⟨m| e^{−itH₁} |n⟩ for all site pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeSet {
    pub t: f64,
    n: usize,
    f: Vec<Complex64>,
}

impl AmplitudeSet {
    /// Builds a set from explicit values, row `n` holding f_n^m.
    pub fn from_matrix(t: f64, n: usize, f: Vec<Complex64>) -> Result<Self> {
        if f.len() != n * n {
            return Err(Error::LengthMismatch {
                name: "amplitudes",
                got: f.len(),
                expected: n * n,
            });
        }
        Ok(AmplitudeSet { t, n, f })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// f_n^m with 1-based sites.
    #[inline]
    pub fn f(&self, n: usize, m: usize) -> Complex64 {
        self.f[(n - 1) * self.n + (m - 1)]
    }

    pub fn set(&mut self, n: usize, m: usize, value: Complex64) {
        self.f[(n - 1) * self.n + (m - 1)] = value;
    }

    /// Row of amplitudes out of site `n` (1-based), indexed by 0-based target.
    pub fn row(&self, n: usize) -> &[Complex64] {
        &self.f[(n - 1) * self.n..n * self.n]
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.f
    }

    /// Matrix product (self · other) in the site basis.
    pub fn compose(&self, other: &AmplitudeSet) -> AmplitudeSet {
        let n = self.n;
        let mut out = vec![Complex64::new(0.0, 0.0); n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.f[i * n + k];
                for j in 0..n {
                    out[i * n + j] += a * other.f[k * n + j];
                }
            }
        }
        AmplitudeSet {
            t: self.t + other.t,
            n,
            f: out,
        }
    }
}

/// e^{−iε_k t} for every eigenvalue.
pub fn phases(eigenvalues: &[f64], t: f64) -> Vec<Complex64> {
    eigenvalues
        .iter()
        .map(|&e| {
            let (s, c) = (e * t).sin_cos();
            Complex64::new(c, -s)
        })
        .collect()
}

pub fn propagator(sd: &SpectralData, t: f64) -> AmplitudeSet {
    let n = sd.dim();
    let ph = phases(&sd.eigenvalues, t);
    let mut f = vec![Complex64::new(0.0, 0.0); n * n];
    for (k, p) in ph.iter().enumerate() {
        let v = sd.eigenvector(k);
        for i in 0..n {
            let w = *p * v[i];
            for j in i..n {
                f[i * n + j] += w * v[j];
            }
        }
    }
    for i in 0..n {
        for j in 0..i {
            f[i * n + j] = f[j * n + i];
        }
    }
    AmplitudeSet { t, n, f }
}

/// g_{nm}^{rs} = f_n^r f_m^s − f_n^s f_m^r for ordered pairs n < m, r < s.
pub fn two_particle(
    amp: &AmplitudeSet,
    n: usize,
    m: usize,
    r: usize,
    s: usize,
) -> Result<Complex64> {
    let len = amp.dim();
    if !(n < m && r < s) || n == 0 || r == 0 || m > len || s > len {
        return Err(Error::UnorderedPair(n, m, r, s));
    }
    Ok(determinant(amp, n, m, r, s))
}

#[inline]
pub(crate) fn determinant(amp: &AmplitudeSet, n: usize, m: usize, r: usize, s: usize) -> Complex64 {
    amp.f(n, r) * amp.f(m, s) - amp.f(n, s) * amp.f(m, r)
}

/// Amplitude between unordered two-site configurations {n,m} -> {r,s}.
pub fn pair_amplitude(
    amp: &AmplitudeSet,
    from: (usize, usize),
    to: (usize, usize),
) -> Result<Complex64> {
    let (n, m) = (from.0.min(from.1), from.0.max(from.1));
    let (r, s) = (to.0.min(to.1), to.0.max(to.1));
    two_particle(amp, n, m, r, s)
}

/// Probability that an excitation from either sender sits on a channel site
/// (anything not a sender or receiver).
pub fn channel_occupation(amp: &AmplitudeSet, spec: &ChainSpec) -> f64 {
    let (s1, s2) = spec.senders;
    (1..=spec.n)
        .filter(|&x| x != s1 && x != s2 && !spec.is_receiver(x))
        .map(|x| amp.f(s1, x).norm_sqr() + amp.f(s2, x).norm_sqr())
        .sum()
}

/// Selected amplitudes f_n^m evaluated in O(N) each from precomputed
/// weights a_{kn} a_{km}.
#[derive(Debug, Clone)]
pub struct AmplitudeProbe {
    pub eigenvalues: Vec<f64>,
    pairs: Vec<(usize, usize)>,
    weights: Vec<f64>,
}

impl AmplitudeProbe {
    /// `pairs` are 1-based (from, to) sites.
    pub fn new(sd: &SpectralData, pairs: &[(usize, usize)]) -> Self {
        let n = sd.dim();
        let mut weights = Vec::with_capacity(pairs.len() * n);
        for &(a, b) in pairs {
            weights.extend((0..n).map(|k| sd.a(k, a - 1) * sd.a(k, b - 1)));
        }
        AmplitudeProbe {
            eigenvalues: sd.eigenvalues.clone(),
            pairs: pairs.to_vec(),
            weights,
        }
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn eval_with(&self, phases: &[Complex64], out: &mut [Complex64]) {
        let n = self.eigenvalues.len();
        for (p, slot) in out.iter_mut().enumerate().take(self.pairs.len()) {
            let w = &self.weights[p * n..(p + 1) * n];
            let (mut re, mut im) = (0.0, 0.0);
            for (z, &x) in phases.iter().zip(w) {
                re += z.re * x;
                im += z.im * x;
            }
            *slot = Complex64::new(re, im);
        }
    }

    pub fn eval(&self, t: f64) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.pairs.len()];
        self.eval_with(&phases(&self.eigenvalues, t), &mut out);
        out
    }

    /// Visits t_i = t0 + i·dt for i in 0..count, passing the amplitudes.
    /// Phases advance by recurrence and are recomputed exactly every few
    /// hundred steps, so the drift stays at the level of rounding.
    pub fn for_each_on_grid<F>(&self, t0: f64, dt: f64, count: usize, mut visit: F)
    where
        F: FnMut(usize, f64, &[Complex64]),
    {
        let step = phases(&self.eigenvalues, dt);
        let mut out = vec![Complex64::new(0.0, 0.0); self.pairs.len()];
        let mut ph = Vec::new();
        for i in 0..count {
            let t = t0 + i as f64 * dt;
            if i % RESYNC == 0 {
                ph = phases(&self.eigenvalues, t);
            } else {
                for (p, s) in ph.iter_mut().zip(&step) {
                    *p *= s;
                }
            }
            self.eval_with(&ph, &mut out);
            visit(i, t, &out);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{build_single_particle, SymTridiag, Units};
    use crate::spectral::diagonalize;

    fn sd_for(n: usize, h: f64) -> (ChainSpec, SpectralData) {
        let spec = ChainSpec::new(n, h).unwrap();
        let sd = diagonalize(&build_single_particle(&spec).unwrap()).unwrap();
        (spec, sd)
    }

    #[test]
    fn identity_at_zero() {
        let (_, sd) = sd_for(9, 4.0);
        let amp = propagator(&sd, 0.0);
        for i in 1..=9 {
            for j in 1..=9 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((amp.f(i, j) - want).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn two_site_analytic() {
        let sd = diagonalize(&SymTridiag::new(vec![0.0, 0.0], vec![-1.0]).unwrap()).unwrap();
        for &t in &[0.3, 1.7, 12.0] {
            let amp = propagator(&sd, t);
            assert!((amp.f(1, 2) - Complex64::new(0.0, t.sin())).norm() < 1e-14);
            assert!((amp.f(1, 1) - Complex64::new(t.cos(), 0.0)).norm() < 1e-14);
            let g = two_particle(&amp, 1, 2, 1, 2).unwrap();
            assert!((g - Complex64::new(1.0, 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn determinant_requires_ordered_pairs() {
        let (_, sd) = sd_for(8, 1.0);
        let amp = propagator(&sd, 1.0);
        assert!(two_particle(&amp, 2, 1, 7, 8).is_err());
        assert!(two_particle(&amp, 1, 1, 7, 8).is_err());
        assert!(two_particle(&amp, 1, 2, 8, 9).is_err());
        let g = two_particle(&amp, 1, 2, 7, 8).unwrap();
        assert_eq!(pair_amplitude(&amp, (2, 1), (8, 7)).unwrap(), g);
        // rows exchanged by hand flip the sign
        let swapped = amp.f(2, 7) * amp.f(1, 8) - amp.f(2, 8) * amp.f(1, 7);
        assert!((swapped + g).norm() < 1e-15);
        let g0 = two_particle(&propagator(&sd, 0.0), 3, 5, 3, 5).unwrap();
        assert!((g0 - 1.0).norm() < 1e-14);
    }

    #[test]
    fn occupation_starts_empty() {
        let (spec, sd) = sd_for(12, 30.0);
        assert!(channel_occupation(&propagator(&sd, 0.0), &spec) < 1e-25);
        let occ = channel_occupation(&propagator(&sd, 40.0), &spec);
        assert!((0.0..=2.0).contains(&occ));
    }

    #[test]
    fn probe_matches_full_propagator() {
        let (_, sd) = sd_for(14, 9.0);
        let pairs = [(1, 13), (2, 14), (1, 14), (2, 13)];
        let probe = AmplitudeProbe::new(&sd, &pairs);
        let t = 37.25;
        let amp = propagator(&sd, t);
        for (v, &(a, b)) in probe.eval(t).iter().zip(&pairs) {
            assert!((v - amp.f(a, b)).norm() < 1e-13);
        }
    }

    #[test]
    fn grid_recurrence_tracks_direct_evaluation() {
        let (_, sd) = sd_for(20, 50.0);
        let probe = AmplitudeProbe::new(&sd, &[(1, 19), (2, 20)]);
        let mut worst: f64 = 0.0;
        probe.for_each_on_grid(1000.0, 0.0371, 3000, |_, t, vals| {
            let direct = probe.eval(t);
            for (a, b) in vals.iter().zip(&direct) {
                worst = worst.max((a - b).norm());
            }
        });
        assert!(worst < 1e-10, "drift {worst}");
    }

    #[test]
    fn fermion_units_run_twice_as_slow() {
        let spec = ChainSpec::new(10, 3.0).unwrap();
        let p = diagonalize(&build_single_particle(&spec).unwrap()).unwrap();
        let f =
            diagonalize(&build_single_particle(&spec.with_units(Units::Fermion)).unwrap()).unwrap();
        let a = propagator(&p, 2.5);
        let b = propagator(&f, 5.0);
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            assert!((x - y).norm() < 1e-12);
        }
    }
}
