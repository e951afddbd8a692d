//! First-order degenerate perturbation theory for the edge quartet.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::chain::Units;
use crate::error::{Error, Result};
use crate::spectral::{classify_chain, Regime};

fn cubic(x: f64, h: f64) -> f64 {
    -x * x * x - h * x * x + 2.0 * x + h
}

/// Bisection on a sign-changing bracket, down to adjacent floats.
fn bisect(mut lo: f64, mut hi: f64, h: f64) -> f64 {
    let mut flo = cubic(lo, h);
    if flo == 0.0 {
        return lo;
    }
    if cubic(hi, h) == 0.0 {
        return hi;
    }
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = cubic(mid, h);
        if fm == 0.0 {
            return mid;
        }
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    if cubic(lo, h).abs() <= cubic(hi, h).abs() {
        lo
    } else {
        hi
    }
}

/// Roots of −x³ − hx² + 2x + h = 0, descending. For h ≥ 0 they are
/// bracketed by [1, √2], [−1, 0] and [−h−2, −1].
pub fn cubic_roots(h: f64) -> Result<[f64; 3]> {
    if !(h.is_finite() && h >= 0.0) {
        return Err(Error::Parameter {
            name: "h",
            reason: format!("{h} must be finite and >= 0"),
        });
    }
    let brackets = [(1.0, 2f64.sqrt()), (-1.0, 0.0), (-h - 2.0, -1.0)];
    let mut roots = [0.0; 3];
    for (r, &(lo, hi)) in roots.iter_mut().zip(&brackets) {
        let (flo, fhi) = (cubic(lo, h), cubic(hi, h));
        if flo * fhi > 0.0 {
            return Err(Error::ComplexRoots(h));
        }
        *r = bisect(lo, hi, h);
    }
    Ok(roots)
}

pub fn cubic_residual(x: f64, h: f64) -> f64 {
    cubic(x, h).abs()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbativeSpectrum {
    pub n: usize,
    pub h: f64,
    pub roots: [f64; 3],
    pub alphas: [f64; 2],
    pub betas: [f64; 2],
    pub gammas: [f64; 2],
    /// (λ₁⁻, λ₁⁺, λ₂⁻, λ₂⁺)
    pub lambdas: [f64; 4],
    /// ε_{q1..q4} = (λ₁⁻, λ₁⁺, λ₂⁺, λ₂⁻)
    pub eps_q: [f64; 4],
}

impl PerturbativeSpectrum {
    /// Quartet energies of the chain matrix, ascending. The secular cubic
    /// carries the barrier with the opposite sign to the chain matrix, and
    /// a bipartite spectrum flips under h → −h, so the chain energies are
    /// −λ (Pauli units; halved in fermion units).
    pub fn chain_energies(&self, units: Units) -> [f64; 4] {
        let s = units.energy_scale() / 2.0;
        let mut e = self.lambdas.map(|l| -l * s);
        e.sort_by(f64::total_cmp);
        e
    }
}

pub fn perturbative_energies(n: usize, h: f64) -> Result<PerturbativeSpectrum> {
    if n < 7 {
        return Err(Error::InvalidLength(n));
    }
    let roots = cubic_roots(h)?;
    let mut alphas = [0.0; 2];
    let mut betas = [0.0; 2];
    let mut gammas = [0.0; 2];
    let mut lambdas = [0.0; 4];
    let m = (n - 5) as f64;
    for i in 0..2 {
        let z = roots[i];
        betas[i] = h + z;
        alphas[i] = z * z + h * z - 1.0;
        gammas[i] = (2.0 * (alphas[i] * alphas[i] + betas[i] * betas[i] + 1.0)).powf(-0.5);
        for (slot, sign) in [(0, -1.0), (1, 1.0)] {
            let sum: f64 = (1..=n - 6)
                .map(|k| {
                    let kf = k as f64;
                    let num = (1.0 + sign * (kf * PI).cos()) * (kf * PI / m).sin();
                    num * num / (z + 2.0 * (kf * PI / m).cos())
                })
                .sum();
            lambdas[2 * i + slot] = 2.0 * (z + gammas[i] * gammas[i] / m * sum);
        }
    }
    let eps_q = [lambdas[0], lambdas[1], lambdas[3], lambdas[2]];
    Ok(PerturbativeSpectrum {
        n,
        h,
        roots,
        alphas,
        betas,
        gammas,
        lambdas,
        eps_q,
    })
}

/// Frequencies built from quartet energies ε_{q1..q4}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RabiFrequencies {
    pub omega0_plus: f64,
    pub omega0_minus: f64,
    pub omega1_plus: f64,
    pub omega1_minus: f64,
    /// Signed (ω₁₄⁺ + ω₂₃⁺)/2, (ω₁₄⁻ + ω₂₃⁻)/2, (ω₁₄⁺ − ω₂₃⁺)/2, (ω₁₄⁻ − ω₂₃⁻)/2.
    pub signed: [f64; 4],
    pub eps_q: [f64; 4],
}

impl RabiFrequencies {
    /// ω_ij^± = (ε_{qi} ± ε_{qj})/2 with 1-based i, j.
    pub fn pair(&self, i: usize, j: usize, plus: bool) -> f64 {
        let (a, b) = (self.eps_q[i - 1], self.eps_q[j - 1]);
        if plus {
            (a + b) / 2.0
        } else {
            (a - b) / 2.0
        }
    }

    /// Half-period of the slowest relevant beat, π/(2ω₁⁻).
    pub fn t1(&self) -> f64 {
        FRAC_PI_2 / self.omega1_minus
    }
}

pub fn rabi_frequencies(eps_q: [f64; 4]) -> RabiFrequencies {
    let w = |i: usize, j: usize, s: f64| (eps_q[i] + s * eps_q[j]) / 2.0;
    let (w14p, w23p) = (w(0, 3, 1.0), w(1, 2, 1.0));
    let (w14m, w23m) = (w(0, 3, -1.0), w(1, 2, -1.0));
    let signed = [
        (w14p + w23p) / 2.0,
        (w14m + w23m) / 2.0,
        (w14p - w23p) / 2.0,
        (w14m - w23m) / 2.0,
    ];
    RabiFrequencies {
        omega0_plus: signed[0].abs(),
        omega0_minus: signed[1].abs(),
        omega1_plus: signed[2].abs(),
        omega1_minus: signed[3].abs(),
        signed,
        eps_q,
    }
}

/// Closed-form transfer time (π/2)h² + (−1)^{N mod 3}(N mod 2)(π/2)h in
/// Pauli units.
pub fn transfer_time_estimate(n: usize, h: f64) -> Result<f64> {
    if classify_chain(n) == Regime::QuasiRabi {
        return Err(Error::RegimeMismatch {
            expected: "rabi",
            found: "quasi-rabi",
        });
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Parameter {
            name: "h",
            reason: format!("{h} must be positive"),
        });
    }
    let sign = if (n % 3) % 2 == 0 { 1.0 } else { -1.0 };
    Ok(FRAC_PI_2 * h * h + sign * (n % 2) as f64 * FRAC_PI_2 * h)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roots_at_zero_field() {
        let r = cubic_roots(0.0).unwrap();
        let s = 2f64.sqrt();
        assert!((r[0] - s).abs() < 1e-15 && r[1].abs() < 1e-15 && (r[2] + s).abs() < 1e-15);
    }

    #[test]
    fn roots_are_certified() {
        for h in [0.5, 10.0, 100.0, 4000.0] {
            let r = cubic_roots(h).unwrap();
            assert!(r[0] > r[1] && r[1] > r[2]);
            for x in r {
                assert!(
                    cubic_residual(x, h) <= 1e-9 * h.powi(3).max(1.0),
                    "h={h} x={x}"
                );
            }
        }
        let r = cubic_roots(100.0).unwrap();
        for x in r {
            assert!(
                cubic_residual(x, 100.0) < 1e-9,
                "{}",
                cubic_residual(x, 100.0)
            );
        }
        assert!(cubic_roots(-1.0).is_err());
    }

    #[test]
    fn gamma_normalisation() {
        let p = perturbative_energies(30, 100.0).unwrap();
        for i in 0..2 {
            let g = p.gammas[i];
            let v = 2.0 * g * g * (p.alphas[i].powi(2) + p.betas[i].powi(2) + 1.0);
            assert!((v - 1.0).abs() < 1e-14);
        }
        assert_eq!(
            p.eps_q,
            [p.lambdas[0], p.lambdas[1], p.lambdas[3], p.lambdas[2]]
        );
    }

    #[test]
    fn alternating_filter_halves_the_sums() {
        // (1 ± cos kπ) is 0 or 2, so each sign keeps every other k
        for k in 1..12 {
            let c = (k as f64 * PI).cos();
            let (plus, minus) = (1.0 + c, 1.0 - c);
            assert!(plus.abs() < 1e-15 || (plus - 2.0).abs() < 1e-15);
            assert!((plus * minus).abs() < 1e-15);
        }
    }

    #[test]
    fn degenerate_input_frequencies() {
        let f = rabi_frequencies([1.5; 4]);
        assert_eq!(f.omega0_minus, 0.0);
        assert_eq!(f.omega1_minus, 0.0);
        assert_eq!(f.omega1_plus, 0.0);
        assert_eq!(f.omega0_plus, 1.5);
        assert_eq!(f.pair(1, 4, true), 1.5);
    }

    #[test]
    fn closed_form_time() {
        let t = transfer_time_estimate(30, 60.0).unwrap();
        assert!((t - FRAC_PI_2 * 3600.0).abs() < 1e-9);
        let t = transfer_time_estimate(31, 60.0).unwrap();
        assert!((t - FRAC_PI_2 * (3600.0 - 60.0)).abs() < 1e-9);
        assert!(transfer_time_estimate(32, 60.0).is_err());
        assert!(perturbative_energies(6, 1.0).is_err());
    }
}
