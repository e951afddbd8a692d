//! Tridiagonal eigensolver and localization diagnostics.

use serde::{Deserialize, Serialize};

use crate::chain::SymTridiag;
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 50;
const SIGN_THRESHOLD: f64 = 1e-12;

/// Eigenvalues ascending and eigenvectors stored row-wise: `a(k, n)` is the
/// amplitude of eigenstate `k` on site `n` (both 0-based here).
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralData {
    pub eigenvalues: Vec<f64>,
    vectors: Vec<f64>,
    n: usize,
}

impl SpectralData {
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn a(&self, k: usize, site: usize) -> f64 {
        self.vectors[k * self.n + site]
    }

    pub fn eigenvector(&self, k: usize) -> &[f64] {
        &self.vectors[k * self.n..(k + 1) * self.n]
    }

    /// Column of amplitudes on one site across all eigenstates.
    pub fn site_column(&self, site: usize) -> Vec<f64> {
        (0..self.n).map(|k| self.a(k, site)).collect()
    }
}

/// Implicit-shift QL with Wilkinson-style shifts. Eigenvalues ascending,
/// each eigenvector's first component above 1e-12 in magnitude is positive.
pub fn diagonalize(m: &SymTridiag) -> Result<SpectralData> {
    let n = m.dim();
    let mut d = m.diagonal.clone();
    let mut e = vec![0.0; n];
    e[..n - 1].copy_from_slice(&m.off_diagonal);
    // z[row * n + col]: column col is the eigenvector for d[col]
    let mut z = vec![0.0; n * n];
    for i in 0..n {
        z[i * n + i] = 1.0;
    }

    for l in 0..n {
        let mut sweeps = 0;
        loop {
            let mut mm = l;
            while mm + 1 < n {
                let dd = d[mm].abs() + d[mm + 1].abs();
                if e[mm].abs() <= f64::EPSILON * dd {
                    break;
                }
                mm += 1;
            }
            if mm == l {
                break;
            }
            sweeps += 1;
            if sweeps > MAX_SWEEPS {
                return Err(Error::NoConvergence {
                    index: l,
                    residual: e[l].abs(),
                });
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[mm] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut underflow = false;
            let mut i = mm;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[mm] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for k in 0..n {
                    let row = k * n;
                    let f = z[row + i + 1];
                    z[row + i + 1] = s * z[row + i] + c * f;
                    z[row + i] = c * z[row + i] - s * f;
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[mm] = 0.0;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]).then(a.cmp(&b)));

    let mut vectors = vec![0.0; n * n];
    let mut eigenvalues = Vec::with_capacity(n);
    for (k, &col) in order.iter().enumerate() {
        eigenvalues.push(d[col]);
        let sign = (0..n)
            .map(|row| z[row * n + col])
            .find(|v| v.abs() > SIGN_THRESHOLD)
            .map_or(1.0, |v| v.signum());
        for row in 0..n {
            vectors[k * n + row] = sign * z[row * n + col];
        }
    }
    Ok(SpectralData {
        eigenvalues,
        vectors,
        n,
    })
}

/// Largest residual ‖M v_k − ε_k v_k‖∞ / max(1, |ε_k|) over all k.
pub fn max_scaled_residual(m: &SymTridiag, sd: &SpectralData) -> f64 {
    (0..sd.n)
        .map(|k| {
            let v = sd.eigenvector(k);
            let mv = m.apply(v);
            let eps = sd.eigenvalues[k];
            let r = mv
                .iter()
                .zip(v)
                .map(|(a, b)| (a - eps * b).abs())
                .fold(0.0, f64::max);
            r / eps.abs().max(1.0)
        })
        .fold(0.0, f64::max)
}

/// Weight Σ_{n∈sites} a_{kn}² of every eigenstate on a set of 1-based sites.
pub fn localization_profile(sd: &SpectralData, sites: &[usize]) -> Result<Vec<f64>> {
    if sites.is_empty() {
        return Err(Error::Parameter {
            name: "sites",
            reason: "empty site set".into(),
        });
    }
    if let Some(s) = sites.iter().find(|&&s| s == 0 || s > sd.n) {
        return Err(Error::Geometry(format!("site {s} outside [1, {}]", sd.n)));
    }
    let mut uniq = sites.to_vec();
    uniq.sort_unstable();
    uniq.dedup();
    Ok((0..sd.n)
        .map(|k| uniq.iter().map(|&s| sd.a(k, s - 1).powi(2)).sum())
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Rabi,
    QuasiRabi,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Rabi => "rabi",
            Regime::QuasiRabi => "quasi-rabi",
        }
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Chains with N = 3n−1 host two extra edge states.
pub fn classify_chain(n: usize) -> Regime {
    if n % 3 == 2 {
        Regime::QuasiRabi
    } else {
        Regime::Rabi
    }
}

/// 1-based indices (in ascending energy order) of the four edge-localized
/// eigenstates.
pub fn localized_indices(n: usize) -> [usize; 4] {
    let q = n / 3;
    [q - 1, q, n - q - 1, n - q]
}

/// The two extended edge states present when N = 3n−1.
pub fn extended_indices(n: usize) -> Option<[usize; 2]> {
    (classify_chain(n) == Regime::QuasiRabi).then(|| {
        let q = n / 3;
        [q + 1, n - q - 2]
    })
}

/// All states taking part in the transfer, ascending.
pub fn transfer_indices(n: usize) -> Vec<usize> {
    let mut idx = localized_indices(n).to_vec();
    if let Some(ext) = extended_indices(n) {
        idx.extend(ext);
    }
    idx.sort_unstable();
    idx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{build_single_particle, ChainSpec};

    #[test]
    fn two_by_two() {
        let m = SymTridiag::new(vec![0.0, 0.0], vec![-1.0]).unwrap();
        let sd = diagonalize(&m).unwrap();
        assert!((sd.eigenvalues[0] + 1.0).abs() < 1e-15);
        assert!((sd.eigenvalues[1] - 1.0).abs() < 1e-15);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((sd.a(0, 0) - r).abs() < 1e-15 && (sd.a(0, 1) - r).abs() < 1e-15);
        assert!((sd.a(1, 0) - r).abs() < 1e-15 && (sd.a(1, 1) + r).abs() < 1e-15);
    }

    #[test]
    fn one_by_one() {
        let m = SymTridiag::new(vec![4.5], vec![]).unwrap();
        let sd = diagonalize(&m).unwrap();
        assert_eq!(sd.eigenvalues, vec![4.5]);
        assert_eq!(sd.a(0, 0), 1.0);
    }

    #[test]
    fn localized_index_rule() {
        assert_eq!(localized_indices(46), [14, 15, 30, 31]);
        assert_eq!(localized_indices(6), [1, 2, 3, 4]);
        assert_eq!(localized_indices(50), [15, 16, 33, 34]);
        assert_eq!(extended_indices(50), Some([17, 32]));
        assert_eq!(extended_indices(46), None);
        assert_eq!(transfer_indices(50), vec![15, 16, 17, 32, 33, 34]);
    }

    #[test]
    fn regimes() {
        assert_eq!(classify_chain(46), Regime::Rabi);
        assert_eq!(classify_chain(50), Regime::QuasiRabi);
        assert_eq!(classify_chain(29), Regime::QuasiRabi);
        assert_eq!(Regime::QuasiRabi.to_string(), "quasi-rabi");
    }

    #[test]
    fn completeness_on_two_sites() {
        let m = SymTridiag::new(vec![0.0, 0.0], vec![-1.0]).unwrap();
        let sd = diagonalize(&m).unwrap();
        let p = localization_profile(&sd, &[1, 2]).unwrap();
        assert!(p.iter().all(|w| (w - 1.0).abs() < 1e-15));
        assert!(localization_profile(&sd, &[]).is_err());
        assert!(localization_profile(&sd, &[3]).is_err());
    }

    #[test]
    fn quartet_on_edges_n46() {
        let spec = ChainSpec::new(46, 100.0).unwrap();
        let sd = diagonalize(&build_single_particle(&spec).unwrap()).unwrap();
        let p = localization_profile(&sd, &[1, 2, 45, 46]).unwrap();
        for k in localized_indices(46) {
            assert!(p[k - 1] > 0.99, "k={k} weight {}", p[k - 1]);
        }
    }

    #[test]
    fn extended_states_n50() {
        let spec = ChainSpec::new(50, 100.0).unwrap();
        let sd = diagonalize(&build_single_particle(&spec).unwrap()).unwrap();
        let p = localization_profile(&sd, &[1, 2, 49, 50]).unwrap();
        assert_eq!(extended_indices(50), Some([17, 32]));
        // The two weakly edge-weighted states sit at k and N+1-k.
        for k in [17, 34] {
            assert!(
                p[k - 1] > 0.01 && p[k - 1] < 0.5,
                "k={k} weight {}",
                p[k - 1]
            );
        }
        assert!(p[31] > 0.5);
        let mut six = transfer_indices(50);
        six.sort_unstable();
        assert_eq!(six, vec![15, 16, 17, 32, 33, 34]);
    }

    #[test]
    fn residual_and_sign_convention() {
        let spec = ChainSpec::new(31, 250.0).unwrap();
        let m = build_single_particle(&spec).unwrap();
        let sd = diagonalize(&m).unwrap();
        assert!(max_scaled_residual(&m, &sd) <= 1e-10);
        for k in 0..sd.dim() {
            let first = sd
                .eigenvector(k)
                .iter()
                .find(|v| v.abs() > SIGN_THRESHOLD)
                .unwrap();
            assert!(*first > 0.0);
        }
        assert!(sd.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
    }
}
