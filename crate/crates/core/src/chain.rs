//! Chain geometry and the single-particle hopping matrix.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Energy convention for the single-particle matrix.
///
/// `Pauli` is the matrix of the spin Hamiltonian written with Pauli
/// operators, `J (σxσx + σyσy)/2 ... + h σz`: hopping `-2J`, on-site `+2h`.
/// `Fermion` is the bare tight-binding matrix with hopping `-J` and on-site
/// `h`. The two differ by a factor 2 in every energy, so times scale by 1/2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    #[default]
    Pauli,
    Fermion,
}

impl Units {
    pub fn energy_scale(self) -> f64 {
        match self {
            Units::Pauli => 2.0,
            Units::Fermion => 1.0,
        }
    }

    /// Multiplier converting a time in Pauli units into this convention.
    pub fn time_scale(self) -> f64 {
        2.0 / self.energy_scale()
    }
}

/// Which receiver site holds qubit A (the copy of sender `s1`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReceiverOrder {
    /// A -> r1, B -> r2.
    #[default]
    Direct,
    /// A -> r2, B -> r1.
    Mirrored,
}

/// Full problem definition. Sites are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSpec {
    pub n: usize,
    pub barrier_field: f64,
    pub couplings: Vec<f64>,
    pub fields: Vec<f64>,
    pub senders: (usize, usize),
    pub receivers: (usize, usize),
    pub barriers: (usize, usize),
    #[serde(default)]
    pub units: Units,
    #[serde(default)]
    pub receiver_order: ReceiverOrder,
}

impl ChainSpec {
    /// Default geometry: senders (1,2), receivers (N-1,N), barriers (3,N-2)
    /// carrying field `h`, uniform couplings 1.
    pub fn new(n: usize, h: f64) -> Result<Self> {
        if n < 6 {
            return Err(Error::InvalidLength(n));
        }
        let barriers = (3, n - 2);
        let mut fields = vec![0.0; n];
        fields[barriers.0 - 1] = h;
        fields[barriers.1 - 1] = h;
        let spec = ChainSpec {
            n,
            barrier_field: h,
            couplings: vec![1.0; n - 1],
            fields,
            senders: (1, 2),
            receivers: (n - 1, n),
            barriers,
            units: Units::default(),
            receiver_order: ReceiverOrder::default(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_units(mut self, units: Units) -> Self {
        self.units = units;
        self
    }

    pub fn with_receiver_order(mut self, order: ReceiverOrder) -> Self {
        self.receiver_order = order;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n;
        if n < 6 {
            return Err(Error::InvalidLength(n));
        }
        if self.couplings.len() != n - 1 {
            return Err(Error::LengthMismatch {
                name: "couplings",
                got: self.couplings.len(),
                expected: n - 1,
            });
        }
        if self.fields.len() != n {
            return Err(Error::LengthMismatch {
                name: "fields",
                got: self.fields.len(),
                expected: n,
            });
        }
        if let Some(j) = self
            .couplings
            .iter()
            .find(|j| !(j.is_finite() && **j > 0.0))
        {
            return Err(Error::Parameter {
                name: "couplings",
                reason: format!("coupling {j} is not a positive finite number"),
            });
        }
        if self.fields.iter().any(|h| !h.is_finite()) {
            return Err(Error::Parameter {
                name: "fields",
                reason: "non-finite field".into(),
            });
        }
        if !(self.barrier_field.is_finite() && self.barrier_field >= 0.0) {
            return Err(Error::Parameter {
                name: "h",
                reason: format!(
                    "barrier field {} must be finite and >= 0",
                    self.barrier_field
                ),
            });
        }
        let (s1, s2) = self.senders;
        let (r1, r2) = self.receivers;
        let (b1, b2) = self.barriers;
        if s1 >= s2 || r1 >= r2 {
            return Err(Error::Geometry(
                "sender and receiver pairs must be strictly ordered".into(),
            ));
        }
        let roles = [s1, s2, r1, r2];
        if roles
            .iter()
            .chain([b1, b2].iter())
            .any(|&x| x == 0 || x > n)
        {
            return Err(Error::Geometry(format!("site outside [1, {n}]")));
        }
        for i in 0..4 {
            for j in i + 1..4 {
                if roles[i] == roles[j] {
                    return Err(Error::Geometry(format!(
                        "site {} is both sender and receiver",
                        roles[i]
                    )));
                }
            }
        }
        if roles.contains(&b1) || roles.contains(&b2) {
            return Err(Error::Geometry(
                "barrier overlaps a sender or receiver".into(),
            ));
        }
        Ok(())
    }

    /// True when couplings and fields are invariant under n -> N+1-n.
    pub fn is_mirror_symmetric(&self) -> bool {
        let n = self.n;
        (0..n).all(|i| self.fields[i] == self.fields[n - 1 - i])
            && (0..n - 1).all(|l| self.couplings[l] == self.couplings[n - 2 - l])
    }

    /// Receiver sites of qubits (A, B) after applying the ordering switch.
    pub fn readout_sites(&self) -> (usize, usize) {
        match self.receiver_order {
            ReceiverOrder::Direct => self.receivers,
            ReceiverOrder::Mirrored => (self.receivers.1, self.receivers.0),
        }
    }

    pub fn is_receiver(&self, site: usize) -> bool {
        site == self.receivers.0 || site == self.receivers.1
    }

    /// 1-based sites outside the receiver pair, ascending.
    pub fn non_receiver_sites(&self) -> Vec<usize> {
        (1..=self.n).filter(|&s| !self.is_receiver(s)).collect()
    }
}

/// Real symmetric tridiagonal matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiag {
    pub diagonal: Vec<f64>,
    pub off_diagonal: Vec<f64>,
}

impl SymTridiag {
    pub fn new(diagonal: Vec<f64>, off_diagonal: Vec<f64>) -> Result<Self> {
        let n = diagonal.len();
        if n == 0 {
            return Err(Error::Parameter {
                name: "diagonal",
                reason: "empty matrix".into(),
            });
        }
        if off_diagonal.len() + 1 != n {
            return Err(Error::LengthMismatch {
                name: "off_diagonal",
                got: off_diagonal.len(),
                expected: n - 1,
            });
        }
        Ok(SymTridiag {
            diagonal,
            off_diagonal,
        })
    }

    pub fn dim(&self) -> usize {
        self.diagonal.len()
    }

    pub fn shifted(&self, c: f64) -> Self {
        SymTridiag {
            diagonal: self.diagonal.iter().map(|d| d + c).collect(),
            off_diagonal: self.off_diagonal.clone(),
        }
    }

    /// y = M x
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut y: Vec<f64> = self.diagonal.iter().zip(x).map(|(d, v)| d * v).collect();
        for l in 0..n.saturating_sub(1) {
            let e = self.off_diagonal[l];
            y[l] += e * x[l + 1];
            y[l + 1] += e * x[l];
        }
        y
    }

    pub fn element(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.diagonal[i]
        } else if i + 1 == j {
            self.off_diagonal[i]
        } else if j + 1 == i {
            self.off_diagonal[j]
        } else {
            0.0
        }
    }
}

/// One-excitation Hamiltonian of the chain. The vacuum has energy 0.
pub fn build_single_particle(spec: &ChainSpec) -> Result<SymTridiag> {
    spec.validate()?;
    let s = spec.units.energy_scale();
    SymTridiag::new(
        spec.fields.iter().map(|h| s * h).collect(),
        spec.couplings.iter().map(|j| -s * j).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_chain_fermion_units() {
        let spec = ChainSpec::new(6, 0.0).unwrap().with_units(Units::Fermion);
        let m = build_single_particle(&spec).unwrap();
        assert_eq!(m.diagonal, vec![0.0; 6]);
        assert_eq!(m.off_diagonal, vec![-1.0; 5]);
    }

    #[test]
    fn barriers_sit_at_three_and_n_minus_two() {
        let spec = ChainSpec::new(6, 100.0).unwrap().with_units(Units::Fermion);
        let m = build_single_particle(&spec).unwrap();
        assert_eq!(m.diagonal, vec![0.0, 0.0, 100.0, 100.0, 0.0, 0.0]);

        let spec = ChainSpec::new(46, 100.0)
            .unwrap()
            .with_units(Units::Fermion);
        let m = build_single_particle(&spec).unwrap();
        for (i, d) in m.diagonal.iter().enumerate() {
            let site = i + 1;
            let want = if site == 3 || site == 44 { 100.0 } else { 0.0 };
            assert_eq!(*d, want, "site {site}");
        }
    }

    #[test]
    fn pauli_units_double_every_entry() {
        let spec = ChainSpec::new(8, 7.0).unwrap();
        let p = build_single_particle(&spec).unwrap();
        let f = build_single_particle(&spec.clone().with_units(Units::Fermion)).unwrap();
        for (a, b) in p.diagonal.iter().zip(&f.diagonal) {
            assert_eq!(*a, 2.0 * b);
        }
        for (a, b) in p.off_diagonal.iter().zip(&f.off_diagonal) {
            assert_eq!(*a, 2.0 * b);
        }
    }

    #[test]
    fn rejects_bad_specs() {
        assert_eq!(ChainSpec::new(5, 1.0), Err(Error::InvalidLength(5)));
        let mut s = ChainSpec::new(8, 1.0).unwrap();
        s.couplings.pop();
        assert!(matches!(s.validate(), Err(Error::LengthMismatch { .. })));
        let mut s = ChainSpec::new(8, 1.0).unwrap();
        s.receivers = (2, 8);
        assert!(matches!(s.validate(), Err(Error::Geometry(_))));
        let mut s = ChainSpec::new(8, 1.0).unwrap();
        s.senders = (2, 1);
        assert!(matches!(s.validate(), Err(Error::Geometry(_))));
        let mut s = ChainSpec::new(8, 1.0).unwrap();
        s.receivers = (7, 9);
        assert!(matches!(s.validate(), Err(Error::Geometry(_))));
    }

    #[test]
    fn build_is_pure() {
        let spec = ChainSpec::new(17, 3.25).unwrap();
        assert_eq!(
            build_single_particle(&spec).unwrap(),
            build_single_particle(&spec).unwrap()
        );
    }
}
