//! Two-qubit state transfer through XX spin chains with strong barrier
//! fields: free-fermion amplitudes, exact and approximate average
//! fidelities, transfer-time search, and a brute-force sector oracle.

pub mod amplitudes;
pub mod chain;
pub mod error;
pub mod fidelity;
pub mod optim;
pub mod perturbation;
pub mod protocol;
pub mod sector;
pub mod spectral;
pub mod verify;

pub use num_complex::Complex64;

pub use amplitudes::{channel_occupation, propagator, two_particle, AmplitudeProbe, AmplitudeSet};
pub use chain::{build_single_particle, ChainSpec, ReceiverOrder, SymTridiag, Units};
pub use error::{Error, Result};
pub use fidelity::{
    average_fidelity_approx, average_fidelity_exact, haar_average_mc, worst_case_fidelity,
    AverageFidelity, FidelityBreakdown, McEstimate, WorstCase, WorstCaseOptions,
};
pub use perturbation::{
    cubic_roots, perturbative_energies, rabi_frequencies, transfer_time_estimate,
    PerturbativeSpectrum, RabiFrequencies,
};
pub use protocol::{find_transfer_time, scan, ScanAxis, ScanRecord, TransferTime};
pub use sector::{SectorOracle, TwoQubitState};
pub use spectral::{
    classify_chain, diagonalize, localization_profile, localized_indices, Regime, SpectralData,
};
