//! Exact state-vector simulation of kinetically constrained spin chains.
//!
//! The crate centres on the dipole-facilitated model (DFM), a chain in which
//! a spin flips only when one neighbour is up and the next one down, and
//! carries the East, PXP and Heisenberg chains for comparison. Everything is
//! generic over the [`Real`] scalar; the `f64` aliases below are what the
//! command-line runner uses.

pub mod error;
pub mod evolve;
pub mod fragmentation;
mod kernels;
pub mod krylov;
pub mod measures;
pub mod models;
pub mod scalar;
pub mod state;

pub use error::{Error, Result};
pub use evolve::{
    apply_kick, derive_seed, ensemble_average, ensemble_average_seeded, propagate, propagate_noisy, EnsembleResult, EvolutionParams,
    KickOperator, NoiseSchedule, Observable, Period, Trajectory,
};
pub use fragmentation::{build_adjacency, classify_state, components, subspace_scaling, verify_eq10, SubspaceReport};
pub use measures::{concurrence, envelope, fidelity, renyi2};
pub use models::{apply_h, build_terms, dense_h, Boundary, Hamiltonian, LocalTerm, ModelKind, ModelSpec};
pub use scalar::{Real, C};
pub use state::{bell_state, ghz_state, product_state, ReducedDensityMatrix, Spin, StateVector};

/// Double-precision state vector.
pub type State = StateVector<f64>;
/// Double-precision reduced density matrix.
pub type Rdm = ReducedDensityMatrix<f64>;
/// Double-precision compiled Hamiltonian.
pub type Ham = Hamiltonian<f64>;
/// Double-precision trajectory.
pub type Traj = Trajectory<f64>;
/// Single-precision state vector.
pub type StateF32 = StateVector<f32>;
