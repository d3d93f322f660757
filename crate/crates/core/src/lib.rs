//! Numerical core for continuous simultaneous measurement of position and
//! momentum on a single quantum degree of freedom.
//!
//! Everything here is `no_std` + `alloc`: truncated Fock-space algebra, the
//! weak phase-space POVM, the conditional stochastic Schrödinger equation, the
//! unconditional master equation, closed-form Gaussian moment solutions and
//! classical comparison dynamics. File formats, the CLI and ensemble fan-out
//! live in the `contmeas` crate.

#![cfg_attr(not(any(test, feature = "std")), no_std)]
#![deny(unsafe_code)]

extern crate alloc;

pub mod classical;
pub mod error;
pub mod fock;
pub mod gaussian;
pub mod hamiltonian;
pub mod lindblad;
pub mod linalg;
pub mod povm;
pub mod sse;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub use fock::{
    C64, DensityMatrix, FrameCenter, HbarS, Ladder, Operator, PhaseGrid, PhaseMoments,
    StateVector,
};
pub use hamiltonian::DrivenHamiltonianParams;
