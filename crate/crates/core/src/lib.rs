//! Hahn-echo decoherence of a single Er3+ spin in CaWO4 and the companion
//! EPR models used to interpret pulsed measurements on it.
//!
//! The crate is organised bottom-up:
//!
//! * [`crystal`] builds the tungsten sublattice and populates it with 183W spins.
//! * [`hamiltonian`] turns cluster geometry into the secular conditional bath
//!   Hamiltonians.
//! * [`cce`] runs the cluster-correlation expansion and ensemble averaging.
//! * [`eseem`] evaluates the short-delay envelope modulation and resonator filter.
//! * [`analytic`] holds the closed-form linewidth, diffusion, resonator and
//!   relaxation models.
//! * [`relaxsim`] simulates T1 against pulse amplitude over coupling distributions.
//! * [`fitkit`] provides the least-squares kernels shared by everything above.

pub mod analytic;
pub mod cce;
pub mod constants;
pub mod crystal;
pub mod eseem;
pub mod fitkit;
pub mod hamiltonian;
pub mod io;
pub mod relaxsim;

mod error;

pub use error::{Error, Result};

/// Version tag written into every JSON output.
pub const SCHEMA_VERSION: u32 = 1;
