//! Simulation and verification of superselection rules in theories with a
//! primitive ontology.
//!
//! The crate works on finite-dimensional model Hilbert spaces. Every basis
//! vector belongs to exactly one *configuration*, so the configuration
//! observable is a partition of basis indices ([`hilbert::Pvm`]). On top of
//! that substrate it provides
//!
//! * [`belljump`]: Bell-type jump processes driven by the off-diagonal
//!   (interaction) part of the Hamiltonian, with Monte-Carlo sampling and an
//!   exact enumeration of the time-discretised path law;
//! * [`continuum`]: one-dimensional grid Bohmian mechanics (Crank-Nicolson
//!   propagation plus the guidance equation for spinor wave functions);
//! * [`grw`]: GRW flash dynamics with the non-unitary propagator
//!   `W_t = exp(-iHt/hbar - t/2 sum_x Lambda(x))`;
//! * [`superselection`]: condition checkers and the strong/weak
//!   superselection verifiers that tie all of the above together.
//!
//! [`models`] builds the example systems (fermion-boson lattice field theory,
//! a configuration space with two disconnected components, spin lattices).

pub mod belljump;
pub mod continuum;
mod error;
pub mod grw;
pub mod hilbert;
pub mod models;
pub mod rng;
pub mod stats;
pub mod superselection;

pub use error::{Error, Result};
pub use hilbert::{C64, CMatrix, CVector};
