//! Minimizing-movement schemes for gradient systems, with numerical
//! certificates for the variational identities their limits satisfy.
//!
//! The crate is organised bottom-up:
//!
//! * [`potentials`]: scalar and vector dissipation potentials and their
//!   Legendre–Fenchel conjugates.
//! * [`energies`]: energy functionals, differentials and metric slopes.
//! * [`mms_solver`]: time-incremental minimization, interpolants and the
//!   De Giorgi variational interpolant.
//! * [`diagnostics`]: energy-dissipation balance, chain rule, De Giorgi
//!   identity, modulus of continuity.
//! * [`evi`]: evolutionary variational inequalities and contractivity.
//! * [`rate_independent`]: energetic rate-independent systems.
//! * [`model_zoo`]: ready-made systems with closed-form oracles.
//! * [`cli`]: scenario files, runs, sweeps and report output.

pub mod acceptance;
pub mod cli;
pub mod diagnostics;
pub mod energies;
pub mod error;
pub mod evi;
pub mod ext;
pub mod linalg;
pub mod mms_solver;
pub mod model_zoo;
pub mod potentials;
pub mod quad;
pub mod rate_independent;

pub use error::{GflError, Result};
pub use ext::ExtReal;

/// Finite-dimensional state vector.
pub type StateVec = nalgebra::DVector<f64>;
