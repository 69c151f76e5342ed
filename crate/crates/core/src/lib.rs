//! Stabilisation of hybrid stochastic differential equations by delay
//! feedback control.
//!
//! The crate is organised around the pipeline used to design such a
//! controller:
//!
//! 1. [`certify`] turns per-mode stability margins and the Markov generator
//!    into the moment-decay pair `(M, gamma)` of the non-delay closed loop;
//! 2. [`thresholds`] converts `(M, gamma)` and the Lipschitz constants into
//!    the largest delay `tau*` that the controller tolerates;
//! 3. [`simulate`] checks the result by Euler-Maruyama Monte Carlo.
//!
//! [`models`] contains the built-in systems: a switched stochastic
//! oscillator, generic linear hybrid systems and a non-Lipschitz scalar
//! counterexample that shows why global Lipschitz bounds are needed.

pub mod certify;
pub mod error;
pub mod markov;
pub mod model;
pub mod models;
pub mod rng;
pub mod simulate;
pub mod thresholds;

pub use nalgebra;
pub use error::{Error, Result};
pub use markov::{GeneratorMatrix, ModePath};
pub use model::{Coefficients, HybridModel, InitialSegment, LipschitzBounds, ModeIndex, StateVector};
