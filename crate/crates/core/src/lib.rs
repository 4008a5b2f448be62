//! Toolkit for entangling gates on local phonon modes of trapped-ion crystals.
//!
//! The pipeline runs crystal model -> spin-dependent trajectory -> decoupling
//! sequence and calibration -> infidelity estimates (closed form and exact
//! truncated-Fock simulation). All quantities are SI with angular frequencies
//! in rad/s unless a function says otherwise.

pub mod consts;
pub mod crystal;
pub mod error;
pub mod fidelity;
pub mod ode;
pub mod par;
pub mod quad;
pub mod roots;
pub mod sequence;
pub mod trajectory;

pub use error::{Error, Result};
