use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("crystal unstable: local frequency squared {omega_sq:.6e} rad^2/s^2 at ion {ion} is not positive; raise the transverse trap frequency")]
    Unstable { ion: usize, omega_sq: f64 },

    #[error("{what} did not converge after {iterations} iterations (final residual {residual:.3e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("integrator step size underflow at t = {t:.6e} s (trajectory may be blowing up)")]
    StepUnderflow { t: f64 },

    #[error("root finding failed: {0}")]
    Bracket(String),

    #[error("Fock truncation too small: population {population:.3e} in the top two levels of mode {mode}; increase fock_cutoff")]
    Leakage { mode: usize, population: f64 },

    #[error("norm drift {drift:.3e} exceeds tolerance after {refinements} step refinements; reduce dt")]
    NormDrift { drift: f64, refinements: u32 },

    #[error("thermal truncation retained weight {weight:.6} below cutoff {cutoff:.6}")]
    Truncation { weight: f64, cutoff: f64 },
}

impl Error {
    /// True for errors caused by the caller's parameters rather than by the numerics.
    pub fn is_input_error(&self) -> bool {
        matches!(self, Error::InvalidInput(_))
    }
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
