//! Physical constants (CODATA 2018).

pub const ELEMENTARY_CHARGE: f64 = 1.602176634e-19;
pub const COULOMB_CONSTANT: f64 = 8.9875517923e9;
/// k_c e^2 in J m.
pub const KE2: f64 = COULOMB_CONSTANT * ELEMENTARY_CHARGE * ELEMENTARY_CHARGE;
/// Atomic mass unit in kg.
pub const AMU: f64 = 1.66053906660e-27;
pub const TWO_PI: f64 = std::f64::consts::TAU;

/// Ordinary frequency in Hz to angular frequency in rad/s.
pub fn angular(hz: f64) -> f64 {
    TWO_PI * hz
}

/// Angular frequency in rad/s to ordinary frequency in Hz.
pub fn ordinary(rad_per_s: f64) -> f64 {
    rad_per_s / TWO_PI
}
