use thiserror::Error;

/// Exit status for configuration and input errors.
pub const EXIT_CONFIG: i32 = 2;
/// Exit status for numerical failures.
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numeric(lpgate::Error),

    #[error("output error: {0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Output(_) => EXIT_CONFIG,
            CliError::Numeric(_) => EXIT_NUMERIC,
        }
    }

    /// Remediation hint printed after the message.
    pub fn hint(&self) -> Option<&'static str> {
        match self {
            CliError::Numeric(lpgate::Error::Leakage { .. }) => Some("raise sim.fock_cutoff or lower thermal.nbar"),
            CliError::Numeric(lpgate::Error::NormDrift { .. }) => {
                Some("raise sim.steps_per_period or set a smaller sim.dt")
            }
            CliError::Numeric(lpgate::Error::Bracket(_)) => {
                Some("raise drive.cap, use more profile segments, or reduce eta |Omega| / omega")
            }
            CliError::Numeric(lpgate::Error::NonConvergence { .. }) => {
                Some("try profile.kind = \"designed\" with more segments_per_half")
            }
            CliError::Numeric(lpgate::Error::Truncation { .. }) => Some("lower thermal.weight_cutoff or thermal.nbar"),
            _ => None,
        }
    }
}

impl From<lpgate::Error> for CliError {
    fn from(e: lpgate::Error) -> Self {
        if e.is_input_error() || matches!(e, lpgate::Error::Unstable { .. }) {
            CliError::Config(e.to_string())
        } else {
            CliError::Numeric(e)
        }
    }
}
