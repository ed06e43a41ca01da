//! Experiment driver for the `slqr` library: loads a JSON problem
//! description, runs the model-based and model-free solvers, and emits
//! reproducible CSV traces and JSON summaries.

pub mod commands;
pub mod output;
pub mod spec;

/// CLI failure carrying the process exit code:
/// 2 = validation, 3 = numeric failure, 4 = insufficient excitation.
#[derive(Debug)]
pub struct CliError {
    pub message: String,
    pub exit_code: i32,
}

impl CliError {
    pub fn validation(message: String) -> Self {
        Self {
            message,
            exit_code: 2,
        }
    }

    pub fn numeric(message: String) -> Self {
        Self {
            message,
            exit_code: 3,
        }
    }

    pub fn excitation(message: String) -> Self {
        Self {
            message,
            exit_code: 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl From<slqr::SlqrError> for CliError {
    fn from(e: slqr::SlqrError) -> Self {
        use slqr::SlqrError as E;
        match &e {
            E::InvalidConfig(_) | E::DimensionMismatch(_) | E::NotAdmissible { .. } => {
                CliError::validation(e.to_string())
            }
            E::Excitation { .. } => CliError::excitation(format!(
                "{e}; rerun with a larger probe_std or longer rollouts (n_steps)"
            )),
            _ => CliError::numeric(e.to_string()),
        }
    }
}
