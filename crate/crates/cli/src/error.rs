use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Spec(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Spec(_) => 3,
            CliError::Runtime(_) => 1,
        }
    }

    pub fn category(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Spec(_) => "spec",
            CliError::Runtime(_) => "runtime",
        }
    }

    /// Single-line form written to standard error.
    pub fn line(&self) -> String {
        let msg = self.to_string().replace('\n', "; ");
        format!("error[{}]: {}", self.category(), msg.trim_end_matches("; "))
    }
}
