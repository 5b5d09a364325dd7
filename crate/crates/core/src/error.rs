use thiserror::Error;

pub type Result<T, E = CoreError> = std::result::Result<T, E>;

#[derive(Debug, Error, PartialEq)]
pub enum CoreError {
    #[error("value out of domain: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("trace parse error at row {row}: {reason}")]
    TraceParse { row: usize, reason: String },

    #[error("trace covers {covered_s:.3} s but {required_s:.3} s are required")]
    TraceTooShort { covered_s: f64, required_s: f64 },

    #[error("failure step {fail_step} precedes lead completion at step {lead_steps}")]
    FailBeforeLead { fail_step: u64, lead_steps: u64 },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for CoreError {
    fn from(e: std::io::Error) -> Self {
        CoreError::Io(e.to_string())
    }
}
