use thiserror::Error;

/// A configuration value that breaks a contract, named by its config path
/// (for example `scheme.theta`).
#[derive(Debug, Error, Clone, PartialEq)]
#[error("{field}: {message}")]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, message: impl ToString) -> Self {
        ConfigError {
            field: field.into(),
            message: message.to_string(),
        }
    }

    pub fn missing(field: impl Into<String>) -> Self {
        ConfigError::new(field, "missing required value")
    }
}
