//! Error categories mapped to distinct process exit codes.

use thiserror::Error;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_PHYSICS: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Error)]
pub enum AppError {
    /// Scenario parsing or validation failure (exit code 2).
    #[error("config error: {0}")]
    Config(String),
    /// Physics-domain failure such as a threshold violation or an
    /// unphysical measurement (exit code 3).
    #[error("physics error: {0}")]
    Physics(String),
    /// Filesystem failure (exit code 4).
    #[error("i/o error: {0}")]
    Io(String),
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config(_) => EXIT_CONFIG,
            AppError::Physics(_) => EXIT_PHYSICS,
            AppError::Io(_) => EXIT_IO,
        }
    }
}

impl From<toml::de::Error> for AppError {
    fn from(err: toml::de::Error) -> Self {
        AppError::Config(err.to_string())
    }
}

impl From<sqzsim_core::model::ModelError> for AppError {
    fn from(err: sqzsim_core::model::ModelError) -> Self {
        AppError::Physics(err.to_string())
    }
}

impl From<sqzsim_core::detection::DetectionError> for AppError {
    fn from(err: sqzsim_core::detection::DetectionError) -> Self {
        AppError::Physics(err.to_string())
    }
}

impl From<sqzsim_core::noise::NoiseError> for AppError {
    fn from(err: sqzsim_core::noise::NoiseError) -> Self {
        AppError::Physics(err.to_string())
    }
}

impl From<sqzsim_core::analyzer::AnalyzerError> for AppError {
    fn from(err: sqzsim_core::analyzer::AnalyzerError) -> Self {
        match err {
            sqzsim_core::analyzer::AnalyzerError::Io(e) => AppError::Io(e.to_string()),
            other => AppError::Physics(other.to_string()),
        }
    }
}

impl From<sqzsim_core::lockloop::LockError> for AppError {
    fn from(err: sqzsim_core::lockloop::LockError) -> Self {
        AppError::Physics(err.to_string())
    }
}

impl From<std::io::Error> for AppError {
    fn from(err: std::io::Error) -> Self {
        AppError::Io(err.to_string())
    }
}
