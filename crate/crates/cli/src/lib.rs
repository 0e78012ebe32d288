//! Config files, single runs and sweeps for the sidelink simulator.

pub mod config_file;
pub mod run;
pub mod sweep;

use config_file::ConfigError;
use sidelink_core::engine::EngineError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Engine(#[from] EngineError),
    #[error("{0}: {1}")]
    Io(String, std::io::Error),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    /// 2 for anything wrong with the config, 3 for failures while running.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Engine(EngineError::Config(_)) => 2,
            _ => 3,
        }
    }
}
