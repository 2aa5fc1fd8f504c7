//! Library surface of the experiment CLI: configuration resolution and
//! the subcommand implementations, shared between the binary and its
//! integration tests.

pub mod commands;
pub mod config;

#[derive(Debug)]
pub enum AppError {
    /// Bad input: exit code 2.
    Usage(String),
    /// Runtime failure: exit code 1.
    Runtime(String),
}

impl From<treetower::Error> for AppError {
    fn from(e: treetower::Error) -> AppError {
        AppError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for AppError {
    fn from(e: std::io::Error) -> AppError {
        AppError::Runtime(format!("io error: {e}"))
    }
}
