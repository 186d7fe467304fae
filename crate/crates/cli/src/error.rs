use std::fmt;
use std::path::Path;

use gobo::container::ContainerError;
use gobo::matrix::MatrixError;
use gobo::quant::QuantError;
use gobo::tilesim::SimError;
use gobo::KernelError;

/// Process exit codes. Usage errors exit with 2 (clap's own code).
pub mod code {
    pub const VERIFY_FAILED: u8 = 1;
    pub const IO: u8 = 3;
    pub const FORMAT: u8 = 4;
    pub const QUANTIZE: u8 = 5;
    pub const SIMULATE: u8 = 6;
}

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        Self::new(code::IO, format!("{}: {err}", path.display()))
    }

    /// Prefixes the message with the file it concerns.
    pub fn at(mut self, path: &Path) -> Self {
        self.message = format!("{}: {}", path.display(), self.message);
        self
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<MatrixError> for Failure {
    fn from(e: MatrixError) -> Self {
        let code = if matches!(e, MatrixError::Io(_)) { code::IO } else { code::FORMAT };
        Self::new(code, e.to_string())
    }
}

impl From<ContainerError> for Failure {
    fn from(e: ContainerError) -> Self {
        Self::new(code::FORMAT, e.to_string())
    }
}

impl From<QuantError> for Failure {
    fn from(e: QuantError) -> Self {
        Self::new(code::QUANTIZE, e.to_string())
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        Self::new(code::SIMULATE, e.to_string())
    }
}

impl From<KernelError> for Failure {
    fn from(e: KernelError) -> Self {
        Self::new(code::SIMULATE, e.to_string())
    }
}
