use std::fmt;
use std::io;
use std::path::Path;

/// A command failure with its process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

pub const EXIT_IO: u8 = 1;
pub const EXIT_FORMAT: u8 = 2;
pub const EXIT_VERIFY: u8 = 3;

impl Failure {
    pub fn io(path: &Path, e: io::Error) -> Self {
        Self { code: EXIT_IO, message: format!("{}: {e}", path.display()) }
    }

    pub fn format(message: impl Into<String>) -> Self {
        Self { code: EXIT_FORMAT, message: message.into() }
    }

    pub fn verification(message: impl Into<String>) -> Self {
        Self { code: EXIT_VERIFY, message: message.into() }
    }

    pub fn context(self, path: &Path) -> Self {
        Self { message: format!("{}: {}", path.display(), self.message), ..self }
    }
}

impl From<quatnet::Error> for Failure {
    fn from(e: quatnet::Error) -> Self {
        use quatnet::Error as E;
        let code = match e {
            E::Io(_) => EXIT_IO,
            E::Verification(_) | E::Divergence { .. } | E::Numeric(_) => EXIT_VERIFY,
            E::InvalidArgument(_) | E::Shape(_) | E::Format(_) | E::Unsupported(_) | E::MissingTape(_) => EXIT_FORMAT,
        };
        Self { code, message: e.to_string() }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}
