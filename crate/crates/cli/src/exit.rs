//! Exit-code scheme shared by all commands.

use std::fmt;

use geoguide_core::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Code {
    /// Manifest, schema or option errors.
    Config = 2,
    /// Unusable meshes or cameras.
    Geometry = 3,
    /// Missing or corrupt artifacts.
    Artifact = 4,
    Numeric = 5,
}

#[derive(Debug)]
pub struct Failure {
    pub code: Code,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn new(code: Code, error: impl Into<anyhow::Error>) -> Self {
        Self {
            code,
            error: error.into(),
        }
    }

    pub fn msg(code: Code, msg: impl fmt::Display) -> Self {
        Self::new(code, anyhow::anyhow!("{msg}"))
    }
}

/// Default classification of library errors.
pub fn classify(e: &Error) -> Code {
    match e {
        Error::Schema(_) | Error::Config(_) | Error::Unbound(_) => Code::Config,
        Error::Parse { .. } | Error::Mesh(_) | Error::Camera(_) | Error::Uncovered { .. } => Code::Geometry,
        Error::Io { .. } | Error::Container(_) | Error::Shape(_) | Error::Index(_) | Error::Empty(_) => {
            Code::Artifact
        }
        Error::Numeric(_) => Code::Numeric,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::new(classify(&e), e)
    }
}

pub type CliResult<T> = std::result::Result<T, Failure>;

/// Attaches an explicit exit code and context to a fallible call.
pub trait WithCode<T> {
    fn code(self, code: Code) -> CliResult<T>;
    fn code_ctx(self, code: Code, ctx: impl fmt::Display) -> CliResult<T>;
}

impl<T, E> WithCode<T> for std::result::Result<T, E>
where
    E: Into<anyhow::Error>,
{
    fn code(self, code: Code) -> CliResult<T> {
        self.map_err(|e| Failure::new(code, e))
    }

    fn code_ctx(self, code: Code, ctx: impl fmt::Display) -> CliResult<T> {
        self.map_err(|e| Failure::new(code, e.into().context(ctx.to_string())))
    }
}
