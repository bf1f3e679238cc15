//! Readers and writers for on-disk formats, plus the training-data mixture sampler.

pub mod colmap;
pub mod depth;
pub mod imageio;
pub mod matches;
pub mod mixture;

use std::fmt;
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {message}", location(path, *line))]
    Parse { path: PathBuf, line: Option<usize>, message: String },
    #[error("{}: unsupported camera model {model}", location(path, Some(*line)))]
    UnsupportedCamera { path: PathBuf, line: usize, model: String },
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("config error: {0}")]
    Config(String),
}

fn location(path: &Path, line: Option<usize>) -> impl fmt::Display + '_ {
    struct Loc<'a>(&'a Path, Option<usize>);
    impl fmt::Display for Loc<'_> {
        fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            match self.1 {
                Some(l) => write!(f, "{}:{l}", self.0.display()),
                None => write!(f, "{}", self.0.display()),
            }
        }
    }
    Loc(path, line)
}

impl IngestError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        IngestError::Io { path: path.to_path_buf(), source }
    }

    pub(crate) fn parse(path: &Path, line: usize, message: impl Into<String>) -> Self {
        IngestError::Parse { path: path.to_path_buf(), line: Some(line), message: message.into() }
    }

    pub(crate) fn format(path: &Path, message: impl Into<String>) -> Self {
        IngestError::Parse { path: path.to_path_buf(), line: None, message: message.into() }
    }

    /// Line number for text parse failures.
    pub fn line(&self) -> Option<usize> {
        match self {
            IngestError::Parse { line, .. } => *line,
            IngestError::UnsupportedCamera { line, .. } => Some(*line),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, IngestError>;

pub(crate) fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| IngestError::io(path, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| IngestError::io(path, e))
}

/// Formats a float with 17 significant digits, trailing zeros trimmed
/// (the `%.17g` layout). Parsing the result gives back the same `f64`.
pub fn format_g17(x: f64) -> String {
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{x:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..17).contains(&exp) {
        let decimals = (16 - exp).max(0) as usize;
        let fixed = format!("{x:.decimals$}");
        trim_fraction(&fixed).to_string()
    } else {
        let m = trim_fraction(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}
