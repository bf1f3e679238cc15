pub mod calibrate;
pub mod metrics;
pub mod mixture;
pub mod toy;

/// Command result that still produced output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    /// Some scenes or checks failed; exit code 2.
    Partial,
}
