//! Error types shared across the crate.
//!
//! Errors are split along a line that matters to callers (and to the CLI's
//! exit codes): [`Error::is_config`] distinguishes bad parameters and
//! misconfigured requests from defects in the data being processed.

use chrono::NaiveDate;
use thiserror::Error;

/// Unified error type for panel handling, measure evaluation, simulation, and
/// backtesting.
#[derive(Debug, Error)]
pub enum Error {
    /// A cell, header, or row in an input file could not be parsed.
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    /// A quoted price was zero, negative, or non-finite.
    #[error("non-positive price for {asset} on {date}")]
    NonPositivePrice { asset: String, date: NaiveDate },

    /// An asset stopped quoting for longer than the forward-fill limit.
    #[error("{asset} has a gap of {gap_len} consecutive missing quotes starting {date} (limit {limit})")]
    Gap {
        asset: String,
        date: NaiveDate,
        gap_len: usize,
        limit: usize,
    },

    /// Panel dates were not strictly increasing.
    #[error("dates out of order: {prev} is not before {next}")]
    DateOrder { prev: NaiveDate, next: NaiveDate },

    /// A requested date is not present in the panel.
    #[error("date {date} not found in panel ({context})")]
    MissingDate { date: NaiveDate, context: String },

    /// An operation needed more assets than were available.
    #[error("insufficient assets: {message}")]
    InsufficientAssets { message: String },

    /// Input data escaped the mathematical domain of an operation
    /// (e.g. a relative price outside the open simplex).
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration parameter was rejected (bad γ, negative κ, non-PSD
    /// correlation, unknown strategy, ...).
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A stated precondition of an operation was not met by the inputs.
    #[error("precondition failed: {0}")]
    Precondition(String),

    /// Series passed to an operation did not line up (lengths or dates).
    #[error("misaligned series: {0}")]
    Misaligned(String),

    /// A computation produced a non-finite value.
    #[error("non-finite result: {0}")]
    NonFinite(String),

    /// Underlying I/O failure.
    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// CSV-level failure that is not a cell parse error.
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True when the error reflects a bad request or parameter rather than a
    /// defect in the data itself. The CLI maps config errors to exit code 2
    /// and data errors to exit code 3.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Parameter(_) | Error::Precondition(_))
    }
}
