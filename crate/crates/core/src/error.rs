use chrono::NaiveDate;
use thiserror::Error;

use crate::lifecycle::LifecycleStatus;
use crate::termsheet::Finding;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("start date {start} is after end date {end}")]
    DateOrder { start: NaiveDate, end: NaiveDate },

    #[error("first year {first} is after last year {last}")]
    YearOrder { first: i32, last: i32 },

    #[error("invalid date: {0}")]
    InvalidDate(String),

    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("line {line}: {message}")]
    Record { line: u64, message: String },

    #[error(
        "carbon representation required: product must carry `carbon_leg` or `shorthand_carbon`"
    )]
    MissingCarbon,

    #[error("product carries both `carbon_leg` and `shorthand_carbon`; exactly one is allowed")]
    AmbiguousCarbon,

    #[error("invalid value for `{field}`: {message}")]
    InvalidValue { field: String, message: String },

    #[error("product `{0}` has no carbon leg (shorthand only)")]
    NoCarbonLeg(String),

    #[error("fixing for `{strategy_id}` year {year} targets a fixed (non-floating) flow")]
    FixingConflict { strategy_id: String, year: i32 },

    #[error("fixing for `{strategy_id}` year {year} matches {count} estimated flows")]
    AmbiguousFixing {
        strategy_id: String,
        year: i32,
        count: usize,
    },

    #[error("duplicate fixing for `{strategy_id}` year {year}")]
    DuplicateFixing { strategy_id: String, year: i32 },

    #[error("attribution fraction {0} outside [0, 1]")]
    FractionOutOfRange(String),

    #[error(
        "decay rate {rate} outside guard rail [{min}, {max}]; pass a forced override to use it"
    )]
    DecayRateOutOfRange { rate: f64, min: f64, max: f64 },

    #[error("decay rate {0} is not a finite non-positive number")]
    InvalidDecayRate(f64),

    #[error("summary for `{strategy_id}` is as of {found}, expected {expected}")]
    AsOfMismatch {
        strategy_id: String,
        expected: NaiveDate,
        found: NaiveDate,
    },

    #[error("cannot net an empty portfolio")]
    EmptyPortfolio,

    #[error("`{strategy_id}` is {status:?}; {event} requires an Active product")]
    IllegalTransition {
        strategy_id: String,
        status: LifecycleStatus,
        event: String,
    },

    #[error("event date {date} outside product life {start}..={end}")]
    EventOutsideLife {
        date: NaiveDate,
        start: NaiveDate,
        end: NaiveDate,
    },

    #[error("event date {date} precedes last logged event {last}")]
    EventOutOfOrder { date: NaiveDate, last: NaiveDate },

    #[error("permit window not open: {date} is before {start}")]
    PermitNotOpen { date: NaiveDate, start: NaiveDate },

    #[error("permit window expired: {date} is after {end}")]
    PermitExpired { date: NaiveDate, end: NaiveDate },

    #[error("insufficient permit volume: requested {requested}, remaining {remaining}")]
    InsufficientPermitVolume {
        requested: String,
        remaining: String,
    },

    #[error("amount must be positive, got {0}")]
    NonPositiveAmount(String),

    #[error("price curve: {0}")]
    Curve(String),

    #[error("strategy `{0}` is already booked")]
    DuplicateStrategy(String),

    #[error("unknown strategy `{0}`")]
    UnknownStrategy(String),

    #[error("unknown permit `{0}`")]
    UnknownPermit(String),

    #[error("product `{strategy_id}` failed validation: {}", summarize_findings(.findings))]
    ValidationFailed {
        strategy_id: String,
        findings: Vec<Finding>,
    },

    #[error("store: {0}")]
    Store(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn summarize_findings(findings: &[Finding]) -> String {
    findings
        .iter()
        .map(|f| f.message.as_str())
        .collect::<Vec<_>>()
        .join("; ")
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        let line = err.position().map(|p| p.line()).unwrap_or(0);
        Error::Record {
            line,
            message: err.to_string(),
        }
    }
}
