//! Online pricing of governed data assets under uncertain privacy/access costs.
//!
//! A platform repeatedly observes a task context, a candidate data asset, and a
//! coarse estimate of the asset's true access cost. It may pay a verification fee
//! for a refined cost signal, posts a price from a fixed grid, observes binary
//! purchase feedback, and collects *safe net revenue*: margin over the true cost,
//! minus any verification fees. This crate implements
//!
//! * the NH-CROP policy family — clipped optimistic pricing with a no-harm
//!   information-acquisition gate — plus its baselines and hindsight oracles,
//! * three benchmark environment families (synthetic market, real-proxy asset
//!   tables, utility-grounded asset tables) driven by common-random-number
//!   event streams so every policy faces identical contexts, assets, and costs,
//! * text-slice proxy-cost extraction for building real-proxy asset tables, and
//! * the evaluation pipeline: paired seed tests, decision-relevance
//!   stratification, verification-ROI audits, and deterministic CSV reporting.
//!
//! The `nhcrop` CLI crate wraps [`audit`] and [`text_proxy`] into the
//! `run-audit`, `sweep`, `gen-assets`, `stratify`, and `roi-audit` subcommands.
//! A narrative guide lives in `book/`; its code snippets compile as doc-tests.

use thiserror::Error;

pub mod audit;
pub mod belief;
pub mod config;
pub mod demand;
pub mod env;
pub mod eval;
pub mod event;
pub mod linalg;
pub mod policy;
pub mod report;
pub mod runner;
pub mod text_proxy;
pub mod types;

#[cfg(doctest)]
mod book;

/// Crate-wide error type.
///
/// [`Error::exit_code`] maps variants onto the CLI's exit-code contract:
/// 2 for configuration errors, 3 for data errors, 4 for invariant violations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty trajectory")]
    EmptyTrajectory,
    #[error("feature input out of range: {0}")]
    FeatureOutOfRange(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("design matrix degenerate")]
    DegenerateDesign,
    #[error("utility matrix incomplete: task {task}, asset {asset}")]
    UtilityMissing { task: usize, asset: u64 },
    #[error("oracle requires replay context")]
    OracleNeedsReplay,
    #[error("empty slice")]
    EmptySlice,
    #[error("proxy weights must sum to 1, got {0}")]
    BadWeights(f64),
    #[error("paired samples length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty selection map")]
    EmptySelection,
    #[error("price {0} not on the grid")]
    PriceOffGrid(f64),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("invariant violation: {0}")]
    Invariant(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// CLI exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::EmptySelection => 2,
            Error::Invariant(_) => 4,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
