//! Estimation toolkit that recovers monthly default hazards and annualized
//! probability-of-default series for credit segments from indirect data on
//! total and overdue debt, with calibration, validation, and macro-regression
//! layers on top.

pub mod balance;
pub mod calibrate;
pub mod cli;
pub mod error;
pub mod filter;
pub mod hp;
pub mod ingest;
pub mod macromodel;
pub mod numfmt;
pub mod synth;
pub mod timeseries;
pub mod validation;

pub use error::{Error, Result};
