//! Experiment runner for the spiked matrix-tensor laboratory.
//!
//! `spiked-core` holds the numerics and stays `no_std`; this crate adds file
//! formats, manifests, parallel ensembles, resumable sweeps and the `spiked`
//! command-line tool.

pub mod cache;
pub mod cli;
pub mod config;
pub mod ensemble;
pub mod format;
pub mod manifest;
pub mod report;

pub use spiked_core as core;

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    pub const FAILURE: u8 = 1;
    pub const USAGE: u8 = 2;
    pub const INSTABILITY: u8 = 3;
    pub const INSUFFICIENT_DATA: u8 = 4;
}

/// Invalid flag or config combinations, detected before any compute.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

/// A tolerance check failed after computing; results are written but flagged.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ToleranceError(pub String);

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Maps an error chain to an exit code.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    use spiked_core::Error as E;
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return exit::USAGE;
        }
        if cause.is::<ToleranceError>() {
            return exit::INSTABILITY;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Instability { .. } | E::Divergence { .. } | E::Inconsistent { .. } => exit::INSTABILITY,
                E::InsufficientData(_) => exit::INSUFFICIENT_DATA,
                E::Domain(_) | E::Shape { .. } | E::NegativeRadicand { .. } => exit::USAGE,
            };
        }
    }
    exit::FAILURE
}
