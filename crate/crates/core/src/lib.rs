//! Simulation and finite-key analysis of measurement-device-independent QKD
//! with time-bin qubits and a waveguide-integrated detector relay.
//!
//! The crate is organised bottom-up:
//!
//! * [`types`]: protocol configuration, labels and the tally table.
//! * [`optics`]: closed-form interference, QBER and beam-splitter relations.
//! * [`detector`]: nanowire detector click model with dead-time recovery.
//! * [`simulator`]: seeded, batch-parallel Monte Carlo of the relay.
//! * [`decoy`]: four-intensity decoy-state bounds and the secure key rate.
//! * [`bounds`]: reference rate bounds, loss sweeps and comparison tables.
//! * [`io`]: config, gains, tally and report file formats plus the CLI commands.

// Range checks are written `!(x > 0.0)` so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod decoy;
pub mod detector;
pub mod io;
pub mod optics;
pub mod simulator;
pub mod types;

pub use types::{Basis, BellState, BsmOutcome, IntensityLabel, IntensityPair, ProtocolConfig, PulseFrame, TallyTable};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config: {}", format_violations(.0))]
    Validation(Vec<types::Violation>),
    #[error("{0}")]
    Domain(String),
    #[error("invalid counts: {0}")]
    InvalidCounts(String),
    #[error("missing intensity pair {0}")]
    MissingPair(String),
    #[error("no successes in {0}")]
    NoSuccesses(String),
    #[error("analysis infeasible: {0}")]
    Infeasible(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("{0}")]
    Mismatch(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

fn format_violations(v: &[types::Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 2,
            Error::Infeasible(_) => 3,
            _ => 1,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
