//! Link-level simulator and numerical library for the multiuser multi-antenna
//! TDD downlink.
//!
//! A base-station with `M` antennas serves `K` single-antenna users over
//! Rayleigh block-fading channels. Each coherence interval of `T` symbols is
//! split into reverse-link training, a computation gap, optional precoded
//! forward pilots, and data transmission. The library covers the full chain:
//!
//! * LMMSE channel estimation from reverse pilots ([`estimation`])
//! * generalized zero-forcing precoding with per-user parameters and the
//!   water-filling optimizer for those parameters ([`gzf`])
//! * opportunistic user selection rules and selection-probability
//!   estimation ([`selection`])
//! * fixed-point sum-rate precoders for known and estimated channels
//!   ([`svh`])
//! * forward pilot patterns and conditional gain estimation ([`pilots`])
//! * achievable-rate formulas, genie upper bounds, and training-length /
//!   selection-size optimization ([`rates`])
//! * scenario running, benchmark tables, sweeps, and CSV output
//!   ([`experiments`])
//!
//! Everything is driven by seeded, splittable random streams ([`rng`]) so any
//! result is reproducible bit-for-bit from `(scenario, seed)`.
//!
//! See the crate examples for runnable demonstrations of each capability, and
//! the `mumimo` binary for the scenario-runner command line.

pub mod cmat;
pub mod config;
pub mod estimation;
pub mod experiments;
pub mod gzf;
pub mod pilots;
pub mod rates;
pub mod rng;
pub mod selection;
pub mod svh;

/// Errors produced by the simulator.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A configuration constraint was violated; the message names it.
    #[error("invalid configuration: {0}")]
    Config(String),
    /// A matrix that must be inverted is numerically singular.
    #[error("numerically singular matrix: {0}")]
    Singular(String),
    /// Every importance weight underflowed; the posterior cannot be formed.
    /// Callers should retry with more samples.
    #[error("degenerate posterior: all importance weights underflowed")]
    DegeneratePosterior,
    /// An operation was called outside its domain (e.g. a homogeneous-only
    /// formula on a heterogeneous configuration).
    #[error("{0}")]
    Misuse(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    /// A scenario or result file could not be parsed.
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
