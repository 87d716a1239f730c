//! Multi-user secret key generation over TDD massive MIMO channels.
//!
//! This crate simulates the full physical-layer key generation pipeline for a
//! base station serving several user terminals at once:
//!
//! - geometric multipath MIMO channels and their beam-domain representation
//!   ([`channel`]),
//! - the two-phase downlink/uplink pilot probing protocol with least-squares
//!   estimation, for orthogonal and reused pilots ([`probing`]),
//! - closed-form secret key rates, an empirical Gaussian mutual-information
//!   oracle and the cross-user information leakage ratio ([`keyrate`]),
//! - precoder/combiner design by eigen-beam selection with non-overlapping
//!   beam allocation and interference neutralization ([`design`]),
//! - quantization of channel estimates into key bits and randomness testing
//!   of the resulting sequences ([`keygen`], [`nist`]),
//! - reproducible experiment sweeps that drive all of the above and emit CSV
//!   tables ([`experiments`]).
//!
//! All randomness flows through seeded [`rng::Streams`], so every simulation
//! is bit-reproducible for a fixed seed, including parallel runs.

pub mod channel;
pub mod design;
pub mod error;
pub mod experiments;
pub mod keygen;
pub mod keyrate;
pub mod linalg;
pub mod nist;
pub mod probing;
pub mod rng;

pub use error::{Error, Result};
pub use linalg::{CMat, CVec, Cpx};
