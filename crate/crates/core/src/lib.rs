//! Number amplification of bosonic modes on truncated Fock spaces.
//!
//! Linear (phase-insensitive and phase-sensitive) and nonlinear (number
//! amplifying) channels are built as explicit operator matrices, their output
//! statistics are compared against closed-form variances and signal-to-noise
//! ratios, and a seeded Monte Carlo engine samples the reservoir-mode models
//! directly. A spectral-filter stage models frequency filtering ahead of the
//! amplifier and thermal occupancy at the amplification frequency.

pub mod channels;
pub mod cli;
pub mod error;
pub mod filter;
pub mod fock;
pub mod mc;
pub mod noise;

pub use error::{Error, Result};
pub use fock::{FockSpace, NumberStats, OperatorMatrix};
