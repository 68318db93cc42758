//! Detection algorithms for the one-bit massive MIMO uplink.
//!
//! The uplink model is `r̄ = H̄ x̄ + z̄` with K single-antenna users, N base-station
//! antennas (N ≥ K), i.i.d. CN(0,1) channel entries and CN(0, N0) noise. Each
//! antenna output is quantized to one bit per real dimension,
//! `ȳ = sign(Re r̄) + j·sign(Im r̄)`, and every detector in this crate works from
//! those coarse sign observations alone.
//!
//! The crate is organized in three tiers:
//!
//! * [`linear`] — classical combiners (MRC/ZF/MMSE and two quantization-aware
//!   variants) plus their Bussgang-based counterparts BMRC/BZF/BMMSE, which model
//!   the quantizer as a linear gain plus uncorrelated distortion.
//! * [`ml`] and [`obmnet`] — maximum-likelihood detection in the real-valued
//!   lifted domain, a sigmoid-based robust reformulation of the likelihood, and a
//!   deep-unfolded gradient-descent network whose only trainable weights are one
//!   step size per layer.
//! * [`nn_search`] — a second detection stage that enumerates the M nearest
//!   constellation vectors around a first-stage soft estimate via a recursive
//!   neighbor expansion, and re-scores them under the robust likelihood.
//!
//! [`bench`] ties the tiers together into seed-deterministic Monte Carlo BER and
//! timing experiments; [`config`] parses the experiment description files used by
//! the companion CLI.

pub mod bench;
pub mod channel;
pub mod config;
pub mod constellation;
pub mod linear;
pub mod math;
pub mod ml;
pub mod nn_search;
pub mod obmnet;
pub mod rng;

mod error;

pub use channel::{ChannelMatrix, TxRxSample};
pub use constellation::{Constellation, Modulation};
pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
