//! Baseband simulation of a coordinated FMCW-OFDM sensing and communication link.
//!
//! Signal processing is generic over the sample scalar ([`Real`], `f32` or
//! `f64`); physical parameters are always `f64`.
pub mod baseline;
pub mod chanest;
pub mod channel;
pub mod config;
pub mod dsp;
pub mod error;
pub mod ldpc;
pub mod num;
pub mod rxchain;
pub mod sensing;
pub mod waveform;

pub use config::SystemConfig;
pub use error::{Error, Result};
pub use num::Real;

/// Double-precision sample sequence.
pub type Sequence = dsp::ComplexSequence<f64>;
/// Single-precision sample sequence.
pub type Sequence32 = dsp::ComplexSequence<f32>;
/// Double-precision frequency grid.
pub type Grid = waveform::FrameGrid<f64>;
/// Single-precision frequency grid.
pub type Grid32 = waveform::FrameGrid<f32>;
