//! Staggered-TDM MIMO FMCW imaging radar: a point-target simulator and the
//! full receive chain from raw data cubes to range-azimuth spectra.
//!
//! Velocity ambiguity introduced by time-multiplexing the transmitters is
//! resolved from two frames with different chirp repetition intervals
//! (candidate-set intersection) and the phases of overlapped virtual
//! elements; the resolved velocity then removes the per-transmitter phase
//! migration before angle estimation.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod angle;
pub mod array;
pub mod demo;
pub mod dsp;
pub mod error;
pub mod io;
pub mod params;
pub mod pipeline;
pub mod sim;
pub mod unfold;

pub use error::{RadarError, Result};
