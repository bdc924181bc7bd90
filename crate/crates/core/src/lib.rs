//! Privacy-preserving RIS-assisted sensing and communication.
//!
//! `channel` holds the narrowband model, `beamform` designs per-row beam
//! pairs, `scheduler` turns a shared key into a masking schedule, `sim`
//! synthesizes CSI traces and `demask` recovers the sensing signal on the
//! keyed receiver.

pub mod beamform;
pub mod channel;
pub mod demask;
pub mod error;
pub mod io;
pub mod scheduler;
pub mod sim;

pub use error::{Error, Result, Stage};

pub type C64 = num_complex::Complex64;
