//! Simulation and estimation toolkit for two-photon interference between a
//! sub-Poissonian single-photon emitter and a weak coherent laser.
//!
//! - [`model`]: analytic coincidence correlation, visibility, instrument
//!   response convolution and derived closed forms.
//! - [`simulate`]: seeded Monte Carlo photon streams, detector effects,
//!   model-faithful coincidence sampling and TCSPC-style correlation.
//! - [`estimate`]: tail normalization, visibility error propagation and
//!   damped least-squares fits.
//! - [`io`]: scenario, timestamp, histogram, curve and report files.

pub mod error;
pub mod estimate;
pub mod io;
pub mod model;
pub mod simulate;

pub use error::{Error, Result};
pub use model::{EmitterModel, JitterConvention, ModelCurve, Polarization, TpiParams};
pub use simulate::{Channel, CorrelationHistogram, DetectionRecord, DetectorSpec, HistogramGrid};
