//! Physics-informed preprocessing for distributed multichannel acoustic sensing.
//!
//! Observed multichannel spectrograms are back-projected onto an imaging grid
//! through the free-space Green's function (reverse time migration) and then
//! forward-projected to every sensor, which re-synthesises ("inpaints")
//! degraded channels from the scene-consistent image. Around that core the
//! crate provides scene simulation, STFT/log-mel features, the oracle and
//! selector baselines, channel-contribution analysis and an experiment
//! harness.
//!
//! Module map:
//!
//! * [`geometry`]: sensor layouts, imaging grids, distances.
//! * [`dsp`]: STFT/ISTFT, mel filterbank, log-mel, SNR utilities.
//! * [`propagation`]: Green's-function operator, scene synthesis, degradation.
//! * [`rtm`]: back-projection, forward projection, Gram filter, inpainting.
//! * [`baselines`]: delay-and-sum and max-SNR oracles, sparsemax, channel swap.
//! * [`analysis`]: patch tokens, spatial weights, correlations, reference classifier.
//! * [`harness`]: dataset synthesis, pipeline sweeps, plot data.
//! * [`io`]: WAV, tensor and CSV file formats.

pub mod analysis;
pub mod baselines;
pub mod dsp;
mod error;
pub mod geometry;
pub mod harness;
pub mod io;
pub mod propagation;
pub mod rng;
pub mod rtm;

pub use error::{Error, Result};
pub use geometry::{Extent, ImagingGrid, LayoutKind, Position, SensorLayout};
pub use num_complex::Complex64;

/// Default speed of sound in air, m/s.
pub const SPEED_OF_SOUND: f64 = 343.0;
