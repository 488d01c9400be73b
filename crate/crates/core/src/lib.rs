//! Millimeter-wave channel acquisition, tracking and abrupt change detection.
//!
//! The channel between an `n_t`-antenna transmitter and an `n_r`-antenna
//! receiver is a handful of propagation paths, each described by a complex
//! gain and a (departure, arrival) angle pair. Both ends use a single RF chain,
//! so the receiver only ever sees scalar pilot observations through analog
//! beams. This crate estimates the paths from those observations:
//!
//! * [`acquisition`] finds a starting point by successive interference
//!   cancellation over the pilot grid and refines it with Levenberg-Marquardt
//!   on the separable least-squares residual.
//! * [`tracking`] follows slow angle drift with an extended Kalman filter
//!   while the gains stay fixed.
//! * [`detection`] tests every slot for an abrupt change (a path appearing or
//!   disappearing) with a chi-squared threshold on the whitened residual.
//!
//! [`channel`] and [`sounding`] synthesize the ground truth and the pilot
//! measurements, and [`harness`] drives the Monte Carlo experiments.
//!
//! ```
//! use mmwave::channel::{ArrayGeometry, PathSet};
//! use mmwave::sounding::{design_grid, sound_channel};
//! use mmwave::acquisition::{acquire, SicConfig};
//! use mmwave::numerics::{LmConfig, RngState};
//! use num_complex::Complex64;
//!
//! let geom = ArrayGeometry::new(16, 16).unwrap();
//! let grid = design_grid(16, 16, &geom).unwrap();
//! let truth = PathSet::new(vec![Complex64::new(12.0, -5.0)], vec![1.1, 2.3]).unwrap();
//! let h = mmwave::channel::assemble_channel(&truth, &geom);
//!
//! let mut rng = RngState::new(7);
//! let y = sound_channel(&h, &grid, 0.0256, &mut rng).unwrap();
//! let est = acquire(&y, &grid, &geom, &SicConfig::for_noise(0.0256), &LmConfig::default(), 10.0).unwrap();
//! assert_eq!(est.paths.len(), 1);
//! assert!((est.paths.tx_angles()[0].cos() - 1.1f64.cos()).abs() < 1e-3);
//! ```

pub mod acquisition;
pub mod channel;
pub mod detection;
mod error;
pub mod harness;
pub mod numerics;
pub mod sounding;
pub mod tracking;

pub use error::{Error, Result};

/// Complex matrix type used for every channel-sized quantity.
pub type CMatrix = nalgebra::DMatrix<num_complex::Complex64>;
/// Complex column vector.
pub type CVector = nalgebra::DVector<num_complex::Complex64>;
