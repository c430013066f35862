//! Non-stationary geometry-based stochastic channel simulator for
//! vehicular mmWave links.
//!
//! The crate covers the full pipeline:
//!
//! * [`pointcloud`]: turning raw roadside LiDAR sweeps into labeled
//!   static/dynamic scatterers,
//! * [`charfit`]: extracting per-link channel characteristics and fitting
//!   the distribution families that describe them,
//! * [`registry`]: the fitted parameter tables (including the built-in
//!   table regressed from the reference measurement campaign) and the
//!   distribution families themselves,
//! * [`scene`]: sampling twin-cluster scatterer geometry around a moving
//!   transmitter/receiver pair,
//! * [`evolution`]: visibility-region driven cluster birth and death,
//! * [`channel`]: assembling channel impulse responses and time-variant
//!   transfer functions, and
//! * [`stats`]: ensemble correlation functions and Doppler spectra.

pub mod channel;
pub mod charfit;
pub mod config;
pub mod evolution;
pub mod geom;
pub mod io;
pub mod pointcloud;
pub mod registry;
pub mod scene;
pub mod sim;
pub mod stats;
pub mod stream;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
