//! Relaxometry engine for sensing rotational Brownian motion of magnetic
//! molecules with nitrogen-vacancy spins in nanodiamonds.
//!
//! The crate is organised bottom-up:
//!
//! - [`relax`]: Lorentzian noise spectra and the longitudinal relaxation sum.
//! - [`hydro`]: Stokes-Einstein-Debye rotation rates, solvent mixtures and the
//!   fluctuation-rate breakdown of a Gd(III) bath.
//! - [`bath`]: transverse field variances of surface and volume spin baths,
//!   their Monte Carlo oracle, and bath calibration/inversion.
//! - [`measure`]: photon-counting simulation of the all-optical T1 protocol,
//!   exponential fitting and spot-ensemble statistics.
//! - [`sensitivity`]: minimal detectable fluctuation rate, its shot-noise
//!   oracle and the density optimisation.
//! - [`scenario`]: the full physical configuration and the forward pipeline.

pub mod bath;
pub mod calibration;
pub mod error;
pub mod hydro;
pub mod io;
pub mod measure;
pub mod quadrature;
pub mod relax;
pub mod scenario;
pub mod sensitivity;
pub mod units;

pub use error::{Error, Result};
pub use relax::{AngularFrequency, NoiseSource, RelaxationResult};
pub use scenario::{Scenario, ScenarioConfig};
