//! Physical constants and the single unit-conversion layer.
//!
//! Frequencies and rates are stored in s⁻¹ throughout. The NV splitting is an
//! angular frequency, `2π · 2.87 GHz`. Fluctuation rates are reported in "GHz"
//! by dividing by 10⁹ only, with no factor of 2π; this is the only place
//! where that convention is applied.

use std::f64::consts::PI;

/// Boltzmann constant, J/K (exact SI).
pub const K_B: f64 = 1.380649e-23;
/// Reduced Planck constant, J·s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// μ0 / 4π, T·m/A.
pub const MU0_OVER_4PI: f64 = 1.0e-7;
/// Free-electron gyromagnetic ratio, rad/(s·T).
pub const GAMMA_E: f64 = 1.760_859e11;
/// NV zero-field splitting, cyclic Hz.
pub const NV_SPLITTING_HZ: f64 = 2.87e9;
/// Room temperature used for all solvent data, K.
pub const ROOM_TEMPERATURE: f64 = 298.15;

/// Default NV zero-field splitting as an angular frequency, rad/s.
pub fn nv_omega0() -> f64 {
    2.0 * PI * NV_SPLITTING_HZ
}

/// Rate in s⁻¹ to the "GHz" used for fluctuation rates (divide by 10⁹ only).
pub fn rate_to_ghz(rate: f64) -> f64 {
    rate * 1e-9
}

/// Inverse of [`rate_to_ghz`].
pub fn rate_from_ghz(ghz: f64) -> f64 {
    ghz * 1e9
}

pub fn nm(value: f64) -> f64 {
    value * 1e-9
}

pub fn per_nm2(value: f64) -> f64 {
    value * 1e18
}

/// m⁻² to nm⁻².
pub fn to_per_nm2(value: f64) -> f64 {
    value * 1e-18
}

/// Millimolar to molecules per m³.
pub fn millimolar(value: f64) -> f64 {
    value * 6.022_140_76e23
}
