//! Longitudinal relaxation of an NV spin driven by Lorentzian magnetic noise.
//!
//! Every bath component is an exponentially correlated transverse field with
//! mean-square amplitude `b_perp_sq` and correlation time `tau_c`. Its power
//! spectral density is `S(ω) = b² · 2τc / (1 + ω²τc²)` and it contributes
//! `3γ²·b²·τc / (1 + ω0²τc²)` to `1/T1`.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};
use crate::quadrature::log_panels;

/// Accepted range for correlation times, s. Values outside are rejected.
pub const TAU_C_RANGE: (f64, f64) = (1e-15, 1e3);

/// Angular frequency in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct AngularFrequency(f64);

impl AngularFrequency {
    pub fn new(rad_per_s: f64) -> Result<Self> {
        if !rad_per_s.is_finite() || rad_per_s < 0.0 {
            return Err(Error::param(
                "omega",
                format!("angular frequency must be finite and >= 0, got {rad_per_s}"),
            ));
        }
        Ok(Self(rad_per_s))
    }

    /// From a cyclic frequency in Hz (multiplies by 2π).
    pub fn from_hz(hz: f64) -> Result<Self> {
        Self::new(2.0 * std::f64::consts::PI * hz)
    }

    /// The NV zero-field splitting, 2π · 2.87 GHz.
    pub fn nv_zero_field() -> Self {
        Self(crate::units::nv_omega0())
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Cyclic GHz: value / (2π·10⁹).
    pub fn cyclic_ghz(self) -> f64 {
        self.0 / (2.0 * std::f64::consts::PI * 1e9)
    }
}

/// One Lorentzian bath component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSource {
    /// Gyromagnetic ratio, rad/(s·T).
    pub gamma: f64,
    /// Mean-square transverse field, T².
    pub b_perp_sq: f64,
    /// Correlation time, s.
    pub tau_c: f64,
}

impl NoiseSource {
    pub fn new(gamma: f64, b_perp_sq: f64, tau_c: f64) -> Result<Self> {
        let source = Self {
            gamma,
            b_perp_sq,
            tau_c,
        };
        source.validate()?;
        Ok(source)
    }

    /// Source whose correlation time is the inverse of its total fluctuation rate.
    pub fn from_rate(gamma: f64, b_perp_sq: f64, rate: f64) -> Result<Self> {
        ensure_positive("rate", rate)?;
        Self::new(gamma, b_perp_sq, 1.0 / rate)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.gamma.is_finite() || self.gamma == 0.0 {
            return Err(Error::param("gamma", "must be finite and non-zero"));
        }
        if !self.b_perp_sq.is_finite() || self.b_perp_sq < 0.0 {
            return Err(Error::param(
                "b_perp_sq",
                format!("must be finite and >= 0, got {}", self.b_perp_sq),
            ));
        }
        if !(self.tau_c >= TAU_C_RANGE.0 && self.tau_c <= TAU_C_RANGE.1) {
            return Err(Error::param(
                "tau_c",
                format!(
                    "must lie in [{:e}, {:e}] s, got {:e}",
                    TAU_C_RANGE.0, TAU_C_RANGE.1, self.tau_c
                ),
            ));
        }
        Ok(())
    }

    /// Total fluctuation rate, 1/τc.
    pub fn rate(&self) -> f64 {
        1.0 / self.tau_c
    }

    pub fn with_rate(&self, rate: f64) -> Result<Self> {
        Self::from_rate(self.gamma, self.b_perp_sq, rate)
    }
}

/// Outcome of the relaxation sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxationResult {
    /// Relaxation time, s.
    pub t1: f64,
    /// 1/T1, s⁻¹.
    pub rate_total: f64,
    /// Bulk relaxation rate 1/T1,bulk, s⁻¹.
    pub rate_bulk: f64,
    /// Contribution of each source, in input order, s⁻¹.
    pub per_source_rates: Vec<f64>,
}

/// Spectral density of the source's transverse field at `omega`, T²·s.
pub fn lorentzian_psd(source: &NoiseSource, omega: AngularFrequency) -> Result<f64> {
    source.validate()?;
    let wt = omega.value() * source.tau_c;
    Ok(source.b_perp_sq * 2.0 * source.tau_c / (1.0 + wt * wt))
}

/// `∫ S(ω) dω / 2π` over the whole frequency axis divided by `b²`; exactly
/// one for a Lorentzian. Numerical quadrature up to `10⁹/τc` plus the
/// analytic `1/ω²` tail beyond.
pub fn psd_normalisation(source: &NoiseSource) -> Result<f64> {
    source.validate()?;
    let tau = source.tau_c;
    let psd = |w: f64| {
        let wt = w * tau;
        source.b_perp_sq * 2.0 * tau / (1.0 + wt * wt)
    };
    let upper = 1e9 / tau;
    let body = log_panels(&psd, 1e-3 / tau, upper, 8, 1e-10);
    let tail = 2.0 * source.b_perp_sq / (tau * upper);
    // Even integrand: twice the positive half-axis.
    Ok(2.0 * (body + tail) / (2.0 * std::f64::consts::PI) / source.b_perp_sq)
}

/// Contribution of one source to 1/T1, s⁻¹.
pub fn rate_contribution(source: &NoiseSource, omega0: AngularFrequency) -> Result<f64> {
    source.validate()?;
    let wt = omega0.value() * source.tau_c;
    Ok(3.0 * source.gamma * source.gamma * source.b_perp_sq * source.tau_c / (1.0 + wt * wt))
}

/// Sums bulk relaxation and all source contributions.
pub fn t1_total(
    sources: &[NoiseSource],
    t1_bulk: f64,
    omega0: AngularFrequency,
) -> Result<RelaxationResult> {
    ensure_positive("t1_bulk", t1_bulk)?;
    let per_source_rates = sources
        .iter()
        .map(|s| rate_contribution(s, omega0))
        .collect::<Result<Vec<_>>>()?;
    let rate_bulk = 1.0 / t1_bulk;
    let rate_total = rate_bulk + per_source_rates.iter().sum::<f64>();
    Ok(RelaxationResult {
        t1: 1.0 / rate_total,
        rate_total,
        rate_bulk,
        per_source_rates,
    })
}

/// Contribution of `template` to 1/T1 as its fluctuation rate sweeps `rate_grid`.
///
/// Returns `(rate, contribution)` pairs. The contribution peaks where the rate
/// equals `omega0`.
pub fn motional_narrowing_curve(
    template: &NoiseSource,
    omega0: AngularFrequency,
    rate_grid: &[f64],
) -> Result<Vec<(f64, f64)>> {
    if rate_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::param("rate_grid", "must be sorted ascending"));
    }
    rate_grid
        .iter()
        .map(|&rate| {
            let source = template.with_rate(rate)?;
            Ok((rate, rate_contribution(&source, omega0)?))
        })
        .collect()
}
