//! Shot-noise-limited sensitivity to changes of the total Gd fluctuation rate.
//!
//! [`delta_r_min`] is the closed-form minimal detectable rate change per √T.
//! [`ShotNoiseOracle`] derives the same quantity numerically from the
//! photon-counting model: it differentiates the readout signal with respect
//! to the fluctuation rate by central differences, divides the Poisson noise
//! by that slope, and picks the best single dark time.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_non_negative, ensure_positive, Error, Result};
use crate::hydro::RateBreakdown;
use crate::relax::{rate_contribution, AngularFrequency, NoiseSource};

/// Inputs of the closed-form sensitivity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityInputs {
    pub contrast: f64,
    /// Photon count rate, counts/s.
    pub photon_rate: f64,
    /// Detection window, s.
    pub detection_window: f64,
    /// Total acquisition time T, s.
    pub acquisition_time: f64,
    /// Gyromagnetic ratio, rad/(s·T).
    pub gamma_e: f64,
    /// Gd transverse field variance, T².
    pub b_perp_sq: f64,
    /// Total Gd fluctuation rate, s⁻¹.
    pub r_total: f64,
    pub omega0: AngularFrequency,
}

impl SensitivityInputs {
    /// Readout parameters C = 0.2, 𝒟 = 10⁵ s⁻¹, T_D = 500 ns, T = 10 s.
    pub fn readout_defaults(gamma_e: f64, omega0: AngularFrequency) -> Self {
        Self {
            contrast: 0.2,
            photon_rate: 1e5,
            detection_window: 500e-9,
            acquisition_time: 10.0,
            gamma_e,
            b_perp_sq: 0.0,
            r_total: 0.0,
            omega0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.contrast > 0.0 && self.contrast < 1.0) {
            return Err(Error::param("contrast", "must lie in (0, 1)"));
        }
        ensure_positive("photon_rate", self.photon_rate)?;
        ensure_positive("detection_window", self.detection_window)?;
        ensure_positive("acquisition_time", self.acquisition_time)?;
        if !self.gamma_e.is_finite() || self.gamma_e == 0.0 {
            return Err(Error::param("gamma_e", "must be finite and non-zero"));
        }
        ensure_positive("b_perp_sq", self.b_perp_sq)?;
        ensure_positive("r_total", self.r_total)?;
        ensure_positive("omega0", self.omega0.value())
    }

    fn check_not_resonant(&self) -> Result<()> {
        let (r, w) = (self.r_total, self.omega0.value());
        if (r * r - w * w).abs() <= 1e-12 * w * w {
            return Err(Error::Singular(format!(
                "fluctuation rate {r:e} s⁻¹ equals the splitting; the relaxation rate is stationary there"
            )));
        }
        Ok(())
    }
}

/// Minimal detectable change of the total fluctuation rate, s⁻¹.
pub fn delta_r_min(inp: &SensitivityInputs) -> Result<f64> {
    inp.validate()?;
    inp.check_not_resonant()?;
    let r = inp.r_total;
    let w2 = inp.omega0.value().powi(2);
    let shot = 1.0
        / (inp.contrast * (inp.photon_rate * inp.detection_window * inp.acquisition_time).sqrt());
    let coupling =
        (2.0 * std::f64::consts::E * r / (3.0 * inp.gamma_e * inp.gamma_e * inp.b_perp_sq)).sqrt();
    Ok(shot * coupling * (r * r + w2).powf(1.5) / (r * r - w2).abs())
}

/// Numerical shot-noise oracle for the single-dark-time readout.
///
/// The signal is `1 − C + C·exp(−τ·Γ(R))` with `Γ(R)` the background rate
/// plus the Gd contribution of the relaxation sum. One shot lasts the dark
/// time, so `T/τ` shots fit in the acquisition time, each collecting Poisson
/// counts with mean `𝒟·T_D·signal`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShotNoiseOracle {
    pub inputs: SensitivityInputs,
    /// Relaxation rate not coming from the Gd bath, s⁻¹.
    pub background_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleEstimate {
    /// Minimal detectable rate change, s⁻¹.
    pub delta_r: f64,
    /// Optimal dark time, s.
    pub tau_opt: f64,
    /// Relaxation rate at `r_total`, s⁻¹.
    pub relaxation_rate: f64,
}

impl ShotNoiseOracle {
    fn relaxation_rate(&self, r: f64) -> Result<f64> {
        let source = NoiseSource::from_rate(self.inputs.gamma_e, self.inputs.b_perp_sq, r)?;
        Ok(self.background_rate + rate_contribution(&source, self.inputs.omega0)?)
    }

    fn signal(&self, tau: f64, gamma: f64) -> f64 {
        let c = self.inputs.contrast;
        1.0 - c + c * (-tau * gamma).exp()
    }

    /// δR at dark time `tau`, with relaxation rates at `r ± h` precomputed.
    fn delta_at(&self, tau: f64, g_mid: f64, g_lo: f64, g_hi: f64, h: f64) -> f64 {
        let inp = &self.inputs;
        let slope = (self.signal(tau, g_hi) - self.signal(tau, g_lo)) / (2.0 * h);
        let counts = inp.photon_rate * inp.detection_window;
        let noise = (self.signal(tau, g_mid) / counts * tau / inp.acquisition_time).sqrt();
        noise / slope.abs()
    }

    /// Minimal detectable δR at `r_total`, using a central difference of
    /// half-width `perturbation` (at most 1% of `r_total`).
    pub fn delta_r(&self, r_total: f64, perturbation: f64) -> Result<OracleEstimate> {
        let mut inp = self.inputs;
        inp.r_total = r_total;
        inp.validate()?;
        ensure_non_negative("background_rate", self.background_rate)?;
        ensure_positive("perturbation", perturbation)?;
        if perturbation > 0.01 * r_total {
            return Err(Error::param(
                "perturbation",
                "must be at most 1% of r_total",
            ));
        }
        if (r_total - inp.omega0.value()).abs() <= perturbation {
            return Err(Error::Singular(
                "derivative of the relaxation rate vanishes at the splitting".into(),
            ));
        }
        let g_mid = self.relaxation_rate(r_total)?;
        let g_lo = self.relaxation_rate(r_total - perturbation)?;
        let g_hi = self.relaxation_rate(r_total + perturbation)?;
        if g_hi == g_lo {
            return Err(Error::Singular("signal does not depend on the rate".into()));
        }

        // Golden-section search over log τ across five decades around 1/Γ.
        let f = |log_tau: f64| self.delta_at(log_tau.exp(), g_mid, g_lo, g_hi, perturbation);
        let center = (1.0 / g_mid).ln();
        let (mut lo, mut hi) = (
            center - 3.0 * std::f64::consts::LN_10,
            center + 2.0 * std::f64::consts::LN_10,
        );
        let phi = 0.5 * (5f64.sqrt() - 1.0);
        let mut a = hi - phi * (hi - lo);
        let mut b = lo + phi * (hi - lo);
        let (mut fa, mut fb) = (f(a), f(b));
        for _ in 0..200 {
            if fa < fb {
                hi = b;
                b = a;
                fb = fa;
                a = hi - phi * (hi - lo);
                fa = f(a);
            } else {
                lo = a;
                a = b;
                fa = fb;
                b = lo + phi * (hi - lo);
                fb = f(b);
            }
            if hi - lo < 1e-10 {
                break;
            }
        }
        let log_tau = 0.5 * (lo + hi);
        Ok(OracleEstimate {
            delta_r: f(log_tau),
            tau_opt: log_tau.exp(),
            relaxation_rate: g_mid,
        })
    }
}

/// Closed form divided by the oracle on a log grid of rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleScan {
    /// `(r_total, closed form / oracle)` pairs, s⁻¹.
    pub ratios: Vec<(f64, f64)>,
    /// Geometric middle of the ratio range.
    pub offset: f64,
    /// Largest relative deviation of any ratio from `offset`.
    pub max_deviation: f64,
}

/// Compares [`delta_r_min`] with the zero-background oracle over
/// `[lo·ω0, hi·ω0]`, skipping rates within `exclusion·ω0` of the splitting.
pub fn oracle_ratio_scan(
    inputs: &SensitivityInputs,
    lo: f64,
    hi: f64,
    per_decade: usize,
    exclusion: f64,
) -> Result<OracleScan> {
    ensure_positive("lo", lo)?;
    if hi.partial_cmp(&lo) != Some(std::cmp::Ordering::Greater) || per_decade == 0 {
        return Err(Error::param(
            "scan",
            "need hi > lo and at least one point per decade",
        ));
    }
    let w0 = inputs.omega0.value();
    let oracle = ShotNoiseOracle {
        inputs: *inputs,
        background_rate: 0.0,
    };
    let n = ((hi / lo).log10() * per_decade as f64).round() as usize;
    let mut ratios = Vec::new();
    for i in 0..=n {
        let r = lo * w0 * (hi / lo).powf(i as f64 / n as f64);
        if (r - w0).abs() < exclusion * w0 {
            continue;
        }
        let closed = delta_r_min(&SensitivityInputs {
            r_total: r,
            ..*inputs
        })?;
        ratios.push((r, closed / oracle.delta_r(r, 1e-4 * r)?.delta_r));
    }
    if ratios.is_empty() {
        return Err(Error::param("scan", "every grid point is excluded"));
    }
    let min = ratios.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let max = ratios.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let offset = (min * max).sqrt();
    Ok(OracleScan {
        ratios,
        offset,
        max_deviation: (max / offset - 1.0).max(1.0 - min / offset),
    })
}

/// Gd bath response to its number density.
pub trait DensityModel {
    /// Gd transverse field variance at density `n`, T².
    fn gd_b_perp_sq(&self, density: f64) -> Result<f64>;
    /// Fluctuation-rate breakdown at density `n`.
    fn gd_rates(&self, density: f64) -> Result<RateBreakdown>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityPoint {
    /// m⁻³.
    pub density: f64,
    /// s⁻¹.
    pub r_total: f64,
    /// s⁻¹.
    pub delta_r_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityCurve {
    pub points: Vec<SensitivityPoint>,
    /// Grid densities that were skipped, with the reason.
    pub skipped: Vec<(f64, String)>,
    /// Index into `points` of the smallest δR.
    pub argmin: usize,
    /// The minimum sits on the first or last grid point.
    pub boundary_warning: bool,
}

impl SensitivityCurve {
    pub fn minimum(&self) -> &SensitivityPoint {
        &self.points[self.argmin]
    }

    /// True when the curve falls strictly to a single interior minimum and
    /// rises strictly after it.
    pub fn is_u_shaped(&self) -> bool {
        let k = self.argmin;
        !self.boundary_warning
            && self.points[..=k]
                .windows(2)
                .all(|w| w[1].delta_r_min < w[0].delta_r_min)
            && self.points[k..]
                .windows(2)
                .all(|w| w[1].delta_r_min > w[0].delta_r_min)
    }
}

/// Log-spaced densities, `per_decade` points per decade over `decades`
/// decades centred (in log space) on `center`.
pub fn density_grid(center: f64, decades: f64, per_decade: usize) -> Result<Vec<f64>> {
    ensure_positive("center", center)?;
    ensure_positive("decades", decades)?;
    let n = (decades * per_decade as f64).round() as usize;
    let start = center.log10() - 0.5 * decades;
    Ok((0..=n)
        .map(|i| 10f64.powf(start + i as f64 / per_decade as f64))
        .collect())
}

/// Evaluates δR over a density grid and locates the optimum.
///
/// `readout` supplies C, 𝒟, T_D, T, γ and ω0; its `b_perp_sq` and `r_total`
/// are replaced at each density. Points at the splitting singularity are
/// skipped and listed.
pub fn optimize_density<M: DensityModel>(
    model: &M,
    grid: &[f64],
    readout: &SensitivityInputs,
) -> Result<SensitivityCurve> {
    if grid.len() < 3 {
        return Err(Error::param("density_grid", "need at least 3 points"));
    }
    if grid.iter().any(|n| !(n.is_finite() && *n > 0.0)) {
        return Err(Error::param("density_grid", "densities must be positive"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param("density_grid", "must be strictly ascending"));
    }
    if grid[grid.len() - 1] / grid[0] < 100.0 * (1.0 - 1e-12) {
        return Err(Error::param(
            "density_grid",
            "must span at least two decades",
        ));
    }
    let mut points = Vec::with_capacity(grid.len());
    let mut skipped = Vec::new();
    for &density in grid {
        let inputs = SensitivityInputs {
            b_perp_sq: model.gd_b_perp_sq(density)?,
            r_total: model.gd_rates(density)?.r_total,
            ..*readout
        };
        match delta_r_min(&inputs) {
            Ok(d) => points.push(SensitivityPoint {
                density,
                r_total: inputs.r_total,
                delta_r_min: d,
            }),
            Err(Error::Singular(msg)) => skipped.push((density, msg)),
            Err(e) => return Err(e),
        }
    }
    if points.is_empty() {
        return Err(Error::Singular("every grid point is singular".into()));
    }
    let argmin = points
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.delta_r_min.total_cmp(&b.1.delta_r_min))
        .map(|(i, _)| i)
        .unwrap();
    let boundary_warning = argmin == 0 || argmin == points.len() - 1;
    Ok(SensitivityCurve {
        points,
        skipped,
        argmin,
        boundary_warning,
    })
}
