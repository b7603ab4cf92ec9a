//! Brownian fluctuation rates of a magnetic molecule in a solvent.
//!
//! Rotation follows the Stokes-Einstein-Debye law with the Gierer-Wirtz
//! microviscosity correction. Translation uses the Stokes-Einstein diffusion
//! coefficient over a fixed length scale. Binary solvents are described by a
//! tabulated viscosity curve with monotone cubic interpolation.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_non_negative, ensure_positive, Error, Result};
use crate::units::K_B;

/// Built-in water-acetone viscosity table at 298 K.
pub const WATER_ACETONE_TABLE: &str = include_str!("../data/water_acetone_298K.csv");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HydroParams {
    /// Hydrodynamic radius of the tracked molecule, m.
    pub a: f64,
    /// Solvent molecular radius, m.
    pub a_s: f64,
    /// Dynamic viscosity, Pa·s.
    pub eta: f64,
    /// Temperature, K.
    pub temperature: f64,
}

impl HydroParams {
    pub fn validate(&self) -> Result<()> {
        ensure_positive("a", self.a)?;
        ensure_non_negative("a_s", self.a_s)?;
        ensure_positive("eta", self.eta)?;
        ensure_positive("temperature", self.temperature)
    }
}

/// Four fluctuation-rate components of a Gd(III) bath and their sum, s⁻¹.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateBreakdown {
    pub r_dip: f64,
    pub r_vib: f64,
    pub r_trans: f64,
    pub r_rot: f64,
    pub r_total: f64,
}

/// Microviscosity factor f_r for a solute of radius `a` among solvent
/// molecules of radius `a_s`. Always in (0, 1].
pub fn microviscosity_factor(a: f64, a_s: f64) -> Result<f64> {
    ensure_positive("a", a)?;
    ensure_non_negative("a_s", a_s)?;
    let ratio = a_s / a;
    let shell = (1.0 + 3.0 * a_s / (a + 2.0 * a_s)) / (1.0 + 2.0 * ratio).powi(3);
    Ok(1.0 / (6.0 * ratio + shell))
}

/// Rotational Brownian motion rate k_B·T / (8π a³ η f_r), s⁻¹.
pub fn rbm_rate(p: &HydroParams) -> Result<f64> {
    p.validate()?;
    let fr = microviscosity_factor(p.a, p.a_s)?;
    Ok(K_B * p.temperature / (8.0 * PI * p.a.powi(3) * p.eta * fr))
}

/// Rotation rate of the continuum Stokes-Einstein-Debye law (f_r = 1).
pub fn rbm_rate_continuum(p: &HydroParams) -> Result<f64> {
    p.validate()?;
    Ok(K_B * p.temperature / (8.0 * PI * p.a.powi(3) * p.eta))
}

/// Translational diffusion coefficient k_B·T / (6π η a), m²/s.
pub fn translational_diffusion(p: &HydroParams) -> Result<f64> {
    p.validate()?;
    Ok(K_B * p.temperature / (6.0 * PI * p.eta * p.a))
}

/// Translational fluctuation rate D_t / L², s⁻¹.
pub fn translational_rate(p: &HydroParams, length_scale: f64) -> Result<f64> {
    ensure_positive("length_scale", length_scale)?;
    Ok(translational_diffusion(p)? / (length_scale * length_scale))
}

/// Component-preserving sum of the four rates.
pub fn total_rate(r_dip: f64, r_vib: f64, r_trans: f64, r_rot: f64) -> Result<RateBreakdown> {
    ensure_non_negative("r_dip", r_dip)?;
    ensure_non_negative("r_vib", r_vib)?;
    ensure_non_negative("r_trans", r_trans)?;
    ensure_non_negative("r_rot", r_rot)?;
    Ok(RateBreakdown {
        r_dip,
        r_vib,
        r_trans,
        r_rot,
        r_total: r_dip + r_vib + r_trans + r_rot,
    })
}

/// Viscosity against water mole fraction, interpolated with a
/// shape-preserving (Fritsch-Carlson) cubic.
#[derive(Debug, Clone, PartialEq)]
pub struct ViscosityTable {
    x: Vec<f64>,
    eta: Vec<f64>,
    slopes: Vec<f64>,
}

impl ViscosityTable {
    /// Builds from `(mole fraction, viscosity in Pa·s)` nodes.
    pub fn new(nodes: Vec<(f64, f64)>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::param("viscosity_table", "needs at least two nodes"));
        }
        if nodes.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::param(
                "viscosity_table",
                "mole fractions must be strictly increasing",
            ));
        }
        let (first, last) = (nodes[0].0, nodes[nodes.len() - 1].0);
        if first != 0.0 || last != 1.0 {
            return Err(Error::param(
                "viscosity_table",
                format!("must cover [0, 1], covers [{first}, {last}]"),
            ));
        }
        if let Some(&(x, eta)) = nodes.iter().find(|(_, e)| !(e.is_finite() && *e > 0.0)) {
            return Err(Error::param(
                "viscosity_table",
                format!("viscosity at x={x} must be positive, got {eta}"),
            ));
        }
        let (x, eta): (Vec<f64>, Vec<f64>) = nodes.into_iter().unzip();
        let slopes = pchip_slopes(&x, &eta);
        Ok(Self { x, eta, slopes })
    }

    /// Parses the delimited text format: a header line, then
    /// `mole_fraction, viscosity_mPa_s` rows. `#` starts a comment.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut nodes = Vec::new();
        let mut header_seen = false;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if !header_seen {
                header_seen = true;
                continue;
            }
            let fields: Vec<&str> = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|f| !f.is_empty())
                .collect();
            let parse_err = |reason: String| Error::Parse {
                path: origin.to_string(),
                line: idx + 1,
                reason,
            };
            if fields.len() != 2 {
                return Err(parse_err(format!(
                    "expected 2 columns, found {}",
                    fields.len()
                )));
            }
            let x: f64 = fields[0]
                .parse()
                .map_err(|_| parse_err(format!("bad mole fraction `{}`", fields[0])))?;
            let mpa_s: f64 = fields[1]
                .parse()
                .map_err(|_| parse_err(format!("bad viscosity `{}`", fields[1])))?;
            nodes.push((x, mpa_s * 1e-3));
        }
        Self::new(nodes)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn water_acetone() -> Self {
        Self::parse(WATER_ACETONE_TABLE, "water_acetone_298K.csv")
            .expect("built-in viscosity table is valid")
    }

    pub fn nodes(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.x.iter().copied().zip(self.eta.iter().copied())
    }

    /// Viscosity at water mole fraction `x`, Pa·s.
    pub fn eval(&self, x: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::param(
                "x_water",
                format!("mole fraction must lie in [0, 1], got {x}"),
            ));
        }
        let k = match self.x.iter().position(|&xi| xi >= x) {
            Some(0) => return Ok(self.eta[0]),
            Some(i) if self.x[i] == x => return Ok(self.eta[i]),
            Some(i) => i - 1,
            None => unreachable!("table covers [0, 1]"),
        };
        let h = self.x[k + 1] - self.x[k];
        let t = (x - self.x[k]) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        Ok(h00 * self.eta[k]
            + h10 * h * self.slopes[k]
            + h01 * self.eta[k + 1]
            + h11 * h * self.slopes[k + 1])
    }
}

fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
    if n == 2 {
        return vec![delta[0]; 2];
    }
    let mut d = vec![0.0; n];
    for k in 1..n - 1 {
        if delta[k - 1] * delta[k] > 0.0 {
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            d[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
        }
    }
    d[0] = end_slope(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    d
}

// Three-point end condition, clipped to keep the end interval monotone.
fn end_slope(h0: f64, h1: f64, del0: f64, del1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * del0 - h0 * del1) / (h0 + h1);
    if d.signum() != del0.signum() {
        0.0
    } else if del0.signum() != del1.signum() && d.abs() > 3.0 * del0.abs() {
        3.0 * del0
    } else {
        d
    }
}

/// Binary solvent: water plus one organic co-solvent.
#[derive(Debug, Clone, PartialEq)]
pub struct SolventMixture {
    pub table: ViscosityTable,
    /// Effective molecular radius of water, m.
    pub a_s_water: f64,
    /// Effective molecular radius of the co-solvent, m.
    pub a_s_other: f64,
}

impl SolventMixture {
    pub fn new(table: ViscosityTable, a_s_water: f64, a_s_other: f64) -> Result<Self> {
        ensure_non_negative("a_s_water", a_s_water)?;
        ensure_non_negative("a_s_other", a_s_other)?;
        Ok(Self {
            table,
            a_s_water,
            a_s_other,
        })
    }

    /// Built-in water-acetone mixture with radii 0.14 nm and 0.25 nm.
    pub fn water_acetone() -> Self {
        Self {
            table: ViscosityTable::water_acetone(),
            a_s_water: 0.14e-9,
            a_s_other: 0.25e-9,
        }
    }
}

/// Mixture viscosity at water mole fraction `x`, Pa·s.
pub fn mixture_viscosity(m: &SolventMixture, x: f64) -> Result<f64> {
    m.table.eval(x)
}

/// Mole-fraction weighted solvent radius, m.
pub fn effective_solvent_radius(m: &SolventMixture, x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::param(
            "x_water",
            format!("mole fraction must lie in [0, 1], got {x}"),
        ));
    }
    Ok(x * m.a_s_water + (1.0 - x) * m.a_s_other)
}
