//! Physical scenario and its configuration file.
//!
//! A [`Scenario`] bundles the particle, the two spin baths, the solvent and
//! the sensor, and evaluates the forward model: fluctuation rates, field
//! variances and the resulting T1. [`ScenarioConfig`] is its TOML form.
//! Every key has a default; unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bath::{
    b_perp_mc, b_perp_sq_surface, b_perp_sq_volume, BathSpec, ParticleGeometry, SurfaceBath,
    VolumeBath,
};
use crate::calibration as cal;
use crate::error::{ensure_positive, Error, Result};
use crate::hydro::{
    effective_solvent_radius, microviscosity_factor, mixture_viscosity, rbm_rate, total_rate,
    translational_rate, HydroParams, RateBreakdown, SolventMixture, ViscosityTable,
};
use crate::measure::{default_dark_times, MeasurementPlan, SpotSpread};
use crate::relax::{t1_total, AngularFrequency, NoiseSource, RelaxationResult};
use crate::sensitivity::{DensityModel, SensitivityInputs};
use crate::units::GAMMA_E;

/// Labels of the two noise sources, in the order of `per_source_rates`.
pub const SOURCE_LABELS: [&str; 2] = ["surface", "gd"];

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub geometry: ParticleGeometry,
    pub surface: SurfaceBath,
    /// Correlation time of the surface spins, s.
    pub surface_tau_c: f64,
    pub gd: VolumeBath,
    /// Hydrodynamic radius of the Gd complex, m.
    pub gd_radius: f64,
    /// Intrinsic vibrational rate of the Gd ion, s⁻¹.
    pub r_vib: f64,
    /// Dipolar rate per unit Gd density, m³/s.
    pub kappa_dip: f64,
    /// Length scale for the translational rate, m.
    pub trans_length: f64,
    pub solvent: SolventMixture,
    pub x_water: f64,
    /// K.
    pub temperature: f64,
    /// s.
    pub t1_bulk: f64,
    pub omega0: AngularFrequency,
}

/// Field variances at the sensor, T².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BathFields {
    pub surface: f64,
    pub gd: f64,
    /// Standard errors when estimated by Monte Carlo.
    pub surface_stderr: Option<f64>,
    pub gd_stderr: Option<f64>,
}

/// Everything the forward model knows about one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct T1Report {
    pub t1: f64,
    pub rate_total: f64,
    pub rate_bulk: f64,
    pub rate_surface: f64,
    pub rate_gd: f64,
    pub rates: RateBreakdown,
    pub fields: BathFields,
    /// Pa·s.
    pub viscosity: f64,
    pub microviscosity_factor: f64,
    /// m.
    pub solvent_radius: f64,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.surface.validate()?;
        self.gd.validate()?;
        ensure_positive("surface_tau_c", self.surface_tau_c)?;
        ensure_positive("gd_radius", self.gd_radius)?;
        ensure_positive("trans_length", self.trans_length)?;
        if !(self.r_vib.is_finite() && self.r_vib >= 0.0) {
            return Err(Error::param("r_vib", "must be >= 0"));
        }
        if !(self.kappa_dip.is_finite() && self.kappa_dip >= 0.0) {
            return Err(Error::param("kappa_dip", "must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.x_water) {
            return Err(Error::param("x_water", "must lie in [0, 1]"));
        }
        ensure_positive("temperature", self.temperature)?;
        ensure_positive("t1_bulk", self.t1_bulk)
    }

    pub fn hydro_params(&self) -> Result<HydroParams> {
        Ok(HydroParams {
            a: self.gd_radius,
            a_s: effective_solvent_radius(&self.solvent, self.x_water)?,
            eta: mixture_viscosity(&self.solvent, self.x_water)?,
            temperature: self.temperature,
        })
    }

    /// Gd fluctuation rates at the scenario's own density.
    pub fn rate_breakdown(&self) -> Result<RateBreakdown> {
        self.rates_at_density(self.gd.number_density)
    }

    pub fn rates_at_density(&self, density: f64) -> Result<RateBreakdown> {
        let p = self.hydro_params()?;
        total_rate(
            self.kappa_dip * density,
            self.r_vib,
            translational_rate(&p, self.trans_length)?,
            rbm_rate(&p)?,
        )
    }

    /// Closed-form field variances (sensor at the centre).
    pub fn fields(&self) -> Result<BathFields> {
        Ok(BathFields {
            surface: b_perp_sq_surface(&self.geometry, &self.surface)?,
            gd: b_perp_sq_volume(&self.geometry, &self.gd)?,
            surface_stderr: None,
            gd_stderr: None,
        })
    }

    /// Closed forms when the sensor is centred, Monte Carlo otherwise.
    pub fn fields_auto(&self, mc_samples: u64, seed: u64) -> Result<BathFields> {
        if self.geometry.sensor_offset == 0.0 {
            return self.fields();
        }
        let s = b_perp_mc(
            &self.geometry,
            &BathSpec::Surface(self.surface),
            mc_samples,
            seed,
        )?;
        let g = b_perp_mc(
            &self.geometry,
            &BathSpec::Volume(self.gd),
            mc_samples,
            seed.wrapping_add(1),
        )?;
        Ok(BathFields {
            surface: s.mean,
            gd: g.mean,
            surface_stderr: Some(s.stderr),
            gd_stderr: Some(g.stderr),
        })
    }

    pub fn noise_sources(&self, fields: &BathFields) -> Result<[NoiseSource; 2]> {
        let rates = self.rate_breakdown()?;
        Ok([
            NoiseSource::new(self.surface.gamma, fields.surface, self.surface_tau_c)?,
            NoiseSource::from_rate(self.gd.gamma, fields.gd, rates.r_total)?,
        ])
    }

    pub fn relaxation(&self) -> Result<RelaxationResult> {
        self.relaxation_with(&self.fields()?)
    }

    pub fn relaxation_with(&self, fields: &BathFields) -> Result<RelaxationResult> {
        self.validate()?;
        t1_total(&self.noise_sources(fields)?, self.t1_bulk, self.omega0)
    }

    pub fn report_with(&self, fields: BathFields) -> Result<T1Report> {
        let relax = self.relaxation_with(&fields)?;
        let p = self.hydro_params()?;
        Ok(T1Report {
            t1: relax.t1,
            rate_total: relax.rate_total,
            rate_bulk: relax.rate_bulk,
            rate_surface: relax.per_source_rates[0],
            rate_gd: relax.per_source_rates[1],
            rates: self.rate_breakdown()?,
            fields,
            viscosity: p.eta,
            microviscosity_factor: microviscosity_factor(p.a, p.a_s)?,
            solvent_radius: p.a_s,
        })
    }

    pub fn report(&self) -> Result<T1Report> {
        self.report_with(self.fields()?)
    }

    /// Copy with the Gd density and particle diameter scaled.
    pub fn jittered(&self, density_factor: f64, diameter_factor: f64) -> Self {
        let mut s = self.clone();
        s.gd.number_density *= density_factor;
        s.geometry.diameter *= diameter_factor;
        s.geometry.sensor_offset *= diameter_factor;
        s
    }

    pub fn with_x_water(&self, x_water: f64) -> Self {
        Self {
            x_water,
            ..self.clone()
        }
    }

    pub fn with_gd_density(&self, density: f64) -> Self {
        let mut s = self.clone();
        s.gd.number_density = density;
        s
    }

    pub fn with_diameter(&self, diameter: f64) -> Self {
        let mut s = self.clone();
        s.geometry.diameter = diameter;
        s
    }
}

impl DensityModel for Scenario {
    fn gd_b_perp_sq(&self, density: f64) -> Result<f64> {
        b_perp_sq_volume(&self.geometry, &self.gd.with_density(density))
    }

    fn gd_rates(&self, density: f64) -> Result<RateBreakdown> {
        self.rates_at_density(density)
    }
}

// ---------------------------------------------------------------------------
// Configuration file
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParticleSection {
    pub diameter_nm: f64,
    pub sensor_offset_nm: f64,
}

impl Default for ParticleSection {
    fn default() -> Self {
        Self {
            diameter_nm: cal::REFERENCE_DIAMETER * 1e9,
            sensor_offset_nm: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurfaceSection {
    pub areal_density_per_nm2: f64,
    pub spin: f64,
    pub tau_c_ps: f64,
    pub gamma_rad_per_s_t: f64,
}

impl Default for SurfaceSection {
    fn default() -> Self {
        Self {
            areal_density_per_nm2: cal::SURFACE_DENSITY * 1e-18,
            spin: 0.5,
            tau_c_ps: cal::SURFACE_TAU_C * 1e12,
            gamma_rad_per_s_t: GAMMA_E,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GdSection {
    pub number_density_per_m3: f64,
    pub spin: f64,
    pub gamma_rad_per_s_t: f64,
    pub standoff_nm: f64,
    pub hydrodynamic_radius_nm: f64,
    pub r_vib_ghz: f64,
    pub kappa_dip_m3_per_s: f64,
    pub trans_length_nm: f64,
}

impl Default for GdSection {
    fn default() -> Self {
        Self {
            number_density_per_m3: cal::GD_OPTIMAL_DENSITY,
            spin: 3.5,
            gamma_rad_per_s_t: GAMMA_E,
            standoff_nm: 0.0,
            hydrodynamic_radius_nm: cal::GD_RADIUS * 1e9,
            r_vib_ghz: cal::R_VIB * 1e-9,
            kappa_dip_m3_per_s: cal::KAPPA_DIP,
            trans_length_nm: cal::TRANS_LENGTH * 1e9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolventSection {
    pub x_water: f64,
    /// Viscosity table; the built-in water-acetone table when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub table: Option<PathBuf>,
    pub a_s_water_nm: f64,
    pub a_s_other_nm: f64,
    pub temperature_k: f64,
}

impl Default for SolventSection {
    fn default() -> Self {
        Self {
            x_water: 1.0,
            table: None,
            a_s_water_nm: 0.14,
            a_s_other_nm: 0.25,
            temperature_k: crate::units::ROOM_TEMPERATURE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorSection {
    pub t1_bulk_ms: f64,
    /// Zero-field splitting, cyclic GHz.
    pub splitting_ghz: f64,
}

impl Default for SensorSection {
    fn default() -> Self {
        Self {
            t1_bulk_ms: cal::T1_BULK * 1e3,
            splitting_ghz: crate::units::NV_SPLITTING_HZ * 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeasurementSection {
    /// Explicit dark times; when empty, a log grid from 1 µs to 5·T1.
    pub dark_times_us: Vec<f64>,
    pub shots_per_point: u64,
    pub detection_window_ns: f64,
    pub photon_rate_per_s: f64,
    pub contrast: f64,
    pub include_reference: bool,
    pub acquisition_time_s: f64,
}

impl Default for MeasurementSection {
    fn default() -> Self {
        Self {
            dark_times_us: Vec::new(),
            shots_per_point: 1_000_000,
            detection_window_ns: 500.0,
            photon_rate_per_s: 1e5,
            contrast: 0.2,
            include_reference: true,
            acquisition_time_s: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleSection {
    pub density_rel_spread: f64,
    pub diameter_rel_spread: f64,
    /// Second solvent condition to compare against, water mole fraction.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub compare_x_water: Option<f64>,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        Self {
            density_rel_spread: cal::SPOT_DENSITY_SPREAD,
            diameter_rel_spread: cal::SPOT_DIAMETER_SPREAD,
            compare_x_water: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    pub mc_samples: u64,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seed: 1,
            mc_samples: 1_000_000,
        }
    }
}

/// TOML scenario configuration.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub particle: ParticleSection,
    pub surface: SurfaceSection,
    pub gd: GdSection,
    pub solvent: SolventSection,
    pub sensor: SensorSection,
    pub measurement: MeasurementSection,
    pub ensemble: EnsembleSection,
    pub run: RunSection,
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Loads a config; a relative `solvent.table` is resolved against the
    /// config file's directory and must exist.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        if let Some(table) = cfg.solvent.table.take() {
            let resolved = if table.is_relative() {
                path.parent().unwrap_or(Path::new(".")).join(table)
            } else {
                table
            };
            if !resolved.exists() {
                return Err(Error::Config(format!(
                    "solvent.table {} does not exist",
                    resolved.display()
                )));
            }
            cfg.solvent.table = Some(resolved);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Canonical JSON text: fixed field order, independent of the source
    /// file's key order.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serialises")
    }

    pub fn scenario(&self) -> Result<Scenario> {
        let table = match &self.solvent.table {
            Some(path) => ViscosityTable::load(path)?,
            None => ViscosityTable::water_acetone(),
        };
        let solvent = SolventMixture::new(
            table,
            self.solvent.a_s_water_nm * 1e-9,
            self.solvent.a_s_other_nm * 1e-9,
        )?;
        let scenario = Scenario {
            geometry: ParticleGeometry {
                diameter: self.particle.diameter_nm * 1e-9,
                sensor_offset: self.particle.sensor_offset_nm * 1e-9,
            },
            surface: SurfaceBath {
                areal_density: self.surface.areal_density_per_nm2 * 1e18,
                spin: self.surface.spin,
                gamma: self.surface.gamma_rad_per_s_t,
            },
            surface_tau_c: self.surface.tau_c_ps * 1e-12,
            gd: VolumeBath {
                number_density: self.gd.number_density_per_m3,
                spin: self.gd.spin,
                gamma: self.gd.gamma_rad_per_s_t,
                standoff: self.gd.standoff_nm * 1e-9,
            },
            gd_radius: self.gd.hydrodynamic_radius_nm * 1e-9,
            r_vib: self.gd.r_vib_ghz * 1e9,
            kappa_dip: self.gd.kappa_dip_m3_per_s,
            trans_length: self.gd.trans_length_nm * 1e-9,
            solvent,
            x_water: self.solvent.x_water,
            temperature: self.solvent.temperature_k,
            t1_bulk: self.sensor.t1_bulk_ms * 1e-3,
            omega0: AngularFrequency::from_hz(self.sensor.splitting_ghz * 1e9)?,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    /// Measurement plan; without explicit dark times the grid follows `expected_t1`.
    pub fn plan(&self, expected_t1: f64) -> Result<MeasurementPlan> {
        let m = &self.measurement;
        let dark_times = if m.dark_times_us.is_empty() {
            default_dark_times(expected_t1)?
        } else {
            m.dark_times_us.iter().map(|t| t * 1e-6).collect()
        };
        let plan = MeasurementPlan {
            dark_times,
            shots_per_point: m.shots_per_point,
            detection_window: m.detection_window_ns * 1e-9,
            photon_rate: m.photon_rate_per_s,
            contrast: m.contrast,
            include_reference: m.include_reference,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn spread(&self) -> SpotSpread {
        SpotSpread {
            density: self.ensemble.density_rel_spread,
            diameter: self.ensemble.diameter_rel_spread,
        }
    }

    /// Readout parameters for the sensitivity formula.
    pub fn readout(&self, scenario: &Scenario) -> SensitivityInputs {
        SensitivityInputs {
            contrast: self.measurement.contrast,
            photon_rate: self.measurement.photon_rate_per_s,
            detection_window: self.measurement.detection_window_ns * 1e-9,
            acquisition_time: self.measurement.acquisition_time_s,
            gamma_e: scenario.gd.gamma,
            b_perp_sq: 0.0,
            r_total: 0.0,
            omega0: scenario.omega0,
        }
    }
}

impl Default for Scenario {
    fn default() -> Self {
        ScenarioConfig::default()
            .scenario()
            .expect("default configuration is valid")
    }
}
