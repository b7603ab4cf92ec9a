//! Transverse field variance at an NV sensor inside a nanodiamond.
//!
//! Two baths are modelled: paramagnetic spins spread over the particle
//! surface, and magnetic molecules filling the solvent outside it. Closed
//! forms assume a sensor at the particle centre; an off-centre sensor goes
//! through the Monte Carlo dipolar sum, which also serves as the reference
//! the closed forms are checked against.
//!
//! A single classical dipole `m = γħ√(S(S+1))·n̂` with random orientation at
//! distance `r` produces `⟨|B|²⟩ = (μ0/4π)²γ²ħ²S(S+1)·2/r⁶`. Averaged over
//! positions on a sphere around the sensor, two thirds of this is transverse
//! to the NV axis, hence [`TRANSVERSE_FACTOR`] = 2 · 2/3.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_non_negative, ensure_positive, Error, Result};
use crate::relax::{rate_contribution, AngularFrequency, NoiseSource};
use crate::units::{HBAR, MU0_OVER_4PI};

/// Orientation-averaged transverse geometric factor g⊥.
pub const TRANSVERSE_FACTOR: f64 = 4.0 / 3.0;

/// Minimum number of Monte Carlo samples accepted.
pub const MC_MIN_SAMPLES: u64 = 10_000;

const MC_CHUNK: u64 = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParticleGeometry {
    /// Particle diameter, m.
    pub diameter: f64,
    /// Sensor displacement from the centre along the NV axis, m.
    pub sensor_offset: f64,
}

impl ParticleGeometry {
    pub fn centered(diameter: f64) -> Self {
        Self {
            diameter,
            sensor_offset: 0.0,
        }
    }

    pub fn radius(&self) -> f64 {
        0.5 * self.diameter
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive("diameter", self.diameter)?;
        if !self.sensor_offset.is_finite() || self.sensor_offset.abs() >= self.radius() {
            return Err(Error::param(
                "sensor_offset",
                format!(
                    "|offset| must be below the radius {:e} m, got {:e}",
                    self.radius(),
                    self.sensor_offset
                ),
            ));
        }
        Ok(())
    }

    fn require_centered(&self) -> Result<()> {
        self.validate()?;
        if self.sensor_offset != 0.0 {
            return Err(Error::OffCenter {
                offset_m: self.sensor_offset,
            });
        }
        Ok(())
    }
}

fn validate_spin(spin: f64) -> Result<()> {
    let twice = 2.0 * spin;
    if !(spin >= 0.5 && (twice - twice.round()).abs() < 1e-12) {
        return Err(Error::param(
            "spin",
            format!("spin quantum number must be a positive multiple of 1/2, got {spin}"),
        ));
    }
    Ok(())
}

fn validate_gamma(gamma: f64) -> Result<()> {
    if !gamma.is_finite() || gamma == 0.0 {
        return Err(Error::param("gamma", "must be finite and non-zero"));
    }
    Ok(())
}

/// Paramagnetic spins on the particle surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceBath {
    /// Areal density σ, m⁻².
    pub areal_density: f64,
    pub spin: f64,
    /// Gyromagnetic ratio, rad/(s·T).
    pub gamma: f64,
}

impl SurfaceBath {
    pub fn validate(&self) -> Result<()> {
        ensure_non_negative("areal_density", self.areal_density)?;
        validate_spin(self.spin)?;
        validate_gamma(self.gamma)
    }
}

/// Magnetic molecules distributed uniformly outside the particle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolumeBath {
    /// Number density, m⁻³.
    pub number_density: f64,
    pub spin: f64,
    /// Gyromagnetic ratio, rad/(s·T).
    pub gamma: f64,
    /// Closest approach beyond the particle surface, m.
    pub standoff: f64,
}

impl VolumeBath {
    pub fn validate(&self) -> Result<()> {
        ensure_non_negative("number_density", self.number_density)?;
        validate_spin(self.spin)?;
        validate_gamma(self.gamma)?;
        ensure_non_negative("standoff", self.standoff)
    }

    pub fn with_density(&self, number_density: f64) -> Self {
        Self {
            number_density,
            ..*self
        }
    }
}

/// `(μ0/4π)² γ² ħ² S(S+1)`, T²·m⁶.
pub fn dipolar_prefactor(gamma: f64, spin: f64) -> f64 {
    let m = MU0_OVER_4PI * gamma * HBAR;
    m * m * spin * (spin + 1.0)
}

/// B⊥² of a surface bath at the particle centre, T².
pub fn b_perp_sq_surface(g: &ParticleGeometry, bath: &SurfaceBath) -> Result<f64> {
    g.require_centered()?;
    bath.validate()?;
    let a_s = dipolar_prefactor(bath.gamma, bath.spin) * TRANSVERSE_FACTOR * 4.0 * PI;
    Ok(a_s * bath.areal_density / g.radius().powi(4))
}

/// B⊥² of an exterior volume bath at the particle centre, T².
pub fn b_perp_sq_volume(g: &ParticleGeometry, bath: &VolumeBath) -> Result<f64> {
    g.require_centered()?;
    bath.validate()?;
    let a_v = dipolar_prefactor(bath.gamma, bath.spin) * TRANSVERSE_FACTOR * 4.0 * PI / 3.0;
    Ok(a_v * bath.number_density / (g.radius() + bath.standoff).powi(3))
}

/// Bath handed to the Monte Carlo estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BathSpec {
    Surface(SurfaceBath),
    Volume(VolumeBath),
}

/// Monte Carlo estimate of B⊥².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    /// T².
    pub mean: f64,
    /// Standard error of `mean`, T².
    pub stderr: f64,
    pub samples: u64,
    pub seed: u64,
}

#[derive(Default, Clone, Copy)]
struct Moments {
    n: u64,
    sum: f64,
    sum_sq: f64,
}

impl Moments {
    fn push(&mut self, v: f64) {
        self.n += 1;
        self.sum += v;
        self.sum_sq += v * v;
    }

    fn merge(self, other: Self) -> Self {
        Self {
            n: self.n + other.n,
            sum: self.sum + other.sum,
            sum_sq: self.sum_sq + other.sum_sq,
        }
    }
}

fn unit_vector<R: Rng>(rng: &mut R) -> [f64; 3] {
    let z: f64 = 2.0 * rng.random::<f64>() - 1.0;
    let phi = 2.0 * PI * rng.random::<f64>();
    let s = (1.0 - z * z).max(0.0).sqrt();
    [s * phi.cos(), s * phi.sin(), z]
}

/// Transverse |B|² of a unit dipole `m` seen from displacement `d` (dipole minus sensor).
fn transverse_field_sq(d: [f64; 3], m: [f64; 3]) -> f64 {
    let r2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
    let r = r2.sqrt();
    let u = [d[0] / r, d[1] / r, d[2] / r];
    let mu = m[0] * u[0] + m[1] * u[1] + m[2] * u[2];
    let inv_r3 = 1.0 / (r2 * r);
    let bx = (3.0 * mu * u[0] - m[0]) * inv_r3;
    let by = (3.0 * mu * u[1] - m[1]) * inv_r3;
    bx * bx + by * by
}

/// Monte Carlo dipolar sum for B⊥² at the sensor.
///
/// Each sample places one spin, draws a random orientation, and records the
/// transverse field power. Surface spins are placed uniformly on the sphere.
/// Volume spins take a uniform direction and a radius drawn from the density
/// `3r⁻⁴` on `[1, ∞)` (in units of the inner radius), and each sample is
/// weighted by `r⁶/3` relative to uniform placement. The weight cancels the
/// `r⁻⁶` falloff, so the whole exterior is covered without a cutoff and the
/// per-sample values stay bounded for a centred sensor. Work is split into
/// fixed chunks; chunk `k` draws from a ChaCha8 stream keyed by `seed` with
/// stream id `k`, so the result does not depend on the thread count.
pub fn b_perp_mc(
    g: &ParticleGeometry,
    bath: &BathSpec,
    samples: u64,
    seed: u64,
) -> Result<McEstimate> {
    g.validate()?;
    if samples < MC_MIN_SAMPLES {
        return Err(Error::param(
            "samples",
            format!("need at least {MC_MIN_SAMPLES}, got {samples}"),
        ));
    }
    let (gamma, spin, density, inner) = match bath {
        BathSpec::Surface(b) => {
            b.validate()?;
            (b.gamma, b.spin, b.areal_density, g.radius())
        }
        BathSpec::Volume(b) => {
            b.validate()?;
            (b.gamma, b.spin, b.number_density, g.radius() + b.standoff)
        }
    };
    if density == 0.0 {
        return Ok(McEstimate {
            mean: 0.0,
            stderr: 0.0,
            samples,
            seed,
        });
    }

    // Lengths in units of `inner`; field in units of √prefactor / inner³.
    let offset = g.sensor_offset / inner;
    let volume = matches!(bath, BathSpec::Volume(_));
    let chunks = samples.div_ceil(MC_CHUNK);
    let partials: Vec<Moments> = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k);
            let n = MC_CHUNK.min(samples - k * MC_CHUNK);
            let mut acc = Moments::default();
            for _ in 0..n {
                let dir = unit_vector(&mut rng);
                let (r, weight) = if volume {
                    let u: f64 = rng.random();
                    let r = (1.0 - u).powf(-1.0 / 3.0);
                    (r, r.powi(6) / 3.0)
                } else {
                    (1.0, 1.0)
                };
                let d = [r * dir[0], r * dir[1], r * dir[2] - offset];
                let m = unit_vector(&mut rng);
                acc.push(weight * transverse_field_sq(d, m));
            }
            acc
        })
        .collect();
    let total = partials
        .into_iter()
        .fold(Moments::default(), Moments::merge);

    let n = total.n as f64;
    let mean = total.sum / n;
    let var = (total.sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0);

    let prefactor = dipolar_prefactor(gamma, spin);
    let unit = prefactor / inner.powi(6);
    // Surface: spins on the sphere. Volume: 4π·n·inner³ times the weighted mean.
    let count = if volume {
        density * 4.0 * PI * inner.powi(3)
    } else {
        density * 4.0 * PI * inner * inner
    };
    let scale = unit * count;
    Ok(McEstimate {
        mean: scale * mean,
        stderr: scale * (var / n).sqrt(),
        samples,
        seed,
    })
}

/// Inverts the relaxation sum for the surface spin density that yields
/// `t1_measured`, given the surface bath's spin, γ and correlation time.
/// `bath.areal_density` is ignored.
pub fn calibrate_surface_density(
    t1_measured: f64,
    g: &ParticleGeometry,
    bath: &SurfaceBath,
    t1_bulk: f64,
    omega0: AngularFrequency,
    tau_c_surface: f64,
) -> Result<f64> {
    ensure_positive("t1_measured", t1_measured)?;
    ensure_positive("t1_bulk", t1_bulk)?;
    if t1_measured >= t1_bulk {
        return Err(Error::NoSolution(format!(
            "measured T1 {t1_measured:e} s is not shorter than bulk T1 {t1_bulk:e} s"
        )));
    }
    let unit_bath = SurfaceBath {
        areal_density: 1.0,
        ..*bath
    };
    let b_unit = b_perp_sq_surface(g, &unit_bath)?;
    let per_density = rate_contribution(
        &NoiseSource::new(bath.gamma, b_unit, tau_c_surface)?,
        omega0,
    )?;
    Ok((1.0 / t1_measured - 1.0 / t1_bulk) / per_density)
}

/// Fixed part of the Gd relaxation model used when fitting an aggregation factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GdRelaxationModel {
    pub geometry: ParticleGeometry,
    /// Volume bath; its `number_density` is replaced by the effective density.
    pub bath: VolumeBath,
    /// Relaxation rate from everything other than Gd (bulk and surface), s⁻¹.
    pub background_rate: f64,
    /// Fluctuation rate excluding the dipolar part, R_vib + R_trans + R_rot, s⁻¹.
    pub r_other: f64,
    /// Dipolar rate per unit density, m³/s.
    pub kappa_dip: f64,
    pub omega0: AngularFrequency,
}

impl GdRelaxationModel {
    /// Predicted 1/T1 at an effective Gd density, s⁻¹.
    pub fn relaxation_rate(&self, density: f64) -> Result<f64> {
        let b2 = b_perp_sq_volume(&self.geometry, &self.bath.with_density(density))?;
        let rate = self.r_other + self.kappa_dip * density;
        let source = NoiseSource::from_rate(self.bath.gamma, b2, rate)?;
        Ok(self.background_rate + rate_contribution(&source, self.omega0)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityScaleFit {
    /// Effective-to-prepared density ratio.
    pub scale: f64,
    pub stderr: f64,
    /// Residual sum of squares of 1/T1, s⁻².
    pub rss: f64,
}

/// Least-squares fit of a single multiplicative density scale so that the
/// model's 1/T1 at `scale · n_prepared` matches the measured 1/T1.
pub fn effective_gd_density_fit(
    points: &[(f64, f64)],
    model: &GdRelaxationModel,
) -> Result<DensityScaleFit> {
    if points.len() < 3 {
        return Err(Error::param(
            "points",
            "need at least 3 (density, T1) points",
        ));
    }
    for &(n, t1) in points {
        ensure_non_negative("n_prepared", n)?;
        ensure_positive("t1", t1)?;
    }
    let n0 = points[0].0;
    if points.iter().all(|&(n, _)| n == n0) {
        return Err(Error::Fit("all prepared densities are equal".into()));
    }

    let rss = |s: f64| -> Result<f64> {
        points.iter().try_fold(0.0, |acc, &(n, t1)| {
            let r = model.relaxation_rate(s * n)? - 1.0 / t1;
            Ok(acc + r * r)
        })
    };

    // Coarse log scan, then golden section inside the best bracket.
    let grid: Vec<f64> = (0..=640)
        .map(|i| 10f64.powf(-4.0 + 8.0 * i as f64 / 640.0))
        .collect();
    let values = grid.iter().map(|&s| rss(s)).collect::<Result<Vec<_>>>()?;
    let best = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap();
    let (mut lo, mut hi) = (
        grid[best.saturating_sub(1)].ln(),
        grid[(best + 1).min(grid.len() - 1)].ln(),
    );
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..200 {
        let a = hi - phi * (hi - lo);
        let b = lo + phi * (hi - lo);
        if rss(a.exp())? < rss(b.exp())? {
            hi = b;
        } else {
            lo = a;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    let mut scale = (0.5 * (lo + hi)).exp();

    // Gauss-Newton polish with a central-difference Jacobian.
    let jacobian = |s: f64| -> Result<Vec<(f64, f64)>> {
        let h = 1e-6 * s;
        points
            .iter()
            .map(|&(n, t1)| {
                let f = model.relaxation_rate(s * n)?;
                let d = (model.relaxation_rate((s + h) * n)?
                    - model.relaxation_rate((s - h) * n)?)
                    / (2.0 * h);
                Ok((f - 1.0 / t1, d))
            })
            .collect()
    };
    for _ in 0..5 {
        let jr = jacobian(scale)?;
        let jtj: f64 = jr.iter().map(|(_, d)| d * d).sum();
        let jtr: f64 = jr.iter().map(|(r, d)| r * d).sum();
        if jtj == 0.0 {
            break;
        }
        let next = scale - jtr / jtj;
        if next > 0.0 && rss(next)? <= rss(scale)? {
            scale = next;
        } else {
            break;
        }
    }

    let jr = jacobian(scale)?;
    let jtj: f64 = jr.iter().map(|(_, d)| d * d).sum();
    let final_rss = rss(scale)?;
    if jtj == 0.0 {
        return Err(Error::Fit("density scale is not identifiable".into()));
    }
    let dof = (points.len() - 1) as f64;
    Ok(DensityScaleFit {
        scale,
        stderr: (final_rss / dof / jtj).sqrt(),
        rss: final_rss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::GAMMA_E;

    fn surface(sigma_nm2: f64) -> SurfaceBath {
        SurfaceBath {
            areal_density: sigma_nm2 * 1e18,
            spin: 0.5,
            gamma: GAMMA_E,
        }
    }

    fn gd(n: f64) -> VolumeBath {
        VolumeBath {
            number_density: n,
            spin: 3.5,
            gamma: GAMMA_E,
            standoff: 0.0,
        }
    }

    #[test]
    fn closed_forms_zero_and_scaling() {
        let g = ParticleGeometry::centered(25e-9);
        assert_eq!(b_perp_sq_surface(&g, &surface(0.0)).unwrap(), 0.0);
        assert_eq!(b_perp_sq_volume(&g, &gd(0.0)).unwrap(), 0.0);

        let g2 = ParticleGeometry::centered(50e-9);
        let s1 = b_perp_sq_surface(&g, &surface(1.0)).unwrap();
        let s2 = b_perp_sq_surface(&g2, &surface(1.0)).unwrap();
        assert!((s1 / s2 - 16.0).abs() < 1e-12);
        let v1 = b_perp_sq_volume(&g, &gd(1e25)).unwrap();
        let v2 = b_perp_sq_volume(&g2, &gd(1e25)).unwrap();
        assert!((v1 / v2 - 8.0).abs() < 1e-12);

        let v_double = b_perp_sq_volume(&g, &gd(2e25)).unwrap();
        assert!((v_double - 2.0 * v1).abs() <= 1e-12 * v1);
    }

    #[test]
    fn closed_form_rejects_off_center_and_bad_spin() {
        let g = ParticleGeometry {
            diameter: 25e-9,
            sensor_offset: 2e-9,
        };
        assert!(matches!(
            b_perp_sq_surface(&g, &surface(1.0)),
            Err(Error::OffCenter { .. })
        ));
        let g = ParticleGeometry::centered(25e-9);
        let mut b = surface(1.0);
        b.spin = 0.7;
        assert!(b_perp_sq_surface(&g, &b).is_err());
        let bad = ParticleGeometry {
            diameter: 25e-9,
            sensor_offset: 13e-9,
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn mc_zero_density_and_determinism() {
        let g = ParticleGeometry::centered(25e-9);
        let z = b_perp_mc(&g, &BathSpec::Surface(surface(0.0)), 20_000, 3).unwrap();
        assert_eq!((z.mean, z.stderr), (0.0, 0.0));
        let a = b_perp_mc(&g, &BathSpec::Volume(gd(1e25)), 100_000, 7).unwrap();
        let b = b_perp_mc(&g, &BathSpec::Volume(gd(1e25)), 100_000, 7).unwrap();
        assert_eq!(a, b);
        assert!(b_perp_mc(&g, &BathSpec::Volume(gd(1e25)), 100, 7).is_err());
    }

    #[test]
    fn mc_agrees_with_closed_forms() {
        let g = ParticleGeometry::centered(25e-9);
        let bath = surface(1.0);
        let mc = b_perp_mc(&g, &BathSpec::Surface(bath), 400_000, 11).unwrap();
        let exact = b_perp_sq_surface(&g, &bath).unwrap();
        assert!(
            (mc.mean - exact).abs() < 3.0 * mc.stderr,
            "{mc:?} vs {exact}"
        );

        for (d, n, standoff) in [(20e-9, 7e25, 0.0), (40e-9, 1e24, 1e-9)] {
            let g = ParticleGeometry::centered(d);
            let mut bath = gd(n);
            bath.standoff = standoff;
            let mc = b_perp_mc(&g, &BathSpec::Volume(bath), 400_000, 5).unwrap();
            let exact = b_perp_sq_volume(&g, &bath).unwrap();
            assert!(
                (mc.mean - exact).abs() < 3.0 * mc.stderr,
                "{mc:?} vs {exact}"
            );
        }
    }

    #[test]
    fn mc_off_center_sensor_sees_more_field() {
        let centered = ParticleGeometry::centered(25e-9);
        let shifted = ParticleGeometry {
            diameter: 25e-9,
            sensor_offset: 8e-9,
        };
        let bath = BathSpec::Surface(surface(1.0));
        let a = b_perp_mc(&centered, &bath, 200_000, 1).unwrap();
        let b = b_perp_mc(&shifted, &bath, 200_000, 1).unwrap();
        assert!(b.mean > a.mean + 3.0 * (a.stderr + b.stderr));
    }

    #[test]
    fn calibration_round_trip() {
        let g = ParticleGeometry::centered(25e-9);
        let w0 = AngularFrequency::nv_zero_field();
        let tau = 50e-12;
        let bath = surface(1.3);
        let b2 = b_perp_sq_surface(&g, &bath).unwrap();
        let src = NoiseSource::new(GAMMA_E, b2, tau).unwrap();
        let t1 = crate::relax::t1_total(&[src], 3e-3, w0).unwrap().t1;
        let sigma = calibrate_surface_density(t1, &g, &bath, 3e-3, w0, tau).unwrap();
        assert!((sigma / bath.areal_density - 1.0).abs() < 1e-10);

        let tiny =
            calibrate_surface_density(3e-3 * (1.0 - 1e-12), &g, &bath, 3e-3, w0, tau).unwrap();
        assert!(tiny < 1e-9 * bath.areal_density);
        assert!(matches!(
            calibrate_surface_density(3e-3, &g, &bath, 3e-3, w0, tau),
            Err(Error::NoSolution(_))
        ));
    }

    fn gd_model() -> GdRelaxationModel {
        GdRelaxationModel {
            geometry: ParticleGeometry::centered(25e-9),
            bath: gd(0.0),
            background_rate: 7.7e3,
            r_other: 31.7e9,
            kappa_dip: 4.1e-16,
            omega0: AngularFrequency::nv_zero_field(),
        }
    }

    #[test]
    fn density_scale_recovers_synthetic_aggregation() {
        let model = gd_model();
        for true_scale in [1.0, 2.5, 7.0] {
            let points: Vec<(f64, f64)> = [5e24, 1e25, 2e25, 4e25]
                .iter()
                .map(|&n| (n, 1.0 / model.relaxation_rate(true_scale * n).unwrap()))
                .collect();
            let fit = effective_gd_density_fit(&points, &model).unwrap();
            assert!((fit.scale / true_scale - 1.0).abs() < 1e-8, "{fit:?}");
        }
    }

    #[test]
    fn density_scale_with_noise_and_errors() {
        let model = gd_model();
        let noise = [1.01, 0.99, 1.015, 0.985, 1.0];
        let points: Vec<(f64, f64)> = [2e24, 5e24, 1e25, 2e25, 4e25]
            .iter()
            .zip(noise)
            .map(|(&n, k)| (n, k / model.relaxation_rate(2.5 * n).unwrap()))
            .collect();
        let fit = effective_gd_density_fit(&points, &model).unwrap();
        assert!(
            (fit.scale - 2.5).abs() < 4.0 * fit.stderr.max(1e-3),
            "{fit:?}"
        );

        let flat = [(1e25, 40e-6), (1e25, 41e-6), (1e25, 39e-6)];
        assert!(matches!(
            effective_gd_density_fit(&flat, &model),
            Err(Error::Fit(_))
        ));
        assert!(effective_gd_density_fit(&flat[..2], &model).is_err());
    }
}
