//! All-optical T1 relaxometry: photon-counting simulation, single-exponential
//! fitting and ensemble statistics over confocal spots.
//!
//! Each dark time `τ` is read out `shots` times. A shot collects Poisson
//! counts with mean `𝒟·T_D·(1 − C + C·e^{−τ/T1})` in the signal window and
//! `𝒟·T_D` in the reference window. The sum of independent Poisson draws is
//! Poisson, so per-point totals are drawn directly.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};
use crate::scenario::Scenario;

/// Number of points in the default dark-time grid.
pub const DEFAULT_GRID_POINTS: usize = 12;
/// Shortest dark time of the default grid, s.
pub const DEFAULT_GRID_START: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementPlan {
    /// Dark times, s, ascending.
    pub dark_times: Vec<f64>,
    pub shots_per_point: u64,
    /// Detection window T_D, s.
    pub detection_window: f64,
    /// Photon count rate 𝒟, counts/s.
    pub photon_rate: f64,
    /// Spin-state contrast C.
    pub contrast: f64,
    /// Draw Poisson noise on the reference window as well.
    pub include_reference: bool,
}

impl MeasurementPlan {
    /// Plan with detection window 500 ns, contrast 0.2 and 10⁵ counts/s.
    pub fn with_dark_times(dark_times: Vec<f64>, shots_per_point: u64) -> Self {
        Self {
            dark_times,
            shots_per_point,
            detection_window: 500e-9,
            photon_rate: 1e5,
            contrast: 0.2,
            include_reference: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dark_times.len() < 4 {
            return Err(Error::param("dark_times", "need at least 4 points"));
        }
        if self.dark_times.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::param("dark_times", "must be finite and >= 0"));
        }
        if self.dark_times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::param("dark_times", "must be strictly ascending"));
        }
        if self.shots_per_point == 0 {
            return Err(Error::param("shots_per_point", "must be >= 1"));
        }
        ensure_positive("detection_window", self.detection_window)?;
        ensure_positive("photon_rate", self.photon_rate)?;
        if !(self.contrast > 0.0 && self.contrast < 1.0) {
            return Err(Error::param("contrast", "must lie in (0, 1)"));
        }
        Ok(())
    }

    /// Mean counts of one reference window.
    pub fn counts_per_window(&self) -> f64 {
        self.photon_rate * self.detection_window
    }

    /// Noise-free normalised signal at dark time `tau`.
    pub fn expected_signal(&self, tau: f64, t1: f64) -> f64 {
        1.0 - self.contrast + self.contrast * (-tau / t1).exp()
    }
}

/// Default dark-time grid: log-spaced from 1 µs to five times the expected T1.
pub fn default_dark_times(expected_t1: f64) -> Result<Vec<f64>> {
    ensure_positive("expected_t1", expected_t1)?;
    let stop = 5.0 * expected_t1;
    if stop <= DEFAULT_GRID_START {
        return Err(Error::param(
            "expected_t1",
            "too short for the default grid starting at 1 µs",
        ));
    }
    let n = DEFAULT_GRID_POINTS;
    let ratio = (stop / DEFAULT_GRID_START).ln();
    Ok((0..n)
        .map(|i| DEFAULT_GRID_START * (ratio * i as f64 / (n - 1) as f64).exp())
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// Dark time, s.
    pub tau: f64,
    pub signal: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxationCurve {
    pub points: Vec<CurvePoint>,
    /// Total (signal, reference) counts per dark time, when simulated.
    pub raw_counts: Option<Vec<(u64, u64)>>,
}

fn draw_poisson<R: RngCore>(rng: &mut R, mean: f64) -> Result<u64> {
    if mean <= 0.0 {
        return Ok(0);
    }
    let dist =
        Poisson::new(mean).map_err(|e| Error::param("poisson_mean", format!("{mean:e}: {e}")))?;
    Ok(dist.sample(rng) as u64)
}

/// Simulates one normalised relaxation curve. Deterministic for a given seed.
pub fn simulate_curve(t1_true: f64, plan: &MeasurementPlan, seed: u64) -> Result<RelaxationCurve> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    simulate_curve_with(t1_true, plan, &mut rng)
}

fn simulate_curve_with<R: RngCore>(
    t1_true: f64,
    plan: &MeasurementPlan,
    rng: &mut R,
) -> Result<RelaxationCurve> {
    ensure_positive("t1_true", t1_true)?;
    plan.validate()?;
    let shots = plan.shots_per_point as f64;
    let mu_ref = plan.counts_per_window() * shots;
    let mut points = Vec::with_capacity(plan.dark_times.len());
    let mut raw = Vec::with_capacity(plan.dark_times.len());
    for &tau in &plan.dark_times {
        let mu_sig = mu_ref * plan.expected_signal(tau, t1_true);
        let sig = draw_poisson(rng, mu_sig)?;
        let (reference, ref_var) = if plan.include_reference {
            let r = draw_poisson(rng, mu_ref)?;
            (r as f64, r as f64)
        } else {
            (mu_ref, 0.0)
        };
        if reference == 0.0 {
            return Err(Error::Singular(format!(
                "no reference photons at tau={tau:e} s; increase shots or photon rate"
            )));
        }
        let s = sig as f64;
        let ratio = s / reference;
        // First-order ratio statistics with Poisson variances.
        let rel_var = 1.0 / s.max(1.0) + ref_var / (reference * reference);
        points.push(CurvePoint {
            tau,
            signal: ratio,
            stderr: ratio.max(1.0 / reference) * rel_var.sqrt(),
        });
        raw.push((sig, reference.round() as u64));
    }
    Ok(RelaxationCurve {
        points,
        raw_counts: Some(raw),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// Fitted relaxation time, s.
    pub t1_hat: f64,
    pub t1_stderr: f64,
    pub amplitude: f64,
    pub baseline: f64,
    /// Covariance of (baseline, amplitude, t1).
    pub covariance: [[f64; 3]; 3],
    pub reduced_chi_sq: f64,
    pub converged: bool,
    /// Curvature matrix was singular; standard errors are infinite.
    pub singular: bool,
    pub iterations: usize,
    pub weighted: bool,
    pub message: String,
}

/// Starting point for the fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialGuess {
    pub baseline: f64,
    pub amplitude: f64,
    pub t1: f64,
}

/// Baseline from the last point, amplitude from first minus last, and T1 at
/// the first crossing of `baseline + amplitude/e`.
pub fn initial_guess(points: &[CurvePoint]) -> InitialGuess {
    let first = points[0];
    let last = points[points.len() - 1];
    let baseline = last.signal;
    let amplitude = first.signal - last.signal;
    let level = baseline + amplitude / std::f64::consts::E;
    let crossing = points.windows(2).find_map(|w| {
        let (a, b) = (w[0], w[1]);
        let crosses = (a.signal - level) * (b.signal - level) <= 0.0 && a.signal != b.signal;
        crosses.then(|| a.tau + (level - a.signal) / (b.signal - a.signal) * (b.tau - a.tau))
    });
    let t1 = match crossing {
        Some(t) if t > 0.0 => t,
        _ => {
            // Geometric middle of the grid.
            let lo = points
                .iter()
                .map(|p| p.tau)
                .find(|t| *t > 0.0)
                .unwrap_or(last.tau);
            (lo * last.tau).sqrt().max(f64::MIN_POSITIVE)
        }
    };
    InitialGuess {
        baseline,
        amplitude,
        t1,
    }
}

const MAX_ITERATIONS: usize = 500;

struct Linearisation {
    jtj: [[f64; 3]; 3],
    jtr: [f64; 3],
    chi_sq: f64,
}

fn linearise(points: &[CurvePoint], weights: &[f64], p: &[f64; 3]) -> Linearisation {
    let mut jtj = [[0.0; 3]; 3];
    let mut jtr = [0.0; 3];
    let mut chi_sq = 0.0;
    for (pt, &w) in points.iter().zip(weights) {
        let e = (-pt.tau / p[2]).exp();
        let model = p[0] + p[1] * e;
        let r = pt.signal - model;
        let j = [1.0, e, p[1] * e * pt.tau / (p[2] * p[2])];
        for a in 0..3 {
            jtr[a] += w * j[a] * r;
            for b in 0..3 {
                jtj[a][b] += w * j[a] * j[b];
            }
        }
        chi_sq += w * r * r;
    }
    Linearisation { jtj, jtr, chi_sq }
}

fn chi_sq(points: &[CurvePoint], weights: &[f64], p: &[f64; 3]) -> f64 {
    points
        .iter()
        .zip(weights)
        .map(|(pt, w)| {
            let r = pt.signal - (p[0] + p[1] * (-pt.tau / p[2]).exp());
            w * r * r
        })
        .sum()
}

/// Inverse of a symmetric 3×3 matrix by cofactors; `None` when ill-conditioned.
fn invert_sym3(m: &[[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    // Equilibrate so the diagonal is one.
    let d: Vec<f64> = (0..3).map(|i| m[i][i].sqrt()).collect();
    if d.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
        return None;
    }
    let s = |i: usize, j: usize| m[i][j] / (d[i] * d[j]);
    let c00 = s(1, 1) * s(2, 2) - s(1, 2) * s(2, 1);
    let c01 = s(1, 2) * s(2, 0) - s(1, 0) * s(2, 2);
    let c02 = s(1, 0) * s(2, 1) - s(1, 1) * s(2, 0);
    let det = s(0, 0) * c00 + s(0, 1) * c01 + s(0, 2) * c02;
    if !(det.is_finite() && det > 1e-13) {
        return None;
    }
    let adj = [
        [
            c00,
            s(0, 2) * s(2, 1) - s(0, 1) * s(2, 2),
            s(0, 1) * s(1, 2) - s(0, 2) * s(1, 1),
        ],
        [
            c01,
            s(0, 0) * s(2, 2) - s(0, 2) * s(2, 0),
            s(0, 2) * s(1, 0) - s(0, 0) * s(1, 2),
        ],
        [
            c02,
            s(0, 1) * s(2, 0) - s(0, 0) * s(2, 1),
            s(0, 0) * s(1, 1) - s(0, 1) * s(1, 0),
        ],
    ];
    let mut inv = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            inv[i][j] = adj[i][j] / det / (d[i] * d[j]);
        }
    }
    Some(inv)
}

fn solve_damped(lin: &Linearisation, lambda: f64) -> Option<[f64; 3]> {
    let mut a = lin.jtj;
    for (i, row) in a.iter_mut().enumerate() {
        row[i] += lambda * lin.jtj[i][i];
    }
    let inv = invert_sym3(&a)?;
    let mut step = [0.0; 3];
    for i in 0..3 {
        step[i] = (0..3).map(|j| inv[i][j] * lin.jtr[j]).sum();
    }
    Some(step)
}

/// Weighted Levenberg-Marquardt fit of `b + A·exp(−τ/T1)`.
///
/// Weights are inverse variances when every point carries a positive
/// standard error; otherwise the fit is unweighted and the covariance is
/// scaled by the reduced χ². Points are sorted by dark time first, so the
/// result does not depend on row order.
pub fn fit_exponential(curve: &RelaxationCurve, guess: Option<InitialGuess>) -> Result<FitResult> {
    let mut points = curve.points.clone();
    if points.len() < 4 {
        return Err(Error::param(
            "curve",
            format!(
                "need at least 4 points to fit 3 parameters, got {}",
                points.len()
            ),
        ));
    }
    if points
        .iter()
        .any(|p| !(p.tau.is_finite() && p.tau >= 0.0 && p.signal.is_finite()))
    {
        return Err(Error::param(
            "curve",
            "dark times and signals must be finite, tau >= 0",
        ));
    }
    points.sort_by(|a, b| {
        a.tau
            .total_cmp(&b.tau)
            .then(a.signal.total_cmp(&b.signal))
            .then(a.stderr.total_cmp(&b.stderr))
    });
    let guess = guess.unwrap_or_else(|| initial_guess(&points));
    ensure_positive("initial t1", guess.t1)?;
    let tau_min = points[0].tau;
    let tau_max = points[points.len() - 1].tau;
    if !(tau_max >= 10.0 * tau_min || tau_max >= 2.0 * guess.t1) {
        return Err(Error::param(
            "curve",
            "dark times must span a decade or reach twice the expected T1",
        ));
    }

    let weighted = points
        .iter()
        .all(|p| p.stderr.is_finite() && p.stderr > 0.0);
    let weights: Vec<f64> = if weighted {
        points.iter().map(|p| 1.0 / (p.stderr * p.stderr)).collect()
    } else {
        vec![1.0; points.len()]
    };

    let mut p = [guess.baseline, guess.amplitude, guess.t1];
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    let mut lin = linearise(&points, &weights, &p);
    let mut message = String::from("max iterations reached");
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let Some(step) = solve_damped(&lin, lambda) else {
            lambda *= 10.0;
            if lambda > 1e16 {
                message = "damped normal equations are singular".into();
                break;
            }
            continue;
        };
        let trial = [p[0] + step[0], p[1] + step[1], p[2] + step[2]];
        let trial_chi = if trial[2] > 0.0 {
            chi_sq(&points, &weights, &trial)
        } else {
            f64::INFINITY
        };
        if trial_chi <= lin.chi_sq {
            let small_step = (0..3).all(|i| step[i].abs() <= 1e-12 * (p[i].abs() + 1e-300));
            let small_drop = lin.chi_sq - trial_chi <= 1e-14 * lin.chi_sq;
            p = trial;
            lin = linearise(&points, &weights, &p);
            lambda = (lambda * 0.1).max(1e-15);
            if small_step || (small_drop && lambda <= 1e-6) || lin.chi_sq == 0.0 {
                converged = true;
                message = "converged".into();
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e16 {
                // No descent direction left: we are at a minimum to working precision.
                converged = true;
                message = "converged (no further descent)".into();
                break;
            }
        }
    }

    let dof = (points.len() - 3) as f64;
    let reduced_chi_sq = lin.chi_sq / dof;
    let (covariance, singular) = match invert_sym3(&lin.jtj) {
        Some(mut inv) => {
            if !weighted {
                for row in inv.iter_mut() {
                    for v in row.iter_mut() {
                        *v *= reduced_chi_sq;
                    }
                }
            }
            (inv, false)
        }
        None => ([[f64::INFINITY; 3]; 3], true),
    };
    if !(p[2] > 0.0 && p[2].is_finite()) {
        converged = false;
        message = "fitted T1 is not positive".into();
    }
    if singular {
        message.push_str("; singular curvature, standard errors inflated");
    }
    Ok(FitResult {
        t1_hat: p[2],
        t1_stderr: covariance[2][2].sqrt(),
        amplitude: p[1],
        baseline: p[0],
        covariance,
        reduced_chi_sq,
        converged,
        singular,
        iterations,
        weighted,
        message,
    })
}

/// Maximum-likelihood Gaussian parameters of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianSummary {
    pub mean: f64,
    pub sigma: f64,
    pub n: usize,
}

/// Separation of two Gaussian summaries under three conventions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Separation {
    /// |Δμ| / √(σa·σb).
    pub geometric: f64,
    /// |Δμ| / √((σa² + σb²)/2).
    pub pooled: f64,
    /// |Δμ| / √(σa²/na + σb²/nb), the z-score of the difference of means.
    pub of_means: f64,
}

pub fn gaussian_summary(samples: &[f64]) -> Result<GaussianSummary> {
    if samples.len() < 5 {
        return Err(Error::param("samples", "need at least 5 samples"));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let sigma = var.sqrt();
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Singular("sample variance is zero".into()));
    }
    Ok(GaussianSummary {
        mean,
        sigma,
        n: samples.len(),
    })
}

pub fn separation(a: &GaussianSummary, b: &GaussianSummary) -> Separation {
    let delta = (a.mean - b.mean).abs();
    Separation {
        geometric: delta / (a.sigma * b.sigma).sqrt(),
        pooled: delta / (0.5 * (a.sigma * a.sigma + b.sigma * b.sigma)).sqrt(),
        of_means: delta / (a.sigma * a.sigma / a.n as f64 + b.sigma * b.sigma / b.n as f64).sqrt(),
    }
}

/// Relative per-spot jitter of the physical parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpotSpread {
    /// Relative standard deviation of the Gd density.
    pub density: f64,
    /// Relative standard deviation of the particle diameter.
    pub diameter: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpotResult {
    pub index: usize,
    /// Seed of this spot's curve, derived from the master seed.
    pub seed: u64,
    pub density_factor: f64,
    pub diameter_factor: f64,
    /// Model T1 for this spot, s.
    pub t1_true: f64,
    pub curve: RelaxationCurve,
    pub fit: Option<FitResult>,
    pub error: Option<String>,
}

/// Seed for task `index`: first word of the ChaCha8 stream `index` keyed by `master`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng.next_u64()
}

// Multiplicative Gaussian factor 1 + spread·z, redrawn until positive.
fn jitter_factor<R: RngCore>(rng: &mut R, spread: f64) -> f64 {
    if spread == 0.0 {
        return 1.0;
    }
    loop {
        let z: f64 = StandardNormal.sample(rng);
        let f = 1.0 + spread * z;
        if f > 0.0 {
            return f;
        }
    }
}

/// Simulates and fits `n_spots` confocal spots with jittered Gd density and
/// particle diameter. Spot `k` uses the seed `derive_seed(seed, k)` for both
/// its jitter and its photon noise.
pub fn simulate_spot_ensemble(
    scenario: &Scenario,
    spread: &SpotSpread,
    n_spots: usize,
    plan: &MeasurementPlan,
    seed: u64,
) -> Result<Vec<SpotResult>> {
    if n_spots < 2 {
        return Err(Error::param("n_spots", "need at least 2 spots"));
    }
    if !(spread.density >= 0.0 && spread.diameter >= 0.0) {
        return Err(Error::param("spread", "relative spreads must be >= 0"));
    }
    plan.validate()?;
    scenario.validate()?;
    (0..n_spots)
        .into_par_iter()
        .map(|index| {
            let spot_seed = derive_seed(seed, index as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(spot_seed);
            let density_factor = jitter_factor(&mut rng, spread.density);
            let diameter_factor = jitter_factor(&mut rng, spread.diameter);
            let spot = scenario.jittered(density_factor, diameter_factor);
            let t1_true = spot.relaxation()?.t1;
            let curve_seed = rng.next_u64();
            let curve = simulate_curve(t1_true, plan, curve_seed)?;
            let (fit, error) = match fit_exponential(&curve, None) {
                Ok(f) if f.converged => (Some(f), None),
                Ok(f) => {
                    let msg = f.message.clone();
                    (Some(f), Some(msg))
                }
                Err(e) => (None, Some(e.to_string())),
            };
            Ok(SpotResult {
                index,
                seed: curve_seed,
                density_factor,
                diameter_factor,
                t1_true,
                curve,
                fit,
                error,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noise_free(t1: f64, b: f64, a: f64, taus: &[f64]) -> RelaxationCurve {
        RelaxationCurve {
            points: taus
                .iter()
                .map(|&tau| CurvePoint {
                    tau,
                    signal: b + a * (-tau / t1).exp(),
                    stderr: 1e-3,
                })
                .collect(),
            raw_counts: None,
        }
    }

    #[test]
    fn expected_signal_limits() {
        let plan = MeasurementPlan::with_dark_times(default_dark_times(130e-6).unwrap(), 1000);
        assert_eq!(plan.expected_signal(0.0, 130e-6), 1.0);
        assert!((plan.expected_signal(1.0, 130e-6) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn default_grid_shape() {
        let g = default_dark_times(130e-6).unwrap();
        assert_eq!(g.len(), 12);
        assert!((g[0] - 1e-6).abs() < 1e-18);
        assert!((g[11] - 650e-6).abs() < 1e-15);
    }

    #[test]
    fn plan_validation() {
        let mut plan = MeasurementPlan::with_dark_times(vec![0.0, 1e-6, 2e-6], 10);
        assert!(plan.validate().is_err());
        plan.dark_times = vec![0.0, 2e-6, 1e-6, 3e-6];
        assert!(plan.validate().is_err());
        plan.dark_times = vec![0.0, 1e-6, 2e-6, 3e-6];
        plan.contrast = 1.0;
        assert!(plan.validate().is_err());
        plan.contrast = 0.2;
        plan.shots_per_point = 0;
        assert!(plan.validate().is_err());
    }

    #[test]
    fn simulation_is_deterministic_and_non_negative() {
        let plan = MeasurementPlan::with_dark_times(default_dark_times(130e-6).unwrap(), 100_000);
        let a = simulate_curve(130e-6, &plan, 9).unwrap();
        let b = simulate_curve(130e-6, &plan, 9).unwrap();
        assert_eq!(a, b);
        let c = simulate_curve(130e-6, &plan, 10).unwrap();
        assert_ne!(a, c);
        assert!(a.points.iter().all(|p| p.signal > 0.0 && p.stderr > 0.0));
    }

    #[test]
    fn large_shot_mean_matches_expectation() {
        let plan = MeasurementPlan::with_dark_times(default_dark_times(130e-6).unwrap(), 1_000_000);
        let curve = simulate_curve(130e-6, &plan, 1).unwrap();
        for p in &curve.points {
            let expect = plan.expected_signal(p.tau, 130e-6);
            assert!(
                (p.signal - expect).abs() < 4.0 * p.stderr,
                "{p:?} vs {expect}"
            );
        }
    }

    #[test]
    fn noise_free_fit_is_exact() {
        let taus = default_dark_times(130e-6).unwrap();
        let curve = noise_free(130e-6, 0.8, 0.2, &taus);
        let fit = fit_exponential(&curve, None).unwrap();
        assert!(fit.converged, "{}", fit.message);
        assert!((fit.t1_hat / 130e-6 - 1.0).abs() < 1e-8);
        assert!((fit.baseline / 0.8 - 1.0).abs() < 1e-8);
        assert!((fit.amplitude / 0.2 - 1.0).abs() < 1e-8);
        for i in 0..3 {
            for j in 0..3 {
                let (a, b) = (fit.covariance[i][j], fit.covariance[j][i]);
                assert!((a - b).abs() <= 1e-9 * a.abs().max(b.abs()));
            }
            assert!(fit.covariance[i][i] > 0.0);
        }
    }

    #[test]
    fn fit_is_order_insensitive() {
        let plan = MeasurementPlan::with_dark_times(default_dark_times(50e-6).unwrap(), 200_000);
        let curve = simulate_curve(50e-6, &plan, 3).unwrap();
        let mut shuffled = curve.clone();
        shuffled.points.reverse();
        shuffled.points.swap(2, 7);
        let a = fit_exponential(&curve, None).unwrap();
        let b = fit_exponential(&shuffled, None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fit_preconditions() {
        let curve = noise_free(1e-4, 0.8, 0.2, &[0.0, 1e-5, 2e-5]);
        assert!(fit_exponential(&curve, None).is_err());
        // Dark times covering only a sliver of the decay.
        let curve = noise_free(1e-3, 0.8, 0.2, &[1e-5, 1.2e-5, 1.4e-5, 1.6e-5]);
        assert!(fit_exponential(&curve, None).is_err());
    }

    #[test]
    fn unweighted_fit_scales_covariance() {
        let taus = default_dark_times(80e-6).unwrap();
        let mut curve = noise_free(80e-6, 0.8, 0.2, &taus);
        for (i, p) in curve.points.iter_mut().enumerate() {
            p.stderr = 0.0;
            p.signal += if i % 2 == 0 { 2e-3 } else { -2e-3 };
        }
        let fit = fit_exponential(&curve, None).unwrap();
        assert!(!fit.weighted);
        assert!(fit.converged);
        assert!(fit.t1_stderr > 0.0 && fit.t1_stderr.is_finite());
        assert!((fit.t1_hat / 80e-6 - 1.0).abs() < 0.2);
    }

    #[test]
    fn flat_curve_flags_singular_curvature() {
        let taus = default_dark_times(80e-6).unwrap();
        let curve = noise_free(80e-6, 0.9, 0.0, &taus);
        let fit = fit_exponential(
            &curve,
            Some(InitialGuess {
                baseline: 0.9,
                amplitude: 0.0,
                t1: 80e-6,
            }),
        )
        .unwrap();
        assert!(fit.singular);
        assert!(fit.t1_stderr.is_infinite());
    }

    #[test]
    fn gaussian_summary_and_separation() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let s = gaussian_summary(&a).unwrap();
        assert_eq!(s.mean, 3.0);
        assert!((s.sigma - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(separation(&s, &s).geometric, 0.0);
        assert_eq!(separation(&s, &s).pooled, 0.0);

        let x = GaussianSummary {
            mean: 10.0,
            sigma: 1.0,
            n: 25,
        };
        let y = GaussianSummary {
            mean: 14.0,
            sigma: 4.0,
            n: 16,
        };
        let sep = separation(&x, &y);
        assert_eq!(sep.geometric, 2.0);
        assert!((sep.pooled - 4.0 / 8.5f64.sqrt()).abs() < 1e-15);
        assert!((sep.of_means - 4.0 / (1.0 / 25.0 + 1.0f64).sqrt()).abs() < 1e-15);

        assert!(gaussian_summary(&[1.0; 4]).is_err());
        assert!(matches!(
            gaussian_summary(&[2.0; 6]),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn gaussian_mean_within_sampling_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let samples: Vec<f64> = (0..100)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                130e-6 + 5e-6 * z
            })
            .collect();
        let s = gaussian_summary(&samples).unwrap();
        assert!((s.mean - 130e-6).abs() < 3.0 * 5e-6 / 10.0);
    }

    #[test]
    fn derived_seeds_are_distinct() {
        let seeds: std::collections::BTreeSet<u64> =
            (0..1000).map(|k| derive_seed(42, k)).collect();
        assert_eq!(seeds.len(), 1000);
        assert_eq!(derive_seed(42, 5), derive_seed(42, 5));
    }
}
