//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on failure.

use std::time::Instant;

use rbm_core::bath::{
    b_perp_mc, b_perp_sq_surface, b_perp_sq_volume, calibrate_surface_density, BathSpec,
    ParticleGeometry, SurfaceBath, VolumeBath,
};
use rbm_core::calibration as cal;
use rbm_core::hydro::{microviscosity_factor, rbm_rate};
use rbm_core::io::{write_curve, FitRecord};
use rbm_core::measure::{
    default_dark_times, fit_exponential, gaussian_summary, separation, simulate_curve,
    simulate_spot_ensemble, MeasurementPlan, SpotSpread,
};
use rbm_core::relax::{motional_narrowing_curve, psd_normalisation, AngularFrequency, NoiseSource};
use rbm_core::sensitivity::{
    delta_r_min, density_grid, optimize_density, oracle_ratio_scan, SensitivityCurve,
    SensitivityInputs,
};
use rbm_core::units::{rate_to_ghz, GAMMA_E};
use rbm_core::{Scenario, ScenarioConfig};

struct Report {
    failures: usize,
}

impl Report {
    fn check(&mut self, id: &str, ok: bool, detail: String) {
        println!("{} [{id}] {detail}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            self.failures += 1;
        }
    }
}

type Step = fn(&mut Report);

fn within(value: f64, target: f64, rel: f64) -> bool {
    (value / target - 1.0).abs() <= rel
}

fn log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn acetone_anchor(r: &mut Report) {
    let s = Scenario::default().with_x_water(0.0);
    let rate = rbm_rate(&s.hydro_params().unwrap()).unwrap();
    r.check(
        "1 acetone rotation rate",
        within(rate, 14.2e9, 0.05),
        format!(
            "R_rot(acetone) = {:.3} GHz, target 14.2 GHz ±5%",
            rate_to_ghz(rate)
        ),
    );
}

fn mixture_range(r: &mut Report) {
    let s = Scenario::default();
    let n = 2000;
    let mut min = (f64::MAX, 0.0);
    let mut max = (f64::MIN, 0.0);
    for i in 0..=n {
        let x = 0.046 + (1.0 - 0.046) * i as f64 / n as f64;
        let rate = rbm_rate(&s.with_x_water(x).hydro_params().unwrap()).unwrap();
        if rate < min.0 {
            min = (rate, x);
        }
        if rate > max.0 {
            max = (rate, x);
        }
    }
    r.check(
        "2 mixture range",
        within(min.0, 2e9, 0.3) && within(max.0, 14e9, 0.3),
        format!(
            "min {:.3} GHz at x={:.3}, max {:.3} GHz at x={:.3}; targets 2 and 14 GHz ±30%",
            rate_to_ghz(min.0),
            min.1,
            rate_to_ghz(max.0),
            max.1
        ),
    );
}

fn bare_baseline(r: &mut Report) {
    let s = Scenario::default().with_gd_density(0.0);
    let t1 = s.relaxation().unwrap().t1;
    let sigma = calibrate_surface_density(
        t1,
        &s.geometry,
        &s.surface,
        s.t1_bulk,
        s.omega0,
        s.surface_tau_c,
    )
    .unwrap();
    let sigma_nm = sigma * 1e-18;
    r.check(
        "3 bare-particle baseline",
        within(t1, 130e-6, 0.1) && (0.5..=2.0).contains(&sigma_nm),
        format!(
            "T1(25 nm, no Gd) = {:.2} µs (130 µs ±10%); inverted σ = {sigma_nm:.3} nm⁻² (1 nm⁻² within ×2)",
            t1 * 1e6
        ),
    );
}

fn sensitivity_curve(diameter: f64, readout: &SensitivityInputs) -> SensitivityCurve {
    let s = Scenario::default().with_diameter(diameter);
    let grid = density_grid(cal::GD_OPTIMAL_DENSITY, 4.0, 200).unwrap();
    optimize_density(&s, &grid, readout).unwrap()
}

fn sensitivity_anchors(r: &mut Report) {
    let s = Scenario::default();
    let readout = ScenarioConfig::default().readout(&s);
    let c20 = sensitivity_curve(20e-9, &readout);
    let c25 = sensitivity_curve(25e-9, &readout);
    let (m20, m25) = (c20.minimum(), c25.minimum());
    let ratio = m25.delta_r_min / m20.delta_r_min;
    r.check(
        "4a sensitivity minimum 20 nm",
        within(m20.delta_r_min, 6.9e9, 0.25) && !c20.boundary_warning,
        format!(
            "δR_min = {:.3} GHz (6.9 GHz ±25%)",
            rate_to_ghz(m20.delta_r_min)
        ),
    );
    r.check(
        "4b sensitivity minimum 25 nm",
        within(m25.delta_r_min, 9.6e9, 0.25) && !c25.boundary_warning,
        format!(
            "δR_min = {:.3} GHz (9.6 GHz ±25%)",
            rate_to_ghz(m25.delta_r_min)
        ),
    );
    r.check(
        "4c diameter ratio",
        within(ratio, 1.39, 0.1),
        format!("δR_min(25 nm)/δR_min(20 nm) = {ratio:.4} (1.39 ±10%)"),
    );
    r.check(
        "4d optimal total rate",
        within(m20.r_total, 60.2e9, 0.25) && within(m25.r_total, 60.2e9, 0.25),
        format!(
            "argmin R_total = {:.2} GHz (20 nm), {:.2} GHz (25 nm); target 60.2 GHz ±25%; n_opt = {:.1} mM",
            rate_to_ghz(m20.r_total),
            rate_to_ghz(m25.r_total),
            m20.density / 6.02214076e23
        ),
    );
}

fn monte_carlo(r: &mut Report) {
    let g = ParticleGeometry::centered(25e-9);
    let surface = SurfaceBath {
        areal_density: cal::SURFACE_DENSITY,
        spin: 0.5,
        gamma: GAMMA_E,
    };
    let volume = VolumeBath {
        number_density: cal::GD_OPTIMAL_DENSITY,
        spin: 3.5,
        gamma: GAMMA_E,
        standoff: 0.0,
    };
    let cases = [
        (
            "surface",
            BathSpec::Surface(surface),
            b_perp_sq_surface(&g, &surface).unwrap(),
        ),
        (
            "volume",
            BathSpec::Volume(volume),
            b_perp_sq_volume(&g, &volume).unwrap(),
        ),
    ];
    for (name, spec, closed) in cases {
        let mc = b_perp_mc(&g, &spec, 1_000_000, 17).unwrap();
        let z = (mc.mean - closed) / mc.stderr;
        r.check(
            &format!("5a Monte Carlo {name} bath"),
            z.abs() < 3.0,
            format!(
                "closed {closed:.5e} T², MC {:.5e} ± {:.2e} T² at 10⁶ samples, z = {z:+.2}",
                mc.mean, mc.stderr
            ),
        );
    }
    // Stderr averaged over four seeds at each sample count.
    let ns = [10_000u64, 100_000, 1_000_000, 10_000_000];
    let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    for (name, spec) in [
        ("surface", BathSpec::Surface(surface)),
        ("volume", BathSpec::Volume(volume)),
    ] {
        let errs: Vec<f64> = ns
            .iter()
            .map(|&n| {
                (0..4)
                    .map(|seed| b_perp_mc(&g, &spec, n, seed).unwrap().stderr)
                    .sum::<f64>()
                    / 4.0
            })
            .collect();
        let slope = log_slope(&xs, &errs);
        r.check(
            &format!("5b Monte Carlo stderr scaling, {name} bath"),
            (slope + 0.5).abs() <= 0.05,
            format!("d ln(stderr)/d ln(samples) = {slope:.4} over 10⁴..10⁷, 4 seeds (−0.5 ±0.05)"),
        );
    }
}

fn fit_calibration(r: &mut Report) {
    let t1 = cal::BARE_T1;
    let plan = MeasurementPlan::with_dark_times(default_dark_times(t1).unwrap(), 1_000_000);
    let fits: Vec<_> = (0..200u64)
        .map(|k| fit_exponential(&simulate_curve(t1, &plan, 1000 + k).unwrap(), None).unwrap())
        .collect();
    let n = fits.len() as f64;
    let converged = fits.iter().filter(|f| f.converged).count();
    let bias = fits.iter().map(|f| f.t1_hat - t1).sum::<f64>() / n;
    let mean_se = fits.iter().map(|f| f.t1_stderr).sum::<f64>() / n;
    let pulls: Vec<f64> = fits.iter().map(|f| (f.t1_hat - t1) / f.t1_stderr).collect();
    let pm = pulls.iter().sum::<f64>() / n;
    let pvar = pulls.iter().map(|p| (p - pm).powi(2)).sum::<f64>() / (n - 1.0);
    r.check(
        "6 fit calibration",
        converged == fits.len() && bias.abs() < 0.5 * mean_se && (pvar - 1.0).abs() <= 0.2,
        format!(
            "200 replicates at T1 = 130 µs: {converged} converged, bias = {:.4} µs = {:.3} mean stderr (< 0.5), \
             bias z of mean = {:.2}, pull variance = {pvar:.3} (1 ±0.2)",
            bias * 1e6,
            bias / mean_se,
            bias / (mean_se / n.sqrt())
        ),
    );
}

fn oracle_ratio(r: &mut Report) {
    let inputs = SensitivityInputs {
        b_perp_sq: 1e-8,
        ..SensitivityInputs::readout_defaults(GAMMA_E, AngularFrequency::nv_zero_field())
    };
    let scan = oracle_ratio_scan(&inputs, 0.1, 100.0, 20, 0.2).unwrap();
    let lo = scan.ratios.iter().map(|p| p.1).fold(f64::MAX, f64::min);
    let hi = scan.ratios.iter().map(|p| p.1).fold(f64::MIN, f64::max);
    r.check(
        "7 closed form vs oracle",
        scan.max_deviation <= 0.1,
        format!(
            "{} grid points over [0.1ω0, 100ω0]: ratio in [{lo:.5}, {hi:.5}], max deviation {:.2e}; constant offset {:.4}",
            scan.ratios.len(),
            scan.max_deviation,
            scan.offset
        ),
    );
}

fn property_suite(r: &mut Report) {
    let w0 = AngularFrequency::nv_zero_field();

    let src = NoiseSource::new(GAMMA_E, 3e-9, 2e-11).unwrap();
    let norm = psd_normalisation(&src).unwrap();
    r.check(
        "8a Lorentzian normalisation",
        (norm - 1.0).abs() <= 1e-6,
        format!("∫S dω/2π / b² = {norm:.12} (1 within 1e-6)"),
    );

    let grid: Vec<f64> = (0..=4000)
        .map(|i| w0.value() * 10f64.powf(-2.0 + i as f64 / 1000.0))
        .collect();
    let curve = motional_narrowing_curve(&src, w0, &grid).unwrap();
    let peak = curve.iter().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap().0;
    r.check(
        "8b motional-narrowing peak",
        (peak / w0.value() - 1.0).abs() <= 2.4e-3,
        format!(
            "peak at R/ω0 = {:.5} on a 1000/decade grid",
            peak / w0.value()
        ),
    );

    let mut fr_ok = microviscosity_factor(5e-10, 0.0).unwrap() == 1.0;
    for i in 0..200 {
        let ratio = 10f64.powf(-3.0 + 6.0 * i as f64 / 199.0);
        let f = microviscosity_factor(5e-10, 5e-10 * ratio).unwrap();
        fr_ok &= f > 0.0 && f <= 1.0;
    }
    r.check(
        "8c microviscosity factor",
        fr_ok,
        "f_r ∈ (0, 1] over a_s/a ∈ [1e-3, 1e3], f_r(a_s = 0) = 1".into(),
    );

    let g = ParticleGeometry::centered(20e-9);
    let mut lin = 0.0f64;
    let sb = SurfaceBath {
        areal_density: 1e18,
        spin: 0.5,
        gamma: GAMMA_E,
    };
    let vb = VolumeBath {
        number_density: 1e25,
        spin: 3.5,
        gamma: GAMMA_E,
        standoff: 1e-9,
    };
    let s1 = b_perp_sq_surface(&g, &sb).unwrap();
    let v1 = b_perp_sq_volume(&g, &vb).unwrap();
    for k in [0.1, 2.0, 7.5, 1e3] {
        let sk = b_perp_sq_surface(
            &g,
            &SurfaceBath {
                areal_density: k * 1e18,
                ..sb
            },
        )
        .unwrap();
        let vk = b_perp_sq_volume(&g, &vb.with_density(k * 1e25)).unwrap();
        lin = lin
            .max((sk / (k * s1) - 1.0).abs())
            .max((vk / (k * v1) - 1.0).abs());
    }
    r.check(
        "8d density linearity",
        lin <= 1e-12,
        format!("max relative deviation {lin:.2e}"),
    );

    let base = SensitivityInputs {
        b_perp_sq: 1e-8,
        r_total: 6e10,
        ..SensitivityInputs::readout_defaults(GAMMA_E, w0)
    };
    let d0 = delta_r_min(&base).unwrap();
    let d_t = delta_r_min(&SensitivityInputs {
        acquisition_time: 40.0,
        ..base
    })
    .unwrap();
    let d_cd = delta_r_min(&SensitivityInputs {
        contrast: 0.4,
        photon_rate: 2.5e4,
        ..base
    })
    .unwrap();
    let d_c = delta_r_min(&SensitivityInputs {
        contrast: 0.1,
        ..base
    })
    .unwrap();
    let scaling = (d_t / d0 - 0.5)
        .abs()
        .max((d_cd / d0 - 1.0).abs())
        .max((d_c / d0 - 2.0).abs());
    r.check(
        "8e sensitivity scaling",
        scaling <= 1e-12,
        format!(
            "T×4 → {:.15}, C×2 with 𝒟/4 → {:.15}, C/2 → {:.15}",
            d_t / d0,
            d_cd / d0,
            d_c / d0
        ),
    );

    let s = Scenario::default();
    let plan = MeasurementPlan::with_dark_times(default_dark_times(130e-6).unwrap(), 100_000);
    let spread = SpotSpread {
        density: 0.05,
        diameter: 0.02,
    };
    let render = || {
        let spots = simulate_spot_ensemble(&s, &spread, 16, &plan, 99).unwrap();
        let mut text = String::new();
        for spot in &spots {
            text += &write_curve(&spot.curve);
            text += &FitRecord::new(spot.fit.as_ref().unwrap()).to_json();
        }
        let mc = b_perp_mc(&g, &BathSpec::Volume(vb), 300_000, 3).unwrap();
        text + &format!("{:e} {:e}", mc.mean, mc.stderr)
    };
    let (a, b) = (render(), render());
    r.check(
        "8f determinism",
        a == b,
        format!(
            "two reruns of ensemble + Monte Carlo: {} bytes, identical = {}",
            a.len(),
            a == b
        ),
    );
}

fn two_solvent_demo(r: &mut Report) {
    let cfg = ScenarioConfig::default();
    let water = cfg.scenario().unwrap();
    let acetone = water.with_x_water(0.046);
    let spread = cfg.spread();
    let n_spots = 30;
    let summarise = |s: &Scenario, seed: u64| {
        let t1 = s.relaxation().unwrap().t1;
        let plan = cfg.plan(t1).unwrap();
        let spots = simulate_spot_ensemble(s, &spread, n_spots, &plan, seed).unwrap();
        let t1s: Vec<f64> = spots
            .iter()
            .filter_map(|p| p.fit.as_ref().map(|f| f.t1_hat))
            .collect();
        (t1, gaussian_summary(&t1s).unwrap())
    };
    let (tw, gw) = summarise(&water, cfg.run.seed);
    let (ta, ga) = summarise(&acetone, cfg.run.seed + 1);
    let sep = separation(&ga, &gw);
    r.check(
        "9 two-solvent separation",
        ga.mean > gw.mean,
        format!(
            "{n_spots} spots each, jitter σ_n/n = {}, σ_d/d = {}; water T1 = {:.2} ± {:.2} µs (model {:.2}), \
             x=0.046 T1 = {:.2} ± {:.2} µs (model {:.2}); z geometric = {:.2}, pooled = {:.2}, of means = {:.2}",
            spread.density,
            spread.diameter,
            gw.mean * 1e6,
            gw.sigma * 1e6,
            tw * 1e6,
            ga.mean * 1e6,
            ga.sigma * 1e6,
            ta * 1e6,
            sep.geometric,
            sep.pooled,
            sep.of_means
        ),
    );
}

fn main() {
    let mut report = Report { failures: 0 };
    let steps: [(&str, Step); 9] = [
        ("acetone anchor", acetone_anchor),
        ("mixture range", mixture_range),
        ("bare baseline", bare_baseline),
        ("sensitivity anchors", sensitivity_anchors),
        ("Monte Carlo oracle", monte_carlo),
        ("fit calibration", fit_calibration),
        ("oracle ratio", oracle_ratio),
        ("property suite", property_suite),
        ("two-solvent demo", two_solvent_demo),
    ];
    for (name, step) in steps {
        let start = Instant::now();
        step(&mut report);
        println!("      ({name}: {:.2} s)", start.elapsed().as_secs_f64());
    }
    if report.failures > 0 {
        println!("{} acceptance check(s) failed", report.failures);
        std::process::exit(1);
    }
    println!("all acceptance checks passed");
}
