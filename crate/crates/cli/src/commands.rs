use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rbm_core::bath::{b_perp_mc, b_perp_sq_surface, b_perp_sq_volume, BathSpec};
use rbm_core::calibration::GD_OPTIMAL_DENSITY;
use rbm_core::io::{fmt_f64, read_curve, write_curve, write_sensitivity, FitRecord};
use rbm_core::measure::{
    derive_seed, fit_exponential, gaussian_summary, separation, simulate_spot_ensemble,
    InitialGuess, SpotResult,
};
use rbm_core::relax::{psd_normalisation, NoiseSource};
use rbm_core::sensitivity::{density_grid, optimize_density, oracle_ratio_scan, DensityModel};
use rbm_core::units::{rate_to_ghz, to_per_nm2};
use rbm_core::{Scenario, ScenarioConfig};
use serde_json::json;

use crate::manifest::{unix_now, RunManifest};
use crate::{Axis, Common, Failure, Oracle};

type CmdResult = Result<(), Failure>;

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Validation(format!("{}: {e}", path.display()))
}

fn load(common: &Common) -> Result<(ScenarioConfig, Scenario), Failure> {
    let mut cfg = match &common.config {
        Some(path) => ScenarioConfig::load(path)?,
        None => ScenarioConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.run.seed = seed;
    }
    if let Some(d) = common.diameter_nm {
        cfg.particle.diameter_nm = d;
    }
    if let Some(x) = common.x_water {
        cfg.solvent.x_water = x;
    }
    let scenario = cfg.scenario()?;
    Ok((cfg, scenario))
}

/// Writes `text` to `out` (or stdout) and a manifest beside it.
fn emit(
    out: Option<&Path>,
    text: &str,
    command: &str,
    cfg: &ScenarioConfig,
    started: f64,
) -> CmdResult {
    let Some(path) = out else {
        print!("{text}");
        return Ok(());
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| io_failure(parent, e))?;
    }
    fs::write(path, text).map_err(|e| io_failure(path, e))?;
    let manifest_path = PathBuf::from(format!("{}.manifest.json", path.display()));
    let mut manifest = RunManifest::new(command, cfg, started);
    manifest.outputs.push(path.to_path_buf());
    manifest
        .finish(&manifest_path)
        .map_err(|e| io_failure(&manifest_path, e))
}

fn json_text<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report serialises") + "\n"
}

pub fn t1(common: &Common, out: Option<&Path>) -> CmdResult {
    let started = unix_now();
    let (cfg, s) = load(common)?;
    let fields = s.fields_auto(cfg.run.mc_samples, cfg.run.seed)?;
    let report = s.report_with(fields)?;
    let sum = report.rate_bulk + report.rate_surface + report.rate_gd;
    let closure = (sum * report.t1 - 1.0).abs();

    eprintln!("T1                 {:.4} µs", report.t1 * 1e6);
    eprintln!("1/T1                {:.6e} s⁻¹", report.rate_total);
    eprintln!("  bulk              {:.6e} s⁻¹", report.rate_bulk);
    eprintln!("  surface spins     {:.6e} s⁻¹", report.rate_surface);
    eprintln!("  Gd bath           {:.6e} s⁻¹", report.rate_gd);
    eprintln!("B⊥² surface         {:.6e} T²", report.fields.surface);
    eprintln!("B⊥² Gd              {:.6e} T²", report.fields.gd);
    let r = report.rates;
    eprintln!(
        "R_Gd (GHz)          dip {:.4}  vib {:.4}  trans {:.4e}  rot {:.4}  total {:.4}",
        rate_to_ghz(r.r_dip),
        rate_to_ghz(r.r_vib),
        rate_to_ghz(r.r_trans),
        rate_to_ghz(r.r_rot),
        rate_to_ghz(r.r_total)
    );
    eprintln!(
        "solvent             η {:.4} mPa·s  f_r {:.4}  a_s {:.3} nm",
        report.viscosity * 1e3,
        report.microviscosity_factor,
        report.solvent_radius * 1e9
    );
    let text = json_text(&json!({
        "report": report,
        "bookkeeping_residual": closure,
        "surface_density_per_nm2": to_per_nm2(s.surface.areal_density),
    }));
    emit(out, &text, "t1", &cfg, started)
}

fn sweep_point(base: &Scenario, axis: Axis, v: f64) -> Scenario {
    match axis {
        Axis::GdDensity => base.with_gd_density(v),
        Axis::WaterFraction => base.with_x_water(v),
        Axis::Diameter => base.with_diameter(v * 1e-9),
    }
}

pub fn sweep(common: &Common, axis: Axis, grid: &[f64], out: Option<&Path>) -> CmdResult {
    let started = unix_now();
    let (cfg, base) = load(common)?;
    // Validate the whole grid before computing anything.
    let scenarios = grid
        .iter()
        .map(|&v| {
            let s = sweep_point(&base, axis, v);
            s.validate()
                .map(|_| s)
                .map_err(|e| Failure::Validation(format!("grid value {v}: {e}")))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let axis_name = match axis {
        Axis::GdDensity => "gd_density_per_m3",
        Axis::WaterFraction => "x_water",
        Axis::Diameter => "diameter_nm",
    };
    let mut text = format!(
        "{axis_name},viscosity_pa_s,f_r,r_dip_per_s,r_vib_per_s,r_trans_per_s,r_rot_per_s,r_total_per_s,\
         b_perp_sq_surface_t2,b_perp_sq_gd_t2,rate_surface_per_s,rate_gd_per_s,t1_s\n"
    );
    for (v, s) in grid.iter().zip(&scenarios) {
        let fields = s.fields_auto(cfg.run.mc_samples, cfg.run.seed)?;
        let rep = s.report_with(fields)?;
        let row = [
            *v,
            rep.viscosity,
            rep.microviscosity_factor,
            rep.rates.r_dip,
            rep.rates.r_vib,
            rep.rates.r_trans,
            rep.rates.r_rot,
            rep.rates.r_total,
            rep.fields.surface,
            rep.fields.gd,
            rep.rate_surface,
            rep.rate_gd,
            rep.t1,
        ];
        let cells: Vec<String> = row.iter().map(|x| fmt_f64(*x)).collect();
        text += &cells.join(",");
        text.push('\n');
    }
    emit(out, &text, "sweep", &cfg, started)
}

fn check_writable(dir: &Path) -> CmdResult {
    fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
    let probe = dir.join(".rbm-write-probe");
    fs::write(&probe, b"").map_err(|e| io_failure(dir, e))?;
    fs::remove_file(&probe).map_err(|e| io_failure(&probe, e))
}

fn spot_table(spots: &[SpotResult]) -> String {
    let mut t = String::from(
        "index,curve_seed,density_factor,diameter_factor,t1_true_s,t1_hat_s,t1_stderr_s,converged\n",
    );
    for s in spots {
        let (hat, se, ok) = match &s.fit {
            Some(f) => (f.t1_hat, f.t1_stderr, f.converged),
            None => (f64::NAN, f64::NAN, false),
        };
        let _ = writeln!(
            t,
            "{},{},{},{},{},{},{},{}",
            s.index,
            s.seed,
            fmt_f64(s.density_factor),
            fmt_f64(s.diameter_factor),
            fmt_f64(s.t1_true),
            fmt_f64(hat),
            fmt_f64(se),
            ok
        );
    }
    t
}

pub fn simulate(common: &Common, n_spots: usize, out: &Path) -> CmdResult {
    let started = unix_now();
    let (cfg, base) = load(common)?;
    check_writable(out)?;

    let mut conditions = vec![cfg.solvent.x_water];
    if let Some(x) = cfg.ensemble.compare_x_water {
        if x == cfg.solvent.x_water {
            return Err(Failure::Validation(
                "ensemble.compare_x_water equals solvent.x_water".into(),
            ));
        }
        conditions.push(x);
    }
    let spread = cfg.spread();
    let mut manifest = RunManifest::new("simulate", &cfg, started);
    let mut summaries = Vec::new();
    let mut gaussians = Vec::new();

    for (c, &x) in conditions.iter().enumerate() {
        let scenario = base.with_x_water(x);
        scenario.validate()?;
        let model_t1 = scenario.relaxation()?.t1;
        let plan = cfg.plan(model_t1)?;
        // Condition 0 uses the master seed; further conditions derive theirs.
        let seed = if c == 0 {
            cfg.run.seed
        } else {
            derive_seed(cfg.run.seed, c as u64)
        };
        let spots = simulate_spot_ensemble(&scenario, &spread, n_spots, &plan, seed)?;

        let label = format!("x_water_{x:.4}");
        let curve_dir = out.join("curves").join(&label);
        let fit_dir = out.join("fits").join(&label);
        for dir in [&curve_dir, &fit_dir] {
            fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
        }
        for spot in &spots {
            let name = format!("spot_{:04}", spot.index);
            let curve_path = curve_dir.join(format!("{name}.csv"));
            fs::write(&curve_path, write_curve(&spot.curve))
                .map_err(|e| io_failure(&curve_path, e))?;
            manifest.outputs.push(curve_path.clone());
            if let Some(fit) = &spot.fit {
                let mut rec = FitRecord::new(fit);
                rec.seed = Some(spot.seed);
                rec.plan = Some(plan.clone());
                rec.source = curve_path
                    .strip_prefix(out)
                    .ok()
                    .map(|p| p.display().to_string());
                let fit_path = fit_dir.join(format!("{name}.json"));
                fs::write(&fit_path, rec.to_json() + "\n").map_err(|e| io_failure(&fit_path, e))?;
                manifest.outputs.push(fit_path);
            }
        }
        let table_path = out.join(format!("spots_{label}.csv"));
        fs::write(&table_path, spot_table(&spots)).map_err(|e| io_failure(&table_path, e))?;
        manifest.outputs.push(table_path);

        let t1s: Vec<f64> = spots
            .iter()
            .filter_map(|s| s.fit.as_ref().filter(|f| f.converged).map(|f| f.t1_hat))
            .collect();
        let gaussian = gaussian_summary(&t1s).ok();
        let failed: Vec<_> = spots
            .iter()
            .filter_map(|s| {
                s.error
                    .as_ref()
                    .map(|e| json!({"index": s.index, "error": e}))
            })
            .collect();
        eprintln!(
            "x_water = {x}: model T1 {:.3} µs, {} / {} fits converged{}",
            model_t1 * 1e6,
            t1s.len(),
            spots.len(),
            gaussian
                .map(|g| format!(", fitted T1 {:.3} ± {:.3} µs", g.mean * 1e6, g.sigma * 1e6))
                .unwrap_or_default()
        );
        summaries.push(json!({
            "x_water": x,
            "seed": seed,
            "model_t1_s": model_t1,
            "rbm_rate_per_s": scenario.rate_breakdown()?.r_rot,
            "spots": spots.len(),
            "converged": t1s.len(),
            "t1_gaussian": gaussian,
            "failures": failed,
        }));
        gaussians.push(gaussian);
    }

    let separation = match gaussians.as_slice() {
        [Some(a), Some(b)] => {
            let sep = separation(a, b);
            eprintln!(
                "separation: {:.2} σ (geometric), {:.2} σ (pooled), {:.2} σ (of means)",
                sep.geometric, sep.pooled, sep.of_means
            );
            Some(sep)
        }
        _ => None,
    };
    let summary = json!({
        "seed": cfg.run.seed,
        "jitter": {
            "density_rel_spread": spread.density,
            "diameter_rel_spread": spread.diameter,
        },
        "conditions": summaries,
        "separation": separation,
    });
    let summary_path = out.join("summary.json");
    fs::write(&summary_path, json_text(&summary)).map_err(|e| io_failure(&summary_path, e))?;
    manifest.outputs.push(summary_path);
    let manifest_path = out.join("manifest.json");
    manifest
        .finish(&manifest_path)
        .map_err(|e| io_failure(&manifest_path, e))
}

pub fn fit(
    data: &Path,
    unweighted: bool,
    t1_guess_us: Option<f64>,
    out: Option<&Path>,
) -> CmdResult {
    let mut curve = read_curve(data)?;
    if unweighted {
        for p in &mut curve.points {
            p.stderr = 0.0;
        }
    }
    let guess = match t1_guess_us {
        Some(t) if t > 0.0 && t.is_finite() => {
            let mut g = rbm_core::measure::initial_guess(&curve.points);
            g.t1 = t * 1e-6;
            Some(g)
        }
        Some(t) => {
            return Err(Failure::Validation(format!(
                "t1 guess must be positive, got {t}"
            )))
        }
        None => None::<InitialGuess>,
    };
    let result = fit_exponential(&curve, guess)?;
    let mut rec = FitRecord::new(&result);
    rec.source = Some(data.display().to_string());
    let text = rec.to_json() + "\n";
    match out {
        Some(path) => fs::write(path, &text).map_err(|e| io_failure(path, e))?,
        None => print!("{text}"),
    }
    eprintln!(
        "T1 = {:.6} ± {:.6} µs, reduced χ² {:.3}, {}",
        result.t1_hat * 1e6,
        result.t1_stderr * 1e6,
        result.reduced_chi_sq,
        result.message
    );
    if result.converged {
        Ok(())
    } else {
        Err(Failure::Numerical(format!(
            "fit did not converge: {}",
            result.message
        )))
    }
}

pub fn sensitivity(
    common: &Common,
    grid: Option<Vec<f64>>,
    acquisition_time_s: Option<f64>,
    out: Option<&Path>,
) -> CmdResult {
    let started = unix_now();
    let (mut cfg, s) = load(common)?;
    if let Some(t) = acquisition_time_s {
        cfg.measurement.acquisition_time_s = t;
    }
    let readout = cfg.readout(&s);
    readout_check(&readout)?;
    let grid = match grid {
        Some(g) => g,
        None => density_grid(GD_OPTIMAL_DENSITY, 4.0, 50)?,
    };
    let curve = optimize_density(&s, &grid, &readout)?;
    for (n, why) in &curve.skipped {
        eprintln!("notice: skipped density {n:e} m⁻³: {why}");
    }
    if curve.boundary_warning {
        eprintln!("warning: the minimum lies on the edge of the density grid; widen it");
    }
    let m = curve.minimum();
    eprintln!(
        "minimum δR = {:.4} GHz at n = {:.4e} m⁻³ (R_total = {:.3} GHz)",
        rate_to_ghz(m.delta_r_min),
        m.density,
        rate_to_ghz(m.r_total)
    );
    emit(
        out,
        &write_sensitivity(&curve),
        "sensitivity",
        &cfg,
        started,
    )
}

fn readout_check(r: &rbm_core::sensitivity::SensitivityInputs) -> CmdResult {
    let probe = rbm_core::sensitivity::SensitivityInputs {
        b_perp_sq: 1.0,
        r_total: 1.0,
        ..*r
    };
    probe.validate().map_err(Failure::from)
}

pub fn oracle(common: &Common, which: Oracle, out: Option<&Path>) -> CmdResult {
    let started = unix_now();
    let (cfg, s) = load(common)?;
    let (passed, report) = match which {
        Oracle::BathMc => {
            if s.geometry.sensor_offset != 0.0 {
                return Err(Failure::Validation(
                    "the bath oracle compares against closed forms, which need a centred sensor"
                        .into(),
                ));
            }
            let mut passed = true;
            let mut rows = Vec::new();
            let cases = [
                (
                    "surface",
                    BathSpec::Surface(s.surface),
                    b_perp_sq_surface(&s.geometry, &s.surface)?,
                ),
                (
                    "gd",
                    BathSpec::Volume(s.gd),
                    b_perp_sq_volume(&s.geometry, &s.gd)?,
                ),
            ];
            for (k, (name, spec, closed)) in cases.into_iter().enumerate() {
                if closed == 0.0 {
                    eprintln!("{name}: empty bath, skipped");
                    continue;
                }
                let mc = b_perp_mc(
                    &s.geometry,
                    &spec,
                    cfg.run.mc_samples,
                    derive_seed(cfg.run.seed, k as u64),
                )?;
                let z = (mc.mean - closed) / mc.stderr;
                let ok = z.abs() < 3.0;
                passed &= ok;
                eprintln!(
                    "{name}: closed {closed:.6e} T², MC {:.6e} ± {:.2e} T², z = {z:+.2} {}",
                    mc.mean,
                    mc.stderr,
                    if ok { "pass" } else { "FAIL" }
                );
                rows.push(
                    json!({"bath": name, "closed_form": closed, "mc": mc, "z": z, "pass": ok}),
                );
            }
            (
                passed,
                json!({"oracle": "bath_mc", "threshold_sigma": 3.0, "results": rows}),
            )
        }
        Oracle::Quadrature => {
            let rates = s.rate_breakdown()?;
            let sources = [
                (
                    "surface",
                    NoiseSource::new(s.surface.gamma, 1.0, s.surface_tau_c)?,
                ),
                (
                    "gd",
                    NoiseSource::from_rate(s.gd.gamma, 1.0, rates.r_total)?,
                ),
            ];
            let mut passed = true;
            let mut rows = Vec::new();
            for (name, src) in sources {
                let norm = psd_normalisation(&src)?;
                let ok = (norm - 1.0).abs() <= 1e-6;
                passed &= ok;
                eprintln!(
                    "{name}: ∫S dω/2π / b² = {norm:.12} (τc = {:.4e} s) {}",
                    src.tau_c,
                    if ok { "pass" } else { "FAIL" }
                );
                rows.push(
                    json!({"source": name, "tau_c": src.tau_c, "normalisation": norm, "pass": ok}),
                );
            }
            (
                passed,
                json!({"oracle": "quadrature", "tolerance": 1e-6, "results": rows}),
            )
        }
        Oracle::Sensitivity => {
            let readout = rbm_core::sensitivity::SensitivityInputs {
                b_perp_sq: s.gd_b_perp_sq(s.gd.number_density)?,
                ..cfg.readout(&s)
            };
            let scan = oracle_ratio_scan(&readout, 0.1, 100.0, 20, 0.2)?;
            let passed = scan.max_deviation <= 0.1;
            eprintln!(
                "closed form / oracle = {:.5} (constant offset), max deviation {:.2e} over {} rates {}",
                scan.offset,
                scan.max_deviation,
                scan.ratios.len(),
                if passed { "pass" } else { "FAIL" }
            );
            (
                passed,
                json!({"oracle": "sensitivity", "tolerance": 0.1, "scan": scan, "pass": passed}),
            )
        }
    };
    emit(out, &json_text(&report), "oracle", &cfg, started)?;
    if passed {
        Ok(())
    } else {
        Err(Failure::Oracle("oracle comparison failed".into()))
    }
}
