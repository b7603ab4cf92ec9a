//! Adaptive Simpson quadrature, used to check spectral normalisation.

/// Integrates `f` over `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    recurse(f, a, b, fa, fm, fb, whole, tol, 48)
}

#[allow(clippy::too_many_arguments)]
fn recurse<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Integrates over `[0, upper]` split into log-spaced panels starting at
/// `first_break`, so that integrands spread over many decades are resolved.
pub fn log_panels<F: Fn(f64) -> f64>(
    f: &F,
    first_break: f64,
    upper: f64,
    panels_per_decade: usize,
    rel_tol: f64,
) -> f64 {
    let mut edges = vec![0.0, first_break];
    let decades = (upper / first_break).log10().ceil().max(1.0) as usize;
    let n = decades * panels_per_decade;
    for i in 1..=n {
        let x = first_break * 10f64.powf(i as f64 / panels_per_decade as f64);
        edges.push(x.min(upper));
        if x >= upper {
            break;
        }
    }
    edges
        .windows(2)
        .map(|w| {
            let scale = (w[1] - w[0]) * f(0.5 * (w[0] + w[1])).abs();
            adaptive_simpson(f, w[0], w[1], rel_tol * scale.max(f64::MIN_POSITIVE))
        })
        .sum()
}
