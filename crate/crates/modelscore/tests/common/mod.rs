//! Shared oracles for the integration suites.
//!
//! The Student-t survival oracle here integrates the unnormalized density
//! with adaptive Simpson quadrature and normalizes by the full integral, so
//! it shares no code path (not even log-gamma) with the library's
//! incomplete-beta implementation.

/// Upper-tail probability of the Student-t distribution by adaptive
/// quadrature of the density. Accurate to ~1e-13 relative on the tested
/// grid; independent of the library's special functions.
///
/// Only the acceptance target uses the oracle, hence the dead-code allows
/// for the other integration-test binaries that include this module.
#[allow(dead_code)]
pub fn t_sf_quadrature(t: f64, df: f64) -> f64 {
    if t < 0.0 {
        return 1.0 - t_sf_quadrature(-t, df);
    }
    let half = integral_from(0.0, df);
    let tail = integral_from(t, df);
    tail / (2.0 * half)
}

/// Integral of the unnormalized density `(1 + x^2/df)^(-(df+1)/2)` from
/// `lo` to infinity, via the substitution `x = lo + u/(1-u)` on `u in [0,1)`.
#[allow(dead_code)]
fn integral_from(lo: f64, df: f64) -> f64 {
    let g = |u: f64| -> f64 {
        if u >= 1.0 {
            // Limit of density * dx/du as x -> inf: nonzero only at df = 1.
            return if df == 1.0 { 1.0 } else { 0.0 };
        }
        let one_minus = 1.0 - u;
        let x = lo + u / one_minus;
        let density = (1.0 + x * x / df).powf(-(df + 1.0) / 2.0);
        density / (one_minus * one_minus)
    };
    adaptive_simpson(&g, 0.0, 1.0, 1e-15)
}

#[allow(dead_code)]
fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = simpson(a, b, fa, fm, fb);
    let scale = whole.abs().max(1e-300);
    simpson_recurse(f, a, b, fa, fm, fb, whole, rel_tol * scale, 60)
}

#[allow(dead_code)]
fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
#[allow(dead_code)]
fn simpson_recurse(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    abs_tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * abs_tol {
        return left + right + delta / 15.0;
    }
    simpson_recurse(f, a, m, fa, flm, fm, left, abs_tol / 2.0, depth - 1)
        + simpson_recurse(f, m, b, fm, frm, fb, right, abs_tol / 2.0, depth - 1)
}

#[allow(dead_code)]
pub fn fixture_path(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}
