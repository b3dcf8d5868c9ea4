//! Asymptotic worst-case FDR of step-up and step-down tests generated by a
//! rejection curve f:
//! β = sup{ x/(1−x) · (1−f(x))/f(x) : 0 < x < x₀ }.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{check_level, param, Error, Result};
use crate::schedules::{format_real, RejectionCurve};

/// Number of uniform grid points for the sup search.
pub const GRID_POINTS: usize = 100_000;
/// One-sided offset used in place of the endpoint limits.
pub const EDGE: f64 = 1e-9;
const REFINE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaResult {
    pub beta: f64,
    pub argsup_x: f64,
    pub grid_points: usize,
    pub refined: bool,
}

/// A(x, y) = x/(1−x) · (1−y)/y on (0, 1)².
pub fn aorc_functional(x: f64, y: f64) -> f64 {
    x / (1.0 - x) * (1.0 - y) / y
}

/// g(x) = x/(1−x) · (1−f(x))/f(x).
pub fn g_value(curve: &RejectionCurve, x: f64) -> f64 {
    x / (1.0 - x) * curve.complement(x) / curve.eval(x)
}

fn domain(curve: &RejectionCurve) -> Result<(f64, f64)> {
    let (lo, hi) = (EDGE, curve.x0() - EDGE);
    if !(hi > lo) {
        return Err(Error::Curve(format!("x0 = {} leaves no interior", curve.x0())));
    }
    Ok((lo, hi))
}

fn grid(lo: f64, hi: f64, points: usize) -> impl Iterator<Item = f64> {
    let h = (hi - lo) / (points - 1) as f64;
    (0..points).map(move |i| if i + 1 == points { hi } else { lo + h * i as f64 })
}

/// β of `curve` after checking f(x) ≥ (1+ε)x on the interior grid.
/// ε = 0 is accepted (the AORC itself touches the diagonal at 1).
pub fn beta_of_curve(curve: &RejectionCurve, epsilon: f64) -> Result<BetaResult> {
    if !(epsilon >= 0.0) || !epsilon.is_finite() {
        return Err(param("epsilon", format!("{epsilon} must be >= 0")));
    }
    let (lo, hi) = domain(curve)?;
    let mut best = (f64::NEG_INFINITY, lo, 0usize);
    for (i, x) in grid(lo, hi, GRID_POINTS).enumerate() {
        let fx = curve.eval(x);
        if fx < (1.0 + epsilon) * x * (1.0 - 1e-12) {
            return Err(Error::Precondition(format!(
                "f({x}) = {fx} < (1 + {epsilon})·x"
            )));
        }
        let g = g_value(curve, x);
        if g > best.0 {
            best = (g, x, i);
        }
    }
    // golden-section on the cells around the best grid point
    let h = (hi - lo) / (GRID_POINTS - 1) as f64;
    let a = (best.1 - h).max(lo);
    let b = (best.1 + h).min(hi);
    let (x_ref, g_ref) = golden_max(|x| g_value(curve, x), a, b);
    let refined = g_ref > best.0;
    let (beta, argsup_x) = if refined { (g_ref, x_ref) } else { (best.0, best.1) };
    Ok(BetaResult {
        beta,
        argsup_x,
        grid_points: GRID_POINTS,
        refined,
    })
}

fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > REFINE_TOL {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    if fc >= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// The asymptotic step-down worst case, which equals the step-up β for
/// concave curves.
pub fn sd_asymptotic_equals_su(curve: &RejectionCurve) -> Result<BetaResult> {
    if !curve.is_concave() {
        return Err(Error::Precondition("step-down asymptotics need a concave curve".into()));
    }
    beta_of_curve(curve, 0.0)
}

/// (x, g(x)) on a uniform interior grid.
pub fn g_curve(curve: &RejectionCurve, points: usize) -> Result<Vec<(f64, f64)>> {
    if points < 2 {
        return Err(param("points", "must be >= 2"));
    }
    let (lo, hi) = domain(curve)?;
    Ok(grid(lo, hi, points).map(|x| (x, g_value(curve, x))).collect())
}

pub fn write_g_csv<W: Write>(rows: &[(f64, f64)], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["x", "g"])?;
    for (x, g) in rows {
        w.write_record([format_real(*x), format_real(*g)])?;
    }
    w.flush()?;
    Ok(())
}

/// Almost-sure limit of a step-up/step-down test under DU(n, n₀) with
/// (n − n₀)/n → y: the empirical cdf y + (1−y)t crosses f at x, R/n → K = f(x)
/// and the FDR tends to (K − y)/K.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DuLimit {
    pub y: f64,
    pub x: f64,
    pub k: f64,
    pub fdr: f64,
}

/// The crossing for a concave curve with x₀ < 1 (unique in (0, x₀)).
pub fn du_limit(curve: &RejectionCurve, y: f64) -> Result<DuLimit> {
    if !(y > 0.0 && y < 1.0) {
        return Err(param("y", format!("{y} is not in (0, 1)")));
    }
    if !curve.is_concave() {
        return Err(Error::Precondition("DU limit needs a concave curve".into()));
    }
    if !(curve.x0() < 1.0) {
        return Err(Error::Precondition(format!(
            "DU limit needs x0 < 1, got {}",
            curve.x0()
        )));
    }
    let h = |x: f64| curve.eval(x) - y - (1.0 - y) * x;
    let (mut lo, mut hi) = (0.0, curve.x0());
    while hi - lo > 1e-14 {
        let mid = 0.5 * (lo + hi);
        if h(mid) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let x = hi;
    let k = y + (1.0 - y) * x;
    Ok(DuLimit {
        y,
        x,
        k,
        fdr: (k - y) / k,
    })
}

/// Sign of A(x, y) − α against the AORC f_α at x: equal iff on the graph.
pub fn aorc_side(alpha: f64, x: f64, y: f64) -> Result<std::cmp::Ordering> {
    check_level("alpha", alpha)?;
    let a = aorc_functional(x, y);
    Ok(a.partial_cmp(&alpha).unwrap_or(std::cmp::Ordering::Equal))
}
