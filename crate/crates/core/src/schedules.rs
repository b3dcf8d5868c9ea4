//! Critical-value schedules α_{1:n} ≤ … ≤ α_{n:n} and the rejection curves
//! that generate them.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{check_level, param, Error, Result};

/// Relative slack used when comparing ratios α_{j:n}/j that are equal in
/// exact arithmetic but differ by rounding.
pub const RATIO_REL_TOL: f64 = 1e-12;

/// Provenance tag of a schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Bh,
    By,
    BlanchardRoquain,
    Parametric,
    RejectionCurve,
    Gavrilov,
    Capped,
    Custom,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::Bh => "bh",
            Family::By => "by",
            Family::BlanchardRoquain => "blanchard_roquain",
            Family::Parametric => "parametric",
            Family::RejectionCurve => "rejection_curve",
            Family::Gavrilov => "gavrilov",
            Family::Capped => "capped",
            Family::Custom => "custom",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A validated vector of deterministic critical values.
///
/// Invariant: `0 < values[0] <= values[1] <= … <= values[n-1] < 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSchedule")]
pub struct CriticalSchedule {
    n: usize,
    family: Family,
    params: BTreeMap<String, f64>,
    values: Vec<f64>,
}

#[derive(Deserialize)]
struct RawSchedule {
    n: usize,
    family: Family,
    #[serde(default)]
    params: BTreeMap<String, f64>,
    values: Vec<f64>,
}

impl TryFrom<RawSchedule> for CriticalSchedule {
    type Error = Error;

    fn try_from(raw: RawSchedule) -> Result<Self> {
        if raw.n != raw.values.len() {
            return Err(Error::InvalidSchedule(format!(
                "n = {} but {} values given",
                raw.n,
                raw.values.len()
            )));
        }
        CriticalSchedule::new(raw.values, raw.family, raw.params)
    }
}

impl CriticalSchedule {
    /// Validate and wrap a vector of critical values.
    pub fn new(values: Vec<f64>, family: Family, params: BTreeMap<String, f64>) -> Result<Self> {
        validate_values(&values)?;
        Ok(Self {
            n: values.len(),
            family,
            params,
            values,
        })
    }

    pub fn custom(values: Vec<f64>) -> Result<Self> {
        Self::new(values, Family::Custom, BTreeMap::new())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    pub fn param(&self, key: &str) -> Option<f64> {
        self.params.get(key).copied()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// α_{i:n} for `i` in `0..=n`, with α_{0:n} := α_{1:n}.
    pub fn at(&self, i: usize) -> f64 {
        self.values[i.max(1) - 1]
    }

    /// First (1-based) index `j` at which `j ↦ α_{j:n}/j` decreases, if any.
    pub fn ratio_violation(&self) -> Option<usize> {
        (1..self.n).map(|j| j + 1).find(|&j| {
            let prev = self.at(j - 1) / (j - 1) as f64;
            let cur = self.at(j) / j as f64;
            cur < prev * (1.0 - RATIO_REL_TOL)
        })
    }

    pub fn ratio_monotone(&self) -> bool {
        self.ratio_violation().is_none()
    }

    /// Write as a one-column CSV with header `critical_value`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["critical_value"])?;
        for v in &self.values {
            w.write_record([format_real(*v)])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Read a one-column CSV (header row required) as a custom schedule.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let mut values = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let field = rec.get(0).unwrap_or("").trim();
            let v: f64 = field.parse().map_err(|_| {
                Error::InvalidSchedule(format!("line {}: cannot parse `{field}`", line + 2))
            })?;
            values.push(v);
        }
        Self::custom(values)
    }
}

/// Shortest representation that round-trips to the same f64.
pub(crate) fn format_real(v: f64) -> String {
    format!("{v:?}")
}

fn validate_values(values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::InvalidSchedule("schedule must have n >= 1 values".into()));
    }
    if !(values[0] > 0.0) {
        return Err(Error::DegenerateSchedule(values[0]));
    }
    for (i, w) in values.windows(2).enumerate() {
        if !(w[1] >= w[0]) {
            return Err(Error::InvalidSchedule(format!(
                "values decrease at index {}: {} > {}",
                i + 2,
                w[0],
                w[1]
            )));
        }
    }
    let last = values[values.len() - 1];
    if !(last < 1.0) {
        return Err(Error::Level {
            index: values.len(),
            value: last,
        });
    }
    Ok(())
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        Err(param("n", "must be >= 1"))
    } else {
        Ok(())
    }
}

fn params_of(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

/// Benjamini–Hochberg values iα/n.
pub fn bh_schedule(n: usize, alpha: f64) -> Result<CriticalSchedule> {
    check_n(n)?;
    check_level("alpha", alpha)?;
    let values = (1..=n).map(|i| i as f64 * alpha / n as f64).collect();
    CriticalSchedule::new(values, Family::Bh, params_of(&[("alpha", alpha)]))
}

/// Harmonic number Σ_{j=1}^n 1/j.
pub fn harmonic(n: usize) -> f64 {
    (1..=n).map(|j| 1.0 / j as f64).sum()
}

/// Benjamini–Yekutieli values iα/(n·H_n).
pub fn by_schedule(n: usize, alpha: f64) -> Result<CriticalSchedule> {
    check_n(n)?;
    check_level("alpha", alpha)?;
    let denom = n as f64 * harmonic(n);
    let values = (1..=n).map(|i| i as f64 * alpha / denom).collect();
    CriticalSchedule::new(values, Family::By, params_of(&[("alpha", alpha)]))
}

/// A finitely supported probability measure on (0, ∞).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct DiscreteMeasure {
    /// Sorted by support point.
    atoms: Vec<(f64, f64)>,
}

impl TryFrom<Vec<(f64, f64)>> for DiscreteMeasure {
    type Error = Error;
    fn try_from(atoms: Vec<(f64, f64)>) -> Result<Self> {
        DiscreteMeasure::new(atoms)
    }
}

impl From<DiscreteMeasure> for Vec<(f64, f64)> {
    fn from(m: DiscreteMeasure) -> Self {
        m.atoms
    }
}

impl DiscreteMeasure {
    pub fn new(mut atoms: Vec<(f64, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::Measure("no atoms".into()));
        }
        for &(x, w) in &atoms {
            if !(x > 0.0) || !x.is_finite() {
                return Err(Error::Measure(format!("support point {x} is not in (0, inf)")));
            }
            if !(w >= 0.0) {
                return Err(Error::Measure(format!("negative weight {w}")));
            }
        }
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Measure(format!("weights sum to {total}, not 1")));
        }
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(Self { atoms })
    }

    pub fn point_mass(x: f64) -> Result<Self> {
        Self::new(vec![(x, 1.0)])
    }

    /// ν({i}) = (i·H_n)⁻¹ for i = 1..n; reproduces the BY values.
    pub fn harmonic(n: usize) -> Result<Self> {
        check_n(n)?;
        let h = harmonic(n);
        let mut atoms: Vec<(f64, f64)> = (1..=n).map(|i| (i as f64, 1.0 / (i as f64 * h))).collect();
        // absorb the rounding residue so the weights pass the 1e-12 check
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        atoms[0].1 += 1.0 - total;
        Self::new(atoms)
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    /// ∫₀^upper x dν(x), atoms at `upper` included.
    pub fn partial_first_moment(&self, upper: f64) -> f64 {
        self.atoms
            .iter()
            .take_while(|a| a.0 <= upper)
            .map(|a| a.0 * a.1)
            .sum()
    }
}

/// Blanchard–Roquain values (α/n)·∫₀^i x dν(x).
pub fn blanchard_roquain_schedule(
    n: usize,
    alpha: f64,
    nu: &DiscreteMeasure,
) -> Result<CriticalSchedule> {
    check_n(n)?;
    check_level("alpha", alpha)?;
    let scale = alpha / n as f64;
    let mut values = Vec::with_capacity(n);
    let mut acc = 0.0;
    let mut atoms = nu.atoms().iter().peekable();
    for i in 1..=n {
        while let Some(&&(x, w)) = atoms.peek() {
            if x <= i as f64 {
                acc += x * w;
                atoms.next();
            } else {
                break;
            }
        }
        values.push(scale * acc);
    }
    CriticalSchedule::new(
        values,
        Family::BlanchardRoquain,
        params_of(&[("alpha", alpha), ("atoms", nu.atoms().len() as f64)]),
    )
}

/// Values jα/(n + b − j·a).
pub fn parametric_schedule(n: usize, alpha: f64, a: f64, b: f64) -> Result<CriticalSchedule> {
    let values = parametric_values(n, alpha, a, b)?;
    CriticalSchedule::new(
        values,
        Family::Parametric,
        params_of(&[("alpha", alpha), ("a", a), ("b", b)]),
    )
}

fn parametric_values(n: usize, alpha: f64, a: f64, b: f64) -> Result<Vec<f64>> {
    check_n(n)?;
    check_level("alpha", alpha)?;
    if !(a >= 0.0) {
        return Err(param("a", format!("{a} must be >= 0")));
    }
    if !(b >= 0.0) {
        return Err(param("b", format!("{b} must be >= 0")));
    }
    let nf = n as f64;
    if !(nf + b - nf * a > 0.0) {
        return Err(param(
            "a",
            format!("n + b - n*a = {} must be > 0", nf + b - nf * a),
        ));
    }
    Ok((1..=n)
        .map(|j| {
            let jf = j as f64;
            jf * alpha / (nf + b - jf * a)
        })
        .collect())
}

/// Gavrilov–Benjamini–Sarkar values jα/(n + 1 − j(1 − α)).
pub fn gavrilov_schedule(n: usize, alpha: f64) -> Result<CriticalSchedule> {
    let values = parametric_values(n, alpha, 1.0 - alpha, 1.0)?;
    CriticalSchedule::new(values, Family::Gavrilov, params_of(&[("alpha", alpha)]))
}

/// min(base_j, (j/k)·base_k): flattens the upper tail of `base` onto the
/// line through the origin and (k, base_k).
pub fn capped_schedule(base: &CriticalSchedule, k: usize) -> Result<CriticalSchedule> {
    let n = base.n();
    if k == 0 || k > n {
        return Err(param("k", format!("{k} is not in 1..={n}")));
    }
    let slope = base.at(k) / k as f64;
    let values = (1..=n)
        .map(|j| base.at(j).min(j as f64 * slope))
        .collect();
    let mut params = base.params().clone();
    params.insert("k".into(), k as f64);
    CriticalSchedule::new(values, Family::Capped, params)
}

/// Caller-supplied rejection curve evaluator.
#[derive(Clone)]
pub struct CustomCurve(pub Arc<dyn Fn(f64) -> f64 + Send + Sync>);

impl fmt::Debug for CustomCurve {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("CustomCurve(..)")
    }
}

/// The shape of a rejection curve.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CurveKind {
    /// f(t) = t/α on [0, α].
    Simes { alpha: f64 },
    /// f(t) = slope·t on [0, 1/slope].
    Linear { slope: f64 },
    /// f_α(t) = t/(t(1−α) + α); reaches 1 only at t = 1.
    Aorc { alpha: f64 },
    /// f_α up to `x1`, then its tangent line at `x1` until it hits 1.
    AorcTangent { alpha: f64, x1: f64 },
    /// Piecewise-linear interpolation of (x, y) knots starting at (0, 0).
    Tabulated { xs: Vec<f64>, ys: Vec<f64> },
    #[serde(skip)]
    Custom(CustomCurve),
}

/// A non-decreasing curve f with f(0) = 0 and f(x₀) = 1, extended by 1 to the
/// right of x₀.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "RawCurve")]
pub struct RejectionCurve {
    kind: CurveKind,
    x0: f64,
    concave: bool,
}

/// Deserialized form: x₀ is always recomputed by the constructors; `concave`
/// is only read for tabulated curves.
#[derive(Deserialize)]
struct RawCurve {
    kind: CurveKind,
    #[serde(default)]
    concave: bool,
}

impl TryFrom<RawCurve> for RejectionCurve {
    type Error = Error;

    fn try_from(raw: RawCurve) -> Result<Self> {
        match raw.kind {
            CurveKind::Simes { alpha } => Self::simes(alpha),
            CurveKind::Linear { slope } => Self::linear(slope),
            CurveKind::Aorc { alpha } => Self::aorc(alpha),
            CurveKind::AorcTangent { alpha, x1 } => Self::aorc_tangent(alpha, x1),
            CurveKind::Tabulated { xs, ys } => {
                if xs.len() != ys.len() {
                    return Err(Error::Curve(format!("{} x knots but {} y knots", xs.len(), ys.len())));
                }
                let pts: Vec<(f64, f64)> = xs.into_iter().zip(ys).collect();
                Self::tabulated(&pts, raw.concave)
            }
            CurveKind::Custom(_) => Err(Error::Curve("custom curves cannot be deserialized".into())),
        }
    }
}

fn aorc(alpha: f64, t: f64) -> f64 {
    t / (t * (1.0 - alpha) + alpha)
}

fn aorc_inv(alpha: f64, y: f64) -> f64 {
    alpha * y / (1.0 - (1.0 - alpha) * y)
}

fn aorc_slope(alpha: f64, t: f64) -> f64 {
    let d = t * (1.0 - alpha) + alpha;
    alpha / (d * d)
}

impl RejectionCurve {
    /// The Simes line t/α (BH critical values).
    pub fn simes(alpha: f64) -> Result<Self> {
        check_level("alpha", alpha)?;
        Ok(Self {
            kind: CurveKind::Simes { alpha },
            x0: alpha,
            concave: true,
        })
    }

    pub fn linear(slope: f64) -> Result<Self> {
        if !(slope > 1.0) || !slope.is_finite() {
            return Err(param("slope", format!("{slope} must be > 1")));
        }
        Ok(Self {
            kind: CurveKind::Linear { slope },
            x0: 1.0 / slope,
            concave: true,
        })
    }

    /// The asymptotically optimal rejection curve. Its x₀ is 1, so it must be
    /// capped before generating a schedule.
    pub fn aorc(alpha: f64) -> Result<Self> {
        check_level("alpha", alpha)?;
        Ok(Self {
            kind: CurveKind::Aorc { alpha },
            x0: 1.0,
            concave: true,
        })
    }

    /// Concave modification of the AORC: tangent extension from `x1`.
    pub fn aorc_tangent(alpha: f64, x1: f64) -> Result<Self> {
        check_level("alpha", alpha)?;
        if !(x1 > 0.0 && x1 < 1.0) {
            return Err(param("x1", format!("{x1} is not in (0, 1)")));
        }
        let x0 = x1 + (1.0 - aorc(alpha, x1)) / aorc_slope(alpha, x1);
        if !(x0 < 1.0) {
            return Err(Error::Curve(format!(
                "tangent at x1 = {x1} reaches 1 at {x0}, not below 1"
            )));
        }
        Ok(Self {
            kind: CurveKind::AorcTangent { alpha, x1 },
            x0,
            concave: true,
        })
    }

    /// Piecewise-linear curve through (0,0) and the given knots; the first knot
    /// with y = 1 defines x₀.
    pub fn tabulated(points: &[(f64, f64)], concave: bool) -> Result<Self> {
        let mut xs = vec![0.0];
        let mut ys = vec![0.0];
        for &(x, y) in points {
            if x == 0.0 && y == 0.0 {
                continue;
            }
            xs.push(x);
            ys.push(y);
        }
        for i in 1..xs.len() {
            if !(xs[i] > xs[i - 1]) {
                return Err(Error::Curve(format!("knot x values must increase (at {})", xs[i])));
            }
            if !(ys[i] >= ys[i - 1]) {
                return Err(Error::Curve(format!("curve decreases at x = {}", xs[i])));
            }
        }
        let Some(pos) = ys.iter().position(|&y| y >= 1.0) else {
            return Err(Error::Curve("tabulated curve never reaches 1".into()));
        };
        if (ys[pos] - 1.0).abs() > 1e-12 {
            return Err(Error::Curve(format!(
                "tabulated curve jumps past 1 (y = {}) instead of reaching it",
                ys[pos]
            )));
        }
        let x0 = xs[pos];
        xs.truncate(pos + 1);
        ys.truncate(pos + 1);
        let curve = Self {
            kind: CurveKind::Tabulated { xs, ys },
            x0,
            concave,
        };
        curve.validate()?;
        Ok(curve)
    }

    /// Black-box evaluator on [0, x₀]. `concave` is the caller's assertion.
    pub fn custom(
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        x0: f64,
        concave: bool,
    ) -> Result<Self> {
        let curve = Self {
            kind: CurveKind::Custom(CustomCurve(Arc::new(f))),
            x0,
            concave,
        };
        curve.validate()?;
        Ok(curve)
    }

    /// Check f(0) = 0, f(x₀) = 1 and monotonicity on a 1001-point grid.
    pub fn validate(&self) -> Result<()> {
        if !(self.x0 > 0.0 && self.x0 <= 1.0) {
            return Err(Error::Curve(format!("x0 = {} is not in (0, 1]", self.x0)));
        }
        let f0 = self.raw(0.0);
        if f0.abs() > 1e-12 {
            return Err(Error::Curve(format!("f(0) = {f0}, expected 0")));
        }
        let fx0 = self.raw(self.x0);
        if (fx0 - 1.0).abs() > 1e-12 {
            return Err(Error::Curve(format!("f(x0) = {fx0}, expected 1")));
        }
        let mut prev = f0;
        for i in 1..=1000 {
            let t = self.x0 * i as f64 / 1000.0;
            let v = self.raw(t);
            if !(v >= prev - 1e-15) {
                return Err(Error::Curve(format!("curve decreases near t = {t}")));
            }
            prev = v;
        }
        Ok(())
    }

    pub fn kind(&self) -> &CurveKind {
        &self.kind
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    pub fn is_concave(&self) -> bool {
        self.concave
    }

    fn raw(&self, t: f64) -> f64 {
        match &self.kind {
            CurveKind::Simes { alpha } => t / alpha,
            CurveKind::Linear { slope } => slope * t,
            CurveKind::Aorc { alpha } => aorc(*alpha, t),
            CurveKind::AorcTangent { alpha, x1 } => {
                if t <= *x1 {
                    aorc(*alpha, t)
                } else {
                    aorc(*alpha, *x1) + aorc_slope(*alpha, *x1) * (t - x1)
                }
            }
            CurveKind::Tabulated { xs, ys } => {
                let k = xs.partition_point(|&x| x < t);
                if k == 0 {
                    ys[0]
                } else if k >= xs.len() {
                    ys[ys.len() - 1]
                } else {
                    let (xa, xb, ya, yb) = (xs[k - 1], xs[k], ys[k - 1], ys[k]);
                    ya + (yb - ya) * (t - xa) / (xb - xa)
                }
            }
            CurveKind::Custom(c) => (c.0)(t),
        }
    }

    /// f(t), with f(t) = 1 for t ≥ x₀.
    pub fn eval(&self, t: f64) -> f64 {
        if t >= self.x0 {
            1.0
        } else if t <= 0.0 {
            0.0
        } else {
            self.raw(t)
        }
    }

    /// 1 − f(t), without cancellation where a closed form exists.
    pub fn complement(&self, t: f64) -> f64 {
        if t >= self.x0 {
            return 0.0;
        }
        if t <= 0.0 {
            return 1.0;
        }
        match &self.kind {
            CurveKind::Aorc { alpha } => alpha * (1.0 - t) / (t * (1.0 - alpha) + alpha),
            CurveKind::AorcTangent { alpha, x1 } if t > *x1 => aorc_slope(*alpha, *x1) * (self.x0 - t),
            _ => 1.0 - self.raw(t),
        }
    }

    /// Left-continuous inverse inf{t : f(t) ≥ y}.
    pub fn inverse(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        if y >= 1.0 {
            return self.x0;
        }
        match &self.kind {
            CurveKind::Simes { alpha } => alpha * y,
            CurveKind::Linear { slope } => y / slope,
            CurveKind::Aorc { alpha } => aorc_inv(*alpha, y),
            CurveKind::AorcTangent { alpha, x1 } => {
                let y1 = aorc(*alpha, *x1);
                if y <= y1 {
                    aorc_inv(*alpha, y)
                } else {
                    (x1 + (y - y1) / aorc_slope(*alpha, *x1)).min(self.x0)
                }
            }
            _ => self.bisect_inverse(y),
        }
    }

    fn bisect_inverse(&self, y: f64) -> f64 {
        let (mut lo, mut hi) = (0.0, self.x0);
        while hi - lo > 1e-12 {
            let mid = 0.5 * (lo + hi);
            if self.eval(mid) >= y {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        // never left zero: the infimum is 0 up to the bisection tolerance
        if lo == 0.0 {
            0.0
        } else {
            hi
        }
    }
}

/// α_{i:n} = f⁻¹(i/n).
pub fn curve_schedule(n: usize, curve: &RejectionCurve) -> Result<CriticalSchedule> {
    check_n(n)?;
    curve.validate()?;
    let values: Vec<f64> = (1..=n).map(|i| curve.inverse(i as f64 / n as f64)).collect();
    if !(values[0] > 0.0) {
        return Err(Error::Curve(format!(
            "f^-1(1/{n}) = {}: curve is not invertible near 0",
            values[0]
        )));
    }
    let mut params = BTreeMap::new();
    params.insert("x0".into(), curve.x0());
    match curve.kind() {
        CurveKind::Simes { alpha } | CurveKind::Aorc { alpha } => {
            params.insert("alpha".into(), *alpha);
        }
        CurveKind::AorcTangent { alpha, x1 } => {
            params.insert("alpha".into(), *alpha);
            params.insert("x1".into(), *x1);
        }
        CurveKind::Linear { slope } => {
            params.insert("slope".into(), *slope);
        }
        _ => {}
    }
    CriticalSchedule::new(values, Family::RejectionCurve, params)
}

/// Declarative description of a schedule, used by configuration files.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ScheduleSpec {
    Bh { n: usize, alpha: f64 },
    By { n: usize, alpha: f64 },
    BlanchardRoquain { n: usize, alpha: f64, nu: DiscreteMeasure },
    Parametric { n: usize, alpha: f64, a: f64, b: f64 },
    Gavrilov { n: usize, alpha: f64 },
    RejectionCurve { n: usize, curve: RejectionCurve },
    Capped { base: Box<ScheduleSpec>, k: usize },
    Custom { values: Vec<f64> },
}

impl ScheduleSpec {
    pub fn build(&self) -> Result<CriticalSchedule> {
        match self {
            ScheduleSpec::Bh { n, alpha } => bh_schedule(*n, *alpha),
            ScheduleSpec::By { n, alpha } => by_schedule(*n, *alpha),
            ScheduleSpec::BlanchardRoquain { n, alpha, nu } => {
                blanchard_roquain_schedule(*n, *alpha, nu)
            }
            ScheduleSpec::Parametric { n, alpha, a, b } => parametric_schedule(*n, *alpha, *a, *b),
            ScheduleSpec::Gavrilov { n, alpha } => gavrilov_schedule(*n, *alpha),
            ScheduleSpec::RejectionCurve { n, curve } => curve_schedule(*n, curve),
            ScheduleSpec::Capped { base, k } => capped_schedule(&base.build()?, *k),
            ScheduleSpec::Custom { values } => CriticalSchedule::custom(values.clone()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn assert_values(s: &CriticalSchedule, expected: &[f64]) {
        assert_eq!(s.n(), expected.len());
        for (a, b) in s.values().iter().zip(expected) {
            assert_relative_eq!(*a, *b, max_relative = 1e-14);
        }
    }

    #[test]
    fn bh_examples() {
        assert_values(&bh_schedule(4, 0.05).unwrap(), &[0.0125, 0.025, 0.0375, 0.05]);
        assert_values(&bh_schedule(1, 0.5).unwrap(), &[0.5]);
        assert_values(&bh_schedule(3, 0.15).unwrap(), &[0.05, 0.10, 0.15]);
        assert!(matches!(bh_schedule(0, 0.05), Err(Error::Parameter { .. })));
        assert!(matches!(bh_schedule(3, 1.0), Err(Error::Parameter { .. })));
        assert!(matches!(bh_schedule(3, 0.0), Err(Error::Parameter { .. })));
    }

    #[test]
    fn by_examples() {
        assert_values(&by_schedule(2, 0.3).unwrap(), &[0.1, 0.2]);
        assert_values(&by_schedule(1, 0.2).unwrap(), &[0.2]);
        assert_values(&by_schedule(3, 0.11).unwrap(), &[0.02, 0.04, 0.06]);
    }

    #[test]
    fn blanchard_roquain_examples() {
        let nu = DiscreteMeasure::point_mass(1.0).unwrap();
        assert_values(
            &blanchard_roquain_schedule(4, 0.2, &nu).unwrap(),
            &[0.05, 0.05, 0.05, 0.05],
        );
        let nu2 = DiscreteMeasure::point_mass(2.0).unwrap();
        assert!(matches!(
            blanchard_roquain_schedule(4, 0.2, &nu2),
            Err(Error::DegenerateSchedule(_))
        ));
        // ∫₀^i x dν ≤ i, so the last value never exceeds α
        let big = DiscreteMeasure::new(vec![(1.0, 0.5), (50.0, 0.5)]).unwrap();
        let s = blanchard_roquain_schedule(60, 0.9, &big).unwrap();
        assert_relative_eq!(s.at(60), 0.9 / 60.0 * 25.5, max_relative = 1e-14);
    }

    #[test]
    fn harmonic_measure_reproduces_by() {
        for n in [1usize, 2, 3, 10, 57, 300, 1000] {
            for alpha in [0.01, 0.05, 0.3] {
                let br = blanchard_roquain_schedule(n, alpha, &DiscreteMeasure::harmonic(n).unwrap())
                    .unwrap();
                let by = by_schedule(n, alpha).unwrap();
                for (a, b) in br.values().iter().zip(by.values()) {
                    assert!((a - b).abs() <= 1e-12, "n={n} {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn measure_validation() {
        assert!(DiscreteMeasure::new(vec![]).is_err());
        assert!(DiscreteMeasure::new(vec![(0.0, 1.0)]).is_err());
        assert!(DiscreteMeasure::new(vec![(1.0, 0.6), (2.0, 0.6)]).is_err());
        assert!(DiscreteMeasure::new(vec![(1.0, -0.1), (2.0, 1.1)]).is_err());
        let m = DiscreteMeasure::new(vec![(3.0, 0.5), (1.0, 0.5)]).unwrap();
        assert_eq!(m.atoms()[0].0, 1.0);
        assert_relative_eq!(m.partial_first_moment(1.0), 0.5);
        assert_relative_eq!(m.partial_first_moment(3.0), 2.0);
    }

    #[test]
    fn parametric_examples() {
        assert_values(&parametric_schedule(2, 0.1, 0.5, 1.0).unwrap(), &[0.04, 0.1]);
        for n in [1usize, 5, 40] {
            let p = parametric_schedule(n, 0.07, 0.0, 0.0).unwrap();
            let b = bh_schedule(n, 0.07).unwrap();
            for (x, y) in p.values().iter().zip(b.values()) {
                assert_relative_eq!(*x, *y, max_relative = 1e-15);
            }
        }
        let g = parametric_schedule(2, 0.05, 0.95, 1.0).unwrap();
        assert_relative_eq!(g.values()[0], 0.05 / 2.05, max_relative = 1e-14);
        assert_relative_eq!(g.values()[1], 0.1 / 1.1, max_relative = 1e-14);
        assert_relative_eq!(g.values()[0], 0.024390, epsilon = 1e-6);
        assert_relative_eq!(g.values()[1], 0.090909, epsilon = 1e-6);
        let gav = gavrilov_schedule(2, 0.05).unwrap();
        assert_eq!(gav.values(), g.values());
        assert_eq!(gav.family(), Family::Gavrilov);
        // α_{n:n} ≥ 1
        assert!(matches!(
            parametric_schedule(10, 0.5, 0.9, 0.0),
            Err(Error::Level { .. })
        ));
        assert!(parametric_schedule(10, 0.05, 2.0, 1.0).is_err());
        assert!(parametric_schedule(10, 0.05, -0.1, 1.0).is_err());
    }

    #[test]
    fn curve_schedule_examples() {
        let simes = curve_schedule(3, &RejectionCurve::simes(0.15).unwrap()).unwrap();
        assert_values(&simes, &[0.05, 0.10, 0.15]);
        let aorc = RejectionCurve::aorc(0.5).unwrap();
        assert_relative_eq!(aorc.inverse(0.5), 1.0 / 3.0, max_relative = 1e-15);
        // raw AORC reaches 1 only at t = 1
        assert!(matches!(curve_schedule(5, &aorc), Err(Error::Level { .. })));
    }

    #[test]
    fn black_box_inverse_round_trip() {
        let sq = RejectionCurve::custom(|t: f64| (t / 0.6).sqrt(), 0.6, true).unwrap();
        for i in 1..100 {
            let t = 0.6 * i as f64 / 100.0;
            assert!((sq.inverse(sq.eval(t)) - t).abs() <= 1e-10);
        }
        let tangent = RejectionCurve::aorc_tangent(0.05, 0.5).unwrap();
        for i in 1..100 {
            let t = tangent.x0() * i as f64 / 100.0;
            assert!((tangent.inverse(tangent.eval(t)) - t).abs() <= 1e-10);
        }
        let tab = RejectionCurve::tabulated(&[(0.1, 0.5), (0.4, 1.0)], true).unwrap();
        for i in 1..100 {
            let t = 0.4 * i as f64 / 100.0;
            assert!((tab.inverse(tab.eval(t)) - t).abs() <= 1e-10);
        }
    }

    #[test]
    fn flat_segment_uses_leftmost_point() {
        // f rises to 0.5 on [0, 0.1], stays flat until 0.3, then rises to 1 at 0.5
        let tab = RejectionCurve::tabulated(&[(0.1, 0.5), (0.3, 0.5), (0.5, 1.0)], false).unwrap();
        assert!((tab.inverse(0.5) - 0.1).abs() < 1e-11);
        let s = curve_schedule(2, &tab).unwrap();
        assert!((s.values()[0] - 0.1).abs() < 1e-11);
        assert!((s.values()[1] - 0.5).abs() < 1e-11);
    }

    #[test]
    fn curve_validation_errors() {
        assert!(RejectionCurve::custom(|t| t + 0.1, 0.5, false).is_err());
        assert!(RejectionCurve::custom(|t| 1.5 * t, 0.5, false).is_err());
        assert!(RejectionCurve::tabulated(&[(0.2, 0.8)], true).is_err());
        assert!(RejectionCurve::tabulated(&[(0.2, 0.8), (0.1, 1.0)], true).is_err());
        assert!(RejectionCurve::aorc_tangent(0.5, 0.0).is_err());
        assert!(RejectionCurve::aorc_tangent(0.5, 1.0).is_err());
        assert!(RejectionCurve::aorc_tangent(0.5, 0.999).unwrap().x0() < 1.0);
        // jumps straight from 0 to 1: inverse at 1/n is 0
        let step = RejectionCurve::custom(|t| if t > 0.0 { 1.0 } else { 0.0 }, 0.5, false).unwrap();
        let err = curve_schedule(4, &step).unwrap_err();
        assert!(matches!(err, Error::Curve(_)));
    }

    #[test]
    fn aorc_examples() {
        let f = RejectionCurve::aorc(0.5).unwrap();
        assert_relative_eq!(f.eval(1.0 / 3.0), 0.5, max_relative = 1e-15);
        for alpha in [0.01, 0.05, 0.3, 0.9] {
            let f = RejectionCurve::aorc(alpha).unwrap();
            assert_eq!(f.eval(0.0), 0.0);
            assert_eq!(f.eval(1.0), 1.0);
            for i in 0..=10_000 {
                let t = i as f64 / 10_000.0;
                assert!(f.eval(t) >= t - 1e-15);
            }
        }
    }

    #[test]
    fn capped_examples() {
        let base = gavrilov_schedule(50, 0.05).unwrap();
        assert_eq!(capped_schedule(&base, 50).unwrap().values(), base.values());
        let k1 = capped_schedule(&base, 1).unwrap();
        for j in 1..=50 {
            assert_relative_eq!(k1.at(j), j as f64 * base.at(1), max_relative = 1e-14);
        }
        assert!(capped_schedule(&base, 0).is_err());
        assert!(capped_schedule(&base, 51).is_err());
        assert_eq!(k1.param("k"), Some(1.0));
    }

    #[test]
    fn bh_meets_necessary_bound() {
        for n in 1..=100usize {
            let s = bh_schedule(n, 0.05).unwrap();
            for j in 1..=n {
                assert!(s.at(j) <= j as f64 * 0.05 / (n + 1 - j) as f64 * (1.0 + 1e-15));
            }
        }
    }

    #[test]
    fn validation_rejects_bad_vectors() {
        assert!(CriticalSchedule::custom(vec![]).is_err());
        assert!(matches!(
            CriticalSchedule::custom(vec![0.0, 0.1]),
            Err(Error::DegenerateSchedule(_))
        ));
        assert!(CriticalSchedule::custom(vec![0.2, 0.1]).is_err());
        assert!(matches!(
            CriticalSchedule::custom(vec![0.2, 1.0]),
            Err(Error::Level { index: 2, .. })
        ));
        assert!(CriticalSchedule::custom(vec![0.1, f64::NAN]).is_err());
        assert!(CriticalSchedule::custom(vec![0.1, 0.1]).is_ok());
    }

    #[test]
    fn ratio_violation_reports_first_index() {
        let s = CriticalSchedule::custom(vec![0.01, 0.03, 0.031]).unwrap();
        assert_eq!(s.ratio_violation(), Some(3));
        assert!(bh_schedule(300, 0.05).unwrap().ratio_monotone());
        assert!(gavrilov_schedule(300, 0.05).unwrap().ratio_monotone());
        assert!(capped_schedule(&gavrilov_schedule(300, 0.05).unwrap(), 120)
            .unwrap()
            .ratio_monotone());
    }

    #[test]
    fn curve_json_recomputes_x0() {
        let t = RejectionCurve::aorc_tangent(0.05, 0.5).unwrap();
        let back: RejectionCurve = serde_json::from_str(&serde_json::to_string(&t).unwrap()).unwrap();
        assert_eq!(back.x0(), t.x0());
        let lied: RejectionCurve =
            serde_json::from_str(r#"{"kind": {"kind": "simes", "alpha": 0.1}, "x0": 0.7}"#).unwrap();
        assert_eq!(lied.x0(), 0.1);
        let tab = r#"{"kind": {"kind": "tabulated", "xs": [0.2, 0.5], "ys": [0.6, 1.0]}, "concave": true}"#;
        let c: RejectionCurve = serde_json::from_str(tab).unwrap();
        assert!(c.is_concave() && c.x0() == 0.5);
        assert!(serde_json::from_str::<RejectionCurve>(r#"{"kind": {"kind": "linear", "slope": 0.5}}"#).is_err());
    }

    #[test]
    fn json_shape_and_csv() {
        let s = gavrilov_schedule(7, 0.05).unwrap();
        let v: serde_json::Value = serde_json::to_value(&s).unwrap();
        assert_eq!(v["n"], 7);
        assert_eq!(v["family"], "gavrilov");
        assert_eq!(v["params"]["alpha"], 0.05);
        assert_eq!(v["values"].as_array().unwrap().len(), 7);
        let bad = r#"{"n": 2, "family": "custom", "params": {}, "values": [0.3, 0.2]}"#;
        assert!(serde_json::from_str::<CriticalSchedule>(bad).is_err());
        let short = r#"{"n": 3, "family": "custom", "params": {}, "values": [0.1, 0.2]}"#;
        assert!(serde_json::from_str::<CriticalSchedule>(short).is_err());

        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("critical_value\n"));
        let back = CriticalSchedule::read_csv(&buf[..]).unwrap();
        assert_eq!(back.values(), s.values());
    }

    #[test]
    fn spec_builds_every_family() {
        let specs = vec![
            ScheduleSpec::Bh { n: 5, alpha: 0.1 },
            ScheduleSpec::By { n: 5, alpha: 0.1 },
            ScheduleSpec::BlanchardRoquain {
                n: 5,
                alpha: 0.1,
                nu: DiscreteMeasure::harmonic(5).unwrap(),
            },
            ScheduleSpec::Parametric { n: 5, alpha: 0.1, a: 0.5, b: 1.0 },
            ScheduleSpec::Gavrilov { n: 5, alpha: 0.1 },
            ScheduleSpec::RejectionCurve {
                n: 5,
                curve: RejectionCurve::aorc_tangent(0.1, 0.6).unwrap(),
            },
            ScheduleSpec::Capped {
                base: Box::new(ScheduleSpec::Gavrilov { n: 5, alpha: 0.1 }),
                k: 3,
            },
            ScheduleSpec::Custom { values: vec![0.01, 0.02, 0.03, 0.04, 0.05] },
        ];
        for spec in specs {
            let json = serde_json::to_string(&spec).unwrap();
            let back: ScheduleSpec = serde_json::from_str(&json).unwrap();
            assert_eq!(back.build().unwrap().values(), spec.build().unwrap().values());
        }
    }

    proptest! {
        #[test]
        fn constructors_yield_valid_schedules(
            n in 1usize..200,
            alpha in 0.001f64..0.5,
            a_frac in 0.0f64..1.0,
            b in 0.0f64..5.0,
            k_frac in 0.0f64..1.0,
        ) {
            let a = a_frac * (1.0 - alpha);
            let all = [
                bh_schedule(n, alpha).unwrap(),
                by_schedule(n, alpha).unwrap(),
                parametric_schedule(n, alpha, a, b.max(a)).unwrap(),
                gavrilov_schedule(n, alpha).unwrap(),
                curve_schedule(n, &RejectionCurve::simes(alpha).unwrap()).unwrap(),
            ];
            for s in &all {
                prop_assert!(validate_values(s.values()).is_ok());
            }
            let k = 1 + ((n - 1) as f64 * k_frac) as usize;
            let c = capped_schedule(&all[3], k).unwrap();
            prop_assert!(validate_values(c.values()).is_ok());
        }

        #[test]
        fn capped_monotone_in_k(n in 2usize..150, alpha in 0.01f64..0.3, k1 in 1usize..150, k2 in 1usize..150) {
            let base = gavrilov_schedule(n, alpha).unwrap();
            let (lo, hi) = (k1.min(k2).min(n), k1.max(k2).min(n));
            let a = capped_schedule(&base, lo).unwrap();
            let b = capped_schedule(&base, hi).unwrap();
            for j in 1..=n {
                prop_assert!(a.at(j) <= b.at(j) * (1.0 + 1e-14));
            }
        }

        #[test]
        fn json_round_trip_is_exact(n in 1usize..60, alpha in 0.001f64..0.9) {
            let s = by_schedule(n, alpha).unwrap();
            let back: CriticalSchedule = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
            prop_assert_eq!(back, s);
        }
    }
}
