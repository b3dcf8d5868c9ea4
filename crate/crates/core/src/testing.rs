//! Step-up, step-down and adaptive step-up procedures.

use std::fmt;
use std::io::{Read, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{check_level, param, Error, Result};
use crate::schedules::{format_real, CriticalSchedule, DiscreteMeasure};

/// p-values with optional truth labels (`true` = true null).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    p: Vec<f64>,
    eps: Option<Vec<bool>>,
}

impl LabeledSample {
    pub fn new(p: Vec<f64>, eps: Option<Vec<bool>>) -> Result<Self> {
        if let Some((i, v)) = p.iter().enumerate().find(|(_, v)| !(**v >= 0.0 && **v <= 1.0)) {
            return Err(Error::Sample(format!("p[{i}] = {v} is not in [0, 1]")));
        }
        if let Some(e) = &eps {
            if e.len() != p.len() {
                return Err(Error::Sample(format!(
                    "{} labels for {} p-values",
                    e.len(),
                    p.len()
                )));
            }
        }
        Ok(Self { p, eps })
    }

    pub fn unlabeled(p: Vec<f64>) -> Result<Self> {
        Self::new(p, None)
    }

    /// Internal constructor for generators that guarantee the invariants.
    pub(crate) fn from_parts(p: Vec<f64>, eps: Vec<bool>) -> Self {
        debug_assert_eq!(p.len(), eps.len());
        Self { p, eps: Some(eps) }
    }

    pub fn n(&self) -> usize {
        self.p.len()
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn eps(&self) -> Option<&[bool]> {
        self.eps.as_deref()
    }

    /// Number of true nulls N, when labels are known.
    pub fn true_count(&self) -> Option<usize> {
        self.eps.as_ref().map(|e| e.iter().filter(|&&b| b).count())
    }

    /// F̂_n(t) = #{p_i ≤ t}/n.
    pub fn ecdf(&self, t: f64) -> f64 {
        self.p.iter().filter(|&&v| v <= t).count() as f64 / self.n() as f64
    }

    /// Apply a permutation: output coordinate `i` is input coordinate `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            p: perm.iter().map(|&j| self.p[j]).collect(),
            eps: self.eps.as_ref().map(|e| perm.iter().map(|&j| e[j]).collect()),
        }
    }

    /// Read a CSV with a `p` column and an optional `eps` column (0/1).
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let headers = r.headers()?.clone();
        let col = |name: &str| headers.iter().position(|h| h.trim() == name);
        let p_col = col("p").ok_or_else(|| Error::Sample("missing `p` column".into()))?;
        let eps_col = col("eps");
        let mut p = Vec::new();
        let mut eps = eps_col.map(|_| Vec::new());
        for rec in r.records() {
            let rec = rec?;
            let line = rec.position().map(|pos| pos.line()).unwrap_or(0);
            let field = rec.get(p_col).unwrap_or("").trim();
            let v: f64 = field
                .parse()
                .map_err(|_| Error::Sample(format!("line {line}: cannot parse p = `{field}`")))?;
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Sample(format!("line {line}: p = {v} is not in [0, 1]")));
            }
            p.push(v);
            if let (Some(c), Some(e)) = (eps_col, eps.as_mut()) {
                let field = rec.get(c).unwrap_or("").trim();
                let flag = match field {
                    "1" => true,
                    "0" => false,
                    _ => {
                        return Err(Error::Sample(format!(
                            "line {line}: eps must be 0 or 1, got `{field}`"
                        )))
                    }
                };
                e.push(flag);
            }
        }
        Self::new(p, eps)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        match &self.eps {
            Some(e) => {
                w.write_record(["p", "eps"])?;
                for (v, t) in self.p.iter().zip(e) {
                    w.write_record([format_real(*v), if *t { "1" } else { "0" }.to_string()])?;
                }
            }
            None => {
                w.write_record(["p"])?;
                for v in &self.p {
                    w.write_record([format_real(*v)])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Result of running a procedure on one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    #[serde(rename = "R")]
    pub r: usize,
    /// The realized α_{R:n} (α_{1:n} when R = 0).
    pub threshold: f64,
    /// Original indices (0-based, ascending) of the rejected hypotheses.
    pub rejected: Vec<usize>,
    #[serde(rename = "V")]
    pub v: Option<usize>,
}

impl TestOutcome {
    /// False discovery proportion V/R with 0/0 = 0.
    pub fn fdp(&self) -> Option<f64> {
        self.v
            .map(|v| if self.r == 0 { 0.0 } else { v as f64 / self.r as f64 })
    }
}

fn sorted_p(p: &[f64]) -> Vec<f64> {
    let mut s = p.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// max{i : p_{i:n} ≤ c_i}, 0 if none.
pub(crate) fn step_up_count(sorted: &[f64], thresholds: &[f64]) -> usize {
    (0..sorted.len())
        .rev()
        .find(|&i| sorted[i] <= thresholds[i])
        .map_or(0, |i| i + 1)
}

/// Length of the longest prefix with p_{j:n} ≤ c_j.
pub(crate) fn step_down_count(sorted: &[f64], thresholds: &[f64]) -> usize {
    sorted
        .iter()
        .zip(thresholds)
        .take_while(|(p, c)| p <= c)
        .count()
}

fn outcome(sample: &LabeledSample, r: usize, thresholds: &[f64]) -> TestOutcome {
    let threshold = thresholds[r.max(1) - 1];
    let rejected: Vec<usize> = if r == 0 {
        Vec::new()
    } else {
        (0..sample.n()).filter(|&i| sample.p[i] <= threshold).collect()
    };
    debug_assert_eq!(rejected.len(), r);
    let v = sample
        .eps
        .as_ref()
        .map(|e| rejected.iter().filter(|&&i| e[i]).count());
    TestOutcome {
        r,
        threshold,
        rejected,
        v,
    }
}

fn check_len(sample: &LabeledSample, len: usize) -> Result<()> {
    if sample.n() != len {
        Err(Error::LengthMismatch {
            sample: sample.n(),
            schedule: len,
        })
    } else if len == 0 {
        Err(Error::Sample("empty sample".into()))
    } else {
        Ok(())
    }
}

/// Step-up test against arbitrary non-decreasing thresholds.
pub fn step_up_with(sample: &LabeledSample, thresholds: &[f64]) -> Result<TestOutcome> {
    check_len(sample, thresholds.len())?;
    let r = step_up_count(&sorted_p(&sample.p), thresholds);
    Ok(outcome(sample, r, thresholds))
}

/// Step-down test against arbitrary non-decreasing thresholds.
pub fn step_down_with(sample: &LabeledSample, thresholds: &[f64]) -> Result<TestOutcome> {
    check_len(sample, thresholds.len())?;
    let r = step_down_count(&sorted_p(&sample.p), thresholds);
    Ok(outcome(sample, r, thresholds))
}

pub fn step_up(sample: &LabeledSample, schedule: &CriticalSchedule) -> Result<TestOutcome> {
    step_up_with(sample, schedule.values())
}

pub fn step_down(sample: &LabeledSample, schedule: &CriticalSchedule) -> Result<TestOutcome> {
    step_down_with(sample, schedule.values())
}

/// A caller-supplied estimator of the number of true nulls, called with the
/// p-values and λ. To keep the adaptive step-up exact-formula guarantees it
/// must only depend on the p-values above λ; this is not checked.
#[derive(Clone)]
pub struct CustomEstimator(pub Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>);

impl fmt::Debug for CustomEstimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("CustomEstimator(..)")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    /// n(1 − F̂_n(λ) + κ_n)/(1 − λ), `kappa` = κ_n.
    Storey,
    /// n(1 − F̂_n(λ) + κ/n)/(1 − λ), `kappa` = κ ≥ 1 (an absolute count).
    BlockStorey,
    #[serde(skip)]
    Custom(CustomEstimator),
}

/// Estimator of the number of true nulls n̂₀.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimatorSpec {
    pub kind: EstimatorKind,
    pub lambda: f64,
    pub kappa: f64,
    /// Optional multiplicative factor in (0, 1], e.g. 1 − λᵏ.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deflate: Option<f64>,
}

impl EstimatorSpec {
    pub fn storey(lambda: f64, kappa_n: f64) -> Result<Self> {
        let s = Self {
            kind: EstimatorKind::Storey,
            lambda,
            kappa: kappa_n,
            deflate: None,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn block_storey(lambda: f64, kappa: f64) -> Result<Self> {
        let s = Self {
            kind: EstimatorKind::BlockStorey,
            lambda,
            kappa,
            deflate: None,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn custom(lambda: f64, f: impl Fn(&[f64], f64) -> f64 + Send + Sync + 'static) -> Result<Self> {
        let s = Self {
            kind: EstimatorKind::Custom(CustomEstimator(Arc::new(f))),
            lambda,
            kappa: 1.0,
            deflate: None,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn with_deflate(mut self, factor: f64) -> Result<Self> {
        self.deflate = Some(factor);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(param("lambda", format!("{} is not in (0, 1)", self.lambda)));
        }
        if !(self.kappa > 0.0) || !self.kappa.is_finite() {
            return Err(param("kappa", format!("{} must be > 0", self.kappa)));
        }
        if matches!(self.kind, EstimatorKind::BlockStorey) && self.kappa < 1.0 {
            return Err(param("kappa", format!("{} must be >= 1 for block_storey", self.kappa)));
        }
        if let Some(d) = self.deflate {
            if !(d > 0.0 && d <= 1.0) {
                return Err(param("deflate", format!("{d} is not in (0, 1]")));
            }
        }
        Ok(())
    }
}

fn storey_formula(p: &[f64], lambda: f64, kappa_n: f64) -> f64 {
    let n = p.len() as f64;
    let below = p.iter().filter(|&&v| v <= lambda).count() as f64;
    n * (1.0 - below / n + kappa_n) / (1.0 - lambda)
}

/// n̂₀ for any estimator kind, on raw p-values.
pub(crate) fn estimate_n0_raw(p: &[f64], spec: &EstimatorSpec) -> Result<f64> {
    let raw = match &spec.kind {
        EstimatorKind::Storey => storey_formula(p, spec.lambda, spec.kappa),
        EstimatorKind::BlockStorey => storey_formula(p, spec.lambda, spec.kappa / p.len() as f64),
        EstimatorKind::Custom(f) => (f.0)(p, spec.lambda),
    };
    let est = raw * spec.deflate.unwrap_or(1.0);
    if !(est > 0.0) || !est.is_finite() {
        return Err(Error::Precondition(format!("estimator returned {est}, must be > 0")));
    }
    Ok(est)
}

pub fn estimate_n0(sample: &LabeledSample, spec: &EstimatorSpec) -> Result<f64> {
    spec.validate()?;
    if sample.n() == 0 {
        return Err(Error::Sample("empty sample".into()));
    }
    estimate_n0_raw(&sample.p, spec)
}

/// Storey estimator n(1 − F̂_n(λ) + κ_n)/(1 − λ).
pub fn storey_estimate(sample: &LabeledSample, spec: &EstimatorSpec) -> Result<f64> {
    if !matches!(spec.kind, EstimatorKind::Storey) {
        return Err(param("kind", "storey_estimate needs a storey estimator"));
    }
    estimate_n0(sample, spec)
}

/// Block-modified Storey estimator n(1 − F̂_n(λ) + κ/n)/(1 − λ).
pub fn block_storey_estimate(sample: &LabeledSample, spec: &EstimatorSpec) -> Result<f64> {
    if !matches!(spec.kind, EstimatorKind::BlockStorey) {
        return Err(param("kind", "block_storey_estimate needs a block_storey estimator"));
    }
    estimate_n0(sample, spec)
}

/// Critical values min(iα/n̂₀, λ), i = 1..n.
pub fn a3_thresholds(n: usize, n0_hat: f64, alpha: f64, lambda: f64) -> Vec<f64> {
    (1..=n)
        .map(|i| (i as f64 * alpha / n0_hat).min(lambda))
        .collect()
}

/// Critical values (α/n)·∫₀^{i·n/n̂₀} x dν(x), i = 1..n.
pub fn a4_thresholds(n: usize, n0_hat: f64, alpha: f64, nu: &DiscreteMeasure) -> Vec<f64> {
    let scale = alpha / n as f64;
    (1..=n)
        .map(|i| scale * nu.partial_first_moment(i as f64 * n as f64 / n0_hat))
        .collect()
}

/// Adaptive step-up on the rejection area [0, λ].
pub fn adaptive_step_up_a3(
    sample: &LabeledSample,
    spec: &EstimatorSpec,
    alpha: f64,
) -> Result<TestOutcome> {
    check_level("alpha", alpha)?;
    let n0_hat = estimate_n0(sample, spec)?;
    step_up_with(sample, &a3_thresholds(sample.n(), n0_hat, alpha, spec.lambda))
}

/// Adaptive Blanchard–Roquain-type step-up on [0, 1].
pub fn adaptive_step_up_a4(
    sample: &LabeledSample,
    spec: &EstimatorSpec,
    alpha: f64,
    nu: &DiscreteMeasure,
) -> Result<TestOutcome> {
    check_level("alpha", alpha)?;
    let n0_hat = estimate_n0(sample, spec)?;
    let thresholds = a4_thresholds(sample.n(), n0_hat, alpha, nu);
    if thresholds.iter().all(|&t| t == 0.0) {
        return Ok(TestOutcome {
            r: 0,
            threshold: 0.0,
            rejected: Vec::new(),
            v: sample.eps.as_ref().map(|_| 0),
        });
    }
    step_up_with(sample, &thresholds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedules::{bh_schedule, blanchard_roquain_schedule, by_schedule, gavrilov_schedule};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn s(p: &[f64]) -> LabeledSample {
        LabeledSample::unlabeled(p.to_vec()).unwrap()
    }

    #[test]
    fn step_up_examples() {
        let bh = bh_schedule(3, 0.15).unwrap();
        let out = step_up(&s(&[0.01, 0.02, 0.9]), &bh).unwrap();
        assert_eq!(out.r, 2);
        assert_eq!(out.rejected, vec![0, 1]);
        assert_eq!(out.v, None);

        let out = step_up(&s(&[0.999; 3]), &bh).unwrap();
        assert_eq!(out.r, 0);
        assert!(out.rejected.is_empty());
        assert_relative_eq!(out.threshold, bh.at(1));

        let out = step_up(&s(&[0.0; 3]), &bh).unwrap();
        assert_eq!(out.r, 3);
        assert_eq!(out.rejected, vec![0, 1, 2]);
    }

    #[test]
    fn step_down_examples() {
        let bh = bh_schedule(3, 0.15).unwrap();
        let sample = s(&[0.01, 0.12, 0.13]);
        assert_eq!(step_up(&sample, &bh).unwrap().r, 3);
        let sd = step_down(&sample, &bh).unwrap();
        assert_eq!(sd.r, 1);
        assert_eq!(sd.rejected, vec![0]);
        assert_eq!(step_down(&s(&[0.0; 4]), &bh_schedule(4, 0.1).unwrap()).unwrap().r, 4);
        assert_eq!(step_down(&s(&[0.2, 0.0]), &bh_schedule(2, 0.1).unwrap()).unwrap().r, 1);
    }

    #[test]
    fn labels_give_v() {
        let sample = LabeledSample::new(vec![0.01, 0.02, 0.9], Some(vec![true, false, true])).unwrap();
        let out = step_up(&sample, &bh_schedule(3, 0.15).unwrap()).unwrap();
        assert_eq!(out.v, Some(1));
        assert_relative_eq!(out.fdp().unwrap(), 0.5);
    }

    #[test]
    fn ties_share_fate() {
        let sample = s(&[0.04, 0.04, 0.04, 0.5]);
        let out = step_up(&sample, &bh_schedule(4, 0.05).unwrap()).unwrap();
        assert_eq!(out.r, 0);
        let out = step_up(&sample, &bh_schedule(4, 0.06).unwrap()).unwrap();
        assert_eq!(out.r, 3);
    }

    #[test]
    fn length_mismatch_and_bad_samples() {
        let bh = bh_schedule(3, 0.1).unwrap();
        assert!(matches!(
            step_up(&s(&[0.1, 0.2]), &bh),
            Err(Error::LengthMismatch { sample: 2, schedule: 3 })
        ));
        assert!(matches!(step_down(&s(&[0.1]), &bh), Err(Error::LengthMismatch { .. })));
        assert!(LabeledSample::unlabeled(vec![0.1, 1.2]).is_err());
        assert!(LabeledSample::unlabeled(vec![f64::NAN]).is_err());
        assert!(LabeledSample::new(vec![0.1, 0.2], Some(vec![true])).is_err());
    }

    #[test]
    fn storey_examples() {
        let spec = EstimatorSpec::storey(0.5, 0.25).unwrap();
        assert_relative_eq!(
            storey_estimate(&s(&[0.1, 0.2, 0.6, 0.8]), &spec).unwrap(),
            6.0,
            max_relative = 1e-15
        );
        let n = 10usize;
        let spec = EstimatorSpec::storey(0.3, 1.0 / n as f64).unwrap();
        let all_high = s(&[0.9; 10]);
        assert_relative_eq!(
            storey_estimate(&all_high, &spec).unwrap(),
            n as f64 * (1.0 + 0.1) / 0.7,
            max_relative = 1e-14
        );
        let all_low = s(&[0.3; 10]);
        assert_relative_eq!(storey_estimate(&all_low, &spec).unwrap(), 1.0 / 0.7, max_relative = 1e-14);
        assert!(block_storey_estimate(&all_low, &spec).is_err());
    }

    #[test]
    fn block_storey_examples() {
        let sample = s(&[0.9; 100]);
        let spec = EstimatorSpec::block_storey(0.5, 20.0).unwrap();
        assert_relative_eq!(block_storey_estimate(&sample, &spec).unwrap(), 240.0, max_relative = 1e-14);
        let deflated = spec.clone().with_deflate(1.0 - 0.5f64.powi(5)).unwrap();
        assert_relative_eq!(block_storey_estimate(&sample, &deflated).unwrap(), 232.5, max_relative = 1e-14);
        let sample = s(&[0.1, 0.7, 0.2, 0.55, 0.9]);
        let one = EstimatorSpec::block_storey(0.5, 1.0).unwrap();
        let storey = EstimatorSpec::storey(0.5, 1.0 / 5.0).unwrap();
        assert_relative_eq!(
            block_storey_estimate(&sample, &one).unwrap(),
            storey_estimate(&sample, &storey).unwrap(),
            max_relative = 1e-15
        );
        assert!(EstimatorSpec::block_storey(0.5, 0.5).is_err());
        assert!(EstimatorSpec::storey(1.0, 0.1).is_err());
        assert!(EstimatorSpec::storey(0.5, 0.0).is_err());
        assert!(spec.with_deflate(1.5).is_err());
    }

    #[test]
    fn p_equal_to_lambda_counts_below() {
        let sample = s(&[0.5, 0.9]);
        let spec = EstimatorSpec::storey(0.5, 0.5).unwrap();
        // F̂(0.5) = 1/2
        assert_relative_eq!(storey_estimate(&sample, &spec).unwrap(), 2.0 * (0.5 + 0.5) / 0.5);
    }

    #[test]
    fn adaptive_full_dependence() {
        let n = 5;
        let (alpha, lambda) = (0.05, 0.5);
        let spec = EstimatorSpec::storey(lambda, 1.0 / n as f64).unwrap();
        let cutoff = (n as f64 * alpha * (1.0 - lambda)).min(lambda);
        for u in [0.01, 0.1, 0.124, 0.126, 0.3, 0.5] {
            let sample = LabeledSample::new(vec![u; n], Some(vec![true; n])).unwrap();
            assert_relative_eq!(estimate_n0(&sample, &spec).unwrap(), 1.0 / (1.0 - lambda));
            let out = adaptive_step_up_a3(&sample, &spec, alpha).unwrap();
            let expected = if u <= cutoff { n } else { 0 };
            assert_eq!(out.r, expected, "u = {u}");
        }
        let all_high = LabeledSample::unlabeled(vec![0.6; n]).unwrap();
        assert_eq!(adaptive_step_up_a3(&all_high, &spec, 0.9).unwrap().r, 0);
    }

    #[test]
    fn a3_dominated_by_bh_when_estimate_exceeds_n() {
        let n = 20;
        let th = a3_thresholds(n, 25.0, 0.1, 0.5);
        let bh = bh_schedule(n, 0.1).unwrap();
        for i in 1..=n {
            assert!(th[i - 1] <= bh.at(i));
        }
    }

    #[test]
    fn a4_reductions() {
        let n = 8;
        let alpha = 0.1;
        // n̂₀ = n gives the non-adaptive Blanchard–Roquain values
        let nu = DiscreteMeasure::harmonic(n).unwrap();
        let br = blanchard_roquain_schedule(n, alpha, &nu).unwrap();
        let th = a4_thresholds(n, n as f64, alpha, &nu);
        for i in 0..n {
            assert_relative_eq!(th[i], br.values()[i], max_relative = 1e-14);
        }
        // point mass at 1
        let pm = DiscreteMeasure::point_mass(1.0).unwrap();
        let th = a4_thresholds(n, 3.0, alpha, &pm);
        for t in th {
            assert_relative_eq!(t, alpha / n as f64);
        }
        // harmonic ν with n̂₀ = n/2: direct partial sum oracle
        let h: f64 = (1..=n).map(|j| 1.0 / j as f64).sum();
        let th = a4_thresholds(n, n as f64 / 2.0, alpha, &nu);
        for i in 1..=n {
            let upper = (2 * i).min(n);
            let direct: f64 = (1..=upper).map(|x| x as f64 * (1.0 / (x as f64 * h))).sum();
            assert_relative_eq!(th[i - 1], alpha / n as f64 * direct, max_relative = 1e-12);
        }
        let by = by_schedule(n, alpha).unwrap();
        let sample = s(&[0.001, 0.004, 0.2, 0.3, 0.5, 0.6, 0.7, 0.95]);
        let spec = EstimatorSpec::custom(0.5, |p, _| p.len() as f64).unwrap();
        assert_eq!(
            adaptive_step_up_a4(&sample, &spec, alpha, &nu).unwrap().r,
            step_up(&sample, &by).unwrap().r
        );
    }

    #[test]
    fn a4_all_zero_thresholds_reject_nothing() {
        let nu = DiscreteMeasure::point_mass(50.0).unwrap();
        let sample = LabeledSample::new(vec![0.0, 0.3], Some(vec![true, true])).unwrap();
        let spec = EstimatorSpec::custom(0.5, |p, _| p.len() as f64).unwrap();
        let out = adaptive_step_up_a4(&sample, &spec, 0.1, &nu).unwrap();
        assert_eq!(out.r, 0);
        assert_eq!(out.v, Some(0));
    }

    #[test]
    fn custom_estimator_must_be_positive() {
        let spec = EstimatorSpec::custom(0.5, |_, _| 0.0).unwrap();
        assert!(adaptive_step_up_a3(&s(&[0.1, 0.2]), &spec, 0.1).is_err());
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let text = "p,eps\n0.01,1\n0.02,0\n0.9,1\n";
        let sample = LabeledSample::read_csv(text.as_bytes()).unwrap();
        assert_eq!(sample.p(), &[0.01, 0.02, 0.9]);
        assert_eq!(sample.true_count(), Some(2));
        let mut buf = Vec::new();
        sample.write_csv(&mut buf).unwrap();
        assert_eq!(LabeledSample::read_csv(&buf[..]).unwrap(), sample);

        let only_p = LabeledSample::read_csv("p\n0.5\n".as_bytes()).unwrap();
        assert_eq!(only_p.eps(), None);

        let err = LabeledSample::read_csv("p\n0.1\nabc\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        let err = LabeledSample::read_csv("p,eps\n0.1,2\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        assert!(LabeledSample::read_csv("q\n0.1\n".as_bytes()).is_err());
        assert!(LabeledSample::read_csv("p\n1.5\n".as_bytes()).is_err());
    }

    #[test]
    fn outcome_json_shape() {
        let out = step_up(&s(&[0.01, 0.02, 0.9]), &bh_schedule(3, 0.15).unwrap()).unwrap();
        let v = serde_json::to_value(&out).unwrap();
        assert_eq!(v["R"], 2);
        assert_eq!(v["rejected"], serde_json::json!([0, 1]));
        assert!(v["V"].is_null());
        assert!(v["threshold"].is_number());
    }

    fn sample_strategy() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(prop_oneof![0.0f64..1.0, Just(0.0), 0.0f64..0.05], 1..40)
    }

    proptest! {
        #[test]
        fn permutation_equivariance(p in sample_strategy(), seed in any::<u64>()) {
            let n = p.len();
            let sched = gavrilov_schedule(n, 0.1).unwrap();
            let mut perm: Vec<usize> = (0..n).collect();
            // deterministic shuffle from the seed
            let mut state = seed | 1;
            for i in (1..n).rev() {
                state ^= state << 13; state ^= state >> 7; state ^= state << 17;
                perm.swap(i, (state % (i as u64 + 1)) as usize);
            }
            let base = s(&p);
            let shuffled = base.permuted(&perm);
            for (a, b) in [
                (step_up(&base, &sched).unwrap(), step_up(&shuffled, &sched).unwrap()),
                (step_down(&base, &sched).unwrap(), step_down(&shuffled, &sched).unwrap()),
            ] {
                prop_assert_eq!(a.r, b.r);
                let mut mapped: Vec<usize> = b.rejected.iter().map(|&i| perm[i]).collect();
                mapped.sort_unstable();
                prop_assert_eq!(mapped, a.rejected);
            }
        }

        #[test]
        fn lowering_a_p_value_never_decreases_r(p in sample_strategy(), idx in any::<usize>(), shrink in 0.0f64..1.0) {
            let n = p.len();
            let sched = by_schedule(n, 0.2).unwrap();
            let before = step_up(&s(&p), &sched).unwrap().r;
            let mut q = p.clone();
            let i = idx % n;
            q[i] *= shrink;
            prop_assert!(step_up(&s(&q), &sched).unwrap().r >= before);
        }

        #[test]
        fn sd_never_exceeds_su(p in sample_strategy(), alpha in 0.01f64..0.9) {
            let sched = bh_schedule(p.len(), alpha).unwrap();
            let sample = s(&p);
            let su = step_up(&sample, &sched).unwrap();
            let sd = step_down(&sample, &sched).unwrap();
            prop_assert!(sd.r <= su.r);
            prop_assert_eq!(su.rejected.len(), su.r);
            prop_assert_eq!(sd.rejected.len(), sd.r);
        }

        #[test]
        fn a3_respects_lambda_and_freezing(p in sample_strategy(), lambda in 0.05f64..0.95, alpha in 0.01f64..0.5, kappa in 0.01f64..1.0) {
            let sample = s(&p);
            let spec = EstimatorSpec::storey(lambda, kappa).unwrap();
            let out = adaptive_step_up_a3(&sample, &spec, alpha).unwrap();
            for &i in &out.rejected {
                prop_assert!(sample.p()[i] <= lambda);
            }
            let n0 = estimate_n0(&sample, &spec).unwrap();
            let frozen = CriticalSchedule::custom(a3_thresholds(sample.n(), n0, alpha, lambda)).unwrap();
            prop_assert_eq!(out, step_up(&sample, &frozen).unwrap());
        }
    }
}
