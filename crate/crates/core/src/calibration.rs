//! Worst-case FDR over the BI model, necessary-condition audits and the
//! calibration of parametric and capped schedules.
//!
//! For schedules with non-decreasing α_{j:n}/j the Dirac-uniform
//! configurations are least favorable, so the worst case is the maximum of
//! the exact DU curve over n₀.

use serde::{Deserialize, Serialize};

use crate::error::{check_level, param, Error, Result};
use crate::exactdu::{bh_ev_recursion, du_fdr_curve_with};
use crate::exec::Exec;
use crate::schedules::{capped_schedule, parametric_schedule, CriticalSchedule, RATIO_REL_TOL};

/// Parameter tolerance of the bisections.
pub const PARAM_TOL: f64 = 1e-8;

fn require_ratio_monotone(schedule: &CriticalSchedule) -> Result<()> {
    match schedule.ratio_violation() {
        Some(j) => Err(Error::Precondition(format!(
            "alpha_j/j decreases at j = {j} ({} < {})",
            schedule.at(j) / j as f64,
            schedule.at(j - 1) / (j - 1) as f64
        ))),
        None => Ok(()),
    }
}

/// max over n₀ of FDR_DU(n₀) and the maximizing n₀ (ties to the larger n₀).
pub fn worst_case_fdr(schedule: &CriticalSchedule) -> Result<(f64, usize)> {
    worst_case_fdr_with(schedule, Exec::default())
}

pub fn worst_case_fdr_with(schedule: &CriticalSchedule, exec: Exec) -> Result<(f64, usize)> {
    require_ratio_monotone(schedule)?;
    Ok(du_fdr_curve_with(schedule, exec).argmax())
}

/// One evaluated candidate during a calibration search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub param: f64,
    pub worst_case_fdr: f64,
    pub argmax_n0: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    /// a₁, a₀ or k₀.
    pub value: f64,
    pub worst_case_fdr: f64,
    pub argmax_n0: usize,
    pub iterations: usize,
    pub tolerance: f64,
    /// Set when the search ended at the boundary of the admissible range
    /// without crossing the target.
    #[serde(default)]
    pub boundary: bool,
    pub probes: Vec<Probe>,
}

/// Per-index line of [`NecessaryAudit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub j: usize,
    pub value: f64,
    /// jα/(n + 1 − j).
    pub bound: f64,
    pub pass: bool,
    /// Strict inequality is required at this index.
    pub strict_required: bool,
}

/// Necessary conditions for BI-model FDR control at level α.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NecessaryAudit {
    pub n: usize,
    pub alpha: f64,
    pub rows: Vec<AuditRow>,
    /// α_{1:n} ≤ α/n.
    pub first_value_pass: bool,
    /// α_{1:n} = α/n, in which case only BH itself can control the FDR.
    pub first_value_is_bh: bool,
    /// Largest k with α_{k:n}/k < α_{k+1:n}/(k+1); strictness is required for j ≤ k.
    pub strict_up_to: Option<usize>,
    pub notes: Vec<String>,
    pub passed: bool,
}

impl NecessaryAudit {
    pub fn failures(&self) -> impl Iterator<Item = &AuditRow> {
        self.rows.iter().filter(|r| !r.pass)
    }
}

fn approx_le(x: f64, bound: f64) -> bool {
    x <= bound * (1.0 + RATIO_REL_TOL)
}

fn approx_lt(x: f64, bound: f64) -> bool {
    x < bound * (1.0 - RATIO_REL_TOL)
}

/// Audit the necessary conditions α_{j:n} ≤ jα/(n + 1 − j), their strict
/// version where the ratio α_{j:n}/j increases, and α_{1:n} ≤ α/n. A failing
/// audit proves the schedule cannot control the FDR at α in the BI model.
pub fn check_necessary(schedule: &CriticalSchedule, alpha: f64) -> Result<NecessaryAudit> {
    check_level("alpha", alpha)?;
    require_ratio_monotone(schedule)?;
    let n = schedule.n();
    let strict_up_to = (1..n)
        .rev()
        .find(|&k| approx_lt(schedule.at(k) / k as f64, schedule.at(k + 1) / (k + 1) as f64));
    let rows: Vec<AuditRow> = (1..=n)
        .map(|j| {
            let value = schedule.at(j);
            let bound = j as f64 * alpha / (n + 1 - j) as f64;
            let strict_required = strict_up_to.is_some_and(|k| j <= k);
            let pass = if strict_required {
                approx_lt(value, bound)
            } else {
                approx_le(value, bound)
            };
            AuditRow {
                j,
                value,
                bound,
                pass,
                strict_required,
            }
        })
        .collect();
    let first = schedule.at(1);
    let bh_first = alpha / n as f64;
    let first_value_pass = approx_le(first, bh_first);
    let first_value_is_bh = first_value_pass && !approx_lt(first, bh_first);
    let mut notes = Vec::new();
    if first_value_is_bh && strict_up_to.is_some() {
        notes.push("alpha_1 = alpha/n but the schedule is not BH".to_string());
    }
    if let (Some(a), Some(b)) = (schedule.param("a"), schedule.param("b")) {
        if a > b {
            notes.push(format!("parametric schedule needs a <= b, got a = {a}, b = {b}"));
        } else if a > 0.0 && a >= b {
            notes.push(format!("parametric schedule with a > 0 needs a < b, got a = b = {a}"));
        }
    }
    let passed = first_value_pass
        && rows.iter().all(|r| r.pass)
        && !(first_value_is_bh && strict_up_to.is_some());
    Ok(NecessaryAudit {
        n,
        alpha,
        rows,
        first_value_pass,
        first_value_is_bh,
        strict_up_to,
        notes,
        passed,
    })
}

/// Bounds (E(N)/n)·min_i nα_{i:n}/i ≤ FDR ≤ (E(N)/n)·max_i nα_{i:n}/i. The
/// lower bound holds in reverse martingale models, the upper bound in
/// addition needs PRDS.
pub fn prop32_bounds(schedule: &CriticalSchedule, expected_n_over_n: f64) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&expected_n_over_n) {
        return Err(param("expected_N_over_n", format!("{expected_n_over_n} is not in [0, 1]")));
    }
    let n = schedule.n() as f64;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (i, &v) in schedule.values().iter().enumerate() {
        let r = n * v / (i + 1) as f64;
        lo = lo.min(r);
        hi = hi.max(r);
    }
    Ok((expected_n_over_n * lo, expected_n_over_n * hi))
}

fn probe(schedule: &CriticalSchedule, param: f64) -> Result<Probe> {
    let (fdr, arg) = worst_case_fdr(schedule)?;
    Ok(Probe {
        param,
        worst_case_fdr: fdr,
        argmax_n0: arg,
    })
}

/// The unique a₁ with worst-case FDR of jα/(n + b − ja) equal to α.
pub fn solve_a1(n: usize, alpha: f64, b: f64) -> Result<CalibrationResult> {
    check_level("alpha", alpha)?;
    if !(b > 0.0) || !b.is_finite() {
        return Err(param("b", format!("{b} must be > 0")));
    }
    let at = |a: f64| -> Result<Probe> { probe(&parametric_schedule(n, alpha, a, b)?, a) };
    let mut probes = Vec::new();
    let (mut lo, mut hi) = (0.0, b.min(1.0 - alpha));
    let top = at(hi)?;
    probes.push(top);
    if top.worst_case_fdr <= alpha {
        return Ok(CalibrationResult {
            value: hi,
            worst_case_fdr: top.worst_case_fdr,
            argmax_n0: top.argmax_n0,
            iterations: 1,
            tolerance: PARAM_TOL,
            boundary: true,
            probes,
        });
    }
    let mut best = at(lo)?;
    probes.push(best);
    while hi - lo > PARAM_TOL {
        let mid = 0.5 * (lo + hi);
        let p = at(mid)?;
        probes.push(p);
        if p.worst_case_fdr <= alpha {
            lo = mid;
            best = p;
        } else {
            hi = mid;
        }
    }
    Ok(CalibrationResult {
        value: lo,
        worst_case_fdr: best.worst_case_fdr,
        argmax_n0: best.argmax_n0,
        iterations: probes.len(),
        tolerance: PARAM_TOL,
        boundary: false,
        probes,
    })
}

/// Largest k with worst-case FDR of `capped_schedule(base, k)` at most α + ε.
pub fn find_k0(base: &CriticalSchedule, alpha: f64, epsilon: f64) -> Result<CalibrationResult> {
    check_level("alpha", alpha)?;
    if !(epsilon >= 0.0) {
        return Err(param("epsilon", format!("{epsilon} must be >= 0")));
    }
    require_ratio_monotone(base)?;
    let n = base.n();
    if !(base.at(1) < alpha / n as f64) {
        return Err(Error::Precondition(format!(
            "first critical value {} must be below alpha/n = {}",
            base.at(1),
            alpha / n as f64
        )));
    }
    let target = alpha + epsilon;
    let at = |k: usize| -> Result<Probe> { probe(&capped_schedule(base, k)?, k as f64) };
    let mut probes = Vec::new();
    let finish = |p: Probe, probes: Vec<Probe>, boundary: bool| CalibrationResult {
        value: p.param,
        worst_case_fdr: p.worst_case_fdr,
        argmax_n0: p.argmax_n0,
        iterations: probes.len(),
        tolerance: 0.0,
        boundary,
        probes,
    };
    let top = at(n)?;
    probes.push(top);
    if top.worst_case_fdr <= target {
        return Ok(finish(top, probes, true));
    }
    let bottom = at(1)?;
    probes.push(bottom);
    if bottom.worst_case_fdr > target {
        return Err(Error::Precondition(format!(
            "even k = 1 has worst-case FDR {} > {target}",
            bottom.worst_case_fdr
        )));
    }
    // pass(lo) and !pass(hi)
    let (mut lo, mut hi, mut best) = (1usize, n, bottom);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        let p = at(mid)?;
        probes.push(p);
        if p.worst_case_fdr <= target {
            lo = mid;
            best = p;
        } else {
            hi = mid;
        }
    }
    Ok(finish(best, probes, false))
}

/// a₀, the positive solution of α = max_{n₀} (αn₀ + a·h(n₀, α′))/(n + b) with
/// α′ = αn/(n + b) and h the BH expected number of false rejections under DU.
/// Each term is linear in a, so a₀ = min_{n₀} α(n + b − n₀)/h(n₀, α′).
pub fn a0_upper_bound(n: usize, alpha: f64, b: f64) -> Result<CalibrationResult> {
    check_level("alpha", alpha)?;
    if !(b > 0.0) || !b.is_finite() {
        return Err(param("b", format!("{b} must be > 0")));
    }
    if n == 0 {
        return Err(param("n", "must be >= 1"));
    }
    let nb = n as f64 + b;
    let alpha_prime = alpha * n as f64 / nb;
    let h: Vec<f64> = (1..=n)
        .map(|n0| bh_ev_recursion(n, n0, alpha_prime))
        .collect::<Result<_>>()?;
    let (mut a0, mut arg) = (f64::INFINITY, 0);
    for (i, &hv) in h.iter().enumerate() {
        let n0 = i + 1;
        let cand = alpha * (nb - n0 as f64) / hv;
        if cand <= a0 {
            a0 = cand;
            arg = n0;
        }
    }
    let objective = h
        .iter()
        .enumerate()
        .map(|(i, &hv)| (alpha * (i + 1) as f64 + a0 * hv) / nb)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(CalibrationResult {
        value: a0,
        worst_case_fdr: objective,
        argmax_n0: arg,
        iterations: n,
        tolerance: 0.0,
        boundary: false,
        probes: vec![Probe {
            param: a0,
            worst_case_fdr: objective,
            argmax_n0: arg,
        }],
    })
}
