//! Exact law of the number of false rejections V of a step-up test under
//! Dirac-uniform configurations DU(n, n₀): the n − n₀ false nulls have
//! p-value 0 and the n₀ true nulls are iid uniform.
//!
//! Under DU(n, n₀) the test always rejects the false nulls, so V is the
//! step-up index of n₀ uniforms against the shifted thresholds
//! c_v = α_{n−n₀+v:n}, i.e. V = max{v : #{U_i ≤ c_v} ≥ v}.
//!
//! The engine scans the thresholds from the top. The state is the number of
//! uniforms above the current threshold; given the state, the remaining ones
//! are iid uniform below it, so the next state is a binomial increment.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{check_level, param, Error, Result};
use crate::exec::Exec;
use crate::schedules::{format_real, parametric_schedule, CriticalSchedule};

const FLUSH: f64 = 1e-300;
const RENORM_TOL: f64 = 1e-10;

/// Law of V under DU(n, n₀).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DuDistribution {
    pub n: usize,
    pub n0: usize,
    /// `pmf[v]` = P(V = v), v = 0..=n₀.
    pub pmf: Vec<f64>,
    /// E[V / (n − n₀ + V)] with 0/0 = 0.
    pub fdr: f64,
    /// E[V].
    pub ev: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Default)]
struct Kahan {
    sum: f64,
    c: f64,
}

impl Kahan {
    fn add(&mut self, x: f64) {
        let y = x - self.c;
        let t = self.sum + y;
        self.c = (t - self.sum) - y;
        self.sum = t;
    }
}

/// ln k! for k = 0..=m.
fn ln_factorials(m: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(m + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..=m {
        acc += (k as f64).ln();
        out.push(acc);
    }
    out
}

/// Binomial(k, q) pmf into `row[0..=k]`.
fn binomial_row(k: usize, q: f64, ln_fact: &[f64], row: &mut [f64]) {
    if q <= 0.0 {
        row[..=k].fill(0.0);
        row[0] = 1.0;
        return;
    }
    if q >= 1.0 {
        row[..=k].fill(0.0);
        row[k] = 1.0;
        return;
    }
    let ln_q = q.ln();
    let ln_1q = (-q).ln_1p();
    let start = k as f64 * ln_1q;
    if start > -700.0 {
        let odds = q / (1.0 - q);
        row[0] = start.exp();
        for i in 0..k {
            row[i + 1] = row[i] * ((k - i) as f64 / (i + 1) as f64) * odds;
        }
    } else {
        for (i, r) in row[..=k].iter_mut().enumerate() {
            let lp = ln_fact[k] - ln_fact[i] - ln_fact[k - i] + i as f64 * ln_q + (k - i) as f64 * ln_1q;
            *r = lp.exp();
        }
        let total: f64 = row[..=k].iter().sum();
        row[..=k].iter_mut().for_each(|r| *r /= total);
    }
}

/// Exact pmf of V for the step-up test with thresholds `c` on `c.len()` iid
/// uniforms.
fn v_pmf(c: &[f64]) -> Vec<f64> {
    let m = c.len();
    let ln_fact = ln_factorials(m);
    let mut pmf = vec![0.0; m + 1];
    let mut row = vec![0.0; m + 1];
    // state[s] = P(s uniforms above c_j, and V < j + 1)
    let mut state = vec![0.0; m + 1];
    binomial_row(m, 1.0 - c[m - 1], &ln_fact, &mut state);
    let mut next = vec![0.0; m + 1];
    for j in (1..=m).rev() {
        // at least j uniforms at or below c_j
        let mut mass = Kahan::default();
        for s in state.iter_mut().take(m - j + 1) {
            mass.add(*s);
            *s = 0.0;
        }
        pmf[j] = mass.sum;
        if j == 1 {
            break;
        }
        let q = 1.0 - c[j - 2] / c[j - 1];
        next.fill(0.0);
        for s in (m - j + 1)..=m {
            let w = state[s];
            if w == 0.0 {
                continue;
            }
            let k = m - s;
            binomial_row(k, q, &ln_fact, &mut row);
            for (d, r) in row[..=k].iter().enumerate() {
                next[s + d] += w * r;
            }
        }
        for v in next.iter_mut() {
            if *v < FLUSH {
                *v = 0.0;
            }
        }
        std::mem::swap(&mut state, &mut next);
    }
    let mut rest = Kahan::default();
    for s in &state {
        rest.add(*s);
    }
    pmf[0] = rest.sum;
    pmf
}

fn check_n0(n: usize, n0: usize) -> Result<()> {
    if n0 == 0 || n0 > n {
        Err(param("n0", format!("{n0} is not in 1..={n}")))
    } else {
        Ok(())
    }
}

/// Exact distribution of V under DU(n, n₀) for the step-up test.
pub fn du_v_distribution(schedule: &CriticalSchedule, n0: usize) -> Result<DuDistribution> {
    let n = schedule.n();
    check_n0(n, n0)?;
    let n1 = n - n0;
    let mut pmf = v_pmf(&schedule.values()[n1..]);
    let mut warnings = Vec::new();
    for p in pmf.iter_mut() {
        if *p < FLUSH {
            *p = 0.0;
        }
    }
    let mut total = Kahan::default();
    pmf.iter().for_each(|&p| total.add(p));
    if (total.sum - 1.0).abs() > RENORM_TOL {
        warnings.push(format!("pmf summed to {}, renormalized", total.sum));
        pmf.iter_mut().for_each(|p| *p /= total.sum);
    }
    let mut fdr = Kahan::default();
    let mut ev = Kahan::default();
    for (v, &p) in pmf.iter().enumerate().skip(1) {
        fdr.add(v as f64 / (n1 + v) as f64 * p);
        ev.add(v as f64 * p);
    }
    Ok(DuDistribution {
        n,
        n0,
        pmf,
        fdr: fdr.sum,
        ev: ev.sum,
        warnings,
    })
}

/// h(n₀, α) = E_DU(V | n₀) for Benjamini–Hochberg, by the forward recursion
/// h(1) = α, h(k) = (kα/n)(h(k − 1) + n − k + 1).
pub fn bh_ev_recursion(n: usize, n0: usize, alpha: f64) -> Result<f64> {
    check_n0(n, n0)?;
    check_level("alpha", alpha)?;
    let nf = n as f64;
    let mut h = alpha;
    for k in 2..=n0 {
        h = k as f64 * alpha / nf * (h + (n - k + 1) as f64);
    }
    Ok(h)
}

/// Closed form of [`bh_ev_recursion`]:
/// n₀!/n^{n₀−1}·α^{n₀} + Σ_{j<n₀} (n₀!/j!)(α/n)^{n₀−j}(n − j).
pub fn bh_ev_closed_form(n: usize, n0: usize, alpha: f64) -> Result<f64> {
    check_n0(n, n0)?;
    check_level("alpha", alpha)?;
    let r = alpha / n as f64;
    // prod_j = Π_{i=j+1}^{n₀} iα/n = (n₀!/j!)(α/n)^{n₀−j}
    let mut prod = 1.0;
    let mut sum = Kahan::default();
    for j in (0..n0).rev() {
        prod *= (j + 1) as f64 * r;
        sum.add(prod * (n - j) as f64);
    }
    Ok(sum.sum)
}

/// One point of an FDR curve over n₀.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DuPoint {
    pub n0: usize,
    pub fdr: f64,
    pub ev: f64,
}

/// FDR_DU(n₀) for n₀ = 1..n.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DuCurve {
    pub n: usize,
    pub points: Vec<DuPoint>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl DuCurve {
    /// Maximum FDR and its n₀; ties go to the larger n₀.
    pub fn argmax(&self) -> (f64, usize) {
        let mut best = (f64::NEG_INFINITY, 0);
        for p in &self.points {
            if p.fdr >= best.0 {
                best = (p.fdr, p.n0);
            }
        }
        best
    }

    /// Columns `n0, fdr, ev, argmax_flag`, plus `lower_bound` =
    /// n₀·α_{n+1−n₀:n}/(n + 1 − n₀) when a schedule is supplied.
    pub fn write_csv<W: Write>(&self, writer: W, lower_bound: Option<&CriticalSchedule>) -> Result<()> {
        if let Some(s) = lower_bound {
            if s.n() != self.n {
                return Err(Error::LengthMismatch {
                    sample: self.n,
                    schedule: s.n(),
                });
            }
        }
        let (_, arg) = self.argmax();
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["n0", "fdr", "ev", "argmax_flag"];
        if lower_bound.is_some() {
            header.push("lower_bound");
        }
        w.write_record(&header)?;
        for p in &self.points {
            let mut rec = vec![
                p.n0.to_string(),
                format_real(p.fdr),
                format_real(p.ev),
                u8::from(p.n0 == arg).to_string(),
            ];
            if let Some(s) = lower_bound {
                rec.push(format_real(du_fdr_lower_bound(s, p.n0)));
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// n₀·α_{n+1−n₀:n}/(n + 1 − n₀), a lower bound on FDR_DU(n₀) for schedules
/// with non-decreasing α_{j:n}/j.
pub fn du_fdr_lower_bound(schedule: &CriticalSchedule, n0: usize) -> f64 {
    let j = schedule.n() + 1 - n0;
    n0 as f64 * schedule.at(j) / j as f64
}

/// FDR_DU(n₀) for every n₀ = 1..n on the default execution strategy.
pub fn du_fdr_curve(schedule: &CriticalSchedule) -> DuCurve {
    du_fdr_curve_with(schedule, Exec::default())
}

pub fn du_fdr_curve_with(schedule: &CriticalSchedule, exec: Exec) -> DuCurve {
    let n = schedule.n();
    // largest n₀ first: they dominate the cost
    let dists = exec.map(n, |i| {
        du_v_distribution(schedule, n - i).expect("n0 within 1..=n")
    });
    let mut points = Vec::with_capacity(n);
    let mut warnings = Vec::new();
    for d in dists.into_iter().rev() {
        warnings.extend(d.warnings.iter().map(|w| format!("n0 = {}: {w}", d.n0)));
        points.push(DuPoint {
            n0: d.n0,
            fdr: d.fdr,
            ev: d.ev,
        });
    }
    DuCurve { n, points, warnings }
}

/// g_{a,b}(n₀) = αn₀/(n + b) + a·E_DU(V | n₀)/(n + b) for the parametric
/// schedule jα/(n + b − ja).
pub fn gab_fdr(n: usize, n0: usize, alpha: f64, a: f64, b: f64) -> Result<f64> {
    let s = parametric_schedule(n, alpha, a, b)?;
    let d = du_v_distribution(&s, n0)?;
    let nb = n as f64 + b;
    Ok(alpha * n0 as f64 / nb + a * d.ev / nb)
}
