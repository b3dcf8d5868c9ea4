//! Replicated simulation of multiple tests under the generator models.
//!
//! Replication `r` draws from a ChaCha8 stream selected by `r`, so every
//! replication is reproducible on its own. Replications are grouped in
//! fixed blocks, each block is reduced sequentially and the block summaries
//! are merged in block order; reports therefore do not depend on the number
//! of worker threads.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{beta_of_curve, du_limit, BetaResult};
use crate::error::{check_level, param, Error, Result};
use crate::exec::Exec;
use crate::models::ModelSpec;
use crate::schedules::{curve_schedule, format_real, CriticalSchedule, DiscreteMeasure, RejectionCurve};
use crate::testing::{
    a3_thresholds, a4_thresholds, estimate_n0_raw, step_down_count, step_up_count, EstimatorSpec,
    LabeledSample,
};

/// Identifier of the replication stream layout, recorded in reports.
pub const RNG_ID: &str = "chacha8-stream-per-rep/v1";
const BLOCK: usize = 4096;

/// The RNG of replication `rep`.
pub fn rep_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

/// Running mean and sum of squared deviations.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Welford {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    /// Chan et al. pairwise merge.
    pub fn merge(&mut self, other: &Welford) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = self.count + other.count;
        let d = other.mean - self.mean;
        self.mean += d * other.count as f64 / n as f64;
        self.m2 += other.m2 + d * d * (self.count as f64 * other.count as f64) / n as f64;
        self.count = n;
    }

    pub fn estimate(&self) -> Estimate {
        let se = if self.count > 1 {
            (self.m2.max(0.0) / (self.count - 1) as f64 / self.count as f64).sqrt()
        } else {
            0.0
        };
        Estimate {
            mean: self.mean,
            se,
            count: self.count,
        }
    }
}

/// Sample mean with its standard error (sample sd / √count; 0 for count < 2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
    pub count: u64,
}

impl Estimate {
    /// |mean − target| in standard errors (`None` when se = 0 and they differ).
    pub fn z(&self, target: f64) -> Option<f64> {
        let d = (self.mean - target).abs();
        if self.se > 0.0 {
            Some(d / self.se)
        } else if d == 0.0 {
            Some(0.0)
        } else {
            None
        }
    }

    pub fn within(&self, target: f64, k: f64) -> bool {
        self.z(target).is_some_and(|z| z <= k)
    }
}

/// Run `reps` replications of `f`, which records one observation per slot
/// (or `None` to skip that slot for this replication).
pub(crate) fn replicate<F>(reps: u64, seed: u64, exec: Exec, slots: usize, f: F) -> Result<Vec<Welford>>
where
    F: Fn(&mut ChaCha8Rng, &mut [Option<f64>]) -> Result<()> + Sync + Send,
{
    if reps == 0 {
        return Err(param("reps", "must be >= 1"));
    }
    let blocks = reps.div_ceil(BLOCK as u64) as usize;
    let partial = exec.map(blocks, |b| -> Result<Vec<Welford>> {
        let mut acc = vec![Welford::default(); slots];
        let mut obs = vec![None; slots];
        let start = b as u64 * BLOCK as u64;
        let end = (start + BLOCK as u64).min(reps);
        for rep in start..end {
            let mut rng = rep_rng(seed, rep);
            obs.fill(None);
            f(&mut rng, &mut obs)?;
            for (a, o) in acc.iter_mut().zip(&obs) {
                if let Some(x) = o {
                    a.push(*x);
                }
            }
        }
        Ok(acc)
    });
    let mut total = vec![Welford::default(); slots];
    for block in partial {
        for (t, w) in total.iter_mut().zip(block?) {
            t.merge(&w);
        }
    }
    Ok(total)
}

/// The multiple test run in each replication.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Procedure {
    StepUp {
        schedule: CriticalSchedule,
    },
    StepDown {
        schedule: CriticalSchedule,
    },
    /// Adaptive step-up with critical values min(iα/n̂₀, λ).
    AdaptiveA3 {
        alpha: f64,
        estimator: EstimatorSpec,
    },
    /// Adaptive step-up with critical values (α/n)∫₀^{i·n/n̂₀} x dν.
    AdaptiveA4 {
        alpha: f64,
        estimator: EstimatorSpec,
        nu: DiscreteMeasure,
    },
}

impl Procedure {
    fn validate(&self, n: usize) -> Result<()> {
        match self {
            Procedure::StepUp { schedule } | Procedure::StepDown { schedule } => {
                if schedule.n() != n {
                    return Err(Error::LengthMismatch {
                        sample: n,
                        schedule: schedule.n(),
                    });
                }
                Ok(())
            }
            Procedure::AdaptiveA3 { alpha, estimator } | Procedure::AdaptiveA4 { alpha, estimator, .. } => {
                check_level("alpha", *alpha)?;
                estimator.validate()
            }
        }
    }

    /// (R, threshold) on a sorted copy of the p-values.
    fn rejections(&self, p: &[f64], sorted: &[f64]) -> Result<(usize, f64)> {
        let n = p.len();
        let (r, th) = match self {
            Procedure::StepUp { schedule } => {
                let r = step_up_count(sorted, schedule.values());
                (r, schedule.at(r))
            }
            Procedure::StepDown { schedule } => {
                let r = step_down_count(sorted, schedule.values());
                (r, schedule.at(r))
            }
            Procedure::AdaptiveA3 { alpha, estimator } => {
                let n0 = estimate_n0_raw(p, estimator)?;
                let th = a3_thresholds(n, n0, *alpha, estimator.lambda);
                let r = step_up_count(sorted, &th);
                (r, th[r.max(1) - 1])
            }
            Procedure::AdaptiveA4 { alpha, estimator, nu } => {
                let n0 = estimate_n0_raw(p, estimator)?;
                let th = a4_thresholds(n, n0, *alpha, nu);
                let r = step_up_count(sorted, &th);
                (r, th[r.max(1) - 1])
            }
        };
        Ok((r, th))
    }
}

/// R, V and N of one replication.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Counts {
    pub r: usize,
    pub v: usize,
    pub n_true: usize,
}

fn sorted(p: &[f64]) -> Vec<f64> {
    let mut s = p.to_vec();
    s.sort_unstable_by(f64::total_cmp);
    s
}

fn counts(sample: &LabeledSample, r: usize, th: f64) -> Counts {
    let eps = sample.eps().expect("generators label samples");
    let (mut v, mut n_true) = (0, 0);
    for (&p, &t) in sample.p().iter().zip(eps) {
        if t {
            n_true += 1;
            if r > 0 && p <= th {
                v += 1;
            }
        }
    }
    Counts { r, v, n_true }
}

fn run_once(procedure: &Procedure, sample: &LabeledSample) -> Result<Counts> {
    let s = sorted(sample.p());
    let (r, th) = procedure.rejections(sample.p(), &s)?;
    Ok(counts(sample, r, th))
}

pub const METRICS: [&str; 5] = ["fdr", "fwer", "ev", "er", "power"];

fn record(c: Counts, n: usize, obs: &mut [Option<f64>]) {
    let fdp = if c.r == 0 { 0.0 } else { c.v as f64 / c.r as f64 };
    obs[0] = Some(fdp);
    obs[1] = Some(f64::from(u8::from(c.v > 0)));
    obs[2] = Some(c.v as f64);
    obs[3] = Some(c.r as f64);
    let n1 = n - c.n_true;
    obs[4] = (n1 > 0).then(|| (c.r - c.v) as f64 / n1 as f64);
}

/// Replications, seed and execution strategy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McConfig {
    pub reps: u64,
    pub seed: u64,
    pub exec: Exec,
}

impl McConfig {
    pub fn new(reps: u64, seed: u64) -> Self {
        Self {
            reps,
            seed,
            exec: Exec::default(),
        }
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulationReport {
    /// fdr = E(V/R), fwer = P(V ≥ 1), ev = E(V), er = E(R) and power =
    /// E((R − V)/(n − N)) over replications with n > N.
    pub estimates: BTreeMap<String, Estimate>,
    pub reps: u64,
    pub seed: u64,
    pub rng: String,
    pub model: ModelSpec,
    pub procedure: Procedure,
    pub wall_time_secs: f64,
}

impl SimulationReport {
    pub fn get(&self, metric: &str) -> Option<&Estimate> {
        self.estimates.get(metric)
    }

    /// One row per metric: `metric, mean, se, count`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["metric", "mean", "se", "count"])?;
        for (k, e) in &self.estimates {
            w.write_record([k.clone(), format_real(e.mean), format_real(e.se), e.count.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Estimate FDR, FWER, E(V), E(R) and power of `procedure` under `model`.
pub fn simulate(model: &ModelSpec, procedure: &Procedure, cfg: McConfig) -> Result<SimulationReport> {
    model.validate()?;
    let n = model.n();
    procedure.validate(n)?;
    let start = Instant::now();
    let acc = replicate(cfg.reps, cfg.seed, cfg.exec, METRICS.len(), |rng, obs| {
        let sample = model.draw(rng);
        record(run_once(procedure, &sample)?, n, obs);
        Ok(())
    })?;
    let estimates = METRICS
        .iter()
        .zip(&acc)
        .filter(|(_, w)| w.count > 0)
        .map(|(k, w)| (k.to_string(), w.estimate()))
        .collect();
    Ok(SimulationReport {
        estimates,
        reps: cfg.reps,
        seed: cfg.seed,
        rng: RNG_ID.to_string(),
        model: model.clone(),
        procedure: procedure.clone(),
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

/// Paired check of an identity E(lhs) = E(rhs).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdentityReport {
    pub lhs: Estimate,
    pub rhs: Estimate,
    /// lhs − rhs per replication.
    pub diff: Estimate,
    /// |mean diff| / se, `None` if undefined.
    pub z: Option<f64>,
    pub reps: u64,
    pub seed: u64,
    pub rng: String,
}

fn identity_report(acc: &[Welford], cfg: McConfig) -> IdentityReport {
    let diff = acc[2].estimate();
    IdentityReport {
        lhs: acc[0].estimate(),
        rhs: acc[1].estimate(),
        diff,
        z: diff.z(0.0),
        reps: cfg.reps,
        seed: cfg.seed,
        rng: RNG_ID.to_string(),
    }
}

/// E(V/(n·α_{R:n})) against N/n (paired), with α_{0:n} = α_{1:n}. No model
/// check is made; see [`check_central_identity`].
pub fn estimate_central_identity(
    model: &ModelSpec,
    schedule: &CriticalSchedule,
    cfg: McConfig,
) -> Result<IdentityReport> {
    model.validate()?;
    let n = model.n();
    if schedule.n() != n {
        return Err(Error::LengthMismatch {
            sample: n,
            schedule: schedule.n(),
        });
    }
    let proc = Procedure::StepUp {
        schedule: schedule.clone(),
    };
    let nf = n as f64;
    let acc = replicate(cfg.reps, cfg.seed, cfg.exec, 3, |rng, obs| {
        let sample = model.draw(rng);
        let c = run_once(&proc, &sample)?;
        let lhs = c.v as f64 / (nf * schedule.at(c.r));
        let rhs = c.n_true as f64 / nf;
        obs[0] = Some(lhs);
        obs[1] = Some(rhs);
        obs[2] = Some(lhs - rhs);
        Ok(())
    })?;
    Ok(identity_report(&acc, cfg))
}

/// [`estimate_central_identity`] restricted to reverse martingale models.
pub fn check_central_identity(
    model: &ModelSpec,
    schedule: &CriticalSchedule,
    cfg: McConfig,
) -> Result<IdentityReport> {
    if !model.is_reverse_martingale() {
        return Err(Error::Refused(format!(
            "{} is not a reverse martingale model; E(V/(n alpha_R)) = E(N)/n may fail \
             (for positively correlated normals it is strictly smaller)",
            model.family()
        )));
    }
    estimate_central_identity(model, schedule, cfg)
}

/// Paired check of E(V/R) = (α/λ)·E[V(λ)·min{1/n̂₀, λ/(n·F̂_n(λ)·α)}] for the
/// adaptive step-up with critical values min(iα/n̂₀, λ).
pub fn check_adaptive_formula(
    model: &ModelSpec,
    estimator: &EstimatorSpec,
    alpha: f64,
    cfg: McConfig,
) -> Result<IdentityReport> {
    check_level("alpha", alpha)?;
    estimator.validate()?;
    model.validate()?;
    if !model.is_reverse_martingale() {
        return Err(Error::Refused(format!(
            "{} is not a reverse martingale model",
            model.family()
        )));
    }
    let lambda = estimator.lambda;
    let proc = Procedure::AdaptiveA3 {
        alpha,
        estimator: estimator.clone(),
    };
    let acc = replicate(cfg.reps, cfg.seed, cfg.exec, 3, |rng, obs| {
        let sample = model.draw(rng);
        let c = run_once(&proc, &sample)?;
        let lhs = if c.r == 0 { 0.0 } else { c.v as f64 / c.r as f64 };
        let eps = sample.eps().expect("generators label samples");
        let below = sample.p().iter().filter(|&&p| p <= lambda).count();
        let v_lambda = sample
            .p()
            .iter()
            .zip(eps)
            .filter(|(&p, &t)| t && p <= lambda)
            .count();
        let rhs = if v_lambda == 0 {
            0.0
        } else {
            let n0 = estimate_n0_raw(sample.p(), estimator)?;
            alpha / lambda * v_lambda as f64 * (1.0 / n0).min(lambda / (below as f64 * alpha))
        };
        obs[0] = Some(lhs);
        obs[1] = Some(rhs);
        obs[2] = Some(lhs - rhs);
        Ok(())
    })?;
    Ok(identity_report(&acc, cfg))
}

/// SU and SD FDR under DU(n, n₀) for one (n, n₀/n) pair, with the
/// almost-sure limit when it exists.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub frac_true: f64,
    pub n0: usize,
    pub su: Estimate,
    pub sd: Estimate,
    /// su − sd per replication.
    pub diff: Estimate,
    pub limit: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepReport {
    pub beta: BetaResult,
    pub rows: Vec<SweepRow>,
    pub reps: u64,
    pub seed: u64,
    pub rng: String,
}

/// DU trajectories of SU and SD FDR for the schedules of `curve`.
pub fn asymptotic_sweep(
    curve: &RejectionCurve,
    n_list: &[usize],
    frac_true_list: &[f64],
    cfg: McConfig,
) -> Result<SweepReport> {
    let beta = beta_of_curve(curve, 0.0)?;
    let mut rows = Vec::new();
    for &n in n_list {
        let schedule = curve_schedule(n, curve)?;
        for &frac in frac_true_list {
            if !(frac > 0.0 && frac <= 1.0) {
                return Err(param("frac_true", format!("{frac} is not in (0, 1]")));
            }
            let n0 = ((frac * n as f64).round() as usize).clamp(1, n);
            let model = ModelSpec::Du { n, n0 };
            let n1 = n - n0;
            let c = schedule.values();
            let acc = replicate(cfg.reps, cfg.seed, cfg.exec, 3, |rng, obs| {
                let s = sorted(model.draw(rng).p());
                let fdp = |r: usize| if r == 0 { 0.0 } else { (r - n1) as f64 / r as f64 };
                let su = fdp(step_up_count(&s, c));
                let sd = fdp(step_down_count(&s, c));
                obs[0] = Some(su);
                obs[1] = Some(sd);
                obs[2] = Some(su - sd);
                Ok(())
            })?;
            let limit = if frac < 1.0 && curve.is_concave() && curve.x0() < 1.0 {
                Some(du_limit(curve, 1.0 - frac)?.fdr)
            } else {
                None
            };
            rows.push(SweepRow {
                n,
                frac_true: frac,
                n0,
                su: acc[0].estimate(),
                sd: acc[1].estimate(),
                diff: acc[2].estimate(),
                limit,
            });
        }
    }
    Ok(SweepReport {
        beta,
        rows,
        reps: cfg.reps,
        seed: cfg.seed,
        rng: RNG_ID.to_string(),
    })
}
