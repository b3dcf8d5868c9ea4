use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use stepup_core::asymptotics::{beta_of_curve, g_curve, write_g_csv};
use stepup_core::calibration::{a0_upper_bound, check_necessary, find_k0, solve_a1, CalibrationResult};
use stepup_core::exactdu::du_fdr_curve;
use stepup_core::models::ModelSpec;
use stepup_core::montecarlo::{
    asymptotic_sweep, check_adaptive_formula, check_central_identity, simulate, Estimate, IdentityReport,
    McConfig, Procedure,
};
use stepup_core::schedules::{capped_schedule, DiscreteMeasure, RejectionCurve, ScheduleSpec};
use stepup_core::testing::{
    adaptive_step_up_a3, estimate_n0, step_down, step_up, EstimatorSpec, LabeledSample,
};

use crate::args::{FamilyArg, ScheduleFlags};
use crate::error::{usage, CliError};
use crate::output::{capture, csv_table, real, OutputFlags, Report};

fn open(path: &PathBuf) -> Result<std::fs::File, CliError> {
    std::fs::File::open(path).map_err(|source| CliError::Read {
        path: path.clone(),
        source,
    })
}

// ---- schedule ----

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ScheduleArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub schedule: ScheduleFlags,
    /// Audit the necessary conditions for FDR control at --alpha.
    #[arg(long)]
    #[serde(default)]
    pub check_necessary: bool,
    #[command(flatten)]
    #[serde(flatten)]
    pub output: OutputFlags,
}

fn parametric_ab(spec: &ScheduleSpec) -> Option<(f64, f64)> {
    match spec {
        ScheduleSpec::Parametric { a, b, .. } => Some((*a, *b)),
        ScheduleSpec::Capped { base, .. } => parametric_ab(base),
        _ => None,
    }
}

pub fn schedule(args: &ScheduleArgs) -> Result<Report, CliError> {
    let spec = args.schedule.to_spec(FamilyArg::Bh, None)?;
    let s = match spec.build() {
        Ok(s) => s,
        Err(e) => {
            // a > b cannot control the FDR; say so even when the values themselves
            // cannot be constructed
            if let (true, Some((a, b))) = (args.check_necessary, parametric_ab(&spec)) {
                if a > b {
                    eprintln!("audit FAIL: parametric schedule needs a <= b, got a = {a}, b = {b}");
                    return Err(CliError::Audit(format!("a = {a} > b = {b} ({e})")));
                }
            }
            return Err(e.into());
        }
    };
    let mut summary = json!({ "n": s.n(), "family": s.family() });
    let audit = if args.check_necessary {
        let alpha = args
            .schedule
            .alpha
            .or_else(|| s.param("alpha"))
            .ok_or_else(|| usage("--alpha is required for --check-necessary"))?;
        let audit = check_necessary(&s, alpha)?;
        if audit.passed {
            eprintln!("audit PASS");
        } else {
            let failing: Vec<usize> = audit.failures().map(|r| r.j).collect();
            eprintln!("audit FAIL: bound jα/(n+1−j) violated at j = {failing:?}");
            if !audit.first_value_pass {
                eprintln!("audit FAIL: first critical value exceeds α/n");
            }
        }
        for note in &audit.notes {
            eprintln!("audit note: {note}");
        }
        summary["audit_passed"] = json!(audit.passed);
        summary["audit_notes"] = json!(audit.notes);
        Some(audit)
    } else {
        None
    };
    let csv = capture(|w| s.write_csv(w))?;
    let mut report = Report::new(json!({ "schedule": s, "audit": audit })).with_csv(csv, summary);
    if audit.as_ref().is_some_and(|a| !a.passed) {
        report.exit = 3;
    }
    Ok(report)
}

// ---- test ----

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProcedureArg {
    Su,
    Sd,
    /// Adaptive step-up min(iα/n̂₀, λ) with a Storey-type estimate.
    Adaptive,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TestArgs {
    /// CSV with a `p` column and an optional 0/1 `eps` column.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "su")]
    pub procedure: ProcedureArg,
    #[command(flatten)]
    #[serde(flatten)]
    pub schedule: ScheduleFlags,
    /// Storey λ (adaptive only).
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Storey κ_n (adaptive; default 1/n).
    #[arg(long)]
    pub kappa_n: Option<f64>,
    /// Block Storey κ ≥ 1, an absolute count (adaptive; replaces --kappa-n).
    #[arg(long)]
    pub kappa: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub output: OutputFlags,
}

pub fn test(args: &TestArgs) -> Result<Report, CliError> {
    let path = args.input.as_ref().ok_or_else(|| usage("--input is required"))?;
    let sample = LabeledSample::read_csv(open(path)?)?;
    let n = sample.n();
    let (outcome, n0_hat) = match args.procedure {
        ProcedureArg::Su | ProcedureArg::Sd => {
            let s = args.schedule.to_spec(FamilyArg::Bh, Some(n))?.build()?;
            let o = if args.procedure == ProcedureArg::Su {
                step_up(&sample, &s)?
            } else {
                step_down(&sample, &s)?
            };
            (o, None)
        }
        ProcedureArg::Adaptive => {
            let lambda = args.lambda.unwrap_or(0.5);
            let est = match args.kappa {
                Some(k) => EstimatorSpec::block_storey(lambda, k)?,
                None => EstimatorSpec::storey(lambda, args.kappa_n.unwrap_or(1.0 / n as f64))?,
            };
            let n0 = estimate_n0(&sample, &est)?;
            (adaptive_step_up_a3(&sample, &est, args.schedule.alpha()?)?, Some(n0))
        }
    };
    let mut payload = serde_json::to_value(&outcome)?;
    if let Some(n0) = n0_hat {
        payload["n0_hat"] = json!(n0);
    }
    Ok(Report::new(payload))
}

// ---- du-table ----

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct DuTableArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub schedule: ScheduleFlags,
    /// Caps k to evaluate (comma separated); default: the base schedule only.
    #[arg(long, value_delimiter = ',')]
    #[serde(default)]
    pub caps: Vec<usize>,
    /// Directory receiving one DU curve CSV per cap.
    #[arg(long)]
    pub curve_dir: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub output: OutputFlags,
}

pub fn du_table(args: &DuTableArgs) -> Result<Report, CliError> {
    let base = args.schedule.to_spec(FamilyArg::Gavrilov, None)?.build()?;
    let caps = if args.caps.is_empty() { vec![base.n()] } else { args.caps.clone() };
    let mut rows = Vec::new();
    let mut extra = Vec::new();
    for &k in &caps {
        let s = capped_schedule(&base, k)?;
        if let Some(j) = s.ratio_violation() {
            return Err(stepup_core::Error::Precondition(format!(
                "cap k = {k}: α_j/j decreases at j = {j}; the DU worst case does not apply"
            ))
            .into());
        }
        let curve = du_fdr_curve(&s);
        for w in &curve.warnings {
            eprintln!("warning (k = {k}): {w}");
        }
        let (fdr, argmax) = curve.argmax();
        eprintln!("k = {k}: worst-case FDR {fdr:.6} at n0 = {argmax}");
        rows.push(json!({ "k": k, "worst_case_fdr": fdr, "argmax_n0": argmax }));
        if let Some(dir) = &args.curve_dir {
            let body = capture(|w| curve.write_csv(w, Some(&s)))?;
            extra.push((dir.join(format!("du_curve_k{k}.csv")), body));
        }
    }
    let csv = csv_table(
        &["k", "worst_case_fdr", "argmax_n0"],
        rows.iter().map(|r| {
            vec![
                r["k"].to_string(),
                real(r["worst_case_fdr"].as_f64().unwrap_or(f64::NAN)),
                r["argmax_n0"].to_string(),
            ]
        }),
    )?;
    let summary = json!({ "base": { "n": base.n(), "family": base.family(), "params": base.params() } });
    let mut report = Report::new(json!({ "base": base, "rows": rows })).with_csv(csv, summary);
    report.extra_csv = extra;
    Ok(report)
}

// ---- calibrate ----

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    /// Largest parametric a with worst-case FDR ≤ α.
    A1,
    /// Largest cap k of a base schedule with worst-case FDR ≤ α + ε.
    K0,
    /// Upper bound for a from the BH expectation.
    A0,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct CalibrateArgs {
    #[arg(value_enum)]
    pub target: Target,
    #[command(flatten)]
    #[serde(flatten)]
    pub schedule: ScheduleFlags,
    /// Tolerance above α for k0.
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub output: OutputFlags,
}

pub fn calibrate(args: &CalibrateArgs) -> Result<Report, CliError> {
    let f = &args.schedule;
    let r: CalibrationResult = match args.target {
        Target::A1 => solve_a1(f.n()?, f.alpha()?, f.b.unwrap_or(1.0))?,
        Target::A0 => a0_upper_bound(f.n()?, f.alpha()?, f.b.unwrap_or(1.0))?,
        Target::K0 => {
            let eps = args.epsilon.ok_or_else(|| usage("--epsilon is required for k0"))?;
            let base = f.to_spec(FamilyArg::Gavrilov, None)?.build()?;
            find_k0(&base, f.alpha()?, eps)?
        }
    };
    let name = match args.target {
        Target::A1 => "a1",
        Target::K0 => "k0",
        Target::A0 => "a0",
    };
    eprintln!(
        "{name} = {} (worst-case FDR {:.8} at n0 = {})",
        r.value, r.worst_case_fdr, r.argmax_n0
    );
    if r.boundary {
        eprintln!("note: search ended at the boundary of the admissible range");
    }
    let csv = csv_table(
        &["param", "worst_case_fdr", "argmax_n0"],
        r.probes
            .iter()
            .map(|p| vec![real(p.param), real(p.worst_case_fdr), p.argmax_n0.to_string()]),
    )?;
    let summary = json!({
        "value": r.value,
        "worst_case_fdr": r.worst_case_fdr,
        "argmax_n0": r.argmax_n0,
        "boundary": r.boundary,
    });
    Ok(Report::new(serde_json::to_value(&r)?).with_csv(csv, summary))
}

// ---- beta ----

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurveArg {
    Aorc,
    Simes,
    /// slope·t
    Linear,
    AorcTangent,
    /// Piecewise linear through the knots of --points.
    Tabulated,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct BetaArgs {
    #[arg(long, value_enum)]
    pub curve: Option<CurveArg>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub slope: Option<f64>,
    #[arg(long)]
    pub x1: Option<f64>,
    /// CSV with columns x,y for tabulated curves.
    #[arg(long)]
    pub points: Option<PathBuf>,
    /// Declare the tabulated curve concave.
    #[arg(long)]
    #[serde(default)]
    pub concave: bool,
    /// Required margin f(x) ≥ (1 + ε)x.
    #[arg(long, default_value_t = 0.0)]
    pub epsilon: f64,
    /// Grid size of the (x, g(x)) table.
    #[arg(long, default_value_t = 1001)]
    pub g_points: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub output: OutputFlags,
}

fn read_points(path: &PathBuf) -> Result<Vec<(f64, f64)>, CliError> {
    let mut r = csv::Reader::from_reader(open(path)?);
    let mut pts = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let field = |k: usize| -> Result<f64, CliError> {
            rec.get(k)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| usage(format!("{}: line {}: expected two numbers x,y", path.display(), i + 2)))
        };
        pts.push((field(0)?, field(1)?));
    }
    Ok(pts)
}

fn build_curve(args: &BetaArgs) -> Result<RejectionCurve, CliError> {
    let alpha = || args.alpha.ok_or_else(|| usage("--alpha is required"));
    let curve = args.curve.ok_or_else(|| usage("--curve is required"))?;
    Ok(match curve {
        CurveArg::Aorc => RejectionCurve::aorc(alpha()?)?,
        CurveArg::Simes => RejectionCurve::simes(alpha()?)?,
        CurveArg::Linear => RejectionCurve::linear(args.slope.ok_or_else(|| usage("--slope is required"))?)?,
        CurveArg::AorcTangent => {
            RejectionCurve::aorc_tangent(alpha()?, args.x1.ok_or_else(|| usage("--x1 is required"))?)?
        }
        CurveArg::Tabulated => {
            let path = args.points.as_ref().ok_or_else(|| usage("--points is required"))?;
            RejectionCurve::tabulated(&read_points(path)?, args.concave)?
        }
    })
}

pub fn beta(args: &BetaArgs) -> Result<Report, CliError> {
    let curve = build_curve(args)?;
    let b = beta_of_curve(&curve, args.epsilon)?;
    eprintln!("beta = {} at x = {}", b.beta, b.argsup_x);
    let g = g_curve(&curve, args.g_points)?;
    let csv = capture(|w| write_g_csv(&g, w))?;
    let summary = serde_json::to_value(b)?;
    Ok(Report::new(json!({ "curve": curve, "beta": b })).with_csv(csv, summary))
}

// ---- simulate ----

/// A procedure whose schedule is given declaratively.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProcedureSpec {
    StepUp { schedule: ScheduleSpec },
    StepDown { schedule: ScheduleSpec },
    AdaptiveA3 { alpha: f64, estimator: EstimatorSpec },
    AdaptiveA4 { alpha: f64, estimator: EstimatorSpec, nu: DiscreteMeasure },
}

impl ProcedureSpec {
    fn build(&self) -> Result<Procedure, CliError> {
        Ok(match self {
            ProcedureSpec::StepUp { schedule } => Procedure::StepUp { schedule: schedule.build()? },
            ProcedureSpec::StepDown { schedule } => Procedure::StepDown { schedule: schedule.build()? },
            ProcedureSpec::AdaptiveA3 { alpha, estimator } => Procedure::AdaptiveA3 {
                alpha: *alpha,
                estimator: estimator.clone(),
            },
            ProcedureSpec::AdaptiveA4 { alpha, estimator, nu } => Procedure::AdaptiveA4 {
                alpha: *alpha,
                estimator: estimator.clone(),
                nu: nu.clone(),
            },
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum Experiment {
    Simulate { model: ModelSpec, procedure: ProcedureSpec },
    /// E(V/(n·α_R)) = E(N)/n in reverse martingale models.
    CentralIdentity { model: ModelSpec, schedule: ScheduleSpec },
    /// Paired check of the exact adaptive FDR formula.
    AdaptiveFormula { model: ModelSpec, alpha: f64, estimator: EstimatorSpec },
    /// DU trajectories of SU and SD against the asymptotic limit.
    Sweep { curve: RejectionCurve, n: Vec<usize>, frac_true: Vec<f64> },
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    #[arg(long)]
    pub reps: Option<u64>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// The experiment; supplied through --config.
    #[arg(skip)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<Experiment>,
    #[command(flatten)]
    #[serde(flatten)]
    pub output: OutputFlags,
}

fn estimate_row(name: &str, e: &Estimate) -> Vec<String> {
    vec![name.to_string(), real(e.mean), real(e.se), e.count.to_string()]
}

fn identity_report(r: &IdentityReport) -> Result<(Value, String), CliError> {
    let csv = csv_table(
        &["metric", "mean", "se", "count"],
        [estimate_row("lhs", &r.lhs), estimate_row("rhs", &r.rhs), estimate_row("diff", &r.diff)],
    )?;
    Ok((serde_json::to_value(r)?, csv))
}

pub fn simulate_cmd(args: &SimulateArgs) -> Result<Report, CliError> {
    let exp = args
        .experiment
        .as_ref()
        .ok_or_else(|| usage("simulate needs an `experiment` object from --config"))?;
    let reps = args.reps.ok_or_else(|| usage("--reps is required"))?;
    let cfg = McConfig::new(reps, args.seed);
    let start = Instant::now();
    let (payload, csv, summary) = match exp {
        Experiment::Simulate { model, procedure } => {
            let rep = simulate(model, &procedure.build()?, cfg)?;
            let csv = capture(|w| rep.write_csv(w))?;
            let mut v = serde_json::to_value(&rep)?;
            if let Value::Object(m) = &mut v {
                m.remove("wall_time_secs");
            }
            let summary = json!({ "estimates": rep.estimates });
            (v, csv, summary)
        }
        Experiment::CentralIdentity { model, schedule } => {
            let r = check_central_identity(model, &schedule.build()?, cfg)?;
            let (v, csv) = identity_report(&r)?;
            (v, csv, json!({ "z": r.z }))
        }
        Experiment::AdaptiveFormula { model, alpha, estimator } => {
            let r = check_adaptive_formula(model, estimator, *alpha, cfg)?;
            let (v, csv) = identity_report(&r)?;
            (v, csv, json!({ "z": r.z }))
        }
        Experiment::Sweep { curve, n, frac_true } => {
            let r = asymptotic_sweep(curve, n, frac_true, cfg)?;
            let csv = csv_table(
                &["n", "frac_true", "n0", "su", "su_se", "sd", "sd_se", "diff", "diff_se", "limit"],
                r.rows.iter().map(|row| {
                    vec![
                        row.n.to_string(),
                        real(row.frac_true),
                        row.n0.to_string(),
                        real(row.su.mean),
                        real(row.su.se),
                        real(row.sd.mean),
                        real(row.sd.se),
                        real(row.diff.mean),
                        real(row.diff.se),
                        row.limit.map(real).unwrap_or_default(),
                    ]
                }),
            )?;
            let summary = json!({ "beta": r.beta });
            (serde_json::to_value(&r)?, csv, summary)
        }
    };
    let mut report = Report::new(payload).with_csv(csv, summary);
    report.seed = Some(args.seed);
    report.timing = Some(json!({ "wall_time_secs": start.elapsed().as_secs_f64() }));
    Ok(report)
}
