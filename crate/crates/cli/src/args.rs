use std::path::Path;

use clap::{Args, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use stepup_core::schedules::{DiscreteMeasure, RejectionCurve, ScheduleSpec};

use crate::error::{usage, CliError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyArg {
    Bh,
    By,
    Gavrilov,
    Parametric,
    /// Blanchard–Roquain with the harmonic measure.
    BlanchardRoquain,
    /// Schedule of the AORC with a tangent cap at `--x1`.
    AorcTangent,
}

/// Flags describing a critical-value schedule.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct ScheduleFlags {
    #[arg(long, value_enum)]
    pub family: Option<FamilyArg>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Parametric schedule: α_j = jα/(n + b − ja).
    #[arg(long, allow_negative_numbers = true)]
    pub a: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub b: Option<f64>,
    /// Cap at index k: min(α_j, (j/k)·α_k).
    #[arg(long)]
    pub cap: Option<usize>,
    /// Tangent point of the AORC-tangent curve.
    #[arg(long)]
    pub x1: Option<f64>,
    /// Full schedule description; config files only, overrides the flags above.
    #[arg(skip)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<ScheduleSpec>,
}

fn need<T: Copy>(v: Option<T>, flag: &str) -> Result<T, CliError> {
    v.ok_or_else(|| usage(format!("--{flag} is required")))
}

impl ScheduleFlags {
    pub fn alpha(&self) -> Result<f64, CliError> {
        need(self.alpha, "alpha")
    }

    pub fn n(&self) -> Result<usize, CliError> {
        need(self.n, "n")
    }

    /// The described schedule; `n` falls back to `n_default` (e.g. the
    /// sample size) when no `--n` was given.
    pub fn to_spec(&self, default: FamilyArg, n_default: Option<usize>) -> Result<ScheduleSpec, CliError> {
        if let Some(s) = &self.spec {
            return Ok(s.clone());
        }
        let n = self.n.or(n_default).ok_or_else(|| usage("--n is required"))?;
        let alpha = self.alpha()?;
        let base = match self.family.unwrap_or(default) {
            FamilyArg::Bh => ScheduleSpec::Bh { n, alpha },
            FamilyArg::By => ScheduleSpec::By { n, alpha },
            FamilyArg::Gavrilov => ScheduleSpec::Gavrilov { n, alpha },
            FamilyArg::Parametric => ScheduleSpec::Parametric {
                n,
                alpha,
                a: need(self.a, "a")?,
                b: need(self.b, "b")?,
            },
            FamilyArg::BlanchardRoquain => ScheduleSpec::BlanchardRoquain {
                n,
                alpha,
                nu: DiscreteMeasure::harmonic(n)?,
            },
            FamilyArg::AorcTangent => ScheduleSpec::RejectionCurve {
                n,
                curve: RejectionCurve::aorc_tangent(alpha, need(self.x1, "x1")?)?,
            },
        };
        Ok(match self.cap {
            Some(k) => ScheduleSpec::Capped { base: Box::new(base), k },
            None => base,
        })
    }
}

/// Overlay the keys of a JSON config object onto the flag values.
pub fn resolve<T: Serialize + DeserializeOwned>(args: T, config: Option<&Path>) -> Result<(T, Value), CliError> {
    let mut value = serde_json::to_value(&args)?;
    if let Some(path) = config {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
            path: path.to_owned(),
            source,
        })?;
        let bad = |reason: String| CliError::Config {
            path: path.to_owned(),
            reason,
        };
        let overlay: Value = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
        let Value::Object(over) = overlay else {
            return Err(bad("top level must be a JSON object".into()));
        };
        merge(&mut value, over);
        let resolved = serde_json::from_value(value.clone()).map_err(|e| bad(e.to_string()))?;
        return Ok((resolved, value));
    }
    Ok((args, value))
}

/// Shallow for scalars, recursive for nested objects.
fn merge(target: &mut Value, over: serde_json::Map<String, Value>) {
    let Value::Object(t) = target else {
        *target = Value::Object(over);
        return;
    };
    for (k, v) in over {
        match (t.get_mut(&k), v) {
            (Some(slot @ Value::Object(_)), Value::Object(inner)) => merge(slot, inner),
            (_, v) => {
                t.insert(k, v);
            }
        }
    }
}
