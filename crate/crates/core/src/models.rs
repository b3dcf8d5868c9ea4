//! Seeded p-value generators for independence, block and reverse martingale
//! dependence models.
//!
//! Every generator labels coordinates with ε_i (`true` = true null) and
//! places true nulls before false ones within each block.

use libm::erfc;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::testing::LabeledSample;

/// Number of true nulls in the BI model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrueNulls {
    Fixed(usize),
    /// Each ε_i is Bernoulli with this success probability.
    Bernoulli(f64),
}

/// Law of the false-null p-values ξ_i.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Alternative {
    #[default]
    Dirac0,
    /// Uniform on (0, upper).
    Uniform { upper: f64 },
    /// cdf t^γ on (0, 1), γ ∈ (0, 1] (γ = 1 is uniform).
    Power { gamma: f64 },
}

impl Alternative {
    fn validate(&self) -> Result<()> {
        match *self {
            Alternative::Dirac0 => Ok(()),
            Alternative::Uniform { upper } if upper > 0.0 && upper <= 1.0 => Ok(()),
            Alternative::Power { gamma } if gamma > 0.0 && gamma <= 1.0 => Ok(()),
            other => Err(Error::Model(format!("bad alternative {other:?}"))),
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Alternative::Dirac0 => 0.0,
            Alternative::Uniform { upper } => upper * rng.random::<f64>(),
            Alternative::Power { gamma } => rng.random::<f64>().powf(1.0 / gamma),
        }
    }
}

/// Within-block law of the true-null p-values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coupling {
    /// One shared uniform per block.
    Equi,
    Iid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelSpec {
    Bi {
        n: usize,
        n0: TrueNulls,
        #[serde(default)]
        alt: Alternative,
    },
    Du {
        n: usize,
        n0: usize,
    },
    /// Two true nulls Φ(X₁), Φ(X₂) with corr(X₁, X₂) = ρ.
    BivariateNormal {
        rho: f64,
    },
    /// p_i = max(X_i, Y)² with X_i, Y iid uniform.
    MarshallOlkin {
        n: usize,
    },
    BlockEqui {
        k: usize,
        m: usize,
    },
    FullDependence {
        n: usize,
    },
    /// A uniformly random permutation of a sample from `base`.
    PermutationCoupled {
        base: Box<ModelSpec>,
    },
    BlockRm {
        layout: Vec<usize>,
        true_counts: Vec<usize>,
        coupling: Coupling,
        #[serde(default)]
        alt: Alternative,
    },
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: usize| {
            if v == 0 {
                Err(Error::Model(format!("{name} must be >= 1")))
            } else {
                Ok(())
            }
        };
        match self {
            ModelSpec::Bi { n, n0, alt } => {
                positive("n", *n)?;
                alt.validate()?;
                match *n0 {
                    TrueNulls::Fixed(k) if k > *n => {
                        Err(Error::Model(format!("n0 = {k} exceeds n = {n}")))
                    }
                    TrueNulls::Bernoulli(p) if !(0.0..=1.0).contains(&p) => {
                        Err(Error::Model(format!("Bernoulli probability {p} is not in [0, 1]")))
                    }
                    _ => Ok(()),
                }
            }
            ModelSpec::Du { n, n0 } => {
                positive("n", *n)?;
                if *n0 == 0 || n0 > n {
                    return Err(Error::Model(format!("n0 = {n0} is not in 1..={n}")));
                }
                Ok(())
            }
            ModelSpec::BivariateNormal { rho } => {
                if rho.abs() < 1.0 {
                    Ok(())
                } else {
                    Err(Error::Model(format!("|rho| = {} must be < 1", rho.abs())))
                }
            }
            ModelSpec::MarshallOlkin { n } | ModelSpec::FullDependence { n } => positive("n", *n),
            ModelSpec::BlockEqui { k, m } => {
                positive("k", *k)?;
                positive("m", *m)
            }
            ModelSpec::PermutationCoupled { base } => base.validate(),
            ModelSpec::BlockRm {
                layout,
                true_counts,
                alt,
                ..
            } => {
                alt.validate()?;
                if layout.is_empty() || layout.len() != true_counts.len() {
                    return Err(Error::Model(format!(
                        "{} block sizes but {} true counts",
                        layout.len(),
                        true_counts.len()
                    )));
                }
                for (i, (&size, &t)) in layout.iter().zip(true_counts).enumerate() {
                    positive("block size", size)?;
                    if t > size {
                        return Err(Error::Model(format!(
                            "block {i}: {t} true nulls in a block of {size}"
                        )));
                    }
                }
                Ok(())
            }
        }
    }

    pub fn n(&self) -> usize {
        match self {
            ModelSpec::Bi { n, .. }
            | ModelSpec::Du { n, .. }
            | ModelSpec::MarshallOlkin { n }
            | ModelSpec::FullDependence { n } => *n,
            ModelSpec::BivariateNormal { .. } => 2,
            ModelSpec::BlockEqui { k, m } => k * m,
            ModelSpec::PermutationCoupled { base } => base.n(),
            ModelSpec::BlockRm { layout, .. } => layout.iter().sum(),
        }
    }

    /// E(N)/n.
    pub fn expected_true_fraction(&self) -> f64 {
        match self {
            ModelSpec::Bi { n, n0, .. } => match *n0 {
                TrueNulls::Fixed(k) => k as f64 / *n as f64,
                TrueNulls::Bernoulli(p) => p,
            },
            ModelSpec::Du { n, n0 } => *n0 as f64 / *n as f64,
            ModelSpec::PermutationCoupled { base } => base.expected_true_fraction(),
            ModelSpec::BlockRm {
                layout, true_counts, ..
            } => true_counts.iter().sum::<usize>() as f64 / layout.iter().sum::<usize>() as f64,
            _ => 1.0,
        }
    }

    /// Whether the construction guarantees the reverse martingale property
    /// of the true-null p-values.
    pub fn is_reverse_martingale(&self) -> bool {
        match self {
            ModelSpec::BivariateNormal { rho } => *rho == 0.0,
            ModelSpec::PermutationCoupled { base } => base.is_reverse_martingale(),
            _ => true,
        }
    }

    pub fn family(&self) -> &'static str {
        match self {
            ModelSpec::Bi { .. } => "bi",
            ModelSpec::Du { .. } => "du",
            ModelSpec::BivariateNormal { .. } => "bivariate_normal",
            ModelSpec::MarshallOlkin { .. } => "marshall_olkin",
            ModelSpec::BlockEqui { .. } => "block_equi",
            ModelSpec::FullDependence { .. } => "full_dependence",
            ModelSpec::PermutationCoupled { .. } => "permutation_coupled",
            ModelSpec::BlockRm { .. } => "block_rm",
        }
    }

    /// Draw one sample. Call [`ModelSpec::validate`] once beforehand; invalid
    /// specs panic or misbehave here.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> LabeledSample {
        match self {
            ModelSpec::Bi { n, n0, alt } => bi(*n, *n0, *alt, rng),
            ModelSpec::Du { n, n0 } => du(*n, *n0, rng),
            ModelSpec::BivariateNormal { rho } => bivariate_normal(*rho, rng),
            ModelSpec::MarshallOlkin { n } => marshall_olkin(*n, rng),
            ModelSpec::BlockEqui { k, m } => block_rm(&vec![*m; *k], &vec![*m; *k], Coupling::Equi, Alternative::Dirac0, rng),
            ModelSpec::FullDependence { n } => block_rm(&[*n], &[*n], Coupling::Equi, Alternative::Dirac0, rng),
            ModelSpec::PermutationCoupled { base } => permute(&base.draw(rng), rng),
            ModelSpec::BlockRm {
                layout,
                true_counts,
                coupling,
                alt,
            } => block_rm(layout, true_counts, *coupling, *alt, rng),
        }
    }
}

/// Validate `spec` and draw one sample.
pub fn generate<R: Rng + ?Sized>(spec: &ModelSpec, rng: &mut R) -> Result<LabeledSample> {
    spec.validate()?;
    Ok(spec.draw(rng))
}

/// Standard normal cdf.
pub fn phi(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

fn bi<R: Rng + ?Sized>(n: usize, n0: TrueNulls, alt: Alternative, rng: &mut R) -> LabeledSample {
    let eps: Vec<bool> = match n0 {
        TrueNulls::Fixed(k) => (0..n).map(|i| i < k).collect(),
        TrueNulls::Bernoulli(q) => (0..n).map(|_| rng.random::<f64>() < q).collect(),
    };
    let p = eps
        .iter()
        .map(|&t| if t { rng.random::<f64>() } else { alt.sample(rng) })
        .collect();
    LabeledSample::from_parts(p, eps)
}

fn du<R: Rng + ?Sized>(n: usize, n0: usize, rng: &mut R) -> LabeledSample {
    bi(n, TrueNulls::Fixed(n0), Alternative::Dirac0, rng)
}

fn bivariate_normal<R: Rng + ?Sized>(rho: f64, rng: &mut R) -> LabeledSample {
    let x1: f64 = rng.sample(StandardNormal);
    let y: f64 = rng.sample(StandardNormal);
    let x2 = rho * x1 + (1.0 - rho * rho).sqrt() * y;
    LabeledSample::from_parts(vec![phi(x1), phi(x2)], vec![true, true])
}

fn marshall_olkin<R: Rng + ?Sized>(n: usize, rng: &mut R) -> LabeledSample {
    let y: f64 = rng.random();
    let p = (0..n)
        .map(|_| {
            let z = rng.random::<f64>().max(y);
            z * z
        })
        .collect();
    LabeledSample::from_parts(p, vec![true; n])
}

fn block_rm<R: Rng + ?Sized>(
    layout: &[usize],
    true_counts: &[usize],
    coupling: Coupling,
    alt: Alternative,
    rng: &mut R,
) -> LabeledSample {
    let n = layout.iter().sum();
    let mut p = Vec::with_capacity(n);
    let mut eps = Vec::with_capacity(n);
    for (&size, &t) in layout.iter().zip(true_counts) {
        match coupling {
            Coupling::Equi => {
                let u: f64 = rng.random();
                p.extend(std::iter::repeat_n(u, t));
            }
            Coupling::Iid => p.extend((0..t).map(|_| rng.random::<f64>())),
        }
        eps.extend(std::iter::repeat_n(true, t));
        p.extend((t..size).map(|_| alt.sample(rng)));
        eps.extend(std::iter::repeat_n(false, size - t));
    }
    LabeledSample::from_parts(p, eps)
}

fn permute<R: Rng + ?Sized>(base: &LabeledSample, rng: &mut R) -> LabeledSample {
    let mut perm: Vec<usize> = (0..base.n()).collect();
    perm.shuffle(rng);
    base.permuted(&perm)
}

pub fn gen_bi<R: Rng + ?Sized>(n: usize, n0: TrueNulls, alt: Alternative, rng: &mut R) -> Result<LabeledSample> {
    generate(&ModelSpec::Bi { n, n0, alt }, rng)
}

pub fn gen_du<R: Rng + ?Sized>(n: usize, n0: usize, rng: &mut R) -> Result<LabeledSample> {
    generate(&ModelSpec::Du { n, n0 }, rng)
}

pub fn gen_bivariate_normal<R: Rng + ?Sized>(rho: f64, rng: &mut R) -> Result<LabeledSample> {
    generate(&ModelSpec::BivariateNormal { rho }, rng)
}

pub fn gen_marshall_olkin<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<LabeledSample> {
    generate(&ModelSpec::MarshallOlkin { n }, rng)
}

pub fn gen_block_equi<R: Rng + ?Sized>(k: usize, m: usize, rng: &mut R) -> Result<LabeledSample> {
    generate(&ModelSpec::BlockEqui { k, m }, rng)
}

pub fn gen_full_dependence<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<LabeledSample> {
    generate(&ModelSpec::FullDependence { n }, rng)
}

/// Randomly permute coordinates (labels travel with their values).
pub fn gen_permutation_coupled<R: Rng + ?Sized>(base: &LabeledSample, rng: &mut R) -> LabeledSample {
    permute(base, rng)
}

pub fn gen_block_rm<R: Rng + ?Sized>(
    layout: &[usize],
    true_counts: &[usize],
    coupling: Coupling,
    alt: Alternative,
    rng: &mut R,
) -> Result<LabeledSample> {
    generate(
        &ModelSpec::BlockRm {
            layout: layout.to_vec(),
            true_counts: true_counts.to_vec(),
            coupling,
            alt,
        },
        rng,
    )
}
