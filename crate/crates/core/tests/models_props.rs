use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stepup_core::models::{generate, Alternative, Coupling, ModelSpec, TrueNulls};

/// Asymptotic KS critical value (scaled by √n) at level `level`.
fn ks_crit(level: f64) -> f64 {
    (-(level / 2.0).ln() / 2.0).sqrt()
}

fn ks_uniform(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| (x - i as f64 / n).max((i + 1) as f64 / n - x))
        .fold(0.0, f64::max)
}

fn families() -> Vec<ModelSpec> {
    vec![
        ModelSpec::Bi { n: 6, n0: TrueNulls::Bernoulli(0.5), alt: Alternative::Power { gamma: 0.3 } },
        ModelSpec::Du { n: 5, n0: 3 },
        ModelSpec::BivariateNormal { rho: 0.6 },
        ModelSpec::MarshallOlkin { n: 4 },
        ModelSpec::BlockEqui { k: 2, m: 3 },
        ModelSpec::FullDependence { n: 3 },
        ModelSpec::PermutationCoupled { base: Box::new(ModelSpec::MarshallOlkin { n: 3 }) },
        ModelSpec::BlockRm {
            layout: vec![3, 2],
            true_counts: vec![2, 2],
            coupling: Coupling::Iid,
            alt: Alternative::Uniform { upper: 0.2 },
        },
    ]
}

#[test]
fn true_null_marginals_are_uniform() {
    let draws = 20_000;
    // family-wise 1% over every tested coordinate
    let coords: usize = families().iter().map(ModelSpec::n).sum();
    let crit = ks_crit(0.01 / coords as f64);
    for (f, spec) in families().iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + f as u64);
        let mut cols: Vec<Vec<f64>> = vec![Vec::new(); spec.n()];
        for _ in 0..draws {
            let s = generate(spec, &mut rng).unwrap();
            for (i, (&p, &t)) in s.p().iter().zip(s.eps().unwrap()).enumerate() {
                if t {
                    cols[i].push(p);
                }
            }
        }
        for (i, col) in cols.into_iter().enumerate().filter(|(_, c)| c.len() > 200) {
            let m = col.len();
            let d = ks_uniform(col);
            assert!(d * (m as f64).sqrt() < crit, "{} coordinate {i}: D = {d}", spec.family());
        }
    }
}

#[test]
fn marshall_olkin_all_tied_with_probability_one_over_n_plus_one() {
    let n = 4;
    let draws = 200_000;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let spec = ModelSpec::MarshallOlkin { n };
    let tied = (0..draws)
        .filter(|_| {
            let s = generate(&spec, &mut rng).unwrap();
            s.p().iter().all(|&p| p == s.p()[0])
        })
        .count() as f64
        / draws as f64;
    let target = 1.0 / (n + 1) as f64;
    let se = (target * (1.0 - target) / draws as f64).sqrt();
    assert!((tied - target).abs() < 4.0 * se, "{tied} vs {target}");
}

#[test]
fn same_seed_same_sample() {
    for spec in families() {
        let a = generate(&spec, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = generate(&spec, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b, "{}", spec.family());
    }
}

#[test]
fn permutation_keeps_label_pairs() {
    let base = ModelSpec::BlockRm {
        layout: vec![4],
        true_counts: vec![2],
        coupling: Coupling::Equi,
        alt: Alternative::Dirac0,
    };
    let spec = ModelSpec::PermutationCoupled { base: Box::new(base) };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut first_true = 0;
    for _ in 0..4000 {
        let s = generate(&spec, &mut rng).unwrap();
        for (&p, &t) in s.p().iter().zip(s.eps().unwrap()) {
            // false nulls sit at 0, true nulls are a shared uniform
            assert_eq!(t, p > 0.0);
        }
        first_true += s.eps().unwrap()[0] as usize;
    }
    // each position is a true null half the time
    assert!((first_true as f64 / 4000.0 - 0.5).abs() < 0.04);
}

#[test]
fn invalid_specs_are_refused() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(generate(&ModelSpec::Du { n: 3, n0: 4 }, &mut rng).is_err());
    assert!(generate(&ModelSpec::BivariateNormal { rho: 1.5 }, &mut rng).is_err());
    let bad = ModelSpec::BlockRm { layout: vec![2], true_counts: vec![3], coupling: Coupling::Equi, alt: Alternative::Dirac0 };
    assert!(generate(&bad, &mut rng).is_err());
}
