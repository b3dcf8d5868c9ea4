use stepup_core::calibration::{check_necessary, find_k0, worst_case_fdr};
use stepup_core::schedules::{bh_schedule, capped_schedule, gavrilov_schedule, parametric_schedule};

#[test]
fn worst_case_strictly_increases_in_a() {
    let (n, alpha, b) = (12, 0.05, 1.0);
    let mut prev = 0.0;
    for i in 1..=20 {
        let a = 0.05 * i as f64;
        let (w, _) = worst_case_fdr(&parametric_schedule(n, alpha, a, b).unwrap()).unwrap();
        assert!(w > prev, "a = {a}: {w} <= {prev}");
        prev = w;
    }
}

#[test]
fn worst_case_non_decreasing_in_k() {
    let base = gavrilov_schedule(40, 0.05).unwrap();
    let mut prev = 0.0;
    for k in 1..=40 {
        let (w, _) = worst_case_fdr(&capped_schedule(&base, k).unwrap()).unwrap();
        assert!(w >= prev - 1e-15, "k = {k}: {w} < {prev}");
        prev = w;
    }
}

#[test]
fn k0_is_the_largest_passing_cap() {
    let alpha = 0.05;
    let base = gavrilov_schedule(60, alpha).unwrap();
    let eps = 1e-3;
    let r = find_k0(&base, alpha, eps).unwrap();
    let k0 = r.value as usize;
    let w = |k| worst_case_fdr(&capped_schedule(&base, k).unwrap()).unwrap().0;
    assert!(w(k0) <= alpha + eps);
    if k0 < 60 {
        assert!(w(k0 + 1) > alpha + eps);
    }
}

#[test]
fn passing_audits_for_controlling_families() {
    for n in [5, 50, 300] {
        assert!(check_necessary(&bh_schedule(n, 0.05).unwrap(), 0.05).unwrap().passed);
        assert!(check_necessary(&gavrilov_schedule(n, 0.05).unwrap(), 0.05).unwrap().passed);
    }
}

#[test]
fn failing_audits_exceed_alpha() {
    let alpha = 0.05;
    for n in [4, 10, 25] {
        for (a, b) in [(0.6, 0.3), (0.5, 0.2), (0.3, 0.1)] {
            let s = parametric_schedule(n, alpha, a, b).unwrap();
            let audit = check_necessary(&s, alpha).unwrap();
            assert!(!audit.passed, "n={n} a={a} b={b}");
            let (w, _) = worst_case_fdr(&s).unwrap();
            assert!(w > alpha, "n={n} a={a} b={b}: {w}");
        }
    }
}
