use proptest::prelude::*;
use rwre_core::conditions::{
    check_polynomial, effective_criterion, fit_gamma, fit_gamma_from_points, CriterionConstants,
    DecayPoint, Verdict,
};
use rwre_core::EnvironmentLaw;

fn biased() -> EnvironmentLaw {
    EnvironmentLaw::homogeneous(2, 0.1, vec![0.4, 0.1, 0.25, 0.25]).unwrap()
}

fn points(grid: &[f64], c: f64, gamma: f64) -> Vec<DecayPoint> {
    grid.iter()
        .map(|&l| DecayPoint {
            l,
            p: (-c * l.powf(gamma)).exp(),
            std_error: 0.0,
        })
        .collect()
}

#[test]
fn polynomial_verdicts() {
    let l = [1.0, 0.0];
    let pass = check_polynomial(&biased(), &l, 8.0, 2.0, &[64.0], 20_000, 1).unwrap();
    assert_eq!(pass.verdict, Verdict::Pass, "{:?}", pass.evidence);
    let sym = EnvironmentLaw::symmetric(2).unwrap();
    let fail = check_polynomial(&sym, &l, 10.0, 2.0, &[31.0], 20_000, 1).unwrap();
    assert_eq!(fail.verdict, Verdict::Fail, "{:?}", fail.evidence);
    // L^-35 is far below anything 2e4 walks can resolve
    let inc = check_polynomial(&biased(), &l, 8.0, 35.0, &[64.0], 20_000, 1).unwrap();
    assert_eq!(inc.verdict, Verdict::Inconclusive);
}

#[test]
fn reruns_are_identical() {
    let law = EnvironmentLaw::homogeneous(2, 0.1, vec![0.35, 0.15, 0.25, 0.25]).unwrap();
    let run = || fit_gamma(&law, &[1.0, 0.0], &[2.0, 4.0, 6.0], 20_000, 5, 0.5).unwrap();
    let (a, b) = (run(), run());
    assert_eq!(a.verdict, b.verdict);
    assert_eq!(a.statistic, b.statistic);
    assert_eq!(a.evidence, b.evidence);
}

#[test]
fn larger_grid_lowers_the_infimum() {
    let law = EnvironmentLaw::dirichlet_floor(2, 0.05, vec![4.0, 1.0, 2.0, 2.0]).unwrap();
    let run = |grid: &[f64]| {
        effective_criterion(&law, &[1.0, 0.0], 5.0, 9.0, grid, 40, CriterionConstants::default(), 3)
            .unwrap()
            .statistic
            .unwrap()
    };
    let small = run(&[0.5, 1.0]);
    let large = run(&[0.1, 0.25, 0.5, 0.75, 1.0]);
    assert!(large <= small, "{large} > {small}");
}

#[test]
fn more_replicas_never_flip_a_verdict() {
    let sym = EnvironmentLaw::symmetric(2).unwrap();
    for (law, l, m) in [(biased(), 4.0, 2.0), (biased(), 4.0, 4.0), (sym, 6.0, 1.0)] {
        let verdicts: Vec<Verdict> = [500, 5_000, 50_000]
            .iter()
            .map(|&n| check_polynomial(&law, &[1.0, 0.0], l, m, &[16.0], n, 4).unwrap().verdict)
            .collect();
        assert!(
            !(verdicts.contains(&Verdict::Pass) && verdicts.contains(&Verdict::Fail)),
            "{verdicts:?}"
        );
    }
}

#[test]
fn transverse_relabeling_keeps_the_criterion() {
    let p1 = vec![0.3, 0.1, 0.25, 0.15, 0.1, 0.1];
    let p2 = vec![0.3, 0.1, 0.1, 0.1, 0.25, 0.15];
    let lhs = |p: Vec<f64>| {
        let law = EnvironmentLaw::homogeneous(3, 0.1, p).unwrap();
        effective_criterion(&law, &[1.0, 0.0, 0.0], 4.0, 6.0, &[0.5, 1.0], 2, CriterionConstants::default(), 1)
            .unwrap()
            .statistic
            .unwrap()
    };
    let (a, b) = (lhs(p1), lhs(p2));
    assert!((a - b).abs() <= 1e-9 * a, "{a} vs {b}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn synthetic_recovery(c in 0.05f64..2.0, gamma in 0.2f64..1.0) {
        let grid = [4.0, 8.0, 16.0, 32.0, 64.0];
        let f = fit_gamma_from_points(&points(&grid, c, gamma)).unwrap();
        prop_assert!((f.gamma_hat - gamma).abs() < 1e-6);
        prop_assert_eq!(f.used.len(), 5);
    }

    #[test]
    fn dropping_one_point_keeps_the_slope(c in 0.05f64..2.0, gamma in 0.2f64..1.0, drop in 0usize..4) {
        let mut pts = points(&[4.0, 8.0, 16.0, 32.0], c, gamma);
        pts[drop].p = 0.0;
        let f = fit_gamma_from_points(&pts).unwrap();
        prop_assert!((f.gamma_hat - gamma).abs() < 1e-6);
        prop_assert_eq!(f.dropped.len(), 1);
    }
}
