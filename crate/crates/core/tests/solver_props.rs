use proptest::prelude::*;
use rwre_core::geometry::{BoxSpec, Rotation};
use rwre_core::solver::{exact_exit, exact_exit_with, rho_moment, sample_rho, Method, SolverOptions};
use rwre_core::{Environment, EnvironmentLaw};

fn axis_box(lm: f64, lp: f64, lt: f64) -> BoxSpec {
    BoxSpec::new(Rotation::new(&[1.0, 0.0]).unwrap(), lm, lp, lt).unwrap()
}

fn opts(method: Method) -> SolverOptions {
    SolverOptions {
        method,
        ..Default::default()
    }
}

#[test]
fn quasi_one_dimensional_ruin() {
    // faces at x = -5 and x = 5; side exits at |y| >= 60 are negligible
    let law = EnvironmentLaw::homogeneous(2, 0.1, vec![0.4, 0.1, 0.25, 0.25]).unwrap();
    let env = Environment::new(&law, 0).unwrap();
    let s = exact_exit(&env, &axis_box(4.5, 4.5, 60.0), &[0, 0]).unwrap();
    let t5 = 0.25f64.powi(5);
    assert!((s.q - t5 / (1.0 + t5)).abs() < 1e-10, "{}", s.q);
    assert!((s.p + s.q - 1.0).abs() < 1e-12);
}

#[test]
fn symmetric_boxes_favor_the_back() {
    // the positive face is narrower than the rest of the boundary
    let law = EnvironmentLaw::symmetric(2).unwrap();
    let b = axis_box(9.0, 11.0, 31.0);
    let r = sample_rho(&law, &b, 3, 1, &SolverOptions::default()).unwrap();
    assert!(r.min() >= 1.0, "{}", r.min());
    assert_eq!(rho_moment(&law, &b, 0.5, 2, 1).unwrap().std_error, 0.0);
}

#[test]
fn transverse_relabeling() {
    let p1 = vec![0.3, 0.1, 0.25, 0.15, 0.1, 0.1];
    let p2 = vec![0.3, 0.1, 0.1, 0.1, 0.25, 0.15];
    let b = BoxSpec::new(Rotation::new(&[1.0, 0.0, 0.0]).unwrap(), 3.0, 4.0, 4.0).unwrap();
    let s = |p: Vec<f64>| {
        let env = Environment::new(&EnvironmentLaw::homogeneous(3, 0.1, p).unwrap(), 0).unwrap();
        exact_exit(&env, &b, &[0, 0, 0]).unwrap()
    };
    let (a, c) = (s(p1), s(p2));
    assert!((a.p - c.p).abs() < 1e-12 && (a.rho - c.rho).abs() < 1e-9 * a.rho);
}

#[test]
fn larger_boxes_go_through_relaxation() {
    let law = EnvironmentLaw::dirichlet_floor(2, 0.05, vec![3.0, 1.0, 1.0, 1.0]).unwrap();
    let env = Environment::new(&law, 4).unwrap();
    let b = axis_box(40.0, 40.0, 80.0);
    let auto = exact_exit(&env, &b, &[0, 0]).unwrap();
    assert!(auto.interior_size > 10_000);
    let direct = exact_exit_with(&env, &b, &[0, 0], &opts(Method::Direct)).unwrap();
    assert!((auto.p - direct.p).abs() < 1e-9);
}

#[test]
fn residual_and_face_monotonicity() {
    let law = EnvironmentLaw::dirichlet_floor(2, 0.05, vec![1.0; 4]).unwrap();
    for seed in 0..5 {
        let env = Environment::new(&law, seed).unwrap();
        let mut last = 0.0;
        for lt in [2.0, 4.0, 6.0, 9.0] {
            let s = exact_exit(&env, &axis_box(5.0, 5.0, lt), &[0, 0]).unwrap();
            assert!(s.residual <= 1e-12, "{}", s.residual);
            assert!(s.p >= last - 1e-12, "seed {seed}, L~ = {lt}");
            last = s.p;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn direct_matches_relaxation(seed in any::<u64>(), angle in 0.0f64..std::f64::consts::FRAC_PI_2) {
        let law = EnvironmentLaw::dirichlet_floor(2, 0.05, vec![2.0, 1.0, 1.0, 1.0]).unwrap();
        let env = Environment::new(&law, seed).unwrap();
        let b = BoxSpec::new(Rotation::new(&[angle.cos(), angle.sin()]).unwrap(), 4.0, 5.0, 6.0).unwrap();
        let d = exact_exit_with(&env, &b, &[0, 0], &opts(Method::Direct)).unwrap();
        let r = exact_exit_with(&env, &b, &[0, 0], &opts(Method::Relaxation)).unwrap();
        prop_assert!((d.p - r.p).abs() <= 1e-10);
        prop_assert!(d.p > 0.0 && d.p < 1.0);
        prop_assert!((d.p + d.q - 1.0).abs() < 1e-12);
    }

    #[test]
    fn front_exit_grows_with_drift(b1 in 0.0f64..0.1, extra in 0.01f64..0.1) {
        let vec_for = |b: f64| vec![0.25 + b, 0.25 - b, 0.25, 0.25];
        let bx = axis_box(5.0, 5.0, 8.0);
        let p = |b: f64| {
            let law = EnvironmentLaw::homogeneous(2, 0.05, vec_for(b)).unwrap();
            exact_exit(&Environment::new(&law, 0).unwrap(), &bx, &[0, 0]).unwrap().p
        };
        prop_assert!(p(b1 + extra) > p(b1));
    }
}
