use proptest::prelude::*;
use rwre_core::geometry::{BoxSpec, Rotation};
use rwre_core::walk::{mc_box_estimate, mc_slab_estimate, run_box, run_slab, BoxEvent};
use rwre_core::{Environment, EnvironmentLaw, ExitLabel, Sampling};

fn biased() -> EnvironmentLaw {
    EnvironmentLaw::homogeneous(2, 0.1, vec![0.4, 0.1, 0.25, 0.25]).unwrap()
}

fn ruin(theta: f64, l: i32) -> f64 {
    theta.powi(l) / (1.0 + theta.powi(l))
}

#[test]
fn zero_cap_stops_at_start() {
    let env = Environment::new(&biased(), 0).unwrap();
    let o = run_slab(&env, &[1.0, 0.0], 4.0, 4.0, &[0, 0], 0, 1, 0).unwrap();
    assert_eq!(o.label, ExitLabel::CapHit);
    assert_eq!(o.steps, 0);
    assert_eq!(o.final_site, vec![0, 0]);
}

#[test]
fn start_outside_is_rejected() {
    let env = Environment::new(&biased(), 0).unwrap();
    assert!(run_slab(&env, &[1.0, 0.0], 4.0, 4.0, &[4, 0], 10, 1, 0).is_err());
    let b = BoxSpec::new(Rotation::new(&[1.0, 0.0]).unwrap(), 2.0, 2.0, 2.0).unwrap();
    assert!(run_box(&env, &b, &[5, 0], 10, 1, 0).is_err());
}

#[test]
fn gamblers_ruin_small_widths() {
    for (l, expect) in [(2, 0.058823529411764705), (4, 0.0038910505836575876)] {
        assert!((ruin(0.25, l) - expect).abs() < 1e-16);
        let s = mc_slab_estimate(
            &biased(),
            &[1.0, 0.0],
            l as f64,
            Sampling::Annealed { replicas: 200_000 },
            None,
            31,
        )
        .unwrap()
        .pooled;
        assert_eq!(s.cap_hits, 0);
        let sigma = (expect * (1.0 - expect) / s.replicas as f64).sqrt();
        assert!((s.p_hat - expect).abs() <= 4.0 * sigma, "L = {l}: {} vs {expect}", s.p_hat);
        assert!(s.ci_low <= s.p_hat && s.p_hat <= s.ci_high);
    }
}

#[test]
fn gamblers_ruin_half() {
    let law = EnvironmentLaw::homogeneous(2, 0.1, vec![1.0 / 3.0, 1.0 / 6.0, 0.25, 0.25]).unwrap();
    for l in [2, 4, 8] {
        let expect = ruin(0.5, l);
        let s = mc_slab_estimate(&law, &[1.0, 0.0], l as f64, Sampling::Annealed { replicas: 100_000 }, None, 8)
            .unwrap()
            .pooled;
        let sigma = (expect * (1.0 - expect) / s.replicas as f64).sqrt();
        assert!((s.p_hat - expect).abs() <= 4.0 * sigma, "L = {l}: {} vs {expect}", s.p_hat);
    }
}

#[test]
fn two_point_with_full_weight_is_homogeneous() {
    let plus = vec![0.4, 0.1, 0.25, 0.25];
    let tp = EnvironmentLaw::two_point(2, 0.1, plus.clone(), vec![0.1, 0.4, 0.25, 0.25], 1.0).unwrap();
    let est = |law: &EnvironmentLaw, seed| {
        mc_slab_estimate(law, &[1.0, 0.0], 3.0, Sampling::Annealed { replicas: 100_000 }, None, seed)
            .unwrap()
            .pooled
            .p_hat
    };
    let (a, b) = (est(&tp, 1), est(&biased(), 2));
    let p = ruin(0.25, 3);
    let sigma = (2.0 * p * (1.0 - p) / 100_000.0).sqrt();
    assert!((a - b).abs() <= 3.0 * sigma, "{a} vs {b}");
}

#[test]
fn symmetric_slab_is_fair() {
    let s = mc_slab_estimate(
        &EnvironmentLaw::symmetric(2).unwrap(),
        &[1.0, 0.0],
        5.0,
        Sampling::Annealed { replicas: 40_000 },
        None,
        3,
    )
    .unwrap()
    .pooled;
    assert!((s.p_hat - 0.5).abs() < 4.0 * 0.5 / 200.0, "{}", s.p_hat);
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let law = EnvironmentLaw::dirichlet_floor(2, 0.1, vec![2.0, 1.0, 1.0, 1.0]).unwrap();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                mc_slab_estimate(
                    &law,
                    &[1.0, 0.0],
                    6.0,
                    Sampling::Quenched {
                        env_count: 8,
                        walks_per_env: 500,
                    },
                    None,
                    77,
                )
                .unwrap()
            })
    };
    let a = run(1);
    let b = run(4);
    assert_eq!(a, b);
    assert_eq!(a.per_env.len(), 8);
    assert_eq!(a.per_env.iter().map(|s| s.replicas).sum::<u64>(), 4000);
}

#[test]
fn box_event_counts_side_exits() {
    // L~ = 0.5 leaves a single row, so any transverse step leaves the box
    let b = BoxSpec::new(Rotation::new(&[1.0, 0.0]).unwrap(), 3.0, 3.0, 0.5).unwrap();
    let s = mc_box_estimate(
        &EnvironmentLaw::symmetric(2).unwrap(),
        &b,
        BoxEvent::NotPositiveBoundary,
        Sampling::Annealed { replicas: 20_000 },
        None,
        9,
    )
    .unwrap()
    .pooled;
    assert!(s.p_hat > 0.8, "{}", s.p_hat);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn outcome_invariants(seed in any::<u64>(), replica in 0u64..1000, cap in 0u64..60) {
        let law = EnvironmentLaw::dirichlet_floor(2, 0.05, vec![1.0; 4]).unwrap();
        let env = Environment::new(&law, seed).unwrap();
        let o = run_slab(&env, &[0.6, 0.8], 3.0, 3.0, &[0, 0], cap, seed, replica).unwrap();
        prop_assert!(o.steps <= cap);
        let x = &o.final_site;
        let proj = 0.6 * x[0] as f64 + 0.8 * x[1] as f64;
        match o.label {
            ExitLabel::CapHit => {
                prop_assert_eq!(o.steps, cap);
                prop_assert!(proj > -3.0 && proj < 3.0);
            }
            ExitLabel::ExitPlus => prop_assert!(proj >= 3.0 - 1e-9),
            ExitLabel::ExitMinus => prop_assert!(proj <= -3.0 + 1e-9),
            other => prop_assert!(false, "unexpected label {:?}", other),
        }
        let again = run_slab(&env, &[0.6, 0.8], 3.0, 3.0, &[0, 0], cap, seed, replica).unwrap();
        prop_assert_eq!(o, again);
    }
}
