use std::cmp::Ordering;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use num_rational::BigRational;
use num_traits::{One, Pow};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use rwre_core::conditions::{
    default_a_grid, effective_criterion, fit_gamma, fit_gamma_from_points, CriterionConstants,
    DecayPoint, Verdict,
};
use rwre_core::geometry::{BoxSpec, Rotation};
use rwre_core::renorm::{
    build_scales, build_scales_scaled, check_g, gamma_at, gamma_effective, propagate_phi,
    superadditivity_check, Phi0, ScaleParams,
};
use rwre_core::solver::{exact_exit_with, Method, SolverOptions};
use rwre_core::walk::{default_box_cap, mc_slab_estimate, run_box};
use rwre_core::{Environment, EnvironmentLaw, ExitLabel, Rounding, Sampling, Sign, TowerReal};

type Outcome = Result<String, String>;
type Criterion = (u32, &'static str, u64, fn() -> Outcome);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn biased() -> EnvironmentLaw {
    EnvironmentLaw::homogeneous(2, 0.1, vec![0.4, 0.1, 0.25, 0.25]).unwrap()
}

fn slab_p(law: &EnvironmentLaw, l: f64, replicas: u64, seed: u64) -> (f64, u64) {
    let s = mc_slab_estimate(law, &[1.0, 0.0], l, Sampling::Annealed { replicas }, None, seed)
        .unwrap()
        .pooled;
    (s.p_hat, s.replicas - s.cap_hits)
}

fn symmetry() -> Outcome {
    let law = EnvironmentLaw::symmetric(2).unwrap();
    let (p, n) = slab_p(&law, 10.0, 100_000, 1);
    let sigma = (0.25 / n as f64).sqrt();
    check((p - 0.5).abs() <= 3.0 * sigma, || format!("p = {p}, sigma = {sigma:.3e}"))?;
    Ok(format!("p = {p:.5}, |p - 0.5| / sigma = {:.2}", (p - 0.5).abs() / sigma))
}

fn gamblers_ruin() -> Outcome {
    let mut z = Vec::new();
    for l in [2i32, 4, 8] {
        let t = 0.25f64.powi(l);
        let exact = t / (1.0 + t);
        let (p, n) = slab_p(&biased(), l as f64, 1_000_000, 2);
        let sigma = (exact * (1.0 - exact) / n as f64).sqrt();
        let dev = (p - exact).abs() / sigma;
        check(dev <= 3.0, || format!("L = {l}: p = {p}, exact {exact}, {dev:.2} sigma"))?;
        z.push(format!("L={l}: {dev:.2}"));
    }
    Ok(format!("deviations in sigma {}", z.join(", ")))
}

fn solver_equivalence() -> Outcome {
    let law = EnvironmentLaw::dirichlet_floor(2, 0.05, vec![2.0, 1.0, 1.0, 1.0]).unwrap();
    let b = BoxSpec::new(Rotation::new(&[1.0, 0.0]).unwrap(), 4.5, 4.5, 4.5).unwrap();
    let opts = |method| SolverOptions { method, ..Default::default() };
    let replicas = 100_000u64;
    let cap = default_box_cap(4.5, 4.5);
    let (mut max_diff, mut max_dev) = (0.0f64, 0.0f64);
    for seed in 1..=5u64 {
        let env = Environment::new(&law, seed).unwrap();
        let d = exact_exit_with(&env, &b, &[0, 0], &opts(Method::Direct)).unwrap();
        let r = exact_exit_with(&env, &b, &[0, 0], &opts(Method::Relaxation)).unwrap();
        check(d.interior_size == 81, || format!("interior has {} sites", d.interior_size))?;
        max_diff = max_diff.max((d.p - r.p).abs());
        let (hits, resolved) = (0..replicas)
            .into_par_iter()
            .map(|i| match run_box(&env, &b, &[0, 0], cap, 100 + seed, i).unwrap().label {
                ExitLabel::ExitPositiveBoundary => (1u64, 1u64),
                ExitLabel::CapHit => (0, 0),
                _ => (0, 1),
            })
            .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
        let p_hat = hits as f64 / resolved as f64;
        let sigma = (d.p * (1.0 - d.p) / resolved as f64).sqrt();
        max_dev = max_dev.max((p_hat - d.p).abs() / sigma);
    }
    check(max_diff <= 1e-10, || format!("direct vs relaxation differ by {max_diff:.3e}"))?;
    check(max_dev <= 3.0, || format!("Monte Carlo off by {max_dev:.2} sigma"))?;
    Ok(format!("max |dp| = {max_diff:.2e}, max MC deviation {max_dev:.2} sigma"))
}

fn exact(x: f64) -> BigRational {
    BigRational::from_float(x).unwrap()
}

fn tower_exact(x: &TowerReal) -> BigRational {
    assert_eq!(x.height(), 0);
    let m = exact(x.mantissa());
    let v = if x.is_reciprocal() { BigRational::one() / m } else { m };
    if x.sign() == Sign::Negative {
        -v
    } else {
        v
    }
}

fn exact_pow(x: &BigRational, e: i32) -> BigRational {
    if e >= 0 {
        Pow::pow(x, e as u32)
    } else {
        BigRational::one() / Pow::pow(x, (-e) as u32)
    }
}

fn tower_soundness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let t = |x: f64| TowerReal::from_f64(x).unwrap();
    let (down, up) = (Rounding::Down, Rounding::Up);
    let mut worst_rt = 0.0f64;
    for i in 0..10_000 {
        // products: signed values over six decades
        let mut signed = || {
            let v = rng.random_range(1.0..10.0) * 10f64.powf(rng.random_range(-3.0..3.0));
            if rng.random_bool(0.5) { -v } else { v }
        };
        let (x, y) = (signed(), signed());
        let (a, b) = (t(x), t(y));
        let lo = a.mul(&b, down).to_f64_rounded(down);
        let hi = a.mul(&b, up).to_f64_rounded(up);
        let prod = tower_exact(&a) * tower_exact(&b);
        check(exact(lo) <= prod && prod <= exact(hi), || format!("pair {i}: {x} * {y} not in [{lo}, {hi}]"))?;

        // rational powers a^(r/q): compare lo^q and hi^q with a^r exactly
        let base = rng.random_range(1e-3..1e3);
        let r = loop {
            let r = rng.random_range(-12i32..=12);
            if r != 0 {
                break r;
            }
        };
        let q = [1i32, 2, 4][rng.random_range(0..3)];
        let p = r as f64 / q as f64;
        let a = t(base);
        let lo = a.pow(p, down).unwrap().to_f64_rounded(down);
        let hi = a.pow(p, up).unwrap().to_f64_rounded(up);
        let xr = exact_pow(&tower_exact(&a), r);
        check(exact_pow(&exact(lo), q) <= xr && exact_pow(&exact(hi), q) >= xr, || {
            format!("pair {i}: {base}^{p} not in [{lo}, {hi}]")
        })?;

        // order and round trip over the whole float range
        let mut wide = || {
            let v = rng.random_range(1.0..10.0) * 10f64.powf(rng.random_range(-300.0..300.0));
            if rng.random_bool(0.5) { -v } else { v }
        };
        let (x, y) = (wide(), wide());
        check(t(x).compare(&t(y)) == x.partial_cmp(&y).unwrap(), || format!("pair {i}: order of {x}, {y}"))?;
        let rt = ((t(x).to_f64() - x) / x).abs();
        worst_rt = worst_rt.max(rt);
        check(rt <= 1e-12, || format!("pair {i}: round trip of {x} off by {rt:.2e}"))?;
    }
    // values beyond f64 still order correctly
    let e400 = t(8.0).pow(400.0, Rounding::Nearest).unwrap();
    let e401 = t(8.0).pow(401.0, Rounding::Nearest).unwrap();
    check(e400.compare(&e401) == Ordering::Less, || "8^400 >= 8^401".into())?;
    Ok(format!("10^4 pairs, worst round trip {worst_rt:.1e}"))
}

fn renorm_certificate() -> Outcome {
    let params = ScaleParams::new(2, 0.25, 1e4).unwrap();
    check(params.c3 == 2.0 && params.c4 == 2.0, || "c3, c4 defaults changed".into())?;
    let seq = build_scales(&params, 41).unwrap();
    let g = check_g(&seq);
    check(g.len() == 41, || format!("{} rows", g.len()))?;
    if let Some(r) = g.iter().find(|r| !(r.g1 && r.g2)) {
        return Err(format!("(G) fails at k = {} (g1 {}, g2 {})", r.k, r.g1, r.g2));
    }
    let phi = propagate_phi(Phi0::Log(-3.0), &seq, 40).unwrap();
    check(phi.first_failure.is_none(), || format!("phi fails at k = {:?}", phi.first_failure))?;

    let n = seq.k_max() + 1;
    let perturbed = build_scales_scaled(&params, 41, &vec![1e-6; n]).unwrap();
    let broken: Vec<usize> = check_g(&perturbed).iter().filter(|r| !r.g1).map(|r| r.k).collect();
    let million = TowerReal::from_f64(1e6).unwrap();
    let predicted: Vec<usize> = g.iter().filter(|r| r.g1_ratio < million).map(|r| r.k).collect();
    check(!broken.is_empty() && broken == predicted, || {
        format!("perturbation breaks g1 at {broken:?}, margins predict {predicted:?}")
    })?;
    Ok(format!("g1, g2 and phi hold for k <= 40; N/1e6 breaks g1 at k = {broken:?}"))
}

fn superadditivity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut failures = Vec::new();
    for _ in 0..1000 {
        let n = rng.random_range(1u32..=5);
        let (a, b) = (rng.random_range(1.0..=8.0), rng.random_range(1.0..=8.0));
        match superadditivity_check(n, a, b) {
            Ok(true) => {}
            other => failures.push(format!("n={n} a={a} b={b}: {other:?}")),
        }
    }
    check(failures.is_empty(), || format!("{} failures, first {}", failures.len(), failures[0]))?;
    Ok("1000 cases, 0 failures".into())
}

fn gamma_gap() -> Outcome {
    let seq = build_scales(&ScaleParams::new(2, 0.25, 1e4).unwrap(), 41).unwrap();
    let mut problems = Vec::new();
    let reports: Vec<_> = (4..=40)
        .map(|k| gamma_at(&seq.get(k).l.est, k, 1.0).unwrap())
        .collect();
    for w in reports.windows(2) {
        if w[1].iterlog.compare(&w[0].iterlog) != Ordering::Greater {
            problems.push(format!(
                "iterated log not increasing: k = {} gives {}, k = {} gives {}",
                w[0].k, w[0].iterlog, w[1].k, w[1].iterlog
            ));
            break;
        }
    }
    let ratios: Vec<TowerReal> = reports.iter().map(|r| r.gap_ratio()).collect();
    if let Some(i) = ratios.windows(2).position(|w| w[1].compare(&w[0]) != Ordering::Less) {
        problems.push(format!("gap ratio not decreasing at k = {}", i + 5));
    }
    let first = ratios[0].mul_f64(0.01, Rounding::Nearest);
    if ratios.last().unwrap().compare(&first) != Ordering::Less {
        problems.push("final gap ratio not below 1% of the initial one".into());
    }
    let spot_seq = build_scales(&ScaleParams::new(2, 0.25, 1000.0).unwrap(), 10).unwrap();
    let l = TowerReal::from(8u32).pow(64.0, Rounding::Nearest).unwrap();
    let spot = gamma_effective(&l, &spot_seq).unwrap();
    if spot.gamma_iterated != 0.96875 || spot.gamma_sznitman != 0.875 {
        problems.push(format!("spot values {} and {}", spot.gamma_iterated, spot.gamma_sznitman));
    }
    let held = 3 - problems.len().min(3);
    check(problems.is_empty(), || format!("{}; {held} of 3 sub-checks hold", problems.join("; ")))?;
    Ok(format!(
        "iterated logs increase, gap ratio falls to {:.3e} of its start, spot values match",
        ratios.last().unwrap().div(&ratios[0], Rounding::Nearest).unwrap().to_f64()
    ))
}

fn fit_recovery() -> Outcome {
    let grid = [4.0, 8.0, 16.0, 32.0];
    let pts = |f: &dyn Fn(f64) -> f64| -> Vec<DecayPoint> {
        grid.iter().map(|&l| DecayPoint { l, p: f(l), std_error: 0.0 }).collect()
    };
    let g1 = fit_gamma_from_points(&pts(&|l| (-0.3 * l).exp())).unwrap().gamma_hat;
    let g2 = fit_gamma_from_points(&pts(&|l| (-0.7 * l.sqrt()).exp())).unwrap().gamma_hat;
    check((g1 - 1.0).abs() <= 1e-6, || format!("e^(-cL) fit {g1}"))?;
    check((g2 - 0.5).abs() <= 1e-6, || format!("e^(-c sqrt L) fit {g2}"))?;
    // theta = 0.6, so p(16) is about 3e-4 and every grid point is observed
    let law = EnvironmentLaw::homogeneous(2, 0.1875, vec![0.3125, 0.1875, 0.25, 0.25]).unwrap();
    let r = fit_gamma(&law, &[1.0, 0.0], &[4.0, 8.0, 16.0], 1_000_000, 8, 0.5).unwrap();
    let g = r.statistic.ok_or("no fit")?;
    check((0.9..=1.1).contains(&g), || format!("noisy fit {g}"))?;
    let ruin = |l: f64| 0.6f64.powf(l) / (1.0 + 0.6f64.powf(l));
    let closed: Vec<DecayPoint> = [4.0, 8.0, 16.0].iter().map(|&l| DecayPoint { l, p: ruin(l), std_error: 0.0 }).collect();
    let g_exact = fit_gamma_from_points(&closed).unwrap().gamma_hat;
    // at theta = 0.25, p(16) ~ 2e-10 is never observed in 1e6 walks
    let steep = fit_gamma(&biased(), &[1.0, 0.0], &[4.0, 8.0, 16.0], 1_000_000, 8, 0.5).unwrap();
    Ok(format!(
        "synthetic {g1:.9}, {g2:.9}; theta 0.6 noisy {g:.4} CI ({:.4}, {:.4}), closed form {g_exact:.4}; theta 0.25 {} with {} point(s) dropped",
        r.ci.unwrap().0,
        r.ci.unwrap().1,
        steep.verdict,
        steep.evidence.iter().filter(|e| e.estimate == 0.0).count(),
    ))
}

fn effective_sanity() -> Outcome {
    let consts = CriterionConstants::default();
    let grid = default_a_grid();
    let sym = EnvironmentLaw::symmetric(2).unwrap();
    let r = effective_criterion(&sym, &[1.0, 0.0], 10.0, 31.0, &grid, 20, consts, 9).unwrap();
    check(r.verdict == Verdict::Fail, || format!("symmetric verdict {}", r.verdict))?;
    check(r.metadata["certified_fail"] == true, || "symmetric fail not certified".into())?;
    let law = EnvironmentLaw::dirichlet_floor(2, 0.05, vec![4.0, 1.0, 2.0, 2.0]).unwrap();
    let run = |seed| effective_criterion(&law, &[1.0, 0.0], 10.0, 31.0, &grid, 400, consts, seed).unwrap();
    let (a, b) = (run(1), run(2));
    let (ca, cb) = (a.ci.unwrap(), b.ci.unwrap());
    check(a.verdict == b.verdict, || format!("verdicts {} and {}", a.verdict, b.verdict))?;
    check(ca.0 <= cb.1 && cb.0 <= ca.1, || format!("intervals {ca:?} and {cb:?} are disjoint"))?;
    Ok(format!(
        "symmetric certified fail; biased {} with {:.1} and {:.1}",
        a.verdict,
        a.statistic.unwrap(),
        b.statistic.unwrap()
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        (1, "symmetry oracle", 30, symmetry),
        (2, "gambler's ruin oracle", 120, gamblers_ruin),
        (3, "solver equivalence", 60, solver_equivalence),
        (4, "tower arithmetic soundness", 5, tower_soundness),
        (5, "renormalization certificate", 5, renorm_certificate),
        (6, "superadditivity suite", 5, superadditivity),
        (7, "gamma gap", 5, gamma_gap),
        (8, "fit_gamma recovery", 120, fit_recovery),
        (9, "effective criterion sanity", 120, effective_sanity),
    ];
    let mut failed = 0;
    for (n, name, budget, f) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let took = start.elapsed();
        let outcome = match outcome {
            Ok(m) if took > Duration::from_secs(budget) => {
                Err(format!("{m}; took {took:.1?}, budget {budget} s"))
            }
            o => o,
        };
        match outcome {
            Ok(m) => println!("criterion {n} ({name}): PASS [{took:.2?}] {m}"),
            Err(m) => {
                failed += 1;
                println!("criterion {n} ({name}): FAIL [{took:.2?}] {m}");
            }
        }
    }
    println!("acceptance: {} of 9 criteria passed", 9 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
