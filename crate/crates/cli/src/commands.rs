use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use serde_json::{json, Map, Value};

use rwre_core::conditions::{
    check_polynomial, default_a_grid, direction_neighborhood, effective_criterion,
    fit_gamma_neighborhood, ConditionReport, CriterionConstants, Verdict,
};
use rwre_core::geometry::{normalize, BoxConfig};
use rwre_core::renorm::{
    build_scales, case_scales, check_g, check_refined_bound, f_tower_rounded, gamma_at,
    gamma_effective, propagate_phi, Bracket, Case, GammaReport, Phi0, ScaleParams, ScaleSequence,
};
use rwre_core::solver::{exact_exit_with, Method, SolverOptions};
use rwre_core::walk::mc_slab_estimate;
use rwre_core::{BoxSpec, Environment, EnvironmentLaw, Rounding, Sampling, TowerReal};

use crate::output::{float17, Cell, Report};
use crate::{
    CaseArgs, Cli, Command, Constants, CriterionArgs, ExitArgs, FitArgs, GammaArgs, MethodArg,
    Mode, PhiArgs, PolyArgs, RoundingArg, ScaleArgs, SlabArgs, TowerArgs, TowerOp,
};

pub fn run(cli: &Cli) -> Result<ExitCode> {
    let g = &cli.global;
    if let Some(n) = g.threads {
        if n == 0 {
            bail!("--threads must be positive");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("setting up the worker pool")?;
    }
    let (report, verdict) = dispatch(&cli.command, g.seed, &g.constants)?;
    let text = report.render(g.format, &metadata(cli)?);
    match &g.out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display()))?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    if g.strict && verdict == Some(Verdict::Inconclusive) {
        return Ok(ExitCode::from(3));
    }
    Ok(ExitCode::SUCCESS)
}

fn metadata(cli: &Cli) -> Result<Map<String, Value>> {
    let c = &cli.global.constants;
    let mut config = serde_json::to_value(&cli.command)?;
    if let Value::Object(m) = &mut config {
        m.insert("seed".into(), json!(cli.global.seed));
    }
    let law = match &cli.command {
        Command::SimulateSlab(a) => Some(&a.law),
        Command::ExitExact(a) => Some(&a.law),
        Command::Polynomial(a) => Some(&a.law),
        Command::FitGamma(a) => Some(&a.law),
        Command::EffectiveCriterion(a) => Some(&a.law),
        _ => None,
    };
    let mut meta = Map::new();
    if let Some(path) = law {
        meta.insert("law".into(), serde_json::to_value(load_law(path)?)?);
    }
    meta.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
    meta.insert("config".into(), config);
    meta.insert(
        "constants".into(),
        json!({
            "c2": c.c2,
            "c3": c.c3,
            "c4": c.c4,
            "c5": 2.0 * c.c3 * c.c4,
            "c15": c.c15,
            "C_result": c.c_result,
        }),
    );
    Ok(meta)
}

fn dispatch(cmd: &Command, seed: u64, c: &Constants) -> Result<(Report, Option<Verdict>)> {
    Ok(match cmd {
        Command::SimulateSlab(a) => (simulate_slab(a, seed)?, None),
        Command::ExitExact(a) => (exit_exact(a, seed)?, None),
        Command::Polynomial(a) => with_verdict(polynomial(a, seed)?),
        Command::FitGamma(a) => fit(a, seed)?,
        Command::EffectiveCriterion(a) => with_verdict(criterion(a, seed, c)?),
        Command::Scales(a) => (scales(a, c)?, None),
        Command::CheckG(a) => (check_growth(a, c)?, None),
        Command::PropagatePhi(a) => (phi(a, c)?, None),
        Command::Gamma(a) => (gamma(a, c)?, None),
        Command::CaseScales(a) => (case(a, c)?, None),
        Command::Tower(a) => (tower(a)?, None),
    })
}

fn with_verdict(r: (Report, Verdict)) -> (Report, Option<Verdict>) {
    (r.0, Some(r.1))
}

fn load_law(path: &Path) -> Result<EnvironmentLaw> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let law: EnvironmentLaw =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    law.validate()?;
    Ok(law)
}

fn direction(l: &[f64], d: usize) -> Result<Vec<f64>> {
    if l.len() != d {
        bail!("direction has {} components, the law has d = {d}", l.len());
    }
    Ok(normalize(l)?)
}

fn join17(v: &[f64]) -> String {
    v.iter().map(|x| float17(*x)).collect::<Vec<_>>().join(" ")
}

fn simulate_slab(a: &SlabArgs, seed: u64) -> Result<Report> {
    let law = load_law(&a.law)?;
    let l = direction(&a.l, law.d)?;
    let sampling = match a.mode {
        Mode::Annealed => Sampling::Annealed { replicas: a.replicas },
        Mode::Quenched => Sampling::Quenched {
            env_count: a.env_count,
            walks_per_env: a.walks_per_env,
        },
    };
    let mut r = Report::new(&["L", "replicas", "successes", "cap_hits", "p_hat", "ci_low", "ci_high"]);
    let mut unreliable = Vec::new();
    let mut detail = Vec::new();
    for &big_l in &a.big_l {
        let est = mc_slab_estimate(&law, &l, big_l, sampling, a.cap, seed)?;
        let s = &est.pooled;
        if s.unreliable {
            unreliable.push(big_l);
        }
        r.row(vec![
            big_l.into(),
            s.replicas.into(),
            s.successes.into(),
            s.cap_hits.into(),
            s.p_hat.into(),
            s.ci_low.into(),
            s.ci_high.into(),
        ]);
        detail.push(json!({"L": big_l, "estimate": est}));
    }
    r.summary("unreliable_L", unreliable);
    r.detail(detail);
    Ok(r)
}

fn exit_exact(a: &ExitArgs, seed: u64) -> Result<Report> {
    let law = load_law(&a.law)?;
    let text = fs::read_to_string(&a.box_file)
        .with_context(|| format!("reading {}", a.box_file.display()))?;
    let cfg: BoxConfig = serde_json::from_str(&text)?;
    let b = BoxSpec::from_config(&cfg)?;
    if b.dim() != law.d {
        bail!("box has d = {}, the law has d = {}", b.dim(), law.d);
    }
    let start = a.start.clone().unwrap_or_else(|| vec![0; law.d]);
    let env = Environment::new(&law, seed)?;
    let method = match a.method {
        MethodArg::Auto => Method::Auto,
        MethodArg::Direct => Method::Direct,
        MethodArg::Relaxation => Method::Relaxation,
    };
    let opts = SolverOptions {
        method,
        ..Default::default()
    };
    let s = exact_exit_with(&env, &b, &start, &opts)?;
    let mut r = Report::new(&["p", "q", "rho", "residual", "interior_size"]);
    r.row(vec![s.p.into(), s.q.into(), s.rho.into(), s.residual.into(), s.interior_size.into()]);
    r.summary("snapped", b.snapped());
    Ok(r)
}

fn evidence_table(rep: &ConditionReport, key: &str) -> Report {
    let mut r = Report::new(&[key, "estimate", "ci_low", "ci_high", "note"]);
    for e in &rep.evidence {
        r.row(vec![
            e.value.into(),
            e.estimate.into(),
            e.ci_low.into(),
            e.ci_high.into(),
            e.note.clone().into(),
        ]);
    }
    r.summary("verdict", rep.verdict);
    r
}

fn polynomial(a: &PolyArgs, seed: u64) -> Result<(Report, Verdict)> {
    let law = load_law(&a.law)?;
    let l = direction(&a.l, law.d)?;
    let lt = a.ltilde.clone().unwrap_or_else(|| vec![70.0 * a.big_l.powi(3)]);
    let rep = check_polynomial(&law, &l, a.big_l, a.m, &lt, a.replicas, seed)?;
    let mut r = evidence_table(&rep, "ltilde");
    r.summary("threshold", a.big_l.powf(-a.m));
    r.detail(&rep);
    Ok((r, rep.verdict))
}

fn parse_directions(s: &str, d: usize) -> Result<Vec<Vec<f64>>> {
    s.split(';')
        .map(|part| {
            let v = part
                .split(',')
                .map(|x| x.trim().parse::<f64>().with_context(|| format!("bad component {x:?}")))
                .collect::<Result<Vec<f64>>>()?;
            direction(&v, d)
        })
        .collect()
}

fn fit(a: &FitArgs, seed: u64) -> Result<(Report, Option<Verdict>)> {
    let law = load_law(&a.law)?;
    let l = direction(&a.l, law.d)?;
    let dirs = match &a.directions {
        Some(s) => parse_directions(s, law.d)?,
        None if a.angle == 0.0 => vec![l],
        None => direction_neighborhood(&l, a.angle)?,
    };
    let (verdict, reports) =
        fit_gamma_neighborhood(&law, &dirs, &a.grid, a.replicas, seed, a.gamma_min)?;
    let mut r = Report::new(&[
        "direction", "l", "L", "p_hat", "ci_low", "ci_high", "gamma_hat", "gamma_ci_low",
        "gamma_ci_high", "verdict",
    ]);
    for (i, (dir, rep)) in dirs.iter().zip(&reports).enumerate() {
        let (lo, hi) = rep.ci.unzip();
        for e in &rep.evidence {
            r.row(vec![
                i.into(),
                join17(dir).into(),
                e.value.into(),
                e.estimate.into(),
                e.ci_low.into(),
                e.ci_high.into(),
                rep.statistic.into(),
                lo.into(),
                hi.into(),
                rep.verdict.to_string().into(),
            ]);
        }
    }
    r.summary("verdict", verdict);
    r.detail(&reports);
    Ok((r, Some(verdict)))
}

fn criterion(a: &CriterionArgs, seed: u64, c: &Constants) -> Result<(Report, Verdict)> {
    let law = load_law(&a.law)?;
    let l = direction(&a.l, law.d)?;
    let grid = a.a_grid.clone().unwrap_or_else(default_a_grid);
    let consts = CriterionConstants { c15: c.c15 };
    let rep = effective_criterion(&law, &l, a.l0, a.ltilde0, &grid, a.env_count, consts, seed)?;
    let mut r = evidence_table(&rep, "a");
    r.summary("statistic", rep.statistic);
    r.summary("ci", rep.ci);
    for key in ["prefactor", "a_star", "rho_min", "certified_fail"] {
        if let Some(v) = rep.metadata.get(key) {
            r.summary(key, v);
        }
    }
    r.detail(&rep);
    Ok((r, rep.verdict))
}

fn params(s: &ScaleArgs, c: &Constants) -> Result<ScaleParams> {
    let mut p = ScaleParams::new(s.d, s.kappa, s.l0)?;
    p.ltilde0 = s.ltilde0.unwrap_or(s.l0);
    p.a0 = s.a0;
    p.c2 = c.c2;
    p.c3 = c.c3;
    p.c4 = c.c4;
    p.c15 = c.c15;
    p.c_result = c.c_result;
    p.validate()?;
    Ok(p)
}

fn sequence(s: &ScaleArgs, c: &Constants, k_max: usize) -> Result<ScaleSequence> {
    Ok(build_scales(&params(s, c)?, k_max)?)
}

fn scales(a: &ScaleArgs, c: &Constants) -> Result<Report> {
    let seq = sequence(a, c, a.kmax)?;
    let mut r = Report::new(&["k", "N_k", "L_k", "Ltilde_k", "u_k", "a_k"]);
    for e in &seq.entries {
        r.row(vec![e.k.into(), e.n.est.into(), e.l.est.into(), e.ltilde.est.into(), e.u.into(), e.a.into()]);
    }
    r.summary("u0", seq.params.u0());
    r.detail(&seq.entries);
    Ok(r)
}

fn check_growth(a: &ScaleArgs, c: &Constants) -> Result<Report> {
    let seq = sequence(a, c, a.kmax + 1)?;
    let rows = check_g(&seq);
    let mut r = Report::new(&["k", "g1", "g1_ratio", "g1_log_margin", "g2", "g2_log_margin"]);
    for g in &rows {
        r.row(vec![g.k.into(), g.g1.into(), g.g1_ratio.into(), g.g1_log_margin.into(), g.g2.into(), g.g2_log_margin.into()]);
    }
    let first = rows.iter().find(|g| !(g.g1 && g.g2)).map(|g| g.k);
    r.summary("pass", first.is_none());
    r.summary("first_failure", first);
    Ok(r)
}

fn phi(a: &PhiArgs, c: &Constants) -> Result<Report> {
    let seq = sequence(&a.scales, c, a.scales.kmax + 1)?;
    let phi0 = match (&a.phi0, a.ln_phi0) {
        (Some(s), _) => Phi0::Value(parse_tower(s, Rounding::Up)?),
        (None, Some(l)) => Phi0::Log(l),
        (None, None) => Phi0::boundary(&seq.params),
    };
    let rep = propagate_phi(phi0, &seq, a.scales.kmax)?;
    let mut r = Report::new(&["k", "ratio", "ln_phi", "ln_target", "pass", "margin"]);
    for s in &rep.steps {
        r.row(vec![s.k.into(), s.ratio.into(), s.ln_phi.into(), s.ln_target.into(), s.pass.into(), s.margin.into()]);
    }
    r.summary("phi0", phi0);
    r.summary("pass", rep.first_failure.is_none());
    r.summary("first_failure", rep.first_failure);
    Ok(r)
}

fn gamma_row(r: &mut Report, l: TowerReal, g: &GammaReport) {
    r.row(vec![
        g.k.into(),
        g.n.into(),
        l.into(),
        g.log8_l.into(),
        g.iterlog.into(),
        g.gamma_iterated.into(),
        g.gamma_sznitman.into(),
        g.gamma_t.into(),
        g.gap_iterated.into(),
        g.gap_ratio().into(),
    ]);
}

fn gamma(a: &GammaArgs, c: &Constants) -> Result<Report> {
    let seq = sequence(&a.scales, c, a.scales.kmax)?;
    let mut r = Report::new(&[
        "k", "n", "L", "log8_L", "iterlog", "gamma_iterated", "gamma_sznitman", "gamma_T", "gap_iterated",
        "gap_ratio",
    ]);
    match &a.big_l {
        Some(s) => {
            let l = parse_tower(s, Rounding::Nearest)?;
            gamma_row(&mut r, l, &gamma_effective(&l, &seq)?);
        }
        None => {
            if a.kmin > a.scales.kmax {
                bail!("--kmin {} exceeds --kmax {}", a.kmin, a.scales.kmax);
            }
            for k in a.kmin..=a.scales.kmax {
                let l = seq.get(k).l.est;
                gamma_row(&mut r, l, &gamma_at(&l, k, c.c_result)?);
            }
        }
    }
    Ok(r)
}

fn bracket_row(r: &mut Report, name: &str, b: &Bracket) {
    r.row(vec![name.into(), b.lo.into(), b.est.into(), b.hi.into()]);
}

fn case(a: &CaseArgs, c: &Constants) -> Result<Report> {
    let seq = sequence(&a.scales, c, a.scales.kmax)?;
    let l = parse_tower(&a.big_l, Rounding::Nearest)?;
    let cs = case_scales(&l, &seq)?;
    let mut r = Report::new(&["quantity", "lo", "est", "hi"]);
    bracket_row(&mut r, "m", &cs.m);
    bracket_row(&mut r, "S1", &cs.s1);
    bracket_row(&mut r, "S1_tilde", &cs.s1_tilde);
    bracket_row(&mut r, "S2", &cs.s2);
    bracket_row(&mut r, "S2_tilde", &cs.s2_tilde);
    r.summary("k", cs.k);
    r.summary("case", cs.case);
    r.summary("bracket_certified", cs.bracket_certified);
    if a.refined {
        if cs.case != Case::Two {
            bail!("the refined bound needs case two; L = {l} is in case one at k = {}", cs.k);
        }
        let ln_phi = a.ln_phi.as_deref().map(|s| parse_tower(s, Rounding::Up)).transpose()?;
        let rep = check_refined_bound(&cs, &seq, ln_phi)?;
        r.summary("refined_pass", rep.pass);
        r.summary("refined_first_failure", &rep.first_failure);
        r.summary("m_floor_ok", rep.m_floor_ok);
        r.summary("links", &rep.links);
        r.detail(&rep);
    }
    Ok(r)
}

/// `T(h;m)`, `1/T(h;m)`, a float, or `a^b` with either side of those forms.
fn parse_tower(s: &str, mode: Rounding) -> Result<TowerReal> {
    let s = s.trim();
    if let Ok(t) = s.parse::<TowerReal>() {
        return Ok(t);
    }
    if let Some((a, b)) = s.split_once('^') {
        return Ok(parse_tower(a, mode)?.powt(&parse_tower(b, mode)?, mode)?);
    }
    let x: f64 = s.parse().with_context(|| format!("cannot read {s:?} as a number"))?;
    Ok(TowerReal::from_f64_rounded(x, mode)?)
}

fn tower(a: &TowerArgs) -> Result<Report> {
    let mode = match a.rounding {
        RoundingArg::Down => Rounding::Down,
        RoundingArg::Nearest => Rounding::Nearest,
        RoundingArg::Up => Rounding::Up,
    };
    let t = |s: &str| parse_tower(s, mode);
    let (name, result): (&str, Cell) = match &a.op {
        TowerOp::Pow { x, p } => ("pow", t(x)?.powt(&t(p)?, mode)?.into()),
        TowerOp::Mul { x, y } => ("mul", t(x)?.mul(&t(y)?, mode).into()),
        TowerOp::Div { x, y } => ("div", t(x)?.div(&t(y)?, mode)?.into()),
        TowerOp::Add { x, y } => ("add", t(x)?.add(&t(y)?, mode).into()),
        TowerOp::Sub { x, y } => ("sub", t(x)?.sub(&t(y)?, mode).into()),
        TowerOp::Compare { x, y } => {
            let o = t(x)?.compare(&t(y)?) as i8;
            ("compare", Cell::Int(o as i64))
        }
        TowerOp::Ln { x } => ("ln", t(x)?.ln(mode)?.into()),
        TowerOp::Exp { x } => ("exp", t(x)?.exp(mode).into()),
        TowerOp::Sqrt { x } => ("sqrt", t(x)?.sqrt(mode)?.into()),
        TowerOp::Iterlog { x, base, count } => {
            ("iterlog", t(x)?.iterlog_rounded(*base, *count, mode)?.into())
        }
        TowerOp::F { n, x } => ("f", f_tower_rounded(*n, *x, mode)?.into()),
    };
    let mut r = Report::new(&["op", "rounding", "result"]);
    let rounding = serde_json::to_value(a.rounding)?;
    r.row(vec![name.into(), rounding.as_str().unwrap_or_default().into(), result]);
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rwre_core::renorm::big_f;

    #[test]
    fn tower_operands() {
        let n = Rounding::Nearest;
        assert_eq!(parse_tower("64", n).unwrap(), TowerReal::from(64u32));
        assert_eq!(parse_tower("2^6", n).unwrap(), TowerReal::from(64u32));
        let big = parse_tower("8^64", n).unwrap();
        assert_eq!(big, TowerReal::from(8u32).pow(64.0, n).unwrap());
        assert_eq!(parse_tower(&big.to_string(), n).unwrap(), big);
        assert!(parse_tower("eight", n).is_err());
        // F(3) = f_2(1) = 8^8
        assert_eq!(big_f(3, n).unwrap(), parse_tower("8^8", n).unwrap());
    }
}
