use anyhow::bail;
use spinesim::accumulator::Accumulator;
use spinesim::branching::{
    critical_poisson_survival, horizon, simulate_population, ModelParams, PopulationOutcome,
};
use spinesim::cpp::{cpp_polynomial, BrownianTail};
use spinesim::diagnostics::{distance_agreement_check, yaglom_point};
use spinesim::entrance::{entrance_coupling_check, entrance_length_check};
use spinesim::functional::TestFunctional;
use spinesim::interval::Interval;
use spinesim::kspine::BiasFactors;
use spinesim::manytofew::{
    critical_factorial_moment, many_to_few_lhs, many_to_few_rhs_with, TupleOptions,
};
use spinesim::model::{CriticalModel, MarkModel, RecombinationModel};
use spinesim::spine::{spine_discrete_converges_check, NuDistribution};
use spinesim::{Result as CoreResult, Streams};

use crate::config::{Mutant, RunConfig};
use crate::output::{Check, Outcome, Row};

/// Attempts allowed per conditioned population.
pub const MAX_ATTEMPTS: u64 = 1_000_000;

fn streams(cfg: &RunConfig) -> Streams {
    Streams::new(cfg.seed, &cfg.subcommand)
}

/// `|x - target| <= z se`, with a rounding allowance when `se` is 0.
fn within(x: f64, se: f64, target: f64, z: f64) -> bool {
    (x - target).abs() <= z * se + 1e-9 * target.abs().max(1.0)
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

pub fn simulate(cfg: &RunConfig) -> anyhow::Result<Outcome> {
    let params = ModelParams::new(cfg.r, cfg.n)?.with_node_cap(cfg.node_cap);
    let model = params.model();
    let h = horizon(cfg.n, cfg.t);
    let runs = streams(cfg).map(cfg.reps, |_, rng| {
        match simulate_population(&model, params.root(), h, params.node_cap, rng) {
            PopulationOutcome::Extinct { .. } => Some((0.0, 0.0)),
            PopulationOutcome::Survived(marks) => {
                Some((marks.len() as f64, marks.iter().map(Interval::length).sum::<f64>()))
            }
            PopulationOutcome::CapExceeded { .. } => None,
        }
    });
    let mut survival = Accumulator::new();
    let mut size = Accumulator::new();
    let mut length = Accumulator::new();
    let mut capped = 0u64;
    for run in &runs {
        match run {
            Some((z, l)) => {
                survival.push((*z > 0.0) as u8 as f64);
                size.push(*z);
                length.push(*l);
            }
            None => capped += 1,
        }
    }
    let mut out = Outcome::default();
    out.rows.push(Row::from_acc("survival", &survival));
    out.rows.push(Row::from_acc("population_size", &size));
    out.rows.push(Row::from_acc("total_length", &length));
    out.rows.push(Row::exact("capped", capped as f64, cfg.reps));
    let mut checks = vec![Check::new("no capped runs", capped == 0, format!("{capped} capped"))];
    let m = length.mean().unwrap_or(f64::NAN);
    let se = length.se().unwrap_or(f64::NAN);
    checks.push(Check::new(
        "total length is a martingale",
        within(m, se, cfg.r, 3.0),
        format!("{m} ± {se} vs {}", cfg.r),
    ));
    if cfg.r == 0.0 {
        let exact = critical_poisson_survival(h);
        let p = survival.mean().unwrap_or(f64::NAN);
        let pse = survival.se().unwrap_or(f64::NAN);
        out.rows.push(Row::exact("survival_exact", exact, 0));
        checks.push(Check::new(
            "critical survival",
            within(p, pse, exact, 3.0),
            format!("{p} ± {pse} vs {exact}"),
        ));
    }
    out.checks = checks;
    Ok(out)
}

pub fn spine(cfg: &RunConfig) -> anyhow::Result<Outcome> {
    if cfg.r > cfg.n as f64 {
        bail!("option R must be <= N for the discrete spine");
    }
    let start = Interval::from_length(cfg.r)?;
    let rep = spine_discrete_converges_check(start, cfg.n, cfg.t, cfg.reps, &streams(cfg))?;
    let mut out = Outcome::default();
    out.rows.push(Row::from_acc("discrete_length", &rep.discrete_summary));
    out.rows.push(Row::from_acc("continuous_length", &rep.continuous_summary));
    out.rows.push(Row::exact("ks_statistic", rep.ks.statistic, cfg.reps));
    out.rows.push(Row::exact("ks_pvalue", rep.ks.p_value, cfg.reps));
    out.checks.push(Check::new(
        "discrete spine matches continuous spine",
        rep.ks.p_value > 0.01,
        format!("KS p = {}", rep.ks.p_value),
    ));
    Ok(out)
}

fn delta_for(mutant: Option<Mutant>) -> impl Fn(&BiasFactors, &NuDistribution) -> CoreResult<f64> + Sync {
    move |b, nu| {
        let d = b.delta_poisson(nu)?;
        Ok(match mutant {
            None => d,
            Some(Mutant::DropDegreeFactorial) => {
                d * b.points.iter().map(|p| factorial(p.degree as usize)).product::<f64>()
            }
        })
    }
}

fn verify_with<M: MarkModel>(
    cfg: &RunConfig,
    model: &M,
    nu: &NuDistribution,
    start: Interval,
) -> anyhow::Result<(spinesim::manytofew::LhsEstimate, Accumulator)> {
    let s = streams(cfg);
    let h = horizon(cfg.n, cfg.t);
    if h != cfg.n {
        bail!("verify-m2f runs to generation N; use t = 1");
    }
    let lhs = many_to_few_lhs(
        model,
        cfg.k,
        cfg.n,
        start,
        &cfg.phi,
        cfg.reps,
        &s.child("lhs"),
        cfg.node_cap,
        &TupleOptions::default(),
    )?;
    let rhs = many_to_few_rhs_with(
        model,
        cfg.k,
        nu,
        start,
        &cfg.phi,
        cfg.reps,
        &s.child("rhs"),
        delta_for(cfg.mutant),
    )?;
    Ok((lhs, rhs))
}

pub fn verify_m2f(cfg: &RunConfig) -> anyhow::Result<Outcome> {
    let (lhs, rhs) = if cfg.r == 0.0 {
        let model = CriticalModel::new(cfg.n as f64)?;
        verify_with(cfg, &model, &NuDistribution::uniform(cfg.n)?, Interval::from_length(0.0)?)?
    } else {
        let model = RecombinationModel::new(cfg.n as f64)?;
        let nu = if cfg.r > 1.0 {
            NuDistribution::branch_times(cfg.n, cfg.r)?
        } else {
            NuDistribution::uniform(cfg.n)?
        };
        verify_with(cfg, &model, &nu, Interval::from_length(cfg.r)?)?
    };
    let (l, r) = (lhs.estimate.summary(), rhs.summary());
    let mut out = Outcome::default();
    out.rows.push(Row::from_summary("lhs", &l));
    out.rows.push(Row::from_summary("rhs", &r));
    out.rows.push(Row::new("diff", l.estimate - r.estimate, (l.se * l.se + r.se * r.se).sqrt(), l.count));
    out.rows.push(Row::exact("lhs_subsampled", lhs.truncated as f64, l.count));
    out.rows.push(Row::exact("lhs_capped", lhs.capped as f64, cfg.reps));
    out.checks.push(Check::new(
        "lhs and rhs agree",
        (l.estimate - r.estimate).abs() <= 3.0 * (l.se + r.se),
        format!("{} ± {} vs {} ± {}", l.estimate, l.se, r.estimate, r.se),
    ));
    if cfg.r == 0.0 && cfg.k <= 3 && cfg.phi == TestFunctional::Const {
        let oracle = critical_factorial_moment(cfg.n, cfg.k);
        out.rows.push(Row::exact("oracle", oracle, 0));
        for (name, s) in [("lhs", &l), ("rhs", &r)] {
            out.checks.push(Check::new(
                format!("{name} matches factorial moment"),
                within(s.estimate, s.se, oracle, 3.0),
                format!("{} ± {} vs {oracle}", s.estimate, s.se),
            ));
        }
    }
    Ok(out)
}

pub fn cpp_poly(cfg: &RunConfig) -> anyhow::Result<Outcome> {
    let acc = cpp_polynomial(&BrownianTail, 1.0, cfg.k, &cfg.phi, cfg.reps, &streams(cfg))?;
    let s = acc.summary();
    let mut out = Outcome::default();
    out.rows.push(Row::from_summary("polynomial", &s));
    let oracle = match cfg.phi {
        TestFunctional::Const => Some(factorial(cfg.k)),
        TestFunctional::DistIndicator(a) if cfg.k == 2 => Some(2.0 * a.clamp(0.0, 1.0)),
        _ => None,
    };
    if let Some(o) = oracle {
        out.rows.push(Row::exact("oracle", o, 0));
        let pass = if cfg.phi == TestFunctional::Const { s.estimate == o } else { within(s.estimate, s.se, o, 3.0) };
        out.checks.push(Check::new("Brownian CPP polynomial", pass, format!("{} ± {} vs {o}", s.estimate, s.se)));
    }
    Ok(out)
}

pub fn entrance(cfg: &RunConfig) -> anyhow::Result<Outcome> {
    let s = streams(cfg);
    let rep = entrance_length_check(cfg.t, cfg.reps, &s.child("length"))?;
    let (mean, var) = (2.0 / cfg.t, 2.0 / (cfg.t * cfg.t));
    let mut out = Outcome::default();
    out.rows.push(Row::from_summary("length_mean", &rep.mean));
    out.rows.push(Row::exact("length_variance", rep.variance, cfg.reps));
    out.rows.push(Row::exact("ks_statistic", rep.ks_statistic, cfg.reps));
    out.rows.push(Row::exact("ks_pvalue", rep.p_value, cfg.reps));
    out.checks.push(Check::new(
        "length mean 2/t",
        (rep.mean.estimate - mean).abs() <= 0.01 * mean,
        format!("{} vs {mean}", rep.mean.estimate),
    ));
    out.checks.push(Check::new(
        "length variance 2/t^2",
        (rep.variance - var).abs() <= 0.02 * var,
        format!("{} vs {var}", rep.variance),
    ));
    out.checks.push(Check::new(
        "length law Gamma(2,t)",
        rep.ks_statistic < 0.002,
        format!("KS {}", rep.ks_statistic),
    ));
    if cfg.r_given {
        if cfg.r <= 0.0 {
            bail!("option R must be > 0 for the coupling");
        }
        let c = entrance_coupling_check(cfg.r, cfg.t, cfg.reps, &s.child("coupling"))?;
        out.rows.push(Row::from_summary("coupling_frequency", &c.frequency));
        out.rows.push(Row::exact("coupling_oracle", c.oracle, 0));
        out.checks.push(Check::new(
            "coupling frequency",
            within(c.frequency.estimate, c.frequency.se, c.oracle, 3.0),
            format!("{} ± {} vs {}", c.frequency.estimate, c.frequency.se, c.oracle),
        ));
    }
    Ok(out)
}

pub fn yaglom(cfg: &RunConfig) -> anyhow::Result<Outcome> {
    if cfg.r <= 1.0 {
        bail!("option R must be > 1 for the Yaglom diagnostic");
    }
    let params = ModelParams::new(cfg.r, cfg.n)?.with_node_cap(cfg.node_cap);
    let y = yaglom_point(&params, cfg.t, cfg.reps, MAX_ATTEMPTS, &streams(cfg))?;
    let mut out = Outcome::default();
    out.rows.push(Row::from_summary("mass", &y.mass));
    out.rows.push(Row::exact("mass_ks", y.mass_ks, y.survivors));
    out.rows.push(Row::from_summary("mark_mean", &y.mark));
    out.rows.push(Row::exact("mark_ks", y.mark_ks, y.survivors));
    out.rows.push(Row::exact("chaos_correlation", y.chaos_correlation, y.survivors));
    out.rows.push(Row::from_summary("survival", &y.survival));
    out.rows.push(Row::exact("survival_ratio", y.survival_ratio, y.survivors));
    out.rows.push(Row::exact("capped", y.capped as f64, cfg.reps));
    out.rows.push(Row::exact("exhausted", y.exhausted as f64, cfg.reps));
    let target = 1.0 / cfg.t;
    out.checks.push(Check::new(
        "mark mean within 15% of 1/t",
        (y.mark.estimate - target).abs() <= 0.15 * target,
        format!("{} vs {target}", y.mark.estimate),
    ));
    out.checks.push(Check::new("complete report", !y.partial(), format!("{} capped, {} exhausted", y.capped, y.exhausted)));
    Ok(out)
}

pub fn distance_agree(cfg: &RunConfig) -> anyhow::Result<Outcome> {
    let rep = distance_agreement_check(cfg.k, cfg.r, cfg.reps, &streams(cfg))?;
    let mut out = Outcome::default();
    for (name, v) in [
        ("median", rep.median),
        ("q05", rep.q05),
        ("q25", rep.q25),
        ("q75", rep.q75),
        ("q95", rep.q95),
        ("width90", rep.width90()),
    ] {
        out.rows.push(Row::exact(name, v, rep.count));
    }
    out.checks.push(Check::new(
        "median in [0.9, 1.1]",
        (0.9..=1.1).contains(&rep.median),
        format!("median {}", rep.median),
    ));
    Ok(out)
}
