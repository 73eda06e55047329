//! The acceptance battery, runnable from the command line at reduced or
//! full replicate counts.

use rand::Rng as _;
use spinesim::accumulator::Accumulator;
use spinesim::branching::ModelParams;
use spinesim::cpp::{cpp_polynomial, phi_decode, phi_encode, BrownianTail, CppEncoding};
use spinesim::diagnostics::{approaches, distance_agreement_check, nonincreasing_steps, yaglom_diagnostic};
use spinesim::entrance::{
    entrance_length_check, poisson_coupled_path, rescaled_spine_limit_check, self_similarity_check,
};
use spinesim::functional::TestFunctional;
use spinesim::interval::Interval;
use spinesim::manytofew::{critical_factorial_moment, many_to_few_lhs, many_to_few_rhs, TupleOptions};
use spinesim::model::CriticalModel;
use spinesim::spine::{spine_path_continuous, NuDistribution};
use spinesim::stats::ks_two_sample;
use spinesim::Streams;

use crate::config::{Format, RunConfig};
use crate::output::{Check, Outcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Full,
    Reduced,
}

impl Scale {
    fn reps(&self, full: u64) -> u64 {
        match self {
            Scale::Full => full,
            Scale::Reduced => (full / 20).max(200),
        }
    }

    /// KS-statistic thresholds are stated at full scale; they widen with
    /// `1/sqrt(n)` at reduced scale.
    fn ks_threshold(&self, full: f64) -> f64 {
        match self {
            Scale::Full => full,
            Scale::Reduced => full * 20f64.sqrt(),
        }
    }
}

pub const YAGLOM_GRID: [(f64, u32); 4] = [(10.0, 200), (20.0, 400), (50.0, 1000), (100.0, 2000)];

fn fmt_acc(a: &Accumulator) -> String {
    format!("{:.5} ± {:.5}", a.mean().unwrap_or(f64::NAN), a.se().unwrap_or(f64::NAN))
}

pub fn many_to_few(seed: u64, scale: Scale) -> anyhow::Result<Check> {
    let reps = scale.reps(100_000);
    let s = Streams::new(seed, "criterion-1");
    let mut ok = true;
    let mut detail = Vec::new();
    let cells: Vec<(usize, u32)> = (2..=6).map(|n| (2, n)).chain([(3, 2), (3, 3)]).collect();
    for (k, n) in cells {
        let model = CriticalModel::new(n as f64)?;
        let start = Interval::from_length(0.0)?;
        let cell = s.child(&format!("{k}/{n}"));
        let lhs = many_to_few_lhs(
            &model,
            k,
            n,
            start,
            &TestFunctional::Const,
            reps,
            &cell.child("lhs"),
            usize::MAX,
            &TupleOptions::default(),
        )?
        .estimate;
        let rhs = many_to_few_rhs(&model, k, &NuDistribution::uniform(n)?, start, &TestFunctional::Const, reps, &cell.child("rhs"))?;
        let oracle = critical_factorial_moment(n, k);
        let pass = |a: &Accumulator| {
            (a.mean().unwrap() - oracle).abs() <= 3.0 * a.se().unwrap() + 1e-9 * oracle
        };
        ok &= pass(&lhs) && pass(&rhs);
        detail.push(format!("k={k} N={n}: {} | {} vs {oracle}", fmt_acc(&lhs), fmt_acc(&rhs)));
    }
    Ok(Check::new("criterion 1 many-to-few", ok, detail.join("; ")))
}

pub fn harmonic_martingale(seed: u64, scale: Scale) -> anyhow::Result<Check> {
    let reps = scale.reps(10_000);
    let mut ok = true;
    let mut detail = Vec::new();
    for r in [2.0, 5.0] {
        for n in [50u32, 200] {
            let params = ModelParams::new(r, n)?;
            let model = params.model();
            let s = Streams::new(seed, &format!("criterion-2/{r}/{n}"));
            let acc = s.accumulate(reps, |_, rng| {
                spinesim::branching::length_profile(&model, params.root(), n, params.node_cap, rng)
                    .map(|p| p[n as usize])
                    .unwrap_or(f64::NAN)
            });
            let m = acc.mean().unwrap_or(f64::NAN);
            ok &= (m - r).abs() <= 3.0 * acc.se().unwrap_or(0.0);
            detail.push(format!("R={r} N={n}: {}", fmt_acc(&acc)));
        }
    }
    Ok(Check::new("criterion 2 harmonic martingale", ok, detail.join("; ")))
}

pub fn entrance_law(seed: u64, scale: Scale) -> anyhow::Result<Check> {
    let reps = scale.reps(1_000_000);
    let mut ok = true;
    let mut detail = Vec::new();
    for t in [0.5, 1.0, 2.0] {
        let rep = entrance_length_check(t, reps, &Streams::new(seed, &format!("criterion-3/{t}")))?;
        let (m, v) = (2.0 / t, 2.0 / (t * t));
        ok &= (rep.mean.estimate - m).abs() <= 0.01 * m
            && (rep.variance - v).abs() <= 0.02 * v
            && rep.ks_statistic < scale.ks_threshold(0.002);
        detail.push(format!("t={t}: mean {:.5} var {:.5} KS {:.5}", rep.mean.estimate, rep.variance, rep.ks_statistic));
    }
    Ok(Check::new("criterion 3 entrance law", ok, detail.join("; ")))
}

pub fn poisson_construction(seed: u64, scale: Scale) -> anyhow::Result<Check> {
    let reps = scale.reps(100_000);
    let r = 10.0;
    let start = Interval::from_length(r)?;
    let mut ok = true;
    let mut detail = Vec::new();
    for t in [0.5, 1.0] {
        let s = Streams::new(seed, &format!("criterion-4/{t}"));
        let a: Vec<f64> = s.child("poisson").map(reps, |_, rng| {
            poisson_coupled_path(r, t, rng).expect("valid parameters").1.at(t).length()
        });
        let b: Vec<f64> = s.child("spine").map(reps, |_, rng| {
            spine_path_continuous(start, t, rng).expect("t >= 0").at(t).length()
        });
        let ks = ks_two_sample(&a, &b);
        ok &= ks.p_value > 0.01;
        detail.push(format!("t={t}: KS {:.5} p {:.4}", ks.statistic, ks.p_value));
    }
    Ok(Check::new("criterion 4 Poisson construction", ok, detail.join("; ")))
}

pub fn self_similarity(seed: u64, scale: Scale) -> anyhow::Result<Check> {
    let reps = scale.reps(100_000);
    let mut ok = true;
    let mut detail = Vec::new();
    for (r, c, t) in [(5.0, 2.0, 0.7), (1.0, 10.0, 0.3)] {
        let rep = self_similarity_check(r, c, t, reps, &Streams::new(seed, &format!("criterion-5/{r}/{c}")))?;
        ok &= rep.p_value > 0.01;
        detail.push(format!("R={r} c={c} t={t}: p {:.4}", rep.p_value));
    }
    Ok(Check::new("criterion 5 self-similarity", ok, detail.join("; ")))
}

pub fn spine_limit(seed: u64, scale: Scale) -> anyhow::Result<Check> {
    let reps = scale.reps(100_000);
    let rep = rescaled_spine_limit_check(1e8, &[0.5, 1.0], reps, &Streams::new(seed, "criterion-6"))?;
    let ok = rep.means.iter().all(|m| (m - 2.0).abs() <= 0.05)
        && rep.variances.iter().all(|v| (v - 2.0).abs() <= 0.15)
        && rep.max_abs_correlation() < 0.05;
    let detail = format!("means {:?} variances {:?} corr {:.4}", rep.means, rep.variances, rep.max_abs_correlation());
    Ok(Check::new("criterion 6 rescaled spine limit", ok, detail))
}

pub fn cpp_polynomials(seed: u64, scale: Scale) -> anyhow::Result<Check> {
    let reps = scale.reps(1_000_000);
    let mut ok = true;
    let mut detail = Vec::new();
    for a in [0.25, 0.5, 0.75] {
        let acc = cpp_polynomial(&BrownianTail, 1.0, 2, &TestFunctional::DistIndicator(a), reps, &Streams::new(seed, &format!("criterion-7/{a}")))?;
        ok &= acc.within_se(2.0 * a, 3.0);
        detail.push(format!("a={a}: {}", fmt_acc(&acc)));
    }
    for k in 1..=4usize {
        let acc = cpp_polynomial(&BrownianTail, 1.0, k, &TestFunctional::Const, 1000, &Streams::new(seed, "criterion-7/const"))?;
        let fact: f64 = (1..=k).map(|i| i as f64).product();
        ok &= acc.mean() == Some(fact);
    }
    Ok(Check::new("criterion 7 Brownian CPP polynomials", ok, detail.join("; ")))
}

pub fn phi_bijection(seed: u64) -> anyhow::Result<Check> {
    let s = Streams::new(seed, "criterion-8");
    let results = s.map(10_000, |_, rng| {
        let n = rng.random_range(1..=20u32);
        let k = rng.random_range(1..=8usize);
        let times: Vec<u32> = (0..k - 1).map(|_| rng.random_range(0..n)).collect();
        let enc = CppEncoding::new(n, times).expect("times below N");
        let m = phi_decode(&enc);
        m.is_ultrametric(0.0) && phi_encode(&m, n).map(|e| e == enc).unwrap_or(false)
    });
    let bad = results.iter().filter(|&&ok| !ok).count();
    Ok(Check::new("criterion 8 encoding bijection", bad == 0, format!("{bad} failures in 10000")))
}

pub fn distance_agreement(seed: u64, scale: Scale) -> anyhow::Result<Check> {
    let reps = scale.reps(10_000);
    let mut widths = Vec::new();
    let mut median = f64::NAN;
    for r in [1e2, 1e4, 1e6] {
        let rep = distance_agreement_check(2, r, reps, &Streams::new(seed, &format!("criterion-9/{r}")))?;
        widths.push(rep.width90());
        median = rep.median;
    }
    let ok = (0.9..=1.1).contains(&median) && widths.windows(2).all(|w| w[1] < w[0]);
    Ok(Check::new(
        "criterion 9 distance agreement",
        ok,
        format!("median at R=1e6 {median:.4}; 90% widths {widths:?}"),
    ))
}

/// Criteria 10 and 11 share their conditioned populations.
pub fn yaglom_and_survival(seed: u64, scale: Scale) -> anyhow::Result<(Check, Check)> {
    let survivors = match scale {
        Scale::Full => 1000,
        Scale::Reduced => 200,
    };
    let points = yaglom_diagnostic(&YAGLOM_GRID, 1.0, survivors, crate::commands::MAX_ATTEMPTS, spinesim::branching::DEFAULT_NODE_CAP, &Streams::new(seed, "criterion-10"))?;
    let last = points.last().expect("non-empty grid");
    let ks: Vec<f64> = points.iter().map(|p| p.mark_ks).collect();
    let mass: Vec<f64> = points.iter().map(|p| p.mass.estimate).collect();
    let ratio: Vec<f64> = points.iter().map(|p| p.survival_ratio).collect();
    let partial = points.iter().any(|p| p.partial());
    let y = Check::new(
        "criterion 10 Yaglom trend",
        !partial
            && (last.mark.estimate - 1.0).abs() <= 0.15
            && nonincreasing_steps(&ks, 2)
            && approaches(&mass, 1.0, 2),
        format!("mark mean {:.4} ± {:.4}; mark KS {ks:.4?}; mass {mass:.4?}", last.mark.estimate, last.mark.se),
    );
    let s = Check::new("criterion 11 survival asymptotics", approaches(&ratio, 1.0, 2), format!("N ln R P/R {ratio:.4?}"));
    Ok((y, s))
}

pub fn determinism(seed: u64) -> anyhow::Result<Check> {
    let mut ok = true;
    let mut detail = Vec::new();
    for sub in ["simulate", "spine", "verify-m2f", "cpp-poly", "entrance", "yaglom", "distance-agree"] {
        let mut outputs = Vec::new();
        for threads in [1usize, 2, 3] {
            let flags = crate::config::Flags {
                r: Some(5.0),
                n: Some(if sub == "yaglom" { 40 } else { 12 }),
                reps: Some(if sub == "yaglom" { 5 } else { 300 }),
                seed: Some(seed),
                threads: Some(threads),
                ..Default::default()
            };
            let mut cfg = RunConfig::resolve(sub, &flags)?;
            cfg.format = if threads == 2 { Format::Jsonl } else { Format::Csv };
            let a = crate::run_config(&cfg)?.0;
            let b = crate::run_config(&cfg)?.0;
            ok &= a == b;
            if threads != 2 {
                outputs.push(a);
            }
        }
        let same = outputs.windows(2).all(|w| w[0] == w[1]);
        ok &= same;
        detail.push(format!("{sub} {}", if same { "identical" } else { "differs" }));
    }
    Ok(Check::new("criterion 12 determinism", ok, detail.join("; ")))
}

pub fn run_battery(seed: u64, scale: Scale) -> anyhow::Result<Outcome> {
    let mut checks = vec![
        many_to_few(seed, scale)?,
        harmonic_martingale(seed, scale)?,
        entrance_law(seed, scale)?,
        poisson_construction(seed, scale)?,
        self_similarity(seed, scale)?,
        spine_limit(seed, scale)?,
        cpp_polynomials(seed, scale)?,
        phi_bijection(seed)?,
        distance_agreement(seed, scale)?,
    ];
    let (y, s) = yaglom_and_survival(seed, scale)?;
    checks.push(y);
    checks.push(s);
    checks.push(determinism(seed)?);
    Ok(Outcome { rows: Vec::new(), checks })
}
