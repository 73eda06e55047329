use rand::Rng;
use spinesim::branching::{critical_poisson_survival, simulate_tree, SimOutcome};
use spinesim::diagnostics::{
    distance_agreement_check, polynomial_forward, polynomial_spine, Scaling, TupleMode,
};
use spinesim::entrance::{
    coupled_path, entrance_coupling_check, rescaled_spine_limit_check, self_similarity_check, PlanarPoisson,
};
use spinesim::functional::TestFunctional;
use spinesim::model::CriticalModel;
use spinesim::spine::NuDistribution;
use spinesim::stats::ks_one_sample;
use spinesim::{Interval, Streams};

const SEED: u64 = 5;

#[test]
fn coupling_is_near_certain_for_long_chromosomes() {
    let rep = entrance_coupling_check(1e4, 1.0, 5_000, &Streams::new(SEED, "c4")).unwrap();
    assert!(rep.frequency.estimate >= 0.999, "{:?}", rep.frequency);
}

#[test]
fn coupling_frequency_grows_with_r() {
    let freqs: Vec<f64> = [1.0, 10.0, 100.0, 1e4]
        .iter()
        .map(|&r| entrance_coupling_check(r, 1.0, 5_000, &Streams::new(SEED, "grid")).unwrap())
        .map(|rep| {
            assert!((rep.frequency.estimate - rep.oracle).abs() <= 3.0 * rep.frequency.se + 1e-3);
            rep.frequency.estimate
        })
        .collect();
    assert!(freqs[0] < 0.9, "{freqs:?}");
    assert!(freqs.windows(2).all(|w| w[1] >= w[0]), "{freqs:?}");
}

#[test]
fn paths_on_one_realization_are_nested_in_r() {
    // The window [-MR, (1-M)R] grows with R, so the shifted path for the
    // smaller R is the larger one clipped to the smaller window.
    for i in 0..2000 {
        let mut rng = Streams::new(SEED, "nested").rng(i);
        let m: f64 = rng.random();
        let mut pp = PlanarPoisson::new(&mut rng);
        let big = coupled_path(&mut pp, m, 50.0, 2.0);
        let small = coupled_path(&mut pp, m, 5.0, 2.0);
        let window = Interval::new(-m * 5.0, (1.0 - m) * 5.0).unwrap();
        for t in [0.1, 0.5, 1.0, 2.0] {
            let b = big.at(t).shifted(-m * 50.0);
            let s = small.at(t).shifted(-m * 5.0);
            let clipped = b.intersect(&window).unwrap();
            assert!(s.approx_eq(&clipped, 1e-9), "t={t}: {s:?} vs {clipped:?}");
        }
    }
}

#[test]
fn trivial_self_similarity() {
    let rep = self_similarity_check(3.0, 1.0, 0.8, 50_000, &Streams::new(SEED, "c1")).unwrap();
    assert!(rep.p_value > 0.01);
}

#[test]
fn single_time_limit_is_gamma_two() {
    let rep = rescaled_spine_limit_check(1e8, &[1.0], 50_000, &Streams::new(SEED, "one")).unwrap();
    assert!((rep.means[0] - 2.0).abs() < 0.05 && (rep.variances[0] - 2.0).abs() < 0.15, "{rep:?}");
    let small = rescaled_spine_limit_check(10.0, &[1.0], 5_000, &Streams::new(SEED, "small")).unwrap();
    assert!(small.means[0].is_finite());
}

#[test]
fn distance_ratio_is_symmetric() {
    // With k = 2 the reported pair is unordered; k = 3 reuses the same
    // quantities so the median barely moves.
    let two = distance_agreement_check(2, 1e4, 4000, &Streams::new(SEED, "sym")).unwrap();
    let three = distance_agreement_check(3, 1e4, 4000, &Streams::new(SEED, "sym3")).unwrap();
    assert_eq!(three.count, 3 * 4000);
    assert!((two.median - three.median).abs() < 0.1, "{} vs {}", two.median, three.median);
}

fn critical_survivors(n: u32, count: u64, streams: &Streams) -> Vec<spinesim::tree::MarkedTree> {
    let model = CriticalModel::new(n as f64).unwrap();
    let root = Interval::from_length(0.0).unwrap();
    streams.map(count, |_, rng| loop {
        if let SimOutcome::Survived(t) = simulate_tree(&model, root, n, usize::MAX, rng) {
            break t;
        }
    })
}

#[test]
fn forward_and_spine_polynomials_agree_at_finite_n() {
    let n = 4;
    let model = CriticalModel::new(n as f64).unwrap();
    let nu = NuDistribution::uniform(n).unwrap();
    let root = Interval::from_length(0.0).unwrap();
    let survival = critical_poisson_survival(n);
    let trees = critical_survivors(n, 40_000, &Streams::new(SEED, "fwd-trees"));
    for (k, phi) in [
        (1, TestFunctional::Const),
        (2, TestFunctional::Const),
        (2, TestFunctional::DistIndicator(2.0)),
        (3, TestFunctional::Const),
    ] {
        let fwd = polynomial_forward(&trees, n as f64, k, &phi, &Scaling::Identity, TupleMode::Distinct, &Streams::new(SEED, "fwd"))
            .unwrap();
        let sp = polynomial_spine(&model, &nu, root, k, &phi, &Scaling::Identity, survival, 40_000, &Streams::new(SEED, "spine"))
            .unwrap();
        let (a, b) = (fwd.summary(), sp.summary());
        assert!((a.estimate - b.estimate).abs() <= 3.0 * (a.se + b.se), "k={k} {phi:?}: {a:?} vs {b:?}");
    }
}

#[test]
fn with_replacement_mass_matches_distinct_for_k1() {
    let n = 4;
    let trees = critical_survivors(n, 5_000, &Streams::new(SEED, "wr-trees"));
    let run = |mode| {
        polynomial_forward(&trees, n as f64, 1, &TestFunctional::Const, &Scaling::Identity, mode, &Streams::new(SEED, "wr"))
            .unwrap()
            .mean()
            .unwrap()
    };
    let a = run(TupleMode::Distinct);
    let b = run(TupleMode::WithReplacement { samples: 3 });
    assert!((a - b).abs() < 1e-9 * a, "{a} vs {b}");
    assert!((a - 1.0 / critical_poisson_survival(n)).abs() < 0.1 * a);
}

#[test]
fn critical_population_size_is_roughly_exponential() {
    // Z_N / E[Z_N | survival] for the critical process against Exp(1); the
    // law is discrete at finite N so only a loose distance is expected.
    let n = 200;
    let trees = critical_survivors(n, 4_000, &Streams::new(SEED, "yaglom0"));
    let sizes: Vec<f64> = trees.iter().map(|t| t.generation_size(n) as f64).collect();
    let mean_exact = 1.0 / critical_poisson_survival(n);
    let scaled: Vec<f64> = sizes.iter().map(|z| z / mean_exact).collect();
    let m = scaled.iter().sum::<f64>() / scaled.len() as f64;
    assert!((m - 1.0).abs() < 0.05, "mean {m}");
    let ks = ks_one_sample(&scaled, |x| 1.0 - (-x.max(0.0)).exp());
    assert!(ks.statistic < 0.05, "KS {}", ks.statistic);
}
