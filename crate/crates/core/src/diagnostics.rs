//! Rescaled genealogies, chromosomic distances, the distance agreement
//! along the continuous k-spine, Yaglom-type diagnostics of conditioned
//! populations and the polynomial estimators in forward and spine form.

use std::collections::HashMap;

use rand::Rng;
use serde::Serialize;

use crate::accumulator::{Accumulator, Summary};
use crate::branching::{horizon, sample_conditioned_population, ModelParams};
use crate::error::{Error, Result};
use crate::functional::TestFunctional;
use crate::interval::Interval;
use crate::kspine::sample_kspine_continuous;
use crate::manytofew::{sum_over_tuples, weighted_spine_sample, TupleOptions, MAX_K};
use crate::model::MarkModel;
use crate::rescale::RescaleR;
use crate::rng::Streams;
use crate::spine::NuDistribution;
use crate::stats::{self, weighted_ks_distance};
use crate::tree::{AncestorTable, MarkedTree};
use crate::ultrametric::UltrametricMatrix;

/// Picks `k` individuals of the last generation uniformly with replacement.
pub fn sample_extant<R: Rng + ?Sized>(tree: &MarkedTree, k: usize, rng: &mut R) -> Result<Vec<usize>> {
    let last = tree.generation(tree.height());
    if tree.height() == 0 || last.is_empty() {
        return Err(Error::InvalidParameter("tree has no extant individuals".into()));
    }
    Ok((0..k).map(|_| rng.random_range(last.clone())).collect())
}

/// `1 - F_R(1 - depth / horizon)`.
pub fn rescale_depth(f: &RescaleR, depth: f64, horizon: u32) -> f64 {
    1.0 - f.f(1.0 - depth / horizon as f64)
}

/// Rescaled genealogical distances among `leaves` (all in the last
/// generation), with their interval lengths as marks.
pub fn rescaled_genealogy_of(tree: &MarkedTree, leaves: &[usize], r: f64) -> Result<UltrametricMatrix> {
    let f = RescaleR::new(r)?;
    let h = tree.height();
    let depth = tree.depth_matrix(leaves)?;
    let d = depth.iter().map(|&x| rescale_depth(&f, x, h)).collect();
    let marks = leaves.iter().map(|&u| tree.nodes()[u].mark.length()).collect();
    UltrametricMatrix::new(leaves.len(), d, marks, 0.0)
}

/// Samples `k` extant individuals with replacement and returns their
/// rescaled genealogy.
pub fn rescaled_genealogy<R: Rng + ?Sized>(
    tree: &MarkedTree,
    r: f64,
    k: usize,
    rng: &mut R,
) -> Result<UltrametricMatrix> {
    RescaleR::new(r)?;
    let leaves = sample_extant(tree, k, rng)?;
    rescaled_genealogy_of(tree, &leaves, r)
}

/// `ln(max(D, 2)) / ln R`.
pub fn rescale_chromosomic(d: f64, log_r: f64) -> f64 {
    d.max(2.0).ln() / log_r
}

/// Rescaled chromosomic distances among `leaves`: one reference point per
/// distinct individual, uniform on its interval.
pub fn chromosomic_matrix<R: Rng + ?Sized>(
    tree: &MarkedTree,
    leaves: &[usize],
    r: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let f = RescaleR::new(r)?;
    let mut points: HashMap<usize, f64> = HashMap::new();
    let mut m = Vec::with_capacity(leaves.len());
    for &u in leaves {
        let mark = tree.node(u)?.mark;
        let x = *points.entry(u).or_insert_with(|| mark.lo() + rng.random::<f64>() * mark.length());
        m.push(x);
    }
    let k = leaves.len();
    let mut d = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            d[i * k + j] = rescale_chromosomic((m[i] - m[j]).abs(), f.log_r());
        }
    }
    Ok(d)
}

#[derive(Debug, Clone, Serialize)]
pub struct DistanceAgreementReport {
    pub r: f64,
    pub k: usize,
    pub median: f64,
    pub q05: f64,
    pub q25: f64,
    pub q75: f64,
    pub q95: f64,
    pub count: u64,
}

impl DistanceAgreementReport {
    pub fn width90(&self) -> f64 {
        self.q95 - self.q05
    }

    pub fn iqr(&self) -> f64 {
        self.q75 - self.q25
    }
}

/// `ln |M_i - M_j| / (d(i,j) ln R)` for the pairs `i < j` of one
/// continuous k-spine, with `d = 1 - F_R(W_{ij})` and `M_i` uniform on
/// `I_i(1)`.
pub fn distance_ratios<R: Rng + ?Sized>(k: usize, r: f64, rng: &mut R) -> Result<Vec<f64>> {
    let f = RescaleR::new(r)?;
    let spine = sample_kspine_continuous(k, r, rng)?;
    let m: Vec<f64> = (0..k)
        .map(|i| {
            let leaf = spine.leaf_mark(i);
            leaf.lo() + rng.random::<f64>() * leaf.length()
        })
        .collect();
    let mut out = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            let d = 1.0 - f.f(spine.split_time(i, j));
            out.push((m[i] - m[j]).abs().ln() / (d * f.log_r()));
        }
    }
    Ok(out)
}

pub fn distance_agreement_check(
    k: usize,
    r: f64,
    replicates: u64,
    streams: &Streams,
) -> Result<DistanceAgreementReport> {
    if k < 2 {
        return Err(Error::InvalidParameter("k must be >= 2".into()));
    }
    if replicates == 0 {
        return Err(Error::NoReplicates);
    }
    RescaleR::new(r)?;
    let ratios: Vec<f64> = streams
        .map(replicates, |_, rng| distance_ratios(k, r, rng))
        .into_iter()
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let q = stats::quantiles(&ratios, &[0.5, 0.05, 0.25, 0.75, 0.95]);
    Ok(DistanceAgreementReport {
        r,
        k,
        median: q[0],
        q05: q[1],
        q25: q[2],
        q75: q[3],
        q95: q[4],
        count: ratios.len() as u64,
    })
}

/// Statistics of populations conditioned to survive to generation `⌊tN⌋`.
#[derive(Debug, Clone, Serialize)]
pub struct YaglomPoint {
    pub r: f64,
    pub n: u32,
    pub t: f64,
    pub horizon: u32,
    pub survivors: u64,
    pub attempts: u64,
    /// Replicates lost to the node cap.
    pub capped: u64,
    /// Replicates that ran out of attempts.
    pub exhausted: u64,
    /// `Z / (tN ln R)` given survival.
    pub mass: Summary,
    pub mass_ks: f64,
    /// Length of one uniformly chosen individual per population.
    pub mark: Summary,
    /// KS distance to `Exp(t)` of the mark distribution, each population
    /// weighted equally and spread evenly over its individuals.
    pub mark_ks: f64,
    /// Correlation of the lengths of two distinct individuals.
    pub chaos_correlation: f64,
    /// `survivors / attempts`.
    pub survival: Summary,
    /// `N ln R P(Z > 0) / R`.
    pub survival_ratio: f64,
}

impl YaglomPoint {
    pub fn partial(&self) -> bool {
        self.capped + self.exhausted > 0
    }
}

struct Survivor {
    attempts: u64,
    lengths: Vec<f64>,
    pick: usize,
    pair: Option<(usize, usize)>,
}

/// Draws `survivors` conditioned populations of the recombination model at
/// `(R, N)` and summarizes them.
pub fn yaglom_point(
    params: &ModelParams,
    t: f64,
    survivors: u64,
    max_attempts: u64,
    streams: &Streams,
) -> Result<YaglomPoint> {
    if survivors == 0 {
        return Err(Error::NoReplicates);
    }
    let f = RescaleR::new(params.r)?;
    if !(t > 0.0) {
        return Err(Error::InvalidParameter(format!("t must be > 0, got {t}")));
    }
    let model = params.model();
    let h = horizon(params.n, t);
    let runs = streams.map(survivors, |_, rng| {
        sample_conditioned_population(&model, params.root(), h, params.node_cap, max_attempts, rng)
            .map(|(marks, attempts)| {
                let z = marks.len();
                let pick = rng.random_range(0..z);
                let pair = (z >= 2).then(|| {
                    let a = rng.random_range(0..z);
                    let mut b = rng.random_range(0..z - 1);
                    if b >= a {
                        b += 1;
                    }
                    (a, b)
                });
                Survivor { attempts, lengths: marks.iter().map(Interval::length).collect(), pick, pair }
            })
    });
    let alpha = t * params.n as f64 * f.log_r();
    let mut capped = 0;
    let mut exhausted = 0;
    let mut attempts = 0;
    let mut mass = Vec::new();
    let mut mark = Accumulator::new();
    let mut weighted = Vec::new();
    let (mut xa, mut xb) = (Vec::new(), Vec::new());
    for run in runs {
        let s = match run {
            Ok(s) => s,
            Err(Error::CapExceeded { .. }) => {
                capped += 1;
                continue;
            }
            Err(Error::MaxAttempts { attempts: a }) => {
                exhausted += 1;
                attempts += a;
                continue;
            }
            Err(e) => return Err(e),
        };
        attempts += s.attempts;
        let z = s.lengths.len() as f64;
        mass.push(z / alpha);
        mark.push(s.lengths[s.pick]);
        weighted.extend(s.lengths.iter().map(|&x| (x, 1.0 / z)));
        if let Some((a, b)) = s.pair {
            xa.push(s.lengths[a]);
            xb.push(s.lengths[b]);
        }
    }
    let found = mass.len() as u64;
    let exp_cdf = |x: f64| if x <= 0.0 { 0.0 } else { -(-t * x).exp_m1() };
    let mass_acc: Accumulator = mass.iter().copied().collect();
    let p = found as f64 / attempts.max(1) as f64;
    let survival = Summary {
        estimate: p,
        se: (p * (1.0 - p) * p / found.max(1) as f64).sqrt(),
        count: attempts,
    };
    Ok(YaglomPoint {
        r: params.r,
        n: params.n,
        t,
        horizon: h,
        survivors: found,
        attempts,
        capped,
        exhausted,
        mass: mass_acc.summary(),
        mass_ks: if mass.is_empty() {
            f64::NAN
        } else {
            stats::ks_one_sample(&mass, |x| if x <= 0.0 { 0.0 } else { -(-x).exp_m1() }).statistic
        },
        mark: mark.summary(),
        mark_ks: if weighted.is_empty() { f64::NAN } else { weighted_ks_distance(&weighted, exp_cdf) },
        chaos_correlation: if xa.len() >= 3 { stats::correlation(&xa, &xb) } else { f64::NAN },
        survival,
        survival_ratio: params.n as f64 * f.log_r() * p / params.r,
    })
}

/// Runs [`yaglom_point`] over a grid of `(R, N)` pairs.
pub fn yaglom_diagnostic(
    grid: &[(f64, u32)],
    t: f64,
    survivors: u64,
    max_attempts: u64,
    node_cap: usize,
    streams: &Streams,
) -> Result<Vec<YaglomPoint>> {
    grid.iter()
        .map(|&(r, n)| {
            let params = ModelParams::new(r, n)?.with_node_cap(node_cap);
            yaglom_point(&params, t, survivors, max_attempts, &streams.child(&format!("{r}/{n}")))
        })
        .collect()
}

/// Whether `|x_i - target|` is nonincreasing in at least `need` of the
/// consecutive steps.
pub fn approaches(xs: &[f64], target: f64, need: usize) -> bool {
    xs.windows(2).filter(|w| (w[1] - target).abs() <= (w[0] - target).abs()).count() >= need
}

/// Whether `xs` is nonincreasing in at least `need` of the consecutive
/// steps.
pub fn nonincreasing_steps(xs: &[f64], need: usize) -> bool {
    xs.windows(2).filter(|w| w[1] <= w[0]).count() >= need
}

/// Normalizations of the polynomials: mass by `α`, distances by `γ`, marks
/// unchanged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Scaling {
    /// `α = 1`, `γ = id`.
    Identity,
    /// `α = tN ln R`, `γ(d) = 1 - F_R(1 - d/⌊tN⌋)`.
    LogRescaled { r: f64, n: u32, t: f64 },
}

impl Scaling {
    fn resolve(&self, model_scale: f64, generations: u32) -> Result<(f64, Option<(RescaleR, u32)>)> {
        match *self {
            Scaling::Identity => Ok((1.0, None)),
            Scaling::LogRescaled { r, n, t } => {
                let f = RescaleR::new(r).map_err(|e| Error::Scaling(e.to_string()))?;
                if n as f64 != model_scale {
                    return Err(Error::Scaling(format!("scaling N = {n} but model N = {model_scale}")));
                }
                let h = horizon(n, t);
                if h != generations {
                    return Err(Error::Scaling(format!(
                        "scaling horizon {h} but samples at generation {generations}"
                    )));
                }
                Ok((t * n as f64 * f.log_r(), Some((f, h))))
            }
        }
    }
}

fn rescale_in_place(d: &mut [f64], gamma: &Option<(RescaleR, u32)>) {
    if let Some((f, h)) = gamma {
        for x in d.iter_mut() {
            *x = rescale_depth(f, *x, *h);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TupleMode {
    /// `k` individuals drawn with replacement, `samples` times per tree.
    WithReplacement { samples: usize },
    /// Sum over ordered tuples of distinct individuals.
    Distinct,
}

/// Forward polynomial estimate from trees conditioned on survival:
/// `α^{-k} Σ_{tuples} φ(γ(d), X)` per tree.
pub fn polynomial_forward(
    trees: &[MarkedTree],
    model_scale: f64,
    k: usize,
    phi: &TestFunctional,
    scaling: &Scaling,
    mode: TupleMode,
    streams: &Streams,
) -> Result<Accumulator> {
    if k == 0 || k > MAX_K {
        return Err(Error::InvalidParameter(format!("k must be in 1..={MAX_K}, got {k}")));
    }
    if trees.is_empty() {
        return Err(Error::NoReplicates);
    }
    let h = trees[0].height();
    if trees.iter().any(|t| t.height() != h) {
        return Err(Error::Scaling("trees of different heights".into()));
    }
    let (alpha, gamma) = scaling.resolve(model_scale, h)?;
    let norm = alpha.powi(k as i32);
    let values = streams.map(trees.len() as u64, |i, rng| -> Result<f64> {
        let tree = &trees[i as usize];
        let leaves: Vec<usize> = tree.generation(h).collect();
        if leaves.is_empty() {
            return Err(Error::InvalidParameter("tree has no extant individuals".into()));
        }
        let table = AncestorTable::new(tree, &leaves)?;
        let marks: Vec<f64> = leaves.iter().map(|&u| tree.nodes()[u].mark.length()).collect();
        let mut d = vec![0.0; k * k];
        let mut x = vec![0.0; k];
        let mut eval = |t: &[usize]| {
            for a in 0..k {
                x[a] = marks[t[a]];
                for b in 0..k {
                    d[a * k + b] = table.depth(t[a], t[b]) as f64;
                }
            }
            rescale_in_place(&mut d, &gamma);
            phi.eval(&d, &x)
        };
        let z = leaves.len();
        Ok(match mode {
            TupleMode::Distinct => sum_over_tuples(z, k, &TupleOptions::default(), rng, eval).0 / norm,
            TupleMode::WithReplacement { samples } => {
                let samples = samples.max(1);
                let mut t = vec![0usize; k];
                let mut s = 0.0;
                for _ in 0..samples {
                    for a in t.iter_mut() {
                        *a = rng.random_range(0..z);
                    }
                    s += eval(&t);
                }
                (z as f64 / alpha).powi(k as i32) * s / samples as f64
            }
        })
    });
    values.into_iter().collect()
}

/// Spine polynomial estimate `h(x) k! N^{k-1} Q[Δ_k φ(γ(d), X)] / (α^k P(Z > 0))`
/// with the survival probability supplied by the caller.
#[allow(clippy::too_many_arguments)]
pub fn polynomial_spine<M: MarkModel>(
    model: &M,
    nu: &NuDistribution,
    start: Interval,
    k: usize,
    phi: &TestFunctional,
    scaling: &Scaling,
    survival: f64,
    replicates: u64,
    streams: &Streams,
) -> Result<Accumulator> {
    if k == 0 || k > MAX_K {
        return Err(Error::InvalidParameter(format!("k must be in 1..={MAX_K}, got {k}")));
    }
    if replicates == 0 {
        return Err(Error::NoReplicates);
    }
    if !(survival > 0.0 && survival <= 1.0) {
        return Err(Error::InvalidParameter(format!("survival probability {survival} not in (0, 1]")));
    }
    let (alpha, gamma) = scaling.resolve(model.scale(), nu.n())?;
    let norm = alpha.powi(k as i32) * survival;
    let values = streams.map(replicates, |_, rng| {
        weighted_spine_sample(model, k, nu, start, rng).map(|(w, m)| {
            let mut d = m.distances().to_vec();
            rescale_in_place(&mut d, &gamma);
            w * phi.eval(&d, m.marks()) / norm
        })
    });
    values.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::branching::sample_conditioned;
    use crate::manytofew::many_to_few_rhs;
    use crate::model::{CriticalModel, RecombinationModel};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn survivor(r: f64, n: u32, seed: u64) -> MarkedTree {
        let p = ModelParams::new(r, n).unwrap();
        sample_conditioned(&p, 1.0, 100_000, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn depth_rescaling_endpoints() {
        let f = RescaleR::new(10.0).unwrap();
        assert_eq!(rescale_depth(&f, 0.0, 8), 0.0);
        assert!((rescale_depth(&f, 8.0, 8) - 1.0).abs() < 1e-15);
        assert!((rescale_depth(&f, 4.0, 8) - 0.259637).abs() < 1e-6);
    }

    #[test]
    fn rescaled_genealogy_is_ultrametric_in_unit_range() {
        let tree = survivor(10.0, 20, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let leaves = sample_extant(&tree, 5, &mut rng).unwrap();
            let m = rescaled_genealogy_of(&tree, &leaves, 10.0).unwrap();
            assert!(m.is_ultrametric(0.0));
            for i in 0..5 {
                for j in 0..5 {
                    let d = m.get(i, j);
                    assert!((0.0..=1.0 + 1e-12).contains(&d));
                    assert_eq!(d == 0.0, leaves[i] == leaves[j]);
                }
            }
        }
        assert!(rescaled_genealogy(&tree, 1.0, 2, &mut rng).is_err());
    }

    #[test]
    fn extinct_tree_is_rejected() {
        let mut b = crate::tree::TreeBuilder::new(Interval::from_length(1.0).unwrap());
        b.push_counts(&[0], &[]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(rescaled_genealogy(&b.finish(), 10.0, 2, &mut rng).is_err());
    }

    #[test]
    fn chromosomic_floor_and_diagonal() {
        let log_r = 10f64.ln();
        assert_eq!(rescale_chromosomic(0.5, log_r), 2f64.ln() / log_r);
        assert!((rescale_chromosomic(10.0, log_r) - 1.0).abs() < 1e-15);
        let tree = survivor(50.0, 20, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let leaves = sample_extant(&tree, 1, &mut rng).unwrap();
        let leaves = [leaves[0], leaves[0]];
        let d = chromosomic_matrix(&tree, &leaves, 50.0, &mut rng).unwrap();
        assert_eq!(d[1], 2f64.ln() / 50f64.ln());
    }

    #[test]
    fn distance_ratio_concentrates_as_r_grows() {
        let s = Streams::new(1, "dist");
        let reps: Vec<_> = [1e2, 1e4, 1e6]
            .iter()
            .map(|&r| distance_agreement_check(2, r, 2000, &s).unwrap())
            .collect();
        assert!(reps.windows(2).all(|w| w[1].median > w[0].median && w[1].iqr() < w[0].iqr()));
        // ln(B γ) with B ~ Beta(1,2), γ ~ Gamma(2,1) shifts the median to
        // about 1 - 1/(0.5 ln R) for large R
        let approx = 1.0 + (-1.5 + 0.4228) / (0.5 * 1e6f64.ln());
        assert!((reps[2].median - approx).abs() < 0.05, "{:?} vs {approx}", reps[2]);
        assert!(distance_agreement_check(1, 1e6, 10, &s).is_err());
    }

    #[test]
    fn scaling_mismatch_is_an_error() {
        let model = RecombinationModel::new(6.0).unwrap();
        let nu = NuDistribution::branch_times(6, 5.0).unwrap();
        let start = Interval::from_length(5.0).unwrap();
        let s = Streams::new(0, "scale");
        let bad = Scaling::LogRescaled { r: 5.0, n: 7, t: 1.0 };
        let e = polynomial_spine(&model, &nu, start, 2, &TestFunctional::Const, &bad, 0.5, 10, &s);
        assert!(matches!(e, Err(Error::Scaling(_))));
        let ok = Scaling::LogRescaled { r: 5.0, n: 6, t: 1.0 };
        assert!(polynomial_spine(&model, &nu, start, 2, &TestFunctional::Const, &ok, 0.5, 10, &s).is_ok());
        let tree = survivor(5.0, 6, 6);
        let e = polynomial_forward(&[tree], 6.0, 2, &TestFunctional::Const, &Scaling::LogRescaled {
            r: 5.0,
            n: 6,
            t: 0.5,
        }, TupleMode::Distinct, &s);
        assert!(matches!(e, Err(Error::Scaling(_))));
    }

    #[test]
    fn spine_mode_reduces_to_rhs() {
        let model = CriticalModel::new(4.0).unwrap();
        let nu = NuDistribution::uniform(4).unwrap();
        let start = Interval::from_length(0.0).unwrap();
        let phi = TestFunctional::DistIndicator(2.0);
        let s = Streams::new(8, "same");
        let a = polynomial_spine(&model, &nu, start, 3, &phi, &Scaling::Identity, 1.0, 500, &s).unwrap();
        let b = many_to_few_rhs(&model, 3, &nu, start, &phi, 500, &s).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn trend_helpers() {
        assert!(approaches(&[0.5, 0.3, 0.4, 0.1], 0.0, 2));
        assert!(!approaches(&[0.1, 0.3, 0.4, 0.5], 0.0, 2));
        assert!(nonincreasing_steps(&[3.0, 2.0, 2.5, 1.0], 2));
    }
}
