//! k-spine trees and the bias `Δ_k`.
//!
//! A k-spine is encoded by its branch times `(W_1, …, W_{k-1})` and one mark
//! path per leaf. Leaf `i + 1` follows leaf `i` up to generation `W_i` and
//! then runs an independent copy of the spine chain from `X_i(W_i)`.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::interval::Interval;
use crate::model::MarkModel;
use crate::rescale::RescaleR;
use crate::spine::{NuDistribution, SpinePath};
use crate::ultrametric::UltrametricMatrix;

/// A discrete k-spine over generations `0..=N`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KSpine {
    n: u32,
    branch_times: Vec<u32>,
    // paths[i][g] = X_{i+1}(g)
    paths: Vec<Vec<Interval>>,
}

/// A vertex of the spine tree with more than one child.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BranchPoint {
    pub generation: u32,
    /// Index of the first branch time mapped to this vertex.
    pub first: usize,
    pub degree: u32,
    pub mark: Interval,
}

/// Groups branch times into vertices. `W_i` and `W_j` (`i < j`) mark the
/// same vertex iff they are equal and no branch time between them is
/// smaller. Returns, per branch time, the index of its group leader.
pub fn branch_groups<T: PartialOrd + Copy>(w: &[T]) -> Vec<usize> {
    let mut leader: Vec<usize> = (0..w.len()).collect();
    for j in 0..w.len() {
        for i in (0..j).rev() {
            if w[i] < w[j] {
                break;
            }
            if w[i] == w[j] {
                leader[j] = leader[i];
                break;
            }
        }
    }
    leader
}

impl KSpine {
    pub fn k(&self) -> usize {
        self.paths.len()
    }

    pub fn horizon(&self) -> u32 {
        self.n
    }

    pub fn branch_times(&self) -> &[u32] {
        &self.branch_times
    }

    pub fn path(&self, leaf: usize) -> &[Interval] {
        &self.paths[leaf]
    }

    pub fn leaf_mark(&self, leaf: usize) -> Interval {
        self.paths[leaf][self.n as usize]
    }

    /// `N - min(W_i, …, W_{j-1})` for `i < j`.
    pub fn depth(&self, i: usize, j: usize) -> u32 {
        if i == j {
            return 0;
        }
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self.n - self.branch_times[a..b].iter().min().copied().unwrap_or(self.n)
    }

    pub fn depth_matrix(&self) -> UltrametricMatrix {
        let k = self.k();
        let mut d = vec![0.0; k * k];
        for i in 0..k {
            for j in 0..k {
                d[i * k + j] = self.depth(i, j) as f64;
            }
        }
        let marks = (0..k).map(|i| self.leaf_mark(i).length()).collect();
        UltrametricMatrix::from_parts_unchecked(k, d, marks)
    }

    pub fn branch_points(&self) -> Vec<BranchPoint> {
        let leader = branch_groups(&self.branch_times);
        let mut points: Vec<BranchPoint> = Vec::new();
        for (i, &l) in leader.iter().enumerate() {
            if l == i {
                let w = self.branch_times[i];
                points.push(BranchPoint {
                    generation: w,
                    first: i,
                    degree: 2,
                    mark: self.paths[i][w as usize],
                });
            } else {
                let p = points.iter_mut().find(|p| p.first == l).expect("leader seen first");
                p.degree += 1;
            }
        }
        points
    }
}

/// Samples a discrete k-spine with branch times from `nu` (horizon
/// `N = nu.n()`).
pub fn sample_kspine_discrete<M: MarkModel, R: Rng + ?Sized>(
    k: usize,
    nu: &NuDistribution,
    start: Interval,
    model: &M,
    rng: &mut R,
) -> Result<KSpine> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be >= 1".into()));
    }
    let n = nu.n();
    let branch_times: Vec<u32> = (0..k - 1).map(|_| nu.sample(rng)).collect();
    let mut paths: Vec<Vec<Interval>> = Vec::with_capacity(k);
    let mut first = Vec::with_capacity(n as usize + 1);
    first.push(start);
    for g in 0..n as usize {
        first.push(model.spine_step(&first[g], rng)?);
    }
    paths.push(first);
    for i in 0..k - 1 {
        let w = branch_times[i] as usize;
        let mut next = paths[i][..=w].to_vec();
        for g in w..n as usize {
            next.push(model.spine_step(&next[g], rng)?);
        }
        paths.push(next);
    }
    Ok(KSpine { n, branch_times, paths })
}

/// A continuous k-spine on `[0, 1]` with branch times of CDF `F_R`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContinuousKSpine {
    branch_times: Vec<f64>,
    paths: Vec<SpinePath>,
}

impl ContinuousKSpine {
    pub fn k(&self) -> usize {
        self.paths.len()
    }

    pub fn branch_times(&self) -> &[f64] {
        &self.branch_times
    }

    pub fn path(&self, leaf: usize) -> &SpinePath {
        &self.paths[leaf]
    }

    pub fn leaf_mark(&self, leaf: usize) -> Interval {
        self.paths[leaf].at(1.0)
    }

    /// `min(W_i, …, W_{j-1})`, the time at which leaves `i` and `j` split.
    pub fn split_time(&self, i: usize, j: usize) -> f64 {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self.branch_times[a..b].iter().copied().fold(1.0, f64::min)
    }
}

/// Samples a continuous k-spine from `(0, R)` with `W_i = F_R^{-1}(U_i)`.
pub fn sample_kspine_continuous<R: Rng + ?Sized>(
    k: usize,
    r: f64,
    rng: &mut R,
) -> Result<ContinuousKSpine> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be >= 1".into()));
    }
    let f = RescaleR::new(r)?;
    let start = Interval::from_length(r)?;
    let branch_times: Vec<f64> = (0..k - 1).map(|_| f.f_inv(rng.random::<f64>())).collect();
    let mut paths = Vec::with_capacity(k);
    let mut first = SpinePath::constant(start);
    first.extend(0.0, 1.0, rng);
    paths.push(first);
    for i in 0..k - 1 {
        let w = branch_times[i];
        let mut next = paths[i].prefix(w);
        next.extend(w, 1.0, rng);
        paths.push(next);
    }
    Ok(ContinuousKSpine { branch_times, paths })
}

/// One factor of the branch-point product in `Δ_k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BranchFactor {
    pub generation: u32,
    pub harmonic: f64,
    pub degree: u32,
    /// `m_d(Y_u) / m(Y_u)^d`; 1 for Poisson offspring.
    pub moment_ratio: f64,
}

/// The ingredients of `Δ_k` for one sampled spine.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasFactors {
    pub n: u32,
    pub points: Vec<BranchFactor>,
    /// `h(X_i(N))` per leaf.
    pub leaves: Vec<f64>,
}

fn factorial(d: u32) -> f64 {
    (1..=d).map(f64::from).product()
}

impl BiasFactors {
    pub fn new<M: MarkModel>(spine: &KSpine, model: &M) -> Self {
        let points = spine
            .branch_points()
            .into_iter()
            .map(|p| {
                let m = model.offspring_mean(&p.mark);
                BranchFactor {
                    generation: p.generation,
                    harmonic: model.harmonic(&p.mark),
                    degree: p.degree,
                    moment_ratio: model.factorial_moment(&p.mark, p.degree) / m.powi(p.degree as i32),
                }
            })
            .collect();
        let leaves = (0..spine.k()).map(|i| model.harmonic(&spine.leaf_mark(i))).collect();
        Self { n: spine.horizon(), points, leaves }
    }

    fn leaf_product(&self) -> Result<f64> {
        let mut p = 1.0;
        for (leaf, &h) in self.leaves.iter().enumerate() {
            if h == 0.0 {
                return Err(Error::NullHarmonicLeaf { leaf });
            }
            p /= h;
        }
        Ok(p)
    }

    /// `Δ_k` for Poisson offspring numbers.
    pub fn delta_poisson(&self, nu: &NuDistribution) -> Result<f64> {
        let mut delta = self.leaf_product()?;
        for p in &self.points {
            let base = p.harmonic / (self.n as f64 * nu.weight(p.generation));
            delta *= base.powi(p.degree as i32 - 1) / factorial(p.degree);
        }
        Ok(delta)
    }

    /// `Δ_k` with the general factorial-moment correction.
    pub fn delta_general(&self, nu: &NuDistribution) -> Result<f64> {
        let mut delta = self.leaf_product()?;
        for p in &self.points {
            let base = p.harmonic / (self.n as f64 * nu.weight(p.generation));
            delta *= base.powi(p.degree as i32 - 1) * p.moment_ratio / factorial(p.degree);
        }
        Ok(delta)
    }
}

/// `Δ_k` of a sampled spine (Poisson offspring form).
pub fn delta_k<M: MarkModel>(spine: &KSpine, nu: &NuDistribution, model: &M) -> Result<f64> {
    BiasFactors::new(spine, model).delta_poisson(nu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CriticalModel, RecombinationModel};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spine_with(times: Vec<u32>, n: u32) -> KSpine {
        let unit = Interval::from_length(0.0).unwrap();
        let k = times.len() + 1;
        KSpine { n, branch_times: times, paths: vec![vec![unit; n as usize + 1]; k] }
    }

    #[test]
    fn grouping_rule() {
        assert_eq!(branch_groups(&[3, 3]), vec![0, 0]);
        assert_eq!(branch_groups(&[3, 1, 3]), vec![0, 1, 2]);
        assert_eq!(branch_groups(&[3, 5, 3]), vec![0, 1, 0]);
        assert_eq!(branch_groups(&[6, 4, 1, 5, 5]), vec![0, 1, 2, 3, 3]);
    }

    #[test]
    fn degree_accounting() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let nu = NuDistribution::uniform(3).unwrap();
        let model = CriticalModel::new(3.0).unwrap();
        let start = Interval::from_length(0.0).unwrap();
        for k in 1..6 {
            for _ in 0..500 {
                let s = sample_kspine_discrete(k, &nu, start, &model, &mut rng).unwrap();
                let total: u32 = s.branch_points().iter().map(|p| p.degree - 1).sum();
                assert_eq!(total as usize, k - 1);
                assert!(s.branch_points().len() < k.max(1));
            }
        }
    }

    #[test]
    fn typeless_delta_values() {
        let nu = NuDistribution::from_weights(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let model = CriticalModel::new(4.0).unwrap();
        let one = spine_with(vec![], 4);
        assert_eq!(delta_k(&one, &nu, &model).unwrap(), 1.0);
        let two = spine_with(vec![2], 4);
        let expected = 1.0 / (2.0 * 4.0 * 0.3);
        assert!((delta_k(&two, &nu, &model).unwrap() - expected).abs() < 1e-15);
        let tie = spine_with(vec![1, 1], 4);
        let bp = tie.branch_points();
        assert_eq!(bp.len(), 1);
        assert_eq!(bp[0].degree, 3);
        let expected = (1.0f64 / (4.0 * 0.2)).powi(2) / 6.0;
        assert!((delta_k(&tie, &nu, &model).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn poisson_and_general_forms_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let nu = NuDistribution::branch_times(8, 5.0).unwrap();
        let model = RecombinationModel::new(8.0).unwrap();
        let start = Interval::from_length(5.0).unwrap();
        for _ in 0..1000 {
            let s = sample_kspine_discrete(4, &nu, start, &model, &mut rng).unwrap();
            let b = BiasFactors::new(&s, &model);
            let (p, g) = (b.delta_poisson(&nu).unwrap(), b.delta_general(&nu).unwrap());
            assert!((p - g).abs() <= 1e-12 * p.abs());
            assert!(p > 0.0);
        }
    }

    #[test]
    fn null_leaf_is_an_error() {
        let nu = NuDistribution::uniform(2).unwrap();
        let model = RecombinationModel::new(2.0).unwrap();
        let s = spine_with(vec![], 2);
        assert_eq!(delta_k(&s, &nu, &model), Err(Error::NullHarmonicLeaf { leaf: 0 }));
    }

    #[test]
    fn prefix_sharing_and_monotone_lengths() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let nu = NuDistribution::uniform(20).unwrap();
        let model = RecombinationModel::new(20.0).unwrap();
        let start = Interval::from_length(15.0).unwrap();
        for _ in 0..200 {
            let s = sample_kspine_discrete(3, &nu, start, &model, &mut rng).unwrap();
            for i in 0..2 {
                let w = s.branch_times()[i] as usize;
                assert_eq!(s.path(i + 1)[..=w], s.path(i)[..=w]);
            }
            for i in 0..3 {
                assert!(s.path(i).windows(2).all(|p| p[1].length() <= p[0].length()));
            }
            assert!(s.depth_matrix().is_ultrametric(0.0));
        }
    }

    #[test]
    fn continuous_prefix_sharing() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let s = sample_kspine_continuous(3, 100.0, &mut rng).unwrap();
            for i in 0..2 {
                let w = s.branch_times()[i];
                assert!(w > 0.0 && w < 1.0);
                for t in [0.0, w * 0.5, w] {
                    assert_eq!(s.path(i + 1).at(t), s.path(i).at(t));
                }
            }
        }
    }
}
