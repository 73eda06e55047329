//! Both sides of the many-to-few identity
//!
//! ```text
//! E_x[ Σ_{distinct (v_1..v_k) in T_N} φ(d(v_i,v_j), X_{v_i}) ]
//!     = h(x) N^{k-1} k! E_Q[ Δ_k φ(d(σ_i,σ_j), X_{σ_i}(N)) ]
//! ```
//!
//! with genealogical depth as the distance on both sides.

use std::collections::HashSet;

use rand::Rng;

use crate::accumulator::Accumulator;
use crate::branching::{simulate_tree, SimOutcome};
use crate::error::{Error, Result};
use crate::functional::TestFunctional;
use crate::interval::Interval;
use crate::kspine::{sample_kspine_discrete, BiasFactors};
use crate::model::MarkModel;
use crate::rng::Streams;
use crate::sampling::permutation;
use crate::spine::NuDistribution;
use crate::tree::AncestorTable;
use crate::ultrametric::UltrametricMatrix;

pub const MAX_K: usize = 4;

fn check_k(k: usize) -> Result<()> {
    if k == 0 || k > MAX_K {
        return Err(Error::InvalidParameter(format!("k must be in 1..={MAX_K}, got {k}")));
    }
    Ok(())
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// Number of ordered k-tuples of distinct elements among `z`.
pub fn falling_factorial(z: usize, k: usize) -> f64 {
    (0..k).map(|i| z.saturating_sub(i) as f64).product()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TupleOptions {
    /// Sum exactly when the tuple count is at most this.
    pub exact_limit: f64,
    /// Tuples drawn (without replacement) otherwise.
    pub sample_size: usize,
}

impl Default for TupleOptions {
    fn default() -> Self {
        Self { exact_limit: 1e6, sample_size: 10_000 }
    }
}

/// `Σ f(tuple)` over ordered k-tuples of distinct indices in `0..z`. Above
/// `exact_limit` tuples the sum is estimated from a uniform sample without
/// replacement, weighted by the inverse inclusion probability; the flag
/// reports whether that happened.
pub fn sum_over_tuples<R: Rng + ?Sized>(
    z: usize,
    k: usize,
    opts: &TupleOptions,
    rng: &mut R,
    mut f: impl FnMut(&[usize]) -> f64,
) -> (f64, bool) {
    let total = falling_factorial(z, k);
    if total == 0.0 {
        return (0.0, false);
    }
    if total <= opts.exact_limit || total <= opts.sample_size as f64 {
        let mut tuple = vec![0usize; k];
        let mut sum = 0.0;
        enumerate(z, 0, &mut tuple, &mut |t| sum += f(t));
        return (sum, false);
    }
    let mut seen: HashSet<Vec<usize>> = HashSet::with_capacity(opts.sample_size);
    let mut sum = 0.0;
    while seen.len() < opts.sample_size {
        let mut t: Vec<usize> = Vec::with_capacity(k);
        while t.len() < k {
            let x = rng.random_range(0..z);
            if !t.contains(&x) {
                t.push(x);
            }
        }
        if seen.insert(t.clone()) {
            sum += f(&t);
        }
    }
    (sum * total / opts.sample_size as f64, true)
}

fn enumerate(z: usize, depth: usize, tuple: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
    if depth == tuple.len() {
        f(tuple);
        return;
    }
    for x in 0..z {
        if !tuple[..depth].contains(&x) {
            tuple[depth] = x;
            enumerate(z, depth + 1, tuple, f);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LhsEstimate {
    pub estimate: Accumulator,
    /// Replicates whose tuple sum was subsampled.
    pub truncated: u64,
    /// Replicates dropped because the node cap was hit.
    pub capped: u64,
}

/// One forward replicate of the left-hand side.
pub fn lhs_sample<M: MarkModel, R: Rng + ?Sized>(
    model: &M,
    k: usize,
    n: u32,
    start: Interval,
    phi: &TestFunctional,
    node_cap: usize,
    opts: &TupleOptions,
    rng: &mut R,
) -> Option<(f64, bool)> {
    let tree = match simulate_tree(model, start, n, node_cap, rng) {
        SimOutcome::Survived(t) => t,
        SimOutcome::Extinct { .. } => return Some((0.0, false)),
        SimOutcome::CapExceeded { .. } => return None,
    };
    let leaves: Vec<usize> = tree.generation(n).collect();
    let table = AncestorTable::new(&tree, &leaves).expect("leaves share a generation");
    let marks: Vec<f64> = leaves.iter().map(|&u| tree.nodes()[u].mark.length()).collect();
    let mut d = vec![0.0; k * k];
    let mut x = vec![0.0; k];
    Some(sum_over_tuples(leaves.len(), k, opts, rng, |t| {
        for i in 0..k {
            x[i] = marks[t[i]];
            for j in 0..k {
                d[i * k + j] = table.depth(t[i], t[j]) as f64;
            }
        }
        phi.eval(&d, &x)
    }))
}

/// Forward estimate of the left-hand side over `replicates` trees.
#[allow(clippy::too_many_arguments)]
pub fn many_to_few_lhs<M: MarkModel>(
    model: &M,
    k: usize,
    n: u32,
    start: Interval,
    phi: &TestFunctional,
    replicates: u64,
    streams: &Streams,
    node_cap: usize,
    opts: &TupleOptions,
) -> Result<LhsEstimate> {
    check_k(k)?;
    if replicates == 0 {
        return Err(Error::NoReplicates);
    }
    let samples = streams
        .map(replicates, |_, rng| lhs_sample(model, k, n, start, phi, node_cap, opts, rng));
    let mut out = LhsEstimate { estimate: Accumulator::new(), truncated: 0, capped: 0 };
    for s in samples {
        match s {
            Some((v, t)) => {
                out.estimate.push(v);
                out.truncated += t as u64;
            }
            None => out.capped += 1,
        }
    }
    Ok(out)
}

/// One spine replicate: the weight `h(x) N^{k-1} k! Δ_k` and the leaf
/// depth matrix after a uniform relabelling `σ`.
pub fn weighted_spine_sample<M: MarkModel, R: Rng + ?Sized>(
    model: &M,
    k: usize,
    nu: &NuDistribution,
    start: Interval,
    rng: &mut R,
) -> Result<(f64, UltrametricMatrix)> {
    weighted_spine_sample_with(model, k, nu, start, rng, |b, nu| b.delta_poisson(nu))
}

/// As [`weighted_spine_sample`] with `Δ_k` computed by `delta`.
pub fn weighted_spine_sample_with<M: MarkModel, R: Rng + ?Sized>(
    model: &M,
    k: usize,
    nu: &NuDistribution,
    start: Interval,
    rng: &mut R,
    delta: impl Fn(&BiasFactors, &NuDistribution) -> Result<f64>,
) -> Result<(f64, UltrametricMatrix)> {
    let spine = sample_kspine_discrete(k, nu, start, model, rng)?;
    let delta = delta(&BiasFactors::new(&spine, model), nu)?;
    let n = nu.n() as f64;
    let weight = model.harmonic(&start) * n.powi(k as i32 - 1) * factorial(k) * delta;
    let sigma = permutation(k, rng);
    Ok((weight, spine.depth_matrix().permuted(&sigma)))
}

/// Spine estimate of the right-hand side.
pub fn many_to_few_rhs<M: MarkModel>(
    model: &M,
    k: usize,
    nu: &NuDistribution,
    start: Interval,
    phi: &TestFunctional,
    replicates: u64,
    streams: &Streams,
) -> Result<Accumulator> {
    many_to_few_rhs_with(model, k, nu, start, phi, replicates, streams, |b, nu| b.delta_poisson(nu))
}

/// Spine estimate of the right-hand side with a caller-supplied `Δ_k`.
#[allow(clippy::too_many_arguments)]
pub fn many_to_few_rhs_with<M: MarkModel, D>(
    model: &M,
    k: usize,
    nu: &NuDistribution,
    start: Interval,
    phi: &TestFunctional,
    replicates: u64,
    streams: &Streams,
    delta: D,
) -> Result<Accumulator>
where
    D: Fn(&BiasFactors, &NuDistribution) -> Result<f64> + Sync,
{
    check_k(k)?;
    if replicates == 0 {
        return Err(Error::NoReplicates);
    }
    let values = streams.map(replicates, |_, rng| {
        weighted_spine_sample_with(model, k, nu, start, rng, &delta)
            .map(|(w, m)| w * phi.eval(m.distances(), m.marks()))
    });
    values.into_iter().collect()
}

/// `E[Z_N^{(k)}]` for the critical Poisson(1) Galton–Watson process, from
/// the derivatives of `f_N = f∘…∘f` at 1, `f(s) = exp(s - 1)`. Supports
/// `k <= 3`.
pub fn critical_factorial_moment(n: u32, k: usize) -> f64 {
    // a = f_N'(1), b = f_N''(1), c = f_N'''(1); f^(j)(1) = 1 for all j
    let (mut a, mut b, mut c) = (1.0f64, 1.0f64, 1.0f64);
    for _ in 1..n {
        // f_{N} = f ∘ f_{N-1}
        let (a1, b1, c1) = (a, b, c);
        a = a1;
        b = a1 * a1 + b1;
        c = a1 * a1 * a1 + 3.0 * a1 * b1 + c1;
    }
    match k {
        0 => 1.0,
        1 => a,
        2 => b,
        3 => c,
        _ => panic!("factorial moments only up to order 3"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generating_function_oracle() {
        for n in 1..=6 {
            assert_eq!(critical_factorial_moment(n, 1), 1.0);
            assert_eq!(critical_factorial_moment(n, 2), n as f64);
            let nf = n as f64;
            assert_eq!(critical_factorial_moment(n, 3), (3.0 * nf * nf - nf) / 2.0);
        }
        assert_eq!(critical_factorial_moment(2, 3), 5.0);
        assert_eq!(critical_factorial_moment(3, 3), 12.0);
    }

    #[test]
    fn tuple_enumeration_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let opts = TupleOptions::default();
        for (z, k) in [(0, 1), (1, 2), (3, 1), (4, 2), (5, 3), (6, 4)] {
            let (s, t) = sum_over_tuples(z, k, &opts, &mut rng, |_| 1.0);
            assert_eq!(s, falling_factorial(z, k));
            assert!(!t);
        }
        let mut seen = HashSet::new();
        sum_over_tuples(4, 3, &opts, &mut rng, |t| {
            assert!(seen.insert(t.to_vec()));
            0.0
        });
        assert_eq!(seen.len(), 24);
    }

    #[test]
    fn subsampling_is_unbiased_for_constants() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let opts = TupleOptions { exact_limit: 100.0, sample_size: 50 };
        let (s, t) = sum_over_tuples(40, 2, &opts, &mut rng, |_| 1.0);
        assert!(t);
        assert!((s - 1560.0).abs() < 1e-9);
        // index sums: exact mean over tuples is 39, so the sum is 1560 * 39
        let mut acc = Accumulator::new();
        for _ in 0..2000 {
            acc.push(sum_over_tuples(40, 2, &opts, &mut rng, |t| (t[0] + t[1]) as f64).0);
        }
        assert!(acc.within_se(1560.0 * 39.0, 4.0), "{:?}", acc.summary());
    }

    #[test]
    fn k_guard() {
        let m = crate::model::CriticalModel::new(2.0).unwrap();
        let nu = NuDistribution::uniform(2).unwrap();
        let s = Streams::new(0, "t");
        let i = Interval::from_length(0.0).unwrap();
        assert!(many_to_few_rhs(&m, 5, &nu, i, &TestFunctional::Const, 10, &s).is_err());
        assert!(many_to_few_rhs(&m, 2, &nu, i, &TestFunctional::Const, 0, &s).is_err());
    }
}
