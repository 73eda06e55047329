//! Coalescent point processes: the encoding `Φ` of planar ultrametric trees
//! by consecutive branch times, Brownian CPP samples and CPP polynomials.

use rand::Rng;
use serde::Serialize;

use crate::accumulator::Accumulator;
use crate::error::{Error, Result};
use crate::functional::TestFunctional;
use crate::rng::Streams;
use crate::sampling::permutation;
use crate::ultrametric::UltrametricMatrix;

/// Branch times `g_i = |ℓ_i ∧ ℓ_{i+1}|` of a planar tree with leaves at
/// generation `N`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CppEncoding {
    pub n: u32,
    pub times: Vec<u32>,
}

impl CppEncoding {
    pub fn new(n: u32, times: Vec<u32>) -> Result<Self> {
        if let Some(&g) = times.iter().find(|&&g| g >= n) {
            return Err(Error::InvalidParameter(format!("branch time {g} outside 0..{n}")));
        }
        Ok(Self { n, times })
    }

    pub fn k(&self) -> usize {
        self.times.len() + 1
    }
}

/// Depth matrix `depth(i,j) = N - min(g_i, …, g_{j-1})`.
pub fn phi_decode(enc: &CppEncoding) -> UltrametricMatrix {
    let k = enc.k();
    let mut d = vec![0.0; k * k];
    for i in 0..k {
        let mut m = u32::MAX;
        for j in i + 1..k {
            m = m.min(enc.times[j - 1]);
            let x = (enc.n - m) as f64;
            d[i * k + j] = x;
            d[j * k + i] = x;
        }
    }
    UltrametricMatrix::from_parts_unchecked(k, d, vec![0.0; k])
}

/// Inverse of [`phi_decode`]. Fails on matrices that are not ultrametric
/// or whose leaves are not in a planar order.
pub fn phi_encode(m: &UltrametricMatrix, n: u32) -> Result<CppEncoding> {
    UltrametricMatrix::new(m.k(), m.distances().to_vec(), m.marks().to_vec(), 0.0)?;
    let mut times = Vec::with_capacity(m.k().saturating_sub(1));
    for i in 0..m.k().saturating_sub(1) {
        let d = m.get(i, i + 1);
        if d.fract() != 0.0 || !(1.0..=n as f64).contains(&d) {
            return Err(Error::NotCppOrdered(format!("depth({i},{}) = {d}", i + 1)));
        }
        times.push(n - d as u32);
    }
    let enc = CppEncoding { n, times };
    if phi_decode(&enc).distances() != m.distances() {
        return Err(Error::NotCppOrdered("leaves are not in a planar order".into()));
    }
    Ok(enc)
}

/// `H_{ij} = max(H_i, …, H_{j-1})` for `i < j`.
pub fn consecutive_max_matrix(h: &[f64]) -> UltrametricMatrix {
    let k = h.len() + 1;
    let mut d = vec![0.0; k * k];
    for i in 0..k {
        let mut m = f64::NEG_INFINITY;
        for j in i + 1..k {
            m = m.max(h[j - 1]);
            d[i * k + j] = m;
            d[j * k + i] = m;
        }
    }
    UltrametricMatrix::from_parts_unchecked(k, d, vec![0.0; k])
}

/// Distance matrix of `k` leaves of a Brownian CPP of height 1: i.i.d.
/// uniform `H_i`, consecutive maxima, then a uniform relabelling unless
/// `permute` is false.
pub fn sample_brownian_cpp_distances<R: Rng + ?Sized>(
    k: usize,
    permute: bool,
    rng: &mut R,
) -> Result<UltrametricMatrix> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be >= 1".into()));
    }
    let h: Vec<f64> = (0..k - 1).map(|_| rng.random::<f64>()).collect();
    let m = consecutive_max_matrix(&h);
    Ok(if permute { m.permuted(&permutation(k, rng)) } else { m })
}

/// The tail `ν((x, ∞))` of the CPP intensity measure.
pub trait TailMeasure: Sync {
    fn tail(&self, x: f64) -> f64;

    /// Closed-form quantile of `H` (CDF `tail(x0) / tail(x)` on `[0, x0]`),
    /// if available.
    fn h_quantile(&self, _x0: f64, _u: f64) -> Option<f64> {
        None
    }
}

/// `ν(dx) = x^{-2} dx`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BrownianTail;

impl TailMeasure for BrownianTail {
    fn tail(&self, x: f64) -> f64 {
        1.0 / x
    }

    fn h_quantile(&self, x0: f64, u: f64) -> Option<f64> {
        Some(u * x0)
    }
}

/// A tail given by a closure, inverted by bisection.
pub struct FnTail<F>(pub F);

impl<F: Fn(f64) -> f64 + Sync> TailMeasure for FnTail<F> {
    fn tail(&self, x: f64) -> f64 {
        (self.0)(x)
    }
}

/// Solves `tail(x0) / tail(x) = u` on `[0, x0]` by bisection.
pub fn h_quantile_bisect<T: TailMeasure + ?Sized>(tail: &T, x0: f64, u: f64) -> f64 {
    let theta = tail.tail(x0);
    let (mut lo, mut hi) = (0.0f64, x0);
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if theta / tail.tail(mid) < u {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Monte Carlo value of the polynomial `k!/θ^k E[φ(H_{σ_i σ_j})]`,
/// `θ = ν((x0, ∞))`, of a CPP tree of height `x0`.
pub fn cpp_polynomial<T: TailMeasure + ?Sized>(
    tail: &T,
    x0: f64,
    k: usize,
    phi: &TestFunctional,
    replicates: u64,
    streams: &Streams,
) -> Result<Accumulator> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be >= 1".into()));
    }
    if replicates == 0 {
        return Err(Error::NoReplicates);
    }
    let theta = tail.tail(x0);
    if !(theta > 0.0) || !theta.is_finite() {
        return Err(Error::InvalidParameter(format!("tail at x0 = {x0} is {theta}")));
    }
    let scale = (1..=k).map(|i| i as f64).product::<f64>() / theta.powi(k as i32);
    Ok(streams.accumulate(replicates, |_, rng| {
        let h: Vec<f64> = (0..k - 1)
            .map(|_| {
                let u: f64 = rng.random();
                tail.h_quantile(x0, u).unwrap_or_else(|| h_quantile_bisect(tail, x0, u))
            })
            .collect();
        let m = consecutive_max_matrix(&h).permuted(&permutation(k, rng));
        scale * phi.eval(m.distances(), m.marks())
    }))
}
