//! Small random-variate primitives shared by the samplers.

use rand::Rng;
use rand_distr::{Distribution, Poisson};

/// Uniform on (0, 1], safe to take the logarithm of.
#[inline]
pub fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

/// Exponential variate with the given rate (mean `1 / rate`).
#[inline]
pub fn exponential<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> f64 {
    -open_unit(rng).ln() / rate
}

/// Poisson variate by sequential inversion of the CDF (one uniform per
/// draw). Means above 30 fall back to `rand_distr`.
pub fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u32 {
    if mean <= 0.0 {
        return 0;
    }
    if mean > 30.0 {
        let d = Poisson::new(mean).expect("finite positive mean");
        return d.sample(rng) as u32;
    }
    let u: f64 = rng.random();
    let mut p = (-mean).exp();
    let mut cdf = p;
    let mut k = 0u32;
    while u >= cdf {
        k += 1;
        p *= mean / k as f64;
        if p == 0.0 {
            break;
        }
        cdf += p;
    }
    k
}

/// Uniformly random permutation of `0..k` (Fisher–Yates).
pub fn permutation<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Vec<usize> {
    let mut p: Vec<usize> = (0..k).collect();
    for i in (1..k).rev() {
        let j = rng.random_range(0..=i);
        p.swap(i, j);
    }
    p
}

/// `d` distinct values from `0..n`, sorted ascending (Floyd's algorithm).
pub fn sorted_subset<R: Rng + ?Sized>(n: u32, d: u32, rng: &mut R) -> Vec<u32> {
    assert!(d <= n);
    let mut chosen: Vec<u32> = Vec::with_capacity(d as usize);
    for j in n - d..n {
        let t = rng.random_range(0..=j);
        if chosen.contains(&t) {
            chosen.push(j);
        } else {
            chosen.push(t);
        }
    }
    chosen.sort_unstable();
    chosen
}
