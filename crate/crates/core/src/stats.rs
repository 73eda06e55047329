//! Goodness-of-fit helpers: Kolmogorov–Smirnov (one- and two-sample),
//! chi-square, and a few descriptive statistics.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Survival function of the Kolmogorov distribution, `P(K > lambda)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=200 {
        let j = j as f64;
        let term = (-2.0 * j * j * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-17 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// One-sample KS test of `samples` against a continuous CDF.
pub fn ks_one_sample(samples: &[f64], cdf: impl Fn(f64) -> f64) -> KsResult {
    let xs = sorted(samples);
    let n = xs.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    let sn = n.sqrt();
    KsResult { statistic: d, p_value: kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d) }
}

/// Two-sample KS test (asymptotic p-value with the usual small-sample
/// correction). Ties are handled by advancing both samples together.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    let (xs, ys) = (sorted(a), sorted(b));
    let (n, m) = (xs.len(), ys.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < n && j < m {
        let v = xs[i].min(ys[j]);
        while i < n && xs[i] <= v {
            i += 1;
        }
        while j < m && ys[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n * m) as f64 / (n + m) as f64;
    let sn = ne.sqrt();
    KsResult { statistic: d, p_value: kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d) }
}

/// `sup |F_w - F|` for the empirical CDF of `samples` with the given
/// nonnegative weights.
pub fn weighted_ks_distance(samples: &[(f64, f64)], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = xs.iter().map(|p| p.1).sum();
    let mut below = 0.0;
    let mut d = 0.0f64;
    let mut i = 0;
    while i < xs.len() {
        let x = xs[i].0;
        let f = cdf(x);
        d = d.max((f - below / total).abs());
        while i < xs.len() && xs[i].0 == x {
            below += xs[i].1;
            i += 1;
        }
        d = d.max((below / total - f).abs());
    }
    d
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub dof: f64,
    pub p_value: f64,
}

/// Pearson chi-square goodness of fit. `expected` holds expected counts;
/// cells are pooled from the right until each has expected count >= 5.
pub fn chi_square(observed: &[u64], expected: &[f64]) -> ChiSquareResult {
    assert_eq!(observed.len(), expected.len());
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut o_acc, mut e_acc) = (0.0, 0.0);
    for (&o, &e) in observed.iter().zip(expected) {
        o_acc += o as f64;
        e_acc += e;
        if e_acc >= 5.0 {
            cells.push((o_acc, e_acc));
            o_acc = 0.0;
            e_acc = 0.0;
        }
    }
    if e_acc > 0.0 || o_acc > 0.0 {
        match cells.last_mut() {
            Some(last) => {
                last.0 += o_acc;
                last.1 += e_acc;
            }
            None => cells.push((o_acc, e_acc)),
        }
    }
    let statistic: f64 = cells.iter().map(|&(o, e)| (o - e) * (o - e) / e).sum();
    let dof = (cells.len() as f64 - 1.0).max(1.0);
    let p_value = 1.0 - ChiSquared::new(dof).expect("positive dof").cdf(statistic);
    ChiSquareResult { statistic, dof, p_value }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

pub fn correlation(xs: &[f64], ys: &[f64]) -> f64 {
    let (mx, my) = (mean(xs), mean(ys));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Linear-interpolation quantile of already sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn quantiles(xs: &[f64], qs: &[f64]) -> Vec<f64> {
    let s = sorted(xs);
    qs.iter().map(|&q| quantile_sorted(&s, q)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn weighted_ks_reduces_to_unweighted() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let xs: Vec<f64> = (0..500).map(|_| rng.random::<f64>()).collect();
        let w: Vec<(f64, f64)> = xs.iter().map(|&x| (x, 3.0)).collect();
        let d = weighted_ks_distance(&w, |x| x);
        assert!((d - ks_one_sample(&xs, |x| x).statistic).abs() < 1e-12);
        // doubling one point's weight matches duplicating it
        let mut dup = xs.clone();
        dup.push(xs[0]);
        let mut w2: Vec<(f64, f64)> = xs.iter().map(|&x| (x, 1.0)).collect();
        w2[0].1 = 2.0;
        let a = weighted_ks_distance(&w2, |x| x);
        let b = weighted_ks_distance(&dup.iter().map(|&x| (x, 1.0)).collect::<Vec<_>>(), |x| x);
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn kolmogorov_tail_values() {
        // classical critical values
        assert!((kolmogorov_sf(1.358) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_sf(1.628) - 0.01).abs() < 1e-3);
        assert_eq!(kolmogorov_sf(0.0), 1.0);
    }

    #[test]
    fn uniform_sample_passes_and_shifted_fails() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let xs: Vec<f64> = (0..20_000).map(|_| rng.random()).collect();
        let r = ks_one_sample(&xs, |x| x.clamp(0.0, 1.0));
        assert!(r.p_value > 0.01, "{r:?}");
        let r = ks_one_sample(&xs, |x| (x * x).clamp(0.0, 1.0));
        assert!(r.p_value < 1e-6);
    }

    #[test]
    fn two_sample_statistic_by_hand() {
        let r = ks_two_sample(&[1.0, 2.0, 3.0], &[1.5, 2.5, 3.5, 4.5]);
        // ecdf gap maximal at x=3: 1 - 2/4
        assert!((r.statistic - 0.5).abs() < 1e-12);
        let same = ks_two_sample(&[1.0, 1.0, 2.0], &[1.0, 1.0, 2.0]);
        assert_eq!(same.statistic, 0.0);
    }

    #[test]
    fn chi_square_fair_die() {
        let r = chi_square(&[10, 10, 10, 10, 10, 10], &[10.0; 6]);
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.dof, 5.0);
        assert!((r.p_value - 1.0).abs() < 1e-12);
        let r = chi_square(&[60, 0, 0, 0, 0, 0], &[10.0; 6]);
        assert!(r.p_value < 1e-10);
    }

    #[test]
    fn quantile_interpolates() {
        let q = quantiles(&[3.0, 1.0, 2.0, 4.0], &[0.0, 0.5, 1.0]);
        assert_eq!(q, vec![1.0, 2.5, 4.0]);
    }
}
