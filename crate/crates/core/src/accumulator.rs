//! Mergeable Monte Carlo estimators.
//!
//! Sums are kept exactly (a fixed-point superaccumulator over the full f64
//! exponent range), so merging per-thread accumulators gives bit-identical
//! results whatever the merge order or the thread count.

use serde::{Deserialize, Serialize};

const BLOCKS: usize = 34;
const BIAS: i32 = 1074;

/// Exact sum of finite f64 values.
#[derive(Clone, PartialEq, Eq)]
pub struct ExactSum {
    bins: [i128; BLOCKS],
}

impl Default for ExactSum {
    fn default() -> Self {
        Self { bins: [0; BLOCKS] }
    }
}

impl std::fmt::Debug for ExactSum {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ExactSum({})", self.value())
    }
}

#[inline]
fn pow2(e: i32) -> f64 {
    if e >= -1022 {
        f64::from_bits(((e + 1023) as u64) << 52)
    } else {
        f64::from_bits(1u64 << (e + BIAS))
    }
}

impl ExactSum {
    /// Panics on non-finite input.
    pub fn add(&mut self, x: f64) {
        assert!(x.is_finite(), "ExactSum::add: non-finite value {x}");
        if x == 0.0 {
            return;
        }
        let bits = x.to_bits();
        let exp_bits = ((bits >> 52) & 0x7ff) as i32;
        let frac = bits & ((1u64 << 52) - 1);
        let (mantissa, exp) = if exp_bits == 0 {
            (frac, -BIAS)
        } else {
            (frac | (1u64 << 52), exp_bits - 1075)
        };
        let pos = (exp + BIAS) as usize;
        let (block, shift) = (pos / 64, pos % 64);
        let wide = (mantissa as u128) << shift;
        let lo = (wide as u64) as i128;
        let hi = (wide >> 64) as i128;
        if x > 0.0 {
            self.bins[block] += lo;
            self.bins[block + 1] += hi;
        } else {
            self.bins[block] -= lo;
            self.bins[block + 1] -= hi;
        }
    }

    pub fn merge(&mut self, other: &ExactSum) {
        for (a, b) in self.bins.iter_mut().zip(other.bins.iter()) {
            *a += *b;
        }
    }

    fn normalized(mut bins: [i128; BLOCKS]) -> [i128; BLOCKS] {
        for i in 0..BLOCKS - 1 {
            let carry = bins[i] >> 64;
            bins[i] -= carry << 64;
            bins[i + 1] += carry;
        }
        bins
    }

    /// The sum rounded to f64 (deterministic function of the exact total).
    pub fn value(&self) -> f64 {
        let mut bins = Self::normalized(self.bins);
        let negative = bins[BLOCKS - 1] < 0;
        if negative {
            for b in bins.iter_mut() {
                *b = -*b;
            }
            bins = Self::normalized(bins);
        }
        let mut total = 0.0f64;
        for i in (0..BLOCKS).rev() {
            if bins[i] != 0 {
                total += bins[i] as f64 * pow2(64 * i as i32 - BIAS);
            }
        }
        if negative {
            -total
        } else {
            total
        }
    }
}

/// Count, sum and sum of squares of a stream of replicate values.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Accumulator {
    count: u64,
    sum: ExactSum,
    sum_sq: ExactSum,
}

/// Plain-number view of an [`Accumulator`], for reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub estimate: f64,
    pub se: f64,
    pub count: u64,
}

impl Accumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.count += 1;
        self.sum.add(x);
        self.sum_sq.add(x * x);
    }

    pub fn merge(&mut self, other: &Accumulator) {
        self.count += other.count;
        self.sum.merge(&other.sum);
        self.sum_sq.merge(&other.sum_sq);
    }

    pub fn merged(mut self, other: &Accumulator) -> Self {
        self.merge(other);
        self
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn sum(&self) -> f64 {
        self.sum.value()
    }

    pub fn sum_sq(&self) -> f64 {
        self.sum_sq.value()
    }

    pub fn mean(&self) -> Option<f64> {
        (self.count >= 1).then(|| self.sum() / self.count as f64)
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> Option<f64> {
        if self.count < 2 {
            return None;
        }
        let n = self.count as f64;
        let s = self.sum();
        let var = (self.sum_sq() - s * s / n) / (n - 1.0);
        Some(var.max(0.0))
    }

    /// Standard error of the mean.
    pub fn se(&self) -> Option<f64> {
        self.variance().map(|v| (v / self.count as f64).sqrt())
    }

    /// `|mean - target| <= z * se`. False when the SE is undefined.
    pub fn within_se(&self, target: f64, z: f64) -> bool {
        match (self.mean(), self.se()) {
            (Some(m), Some(se)) => (m - target).abs() <= z * se,
            _ => false,
        }
    }

    pub fn summary(&self) -> Summary {
        Summary {
            estimate: self.mean().unwrap_or(f64::NAN),
            se: self.se().unwrap_or(f64::NAN),
            count: self.count,
        }
    }
}

impl FromIterator<f64> for Accumulator {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = Accumulator::new();
        for x in iter {
            acc.push(x);
        }
        acc
    }
}

impl Extend<f64> for Accumulator {
    fn extend<I: IntoIterator<Item = f64>>(&mut self, iter: I) {
        for x in iter {
            self.push(x);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_sum_cancels() {
        let mut s = ExactSum::default();
        for x in [1e300, 1.0, -1e300, 1e-300, -1.0] {
            s.add(x);
        }
        assert_eq!(s.value(), 1e-300);

        let mut s = ExactSum::default();
        s.add(0.1);
        s.add(0.2);
        s.add(-0.3);
        // 0.1 + 0.2 - 0.3 exactly, not the naive 5.55e-17
        assert_eq!(s.value(), 2f64.powi(-55));
    }

    #[test]
    fn subnormals_and_negatives() {
        let tiny = f64::from_bits(1);
        let mut s = ExactSum::default();
        s.add(tiny);
        s.add(tiny);
        assert_eq!(s.value(), 2.0 * tiny);
        let mut s = ExactSum::default();
        s.add(-3.5);
        s.add(1.25);
        assert_eq!(s.value(), -2.25);
    }

    #[test]
    fn moments() {
        let acc: Accumulator = [1.0, 2.0, 3.0, 4.0].into_iter().collect();
        assert_eq!(acc.count(), 4);
        assert_eq!(acc.mean(), Some(2.5));
        assert!((acc.variance().unwrap() - 5.0 / 3.0).abs() < 1e-15);
        let one: Accumulator = [7.0].into_iter().collect();
        assert_eq!(one.mean(), Some(7.0));
        assert_eq!(one.se(), None);
        assert_eq!(Accumulator::new().mean(), None);
    }

    #[test]
    fn constant_stream_has_zero_variance() {
        let acc: Accumulator = std::iter::repeat(24.0).take(100_000).collect();
        assert_eq!(acc.mean(), Some(24.0));
        assert_eq!(acc.variance(), Some(0.0));
    }

    proptest! {
        #[test]
        fn merge_is_order_independent(
            xs in proptest::collection::vec(-1e6f64..1e6, 1..200),
            cut1 in 0usize..200,
            cut2 in 0usize..200,
        ) {
            let n = xs.len();
            let (a, b) = (cut1.min(n), cut2.min(n));
            let (lo, hi) = (a.min(b), a.max(b));
            let part = |r: std::ops::Range<usize>| xs[r].iter().copied().collect::<Accumulator>();
            let (p, q, r) = (part(0..lo), part(lo..hi), part(hi..n));
            let left = p.clone().merged(&q).merged(&r);
            let right = r.clone().merged(&p).merged(&q);
            let rev: Accumulator = xs.iter().rev().copied().collect();
            prop_assert_eq!(&left, &right);
            prop_assert_eq!(&left, &rev);
            prop_assert_eq!(left.sum().to_bits(), rev.sum().to_bits());
            prop_assert_eq!(left.sum_sq().to_bits(), rev.sum_sq().to_bits());
        }
    }
}
