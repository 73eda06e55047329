//! Offspring laws, mark kernels and harmonic functions.
//!
//! [`MarkModel`] bundles what the forward simulation and the spine
//! machinery need from a branching Markov process: the offspring number
//! `K(x)`, the child mark kernel `p(x, ·)`, a positive harmonic function
//! `h` and the h-transformed spine kernel `q(x, ·)`. Offspring numbers are
//! Poisson in both models here, so the factorial moments default to
//! `λ(x)^n` and the `n`-size-biased law to `n + Poisson(λ(x))`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::interval::Interval;
use crate::sampling::{open_unit, poisson};

pub trait MarkModel: Sync {
    /// Time-scale parameter `N`.
    fn scale(&self) -> f64;

    /// `m(x) = E[K(x)]`.
    fn offspring_mean(&self, mark: &Interval) -> f64;

    /// `m_n(x) = E[K(x)(K(x)-1)…(K(x)-n+1)]`.
    fn factorial_moment(&self, mark: &Interval, order: u32) -> f64 {
        self.offspring_mean(mark).powi(order as i32)
    }

    fn sample_offspring<R: Rng + ?Sized>(&self, mark: &Interval, rng: &mut R) -> u32 {
        poisson(self.offspring_mean(mark), rng)
    }

    /// `K(x)` biased by its `order`-th factorial moment.
    fn sample_biased_offspring<R: Rng + ?Sized>(
        &self,
        mark: &Interval,
        order: u32,
        rng: &mut R,
    ) -> u32 {
        order + poisson(self.offspring_mean(mark), rng)
    }

    /// One draw from `p(x, ·)`.
    fn sample_child_mark<R: Rng + ?Sized>(&self, mark: &Interval, rng: &mut R) -> Interval;

    /// `h(x)`.
    fn harmonic(&self, mark: &Interval) -> f64;

    /// One step of the spine chain, kernel `q(x,y) = m(x) h(y) p(x,y) / h(x)`.
    fn spine_step<R: Rng + ?Sized>(&self, mark: &Interval, rng: &mut R) -> Result<Interval>;
}

/// Size-biased uniform on `(0, length]`: density `2u / length²`.
pub fn size_biased_uniform<R: Rng + ?Sized>(length: f64, rng: &mut R) -> Result<f64> {
    if !(length > 0.0) || !length.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "size-biased uniform needs a positive length, got {length}"
        )));
    }
    Ok(length * open_unit(rng).sqrt())
}

/// The branching process with recombination: `K(I) ~ Poisson(1 + |I|/N)`,
/// children fragment with probability `r_N(I)`, `h(I) = |I|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecombinationModel {
    n: f64,
}

impl RecombinationModel {
    pub fn new(n: f64) -> Result<Self> {
        if !(n >= 1.0) || !n.is_finite() {
            return Err(Error::InvalidParameter(format!("N must be >= 1, got {n}")));
        }
        Ok(Self { n })
    }

    /// `r_N(I) = (2|I|/N) / (1 + |I|/N)`.
    pub fn recombination_probability(&self, mark: &Interval) -> f64 {
        let x = mark.length() / self.n;
        2.0 * x / (1.0 + x)
    }

    /// Probability that the discrete spine leaves `mark` in one step,
    /// `|I| / N`.
    pub fn spine_jump_probability(&self, mark: &Interval) -> f64 {
        mark.length() / self.n
    }
}

/// Jump of the spine chain: keep the left or right size-biased piece of
/// `mark` with probability 1/2 each.
pub fn size_biased_fragment<R: Rng + ?Sized>(mark: &Interval, rng: &mut R) -> Interval {
    let piece = mark.length() * open_unit(rng).sqrt();
    if rng.random::<bool>() {
        mark.left_piece(piece)
    } else {
        mark.right_piece(piece)
    }
}

impl MarkModel for RecombinationModel {
    fn scale(&self) -> f64 {
        self.n
    }

    fn offspring_mean(&self, mark: &Interval) -> f64 {
        1.0 + mark.length() / self.n
    }

    fn sample_child_mark<R: Rng + ?Sized>(&self, mark: &Interval, rng: &mut R) -> Interval {
        let r = self.recombination_probability(mark).min(1.0);
        if rng.random::<f64>() >= r {
            return *mark;
        }
        let cut = mark.lo() + mark.length() * rng.random::<f64>();
        if rng.random::<bool>() {
            mark.cut_right_of(cut)
        } else {
            mark.cut_left_of(cut)
        }
    }

    fn harmonic(&self, mark: &Interval) -> f64 {
        mark.length()
    }

    fn spine_step<R: Rng + ?Sized>(&self, mark: &Interval, rng: &mut R) -> Result<Interval> {
        let p = self.spine_jump_probability(mark);
        if p > 1.0 + 1e-12 {
            return Err(Error::SpineJumpProbability { length: mark.length(), n: self.n });
        }
        if rng.random::<f64>() < p {
            Ok(size_biased_fragment(mark, rng))
        } else {
            Ok(*mark)
        }
    }
}

/// Critical Poisson(1) Galton–Watson process with inert marks and `h ≡ 1`.
/// This is the `R = 0` degenerate case, where exact generating-function
/// oracles exist.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalModel {
    n: f64,
}

impl CriticalModel {
    pub fn new(n: f64) -> Result<Self> {
        if !(n >= 1.0) || !n.is_finite() {
            return Err(Error::InvalidParameter(format!("N must be >= 1, got {n}")));
        }
        Ok(Self { n })
    }
}

impl MarkModel for CriticalModel {
    fn scale(&self) -> f64 {
        self.n
    }

    fn offspring_mean(&self, _mark: &Interval) -> f64 {
        1.0
    }

    fn sample_child_mark<R: Rng + ?Sized>(&self, mark: &Interval, _rng: &mut R) -> Interval {
        *mark
    }

    fn harmonic(&self, _mark: &Interval) -> f64 {
        1.0
    }

    fn spine_step<R: Rng + ?Sized>(&self, mark: &Interval, _rng: &mut R) -> Result<Interval> {
        Ok(*mark)
    }
}
