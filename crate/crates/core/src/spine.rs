//! The single spine: branch-time distributions `ν`, the discrete spine
//! chain and its continuous-time limit.

use rand::Rng;
use serde::Serialize;

use crate::accumulator::Accumulator;
use crate::error::{Error, Result};
use crate::interval::Interval;
use crate::model::{size_biased_fragment, MarkModel, RecombinationModel};
use crate::rescale::RescaleR;
use crate::rng::Streams;
use crate::sampling::{exponential, open_unit};
use crate::stats::{ks_two_sample, KsResult};

/// A probability distribution on `{0, …, N-1}` with full support.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NuDistribution {
    weights: Vec<f64>,
    #[serde(skip)]
    cumulative: Vec<f64>,
}

impl NuDistribution {
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidParameter("ν needs N >= 1 weights".into()));
        }
        if let Some(n) = weights.iter().position(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidParameter(format!("ν_{n} must be positive")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!("ν sums to {total}, not 1")));
        }
        let mut acc = 0.0;
        let cumulative = weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        Ok(Self { weights, cumulative })
    }

    pub fn uniform(n: u32) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("N must be >= 1".into()));
        }
        let w = vec![1.0 / n as f64; n as usize];
        let mut nu = Self::from_weights_unchecked(w);
        // 1/N summed N times can drift from 1 by a few ulps
        let last = nu.cumulative.len() - 1;
        nu.cumulative[last] = 1.0;
        Ok(nu)
    }

    /// Law of `⌊W N⌋` with `W` of CDF `F_R`: `ν_n = F_R((n+1)/N) - F_R(n/N)`.
    pub fn branch_times(n: u32, r: f64) -> Result<Self> {
        let f = RescaleR::new(r)?;
        if n == 0 {
            return Err(Error::InvalidParameter("N must be >= 1".into()));
        }
        let nf = n as f64;
        let w: Vec<f64> = (0..n).map(|i| f.f((i + 1) as f64 / nf) - f.f(i as f64 / nf)).collect();
        let mut nu = Self::from_weights_unchecked(w);
        let last = nu.cumulative.len() - 1;
        nu.cumulative[last] = 1.0;
        Ok(nu)
    }

    fn from_weights_unchecked(weights: Vec<f64>) -> Self {
        let mut acc = 0.0;
        let cumulative = weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        Self { weights, cumulative }
    }

    pub fn n(&self) -> u32 {
        self.weights.len() as u32
    }

    pub fn weight(&self, n: u32) -> f64 {
        self.weights[n as usize]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let u: f64 = rng.random();
        let i = self.cumulative.partition_point(|&c| c <= u);
        i.min(self.weights.len() - 1) as u32
    }
}

/// `spine_step_discrete`: one step of the h-transformed chain of the
/// recombination model.
pub fn spine_step_discrete<R: Rng + ?Sized>(
    mark: &Interval,
    model: &RecombinationModel,
    rng: &mut R,
) -> Result<Interval> {
    model.spine_step(mark, rng)
}

/// The discrete spine after `steps` steps, skipping over runs of stays with
/// geometric holding times.
pub fn spine_discrete_at<R: Rng + ?Sized>(
    start: Interval,
    model: &RecombinationModel,
    steps: u64,
    rng: &mut R,
) -> Result<Interval> {
    let mut mark = start;
    let mut left = steps;
    loop {
        let p = model.spine_jump_probability(&mark);
        if p > 1.0 + 1e-12 {
            return Err(Error::SpineJumpProbability { length: mark.length(), n: model.scale() });
        }
        if p <= 0.0 {
            return Ok(mark);
        }
        // number of stays before the next jump
        let stays = if p >= 1.0 {
            0.0
        } else {
            (open_unit(rng).ln() / (-p).ln_1p()).floor()
        };
        if stays >= left as f64 {
            return Ok(mark);
        }
        left -= stays as u64 + 1;
        mark = size_biased_fragment(&mark, rng);
    }
}

/// A piecewise-constant interval-valued path: `states[i]` holds on
/// `[times[i], times[i+1])`, with `times[0] = 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpinePath {
    times: Vec<f64>,
    states: Vec<Interval>,
}

impl SpinePath {
    pub(crate) fn from_parts(times: Vec<f64>, states: Vec<Interval>) -> Self {
        debug_assert!(times.len() == states.len() && times[0] == 0.0);
        Self { times, states }
    }

    pub fn constant(start: Interval) -> Self {
        Self { times: vec![0.0], states: vec![start] }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[Interval] {
        &self.states
    }

    pub fn start(&self) -> Interval {
        self.states[0]
    }

    pub fn jumps(&self) -> usize {
        self.times.len() - 1
    }

    /// State at time `t` (right-continuous).
    pub fn at(&self, t: f64) -> Interval {
        let i = self.times.partition_point(|&s| s <= t);
        self.states[i.saturating_sub(1)]
    }

    /// Truncates the path to `[0, t]`.
    pub(crate) fn prefix(&self, t: f64) -> Self {
        let i = self.times.partition_point(|&s| s <= t).max(1);
        Self { times: self.times[..i].to_vec(), states: self.states[..i].to_vec() }
    }

    /// Runs the continuous spine from the current end state over
    /// `(from, until]`.
    pub(crate) fn extend<R: Rng + ?Sized>(&mut self, from: f64, until: f64, rng: &mut R) {
        let mut t = from;
        let mut mark = *self.states.last().expect("non-empty path");
        loop {
            let rate = mark.length();
            if rate <= 0.0 {
                return;
            }
            t += exponential(rate, rng);
            if t > until {
                return;
            }
            mark = size_biased_fragment(&mark, rng);
            self.times.push(t);
            self.states.push(mark);
        }
    }
}

/// The continuous spine on `[0, t_max]`: hold for an `Exp(|I|)` time, then
/// jump to the left or right size-biased fragment.
pub fn spine_path_continuous<R: Rng + ?Sized>(
    start: Interval,
    t_max: f64,
    rng: &mut R,
) -> Result<SpinePath> {
    if !(t_max >= 0.0) {
        return Err(Error::InvalidParameter(format!("t_max must be >= 0, got {t_max}")));
    }
    let mut path = SpinePath::constant(start);
    path.extend(0.0, t_max, rng);
    Ok(path)
}

#[derive(Debug, Clone)]
pub struct SpineConvergence {
    pub discrete: Vec<f64>,
    pub continuous: Vec<f64>,
    pub discrete_summary: Accumulator,
    pub continuous_summary: Accumulator,
    pub ks: KsResult,
}

/// Samples `|I^N(⌊Nt⌋)|` from the discrete spine and `|I(t)|` from the
/// continuous spine, `replicates` of each.
pub fn spine_discrete_converges_check(
    start: Interval,
    n: u32,
    t: f64,
    replicates: u64,
    streams: &Streams,
) -> Result<SpineConvergence> {
    if replicates == 0 {
        return Err(Error::NoReplicates);
    }
    let model = RecombinationModel::new(n as f64)?;
    let steps = crate::branching::horizon(n, t) as u64;
    let discrete: Vec<f64> = streams
        .child("discrete")
        .map(replicates, |_, rng| spine_discrete_at(start, &model, steps, rng).map(|i| i.length()))
        .into_iter()
        .collect::<Result<_>>()?;
    let continuous: Vec<f64> = streams
        .child("continuous")
        .map(replicates, |_, rng| {
            spine_path_continuous(start, t, rng).map(|p| p.at(t).length())
        })
        .into_iter()
        .collect::<Result<_>>()?;
    let ks = ks_two_sample(&discrete, &continuous);
    Ok(SpineConvergence {
        discrete_summary: discrete.iter().copied().collect(),
        continuous_summary: continuous.iter().copied().collect(),
        discrete,
        continuous,
        ks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn nu_validation() {
        assert!(NuDistribution::from_weights(vec![0.5, 0.5]).is_ok());
        assert!(NuDistribution::from_weights(vec![1.0, 0.0]).is_err());
        assert!(NuDistribution::from_weights(vec![0.5, 0.4]).is_err());
        let nu = NuDistribution::branch_times(100, 10.0).unwrap();
        assert!((nu.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(nu.weights().iter().all(|&w| w > 0.0));
    }

    #[test]
    fn nu_sampling_frequencies() {
        let nu = NuDistribution::from_weights(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut counts = [0u64; 4];
        for _ in 0..100_000 {
            counts[nu.sample(&mut rng) as usize] += 1;
        }
        let r = crate::stats::chi_square(&counts, &[10_000.0, 20_000.0, 30_000.0, 40_000.0]);
        assert!(r.p_value > 1e-3);
    }

    #[test]
    fn discrete_step_extremes() {
        let m = RecombinationModel::new(10.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let zero = Interval::new(1.0, 1.0).unwrap();
        let full = Interval::from_length(10.0).unwrap();
        for _ in 0..1000 {
            assert_eq!(spine_step_discrete(&zero, &m, &mut rng).unwrap(), zero);
            let j = spine_step_discrete(&full, &m, &mut rng).unwrap();
            assert!(j.length() < 10.0);
            assert!(j.lo() == 0.0 || j.hi() == 10.0);
        }
    }

    #[test]
    fn path_lookup() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let start = Interval::from_length(10.0).unwrap();
        assert_eq!(spine_path_continuous(start, 0.0, &mut rng).unwrap().jumps(), 0);
        let p = spine_path_continuous(start, 5.0, &mut rng).unwrap();
        assert_eq!(p.at(0.0), start);
        for w in p.times().windows(2) {
            assert!(w[0] < w[1]);
        }
        for (i, s) in p.states().windows(2).enumerate() {
            assert!(s[1].is_subinterval_of(&s[0], 0.0));
            assert_eq!(p.at(p.times()[i + 1]), s[1]);
        }
    }

    #[test]
    fn fast_forward_matches_stepping() {
        let m = RecombinationModel::new(50.0).unwrap();
        let start = Interval::from_length(20.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 40_000;
        let fast: Vec<f64> =
            (0..n).map(|_| spine_discrete_at(start, &m, 30, &mut rng).unwrap().length()).collect();
        let slow: Vec<f64> = (0..n)
            .map(|_| {
                let mut x = start;
                for _ in 0..30 {
                    x = m.spine_step(&x, &mut rng).unwrap();
                }
                x.length()
            })
            .collect();
        let ks = ks_two_sample(&fast, &slow);
        assert!(ks.p_value > 1e-3, "{ks:?}");
    }
}
