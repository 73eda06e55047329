//! The spine started from an infinite interval, built from a homogeneous
//! Poisson point process on `[0, ∞) × ℝ`.
//!
//! The process is drawn lazily on a grid of unit cells
//! `[i, i+1) × [j, j+1)`: a cell gets its `Poisson(1)` atoms the first time
//! a query touches it, so a realization is shared consistently by every
//! query made against it.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use serde::Serialize;

use crate::accumulator::Accumulator;
use crate::error::{Error, Result};
use crate::interval::Interval;
use crate::rescale::RescaleR;
use crate::rng::{SimRng, Streams};
use crate::sampling::{exponential, poisson};
use crate::spine::{spine_path_continuous, SpinePath};
use crate::stats::{self, ks_two_sample, KsResult};

/// A lazily materialized rate-1 Poisson process of `(time, position)`
/// atoms.
#[derive(Debug, Clone)]
pub struct PlanarPoisson {
    rng: SimRng,
    // atoms of each cell, sorted by time
    cells: HashMap<(u32, i64), Vec<(f64, f64)>>,
}

impl PlanarPoisson {
    pub fn new<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self { rng: SimRng::from_seed(rng.random()), cells: HashMap::new() }
    }

    fn cell(&mut self, slab: u32, col: i64) -> &[(f64, f64)] {
        let rng = &mut self.rng;
        self.cells.entry((slab, col)).or_insert_with(|| {
            let n = poisson(1.0, rng);
            let mut atoms: Vec<(f64, f64)> = (0..n)
                .map(|_| (slab as f64 + rng.random::<f64>(), col as f64 + rng.random::<f64>()))
                .collect();
            atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
            atoms
        })
    }

    /// Number of cells drawn so far.
    pub fn materialized_cells(&self) -> usize {
        self.cells.len()
    }

    /// Atoms with time in `[slab, slab + 1)` and position in `(lo, hi)`,
    /// sorted by time.
    pub fn atoms_in_slab(&mut self, slab: u32, lo: f64, hi: f64) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        if !(lo < hi) {
            return out;
        }
        for col in lo.floor() as i64..=hi.floor() as i64 {
            out.extend(self.cell(slab, col).iter().filter(|a| a.1 > lo && a.1 < hi));
        }
        out.sort_by(|a, b| a.0.total_cmp(&b.0));
        out
    }

    /// The interval between the nearest negative and nearest positive atom
    /// positions among atoms of time at most `t`: the interval of `P_t`
    /// covering 0.
    pub fn covering_interval(&mut self, t: f64) -> Interval {
        let slabs = t.floor() as u32;
        let mut hi = f64::INFINITY;
        let mut col = 0i64;
        while hi.is_infinite() {
            for s in 0..=slabs {
                for a in self.cell(s, col) {
                    if a.0 <= t && a.1 > 0.0 {
                        hi = hi.min(a.1);
                    }
                }
            }
            col += 1;
        }
        let mut lo = f64::NEG_INFINITY;
        let mut col = -1i64;
        while lo.is_infinite() {
            for s in 0..=slabs {
                for a in self.cell(s, col) {
                    if a.0 <= t && a.1 < 0.0 {
                        lo = lo.max(a.1);
                    }
                }
            }
            col -= 1;
        }
        Interval::new(lo, hi).expect("lo < 0 < hi")
    }
}

/// `[-E_1, E_2]` with `E_1, E_2` independent `Exp(t)`: the interval of the
/// spine started from infinity at time `t`.
pub fn entrance_interval<R: Rng + ?Sized>(t: f64, rng: &mut R) -> Result<Interval> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::InvalidParameter(format!("t must be > 0, got {t}")));
    }
    let e1 = exponential(t, rng);
    let e2 = exponential(t, rng);
    Interval::new(-e1, e2)
}

/// CDF of `Gamma(2, t)`: `1 - e^{-tx}(1 + tx)`.
pub fn gamma2_cdf(t: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        1.0 - (-t * x).exp() * (1.0 + t * x)
    }
}

/// The path `t ↦ MR + I_P(t) ∩ [-MR, (1-M)R]` on `[0, t_max]` for a given
/// reference point `m` and realization.
pub fn coupled_path(pp: &mut PlanarPoisson, m: f64, r: f64, t_max: f64) -> SpinePath {
    let (mut a, mut b) = (-m * r, (1.0 - m) * r);
    let shift = m * r;
    let mut times = vec![0.0];
    let mut states = vec![Interval::new(0.0, r).expect("R > 0")];
    let mut slab = 0u32;
    while (slab as f64) <= t_max {
        for (s, x) in pp.atoms_in_slab(slab, a, b) {
            if s > t_max {
                break;
            }
            if x <= a || x >= b {
                continue;
            }
            if x > 0.0 {
                b = x;
            } else {
                a = x;
            }
            times.push(s);
            states.push(Interval::new(shift + a, shift + b).expect("nested"));
        }
        slab += 1;
    }
    SpinePath::from_parts(times, states)
}

/// Draws `M` uniform on `(0, 1)` and a fresh realization, and returns `M`
/// with the coupled path from `[0, R]`.
pub fn poisson_coupled_path<R: Rng + ?Sized>(
    r: f64,
    t_max: f64,
    rng: &mut R,
) -> Result<(f64, SpinePath)> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::InvalidParameter(format!("R must be > 0, got {r}")));
    }
    if !(t_max >= 0.0) {
        return Err(Error::InvalidParameter(format!("t_max must be >= 0, got {t_max}")));
    }
    let m: f64 = rng.random();
    let mut pp = PlanarPoisson::new(rng);
    Ok((m, coupled_path(&mut pp, m, r, t_max)))
}

#[derive(Debug, Clone, Serialize)]
pub struct CouplingReport {
    pub r: f64,
    pub t: f64,
    /// Indicator that clipped and unclipped lengths coincide at `t`.
    pub frequency: crate::accumulator::Summary,
    /// `1 - 2 E[e^{-tMR}] + e^{-tR}`.
    pub oracle: f64,
}

pub fn coupling_oracle(r: f64, t: f64) -> f64 {
    let tr = t * r;
    let e = -(-tr).exp_m1() / tr;
    1.0 - 2.0 * e + (-tr).exp()
}

/// How often the clipped path from `[0, R]` and the unclipped interval of
/// `P_t` have the same length at time `t`, one shared realization per
/// replicate.
pub fn entrance_coupling_check(
    r: f64,
    t: f64,
    replicates: u64,
    streams: &Streams,
) -> Result<CouplingReport> {
    if replicates == 0 {
        return Err(Error::NoReplicates);
    }
    if !(r > 0.0) || !(t > 0.0) {
        return Err(Error::InvalidParameter("R and t must be > 0".into()));
    }
    let acc = streams.accumulate(replicates, |_, rng| {
        let m: f64 = rng.random();
        let mut pp = PlanarPoisson::new(rng);
        let free = pp.covering_interval(t);
        let clipped = coupled_path(&mut pp, m, r, t).at(t);
        ((clipped.length() - free.length()).abs() <= 1e-9 * r.max(1.0)) as u8 as f64
    });
    Ok(CouplingReport { r, t, frequency: acc.summary(), oracle: coupling_oracle(r, t) })
}

#[derive(Debug, Clone, Serialize)]
pub struct TwoSampleReport {
    pub mean_a: f64,
    pub mean_b: f64,
    pub ks_statistic: f64,
    pub p_value: f64,
}

impl TwoSampleReport {
    pub fn new(a: &[f64], b: &[f64]) -> Self {
        let KsResult { statistic, p_value } = ks_two_sample(a, b);
        Self { mean_a: stats::mean(a), mean_b: stats::mean(b), ks_statistic: statistic, p_value }
    }
}

/// `c |I(ct)|` under `Q_R` against `|I(t)|` under `Q_{cR}`.
pub fn self_similarity_check(
    r: f64,
    c: f64,
    t: f64,
    replicates: u64,
    streams: &Streams,
) -> Result<TwoSampleReport> {
    if !(c > 0.0) || !(r > 0.0) {
        return Err(Error::InvalidParameter("R and c must be > 0".into()));
    }
    if replicates == 0 {
        return Err(Error::NoReplicates);
    }
    let small = Interval::from_length(r)?;
    let big = Interval::from_length(c * r)?;
    let a: Vec<f64> = streams
        .child("scaled")
        .map(replicates, |_, rng| {
            c * spine_path_continuous(small, c * t, rng).expect("t >= 0").at(c * t).length()
        });
    let b: Vec<f64> = streams
        .child("direct")
        .map(replicates, |_, rng| spine_path_continuous(big, t, rng).expect("t >= 0").at(t).length());
    Ok(TwoSampleReport::new(&a, &b))
}

#[derive(Debug, Clone, Serialize)]
pub struct SpineLimitReport {
    pub r: f64,
    pub times: Vec<f64>,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
    /// Row-major correlation matrix of the coordinates.
    pub correlations: Vec<f64>,
    pub count: u64,
}

impl SpineLimitReport {
    pub fn max_abs_correlation(&self) -> f64 {
        let n = self.times.len();
        let mut m = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    m = m.max(self.correlations[i * n + j].abs());
                }
            }
        }
        m
    }
}

/// Samples `F_R^{-1}(u_i) |I(F_R^{-1}(u_i))|` along the continuous spine
/// from `[0, R]`.
pub fn rescaled_spine_samples(
    r: f64,
    us: &[f64],
    replicates: u64,
    streams: &Streams,
) -> Result<Vec<Vec<f64>>> {
    let f = RescaleR::new(r)?;
    if us.is_empty() || us.windows(2).any(|w| w[0] >= w[1]) || us[0] <= 0.0 || us[us.len() - 1] > 1.0 {
        return Err(Error::InvalidParameter("need 0 < u_1 < … < u_n <= 1".into()));
    }
    if replicates == 0 {
        return Err(Error::NoReplicates);
    }
    let times: Vec<f64> = us.iter().map(|&u| f.f_inv(u)).collect();
    let start = Interval::from_length(r)?;
    let t_max = *times.last().expect("non-empty");
    Ok(streams.map(replicates, |_, rng| {
        let path = spine_path_continuous(start, t_max, rng).expect("t_max >= 0");
        times.iter().map(|&s| s * path.at(s).length()).collect()
    }))
}

pub fn rescaled_spine_limit_check(
    r: f64,
    us: &[f64],
    replicates: u64,
    streams: &Streams,
) -> Result<SpineLimitReport> {
    let samples = rescaled_spine_samples(r, us, replicates, streams)?;
    let n = us.len();
    let cols: Vec<Vec<f64>> = (0..n).map(|i| samples.iter().map(|s| s[i]).collect()).collect();
    let mut correlations = vec![1.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                correlations[i * n + j] = stats::correlation(&cols[i], &cols[j]);
            }
        }
    }
    let f = RescaleR::new(r)?;
    Ok(SpineLimitReport {
        r,
        times: us.iter().map(|&u| f.f_inv(u)).collect(),
        means: cols.iter().map(|c| stats::mean(c)).collect(),
        variances: cols.iter().map(|c| stats::variance(c)).collect(),
        correlations,
        count: replicates,
    })
}

/// Summary of entrance-law lengths `|[-E_1, E_2]|` at time `t`.
#[derive(Debug, Clone, Serialize)]
pub struct EntranceLengthReport {
    pub t: f64,
    pub mean: crate::accumulator::Summary,
    pub variance: f64,
    pub ks_statistic: f64,
    pub p_value: f64,
}

pub fn entrance_length_check(t: f64, replicates: u64, streams: &Streams) -> Result<EntranceLengthReport> {
    if replicates == 0 {
        return Err(Error::NoReplicates);
    }
    entrance_interval(t, &mut streams.rng(0))?;
    let xs: Vec<f64> =
        streams.map(replicates, |_, rng| entrance_interval(t, rng).expect("t > 0").length());
    let acc: Accumulator = xs.iter().copied().collect();
    let ks = stats::ks_one_sample(&xs, |x| gamma2_cdf(t, x));
    Ok(EntranceLengthReport {
        t,
        mean: acc.summary(),
        variance: acc.variance().unwrap_or(0.0),
        ks_statistic: ks.statistic,
        p_value: ks.p_value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn path_starts_at_zero_r() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (_, p) = poisson_coupled_path(10.0, 0.0, &mut rng).unwrap();
        assert_eq!(p.at(0.0), Interval::new(0.0, 10.0).unwrap());
        assert_eq!(p.jumps(), 0);
        assert!(entrance_interval(0.0, &mut rng).is_err());
    }

    #[test]
    fn path_is_nested_and_contains_reference_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..2000 {
            let (m, p) = poisson_coupled_path(10.0, 3.0, &mut rng).unwrap();
            for s in p.states().windows(2) {
                assert!(s[1].is_subinterval_of(&s[0], 0.0));
            }
            for s in p.states() {
                assert!(s.contains(m * 10.0));
            }
        }
    }

    #[test]
    fn covering_interval_is_monotone_in_time() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut pp = PlanarPoisson::new(&mut rng);
        let a = pp.covering_interval(0.5);
        let b = pp.covering_interval(2.5);
        assert!(b.is_subinterval_of(&a, 0.0));
        assert!(a.contains(0.0));
    }

    #[test]
    fn clipped_path_matches_intersection() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..500 {
            let m: f64 = rng.random();
            let mut pp = PlanarPoisson::new(&mut rng);
            let r = 3.0;
            let t = 0.8;
            let path = coupled_path(&mut pp, m, r, t);
            let free = pp.covering_interval(t);
            let window = Interval::new(-m * r, (1.0 - m) * r).unwrap();
            let direct = free.intersect(&window).unwrap().shifted(m * r);
            assert!(path.at(t).approx_eq(&direct, 1e-12));
        }
    }

    #[test]
    fn oracle_limits() {
        assert!(coupling_oracle(1e4, 1.0) > 0.999);
        assert!(coupling_oracle(1.0, 1.0) < 0.5);
        let grid = [1.0, 10.0, 100.0, 1e4];
        assert!(grid.windows(2).all(|w| coupling_oracle(w[0], 1.0) <= coupling_oracle(w[1], 1.0)));
    }
}
