//! Forward simulation of the branching process with recombination.
//!
//! Generations are built breadth first. Within a generation, parents are
//! visited in planar order and each parent draws its offspring number and
//! then the marks of its children, so a tree and its marks-only
//! counterpart ([`simulate_population`]) consume the random stream in the
//! same order and agree draw for draw.

use rand::Rng;
use serde::Serialize;

use crate::accumulator::Accumulator;
use crate::error::{Error, Result};
use crate::interval::Interval;
use crate::model::{MarkModel, RecombinationModel};
use crate::rng::Streams;
use crate::tree::{MarkedTree, TreeBuilder};

pub const DEFAULT_NODE_CAP: usize = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelParams {
    pub r: f64,
    pub n: u32,
    pub node_cap: usize,
}

impl ModelParams {
    pub fn new(r: f64, n: u32) -> Result<Self> {
        if !(r >= 0.0) || !r.is_finite() {
            return Err(Error::InvalidParameter(format!("R must be >= 0, got {r}")));
        }
        if n == 0 {
            return Err(Error::InvalidParameter("N must be >= 1".into()));
        }
        Ok(Self { r, n, node_cap: DEFAULT_NODE_CAP })
    }

    pub fn with_node_cap(mut self, cap: usize) -> Self {
        self.node_cap = cap;
        self
    }

    /// The model is meant for `R <= N`; larger `R` runs but is flagged.
    pub fn exceeds_recommended(&self) -> bool {
        self.r > self.n as f64
    }

    pub fn model(&self) -> RecombinationModel {
        RecombinationModel::new(self.n as f64).expect("N >= 1 checked on construction")
    }

    pub fn root(&self) -> Interval {
        Interval::from_length(self.r).expect("R >= 0 checked on construction")
    }
}

/// `⌊tN⌋`.
pub fn horizon(n: u32, t: f64) -> u32 {
    (t * n as f64 + 1e-9).floor().max(0.0) as u32
}

pub fn offspring_count<R: Rng + ?Sized>(mark: &Interval, params: &ModelParams, rng: &mut R) -> u32 {
    params.model().sample_offspring(mark, rng)
}

pub fn recombination_probability(mark: &Interval, params: &ModelParams) -> f64 {
    params.model().recombination_probability(mark)
}

pub fn child_interval<R: Rng + ?Sized>(
    mark: &Interval,
    params: &ModelParams,
    rng: &mut R,
) -> Interval {
    params.model().sample_child_mark(mark, rng)
}

#[derive(Debug, Clone, PartialEq)]
pub enum SimOutcome {
    /// The last generation to hold a live individual was `generation - 1`.
    Extinct { generation: u32 },
    Survived(MarkedTree),
    CapExceeded { generation: u32 },
}

impl SimOutcome {
    pub fn survived(&self) -> bool {
        matches!(self, SimOutcome::Survived(_))
    }

    pub fn tree(&self) -> Option<&MarkedTree> {
        match self {
            SimOutcome::Survived(t) => Some(t),
            _ => None,
        }
    }
}

/// Like [`SimOutcome`], keeping only the marks of the final generation.
#[derive(Debug, Clone, PartialEq)]
pub enum PopulationOutcome {
    Extinct { generation: u32 },
    Survived(Vec<Interval>),
    CapExceeded { generation: u32 },
}

fn next_generation<M: MarkModel, R: Rng + ?Sized>(
    model: &M,
    parents: &[Interval],
    counts: &mut Vec<u32>,
    marks: &mut Vec<Interval>,
    rng: &mut R,
) {
    counts.clear();
    marks.clear();
    for p in parents {
        let k = model.sample_offspring(p, rng);
        counts.push(k);
        for _ in 0..k {
            marks.push(model.sample_child_mark(p, rng));
        }
    }
}

/// Simulates generations `1..=horizon` below a root carrying `root`.
pub fn simulate_tree<M: MarkModel, R: Rng + ?Sized>(
    model: &M,
    root: Interval,
    horizon: u32,
    node_cap: usize,
    rng: &mut R,
) -> SimOutcome {
    let mut builder = TreeBuilder::new(root);
    let mut parents = vec![root];
    let mut counts = Vec::new();
    let mut marks = Vec::new();
    for g in 1..=horizon {
        next_generation(model, &parents, &mut counts, &mut marks, rng);
        if marks.is_empty() {
            return SimOutcome::Extinct { generation: g };
        }
        if marks.len() > node_cap {
            return SimOutcome::CapExceeded { generation: g };
        }
        builder.push_counts(&counts, &marks);
        std::mem::swap(&mut parents, &mut marks);
    }
    SimOutcome::Survived(builder.finish())
}

/// Marks-only version of [`simulate_tree`].
pub fn simulate_population<M: MarkModel, R: Rng + ?Sized>(
    model: &M,
    root: Interval,
    horizon: u32,
    node_cap: usize,
    rng: &mut R,
) -> PopulationOutcome {
    let mut parents = vec![root];
    let mut counts = Vec::new();
    let mut marks = Vec::new();
    for g in 1..=horizon {
        next_generation(model, &parents, &mut counts, &mut marks, rng);
        if marks.is_empty() {
            return PopulationOutcome::Extinct { generation: g };
        }
        if marks.len() > node_cap {
            return PopulationOutcome::CapExceeded { generation: g };
        }
        std::mem::swap(&mut parents, &mut marks);
    }
    PopulationOutcome::Survived(parents)
}

/// Total mark length `Σ_{u ∈ T_n} |I_u|` for `n = 0..=horizon` (zero after
/// extinction). `None` if the node cap was hit.
pub fn length_profile<M: MarkModel, R: Rng + ?Sized>(
    model: &M,
    root: Interval,
    horizon: u32,
    node_cap: usize,
    rng: &mut R,
) -> Option<Vec<f64>> {
    let mut profile = vec![0.0; horizon as usize + 1];
    profile[0] = root.length();
    let mut parents = vec![root];
    let mut counts = Vec::new();
    let mut marks = Vec::new();
    for g in 1..=horizon {
        next_generation(model, &parents, &mut counts, &mut marks, rng);
        if marks.is_empty() {
            break;
        }
        if marks.len() > node_cap {
            return None;
        }
        profile[g as usize] = marks.iter().map(Interval::length).sum();
        std::mem::swap(&mut parents, &mut marks);
    }
    Some(profile)
}

/// One forward run from `(0, R)` up to generation `N`.
pub fn simulate_forward<R: Rng + ?Sized>(params: &ModelParams, rng: &mut R) -> SimOutcome {
    simulate_tree(&params.model(), params.root(), params.n, params.node_cap, rng)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalEstimate {
    /// Indicator of `Z_{⌊tN⌋} > 0`, one entry per counted replicate.
    pub estimate: Accumulator,
    /// Replicates that hit the node cap.
    pub capped: u64,
}

/// Monte Carlo estimate of `P_R(Z_{⌊tN⌋} > 0)`. Capped replicates count as
/// survivors unless `exclude_capped` is set, in which case they are dropped.
pub fn survival_probability(
    params: &ModelParams,
    t: f64,
    replicates: u64,
    streams: &Streams,
    exclude_capped: bool,
) -> Result<SurvivalEstimate> {
    if replicates == 0 {
        return Err(Error::NoReplicates);
    }
    let model = params.model();
    let h = horizon(params.n, t);
    let outcomes = streams.map(replicates, |_, rng| {
        match simulate_population(&model, params.root(), h, params.node_cap, rng) {
            PopulationOutcome::Extinct { .. } => 0u8,
            PopulationOutcome::Survived(_) => 1,
            PopulationOutcome::CapExceeded { .. } => 2,
        }
    });
    let mut estimate = Accumulator::new();
    let mut capped = 0;
    for o in outcomes {
        match o {
            2 => {
                capped += 1;
                if !exclude_capped {
                    estimate.push(1.0);
                }
            }
            x => estimate.push(x as f64),
        }
    }
    Ok(SurvivalEstimate { estimate, capped })
}

/// Rejection sampling of a tree that survives to generation `⌊tN⌋`.
pub fn sample_conditioned<R: Rng + ?Sized>(
    params: &ModelParams,
    t: f64,
    max_attempts: u64,
    rng: &mut R,
) -> Result<MarkedTree> {
    let model = params.model();
    let h = horizon(params.n, t);
    for _ in 0..max_attempts {
        match simulate_tree(&model, params.root(), h, params.node_cap, rng) {
            SimOutcome::Survived(tree) => return Ok(tree),
            SimOutcome::Extinct { .. } => {}
            SimOutcome::CapExceeded { generation } => {
                return Err(Error::CapExceeded { cap: params.node_cap, generation })
            }
        }
    }
    Err(Error::MaxAttempts { attempts: max_attempts })
}

/// Marks of generation `⌊tN⌋` of a run conditioned to survive, with the
/// number of attempts used.
pub fn sample_conditioned_population<M: MarkModel, R: Rng + ?Sized>(
    model: &M,
    root: Interval,
    horizon: u32,
    node_cap: usize,
    max_attempts: u64,
    rng: &mut R,
) -> Result<(Vec<Interval>, u64)> {
    for attempt in 1..=max_attempts {
        match simulate_population(model, root, horizon, node_cap, rng) {
            PopulationOutcome::Survived(marks) => return Ok((marks, attempt)),
            PopulationOutcome::Extinct { .. } => {}
            PopulationOutcome::CapExceeded { generation } => {
                return Err(Error::CapExceeded { cap: node_cap, generation })
            }
        }
    }
    Err(Error::MaxAttempts { attempts: max_attempts })
}

/// `P(Z_n > 0)` for the critical Poisson(1) Galton–Watson process, by
/// iterating the generating function `f(s) = exp(s - 1)` from 0.
pub fn critical_poisson_survival(n: u32) -> f64 {
    let mut q = 0.0f64;
    for _ in 0..n {
        q = (q - 1.0).exp();
    }
    1.0 - q
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn recombination_probability_values() {
        let p = ModelParams::new(0.0, 100).unwrap();
        let i = |l| Interval::from_length(l).unwrap();
        assert_eq!(recombination_probability(&i(0.0), &p), 0.0);
        assert_eq!(recombination_probability(&i(100.0), &p), 1.0);
        assert!((recombination_probability(&i(10.0), &p) - 0.2 / 1.1).abs() < 1e-15);
    }

    #[test]
    fn offspring_mean_formula() {
        let p = ModelParams::new(0.0, 10).unwrap();
        let i = Interval::from_length(5.0).unwrap();
        assert_eq!(p.model().offspring_mean(&i), 1.5);
    }

    #[test]
    fn zero_length_child_is_unchanged() {
        let p = ModelParams::new(0.0, 10).unwrap();
        let i = Interval::new(3.0, 3.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            assert_eq!(child_interval(&i, &p, &mut rng), i);
        }
    }

    #[test]
    fn tree_and_population_agree() {
        let p = ModelParams::new(5.0, 30).unwrap();
        for seed in 0..50 {
            let a = simulate_forward(&p, &mut ChaCha8Rng::seed_from_u64(seed));
            let b = simulate_population(
                &p.model(),
                p.root(),
                p.n,
                p.node_cap,
                &mut ChaCha8Rng::seed_from_u64(seed),
            );
            match (a, b) {
                (SimOutcome::Survived(t), PopulationOutcome::Survived(m)) => {
                    let last: Vec<Interval> =
                        t.generation(p.n).map(|u| t.nodes()[u].mark).collect();
                    assert_eq!(last, m);
                    t.validate().unwrap();
                }
                (SimOutcome::Extinct { generation: g }, PopulationOutcome::Extinct { generation: h }) => {
                    assert_eq!(g, h)
                }
                other => panic!("outcomes differ: {other:?}"),
            }
        }
    }

    #[test]
    fn cap_of_one_is_exceeded() {
        let p = ModelParams::new(50.0, 50).unwrap().with_node_cap(1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let capped = (0..200)
            .filter(|_| matches!(simulate_forward(&p, &mut rng), SimOutcome::CapExceeded { .. }))
            .count();
        assert!(capped > 100);
    }

    #[test]
    fn zero_replicates_is_an_error() {
        let p = ModelParams::new(0.0, 10).unwrap();
        let err = survival_probability(&p, 1.0, 0, &Streams::new(0, "x"), false).unwrap_err();
        assert_eq!(err.to_string(), "need at least one replicate");
    }

    #[test]
    fn max_attempts_error_carries_count() {
        let p = ModelParams::new(0.0, 1000).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        // P(survive 1000 generations) is about 0.002
        let mut saw = false;
        for _ in 0..20 {
            if let Err(e) = sample_conditioned(&p, 1.0, 1, &mut rng) {
                assert_eq!(e, Error::MaxAttempts { attempts: 1 });
                saw = true;
            }
        }
        assert!(saw);
    }

    #[test]
    fn critical_survival_recursion() {
        assert!((critical_poisson_survival(1) - (1.0 - (-1f64).exp())).abs() < 1e-15);
        // Kolmogorov: n P(Z_n > 0) -> 2
        let n = 100_000;
        assert!((n as f64 * critical_poisson_survival(n) - 2.0).abs() < 0.01);
    }

    #[test]
    fn horizon_floor() {
        assert_eq!(horizon(400, 1.0), 400);
        assert_eq!(horizon(100, 0.5), 50);
        assert_eq!(horizon(10, 0.35), 3);
    }
}
