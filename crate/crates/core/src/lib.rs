//! Simulation of the branching process with recombination, its k-spine
//! decomposition and the coalescent point processes arising in its
//! genealogical limit.

pub mod accumulator;
pub mod branching;
pub mod cpp;
pub mod diagnostics;
pub mod entrance;
pub mod error;
pub mod functional;
pub mod graft;
pub mod interval;
pub mod kspine;
pub mod manytofew;
pub mod model;
pub mod rescale;
pub mod rng;
pub mod sampling;
pub mod spine;
pub mod stats;
pub mod tree;
pub mod ultrametric;

pub use accumulator::{Accumulator, Summary};
pub use error::{Error, Result};
pub use interval::Interval;
pub use rng::{SimRng, Streams};
