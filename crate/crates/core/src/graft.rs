//! The grafted tree: a k-spine with independent forward subtrees hanging
//! off it.
//!
//! A spine vertex at generation `n` carries the contiguous range of leaf
//! labels descending from it. Its offspring number is biased by its
//! `d_u`-th factorial moment; `d_u` of the children, placed at uniformly
//! chosen ranks, continue the spine and the others start ordinary subtrees
//! from `p(Y_u, ·)`.

use std::ops::Range;

use rand::Rng;

use crate::error::{Error, Result};
use crate::kspine::KSpine;
use crate::model::MarkModel;
use crate::sampling::sorted_subset;
use crate::tree::{MarkedTree, TreeBuilder};

#[derive(Debug, Clone, PartialEq)]
pub struct GraftedTree {
    pub tree: MarkedTree,
    /// Node index of leaf `i` of the spine, at generation `N`.
    pub leaves: Vec<usize>,
    /// Node indices of spine vertices per generation.
    pub spine_nodes: Vec<Vec<usize>>,
}

/// Splits the leaf range `range` of a spine vertex at generation `g` into
/// the ranges of its spine children.
fn split_range(spine: &KSpine, range: &Range<usize>, g: u32) -> Vec<Range<usize>> {
    let w = spine.branch_times();
    let mut out = Vec::new();
    let mut lo = range.start;
    for i in range.start..range.end - 1 {
        if w[i] == g {
            out.push(lo..i + 1);
            lo = i + 1;
        }
    }
    out.push(lo..range.end);
    out
}

pub fn graft_tree<M: MarkModel, R: Rng + ?Sized>(
    spine: &KSpine,
    model: &M,
    node_cap: usize,
    rng: &mut R,
) -> Result<GraftedTree> {
    let n = spine.horizon();
    let root = spine.path(0)[0];
    let mut builder = TreeBuilder::new(root);
    // per node of the current generation: leaf range if on the spine
    let mut current: Vec<(crate::interval::Interval, Option<Range<usize>>)> =
        vec![(root, Some(0..spine.k()))];
    let mut spine_nodes = vec![vec![0usize]];
    let mut counts = Vec::new();
    let mut marks = Vec::new();
    for g in 0..n {
        counts.clear();
        marks.clear();
        let mut next = Vec::new();
        for (mark, range) in &current {
            match range {
                None => {
                    let kk = model.sample_offspring(mark, rng);
                    counts.push(kk);
                    for _ in 0..kk {
                        let c = model.sample_child_mark(mark, rng);
                        marks.push(c);
                        next.push((c, None));
                    }
                }
                Some(range) => {
                    let parts = split_range(spine, range, g);
                    let d = parts.len() as u32;
                    let kk = model.sample_biased_offspring(mark, d, rng);
                    counts.push(kk);
                    let ranks = sorted_subset(kk, d, rng);
                    let mut parts = parts.into_iter();
                    let mut r = ranks.iter().peekable();
                    for c in 0..kk {
                        if r.peek() == Some(&&c) {
                            r.next();
                            let part = parts.next().expect("one range per spine child");
                            let m = spine.path(part.start)[g as usize + 1];
                            marks.push(m);
                            next.push((m, Some(part)));
                        } else {
                            let m = model.sample_child_mark(mark, rng);
                            marks.push(m);
                            next.push((m, None));
                        }
                    }
                }
            }
        }
        if marks.len() > node_cap {
            return Err(Error::CapExceeded { cap: node_cap, generation: g + 1 });
        }
        let offset = builder.len();
        builder.push_counts(&counts, &marks);
        spine_nodes.push(
            next.iter()
                .enumerate()
                .filter(|(_, (_, r))| r.is_some())
                .map(|(i, _)| offset + i)
                .collect(),
        );
        current = next;
    }
    let offset = builder.len() - current.len();
    let mut leaves = vec![0usize; spine.k()];
    for (i, (_, r)) in current.iter().enumerate() {
        if let Some(r) = r {
            leaves[r.start] = offset + i;
        }
    }
    Ok(GraftedTree { tree: builder.finish(), leaves, spine_nodes })
}
