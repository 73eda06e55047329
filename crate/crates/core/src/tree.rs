//! Ulam–Harris marked trees stored as flat, generation-ordered arrays.
//!
//! Nodes are laid out breadth first: generation `g` occupies the contiguous
//! index range `generation(g)`, and the children of a node form a contiguous
//! range in the next generation. Sibling order is the planar order.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::interval::{Interval, DEFAULT_TOL};

pub const NO_PARENT: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub parent: u32,
    pub generation: u32,
    pub mark: Interval,
    pub first_child: u32,
    pub child_count: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarkedTree {
    nodes: Vec<Node>,
    // generation g spans offsets[g]..offsets[g + 1]
    offsets: Vec<usize>,
}

/// Builds a [`MarkedTree`] one generation at a time.
#[derive(Debug, Clone)]
pub struct TreeBuilder {
    tree: MarkedTree,
}

impl TreeBuilder {
    pub fn new(root_mark: Interval) -> Self {
        let root = Node {
            parent: NO_PARENT,
            generation: 0,
            mark: root_mark,
            first_child: 0,
            child_count: 0,
        };
        Self { tree: MarkedTree { nodes: vec![root], offsets: vec![0, 1] } }
    }

    /// Index range of the most recent generation.
    pub fn last_generation(&self) -> Range<usize> {
        let g = self.tree.offsets.len() - 2;
        self.tree.offsets[g]..self.tree.offsets[g + 1]
    }

    pub fn len(&self) -> usize {
        self.tree.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tree.nodes.is_empty()
    }

    pub fn mark(&self, node: usize) -> Interval {
        self.tree.nodes[node].mark
    }

    /// Appends the next generation. `children` lists `(parent, mark)` pairs;
    /// parents must belong to the last generation and appear in
    /// non-decreasing order.
    pub fn push_generation(
        &mut self,
        children: impl IntoIterator<Item = (usize, Interval)>,
    ) -> Result<()> {
        let parents = self.last_generation();
        let generation = (self.tree.offsets.len() - 1) as u32;
        let start = self.tree.nodes.len();
        let mut prev = parents.start;
        for (parent, mark) in children {
            if !parents.contains(&parent) || parent < prev {
                return Err(Error::MalformedTree(format!(
                    "parent {parent} is not in the last generation or out of order"
                )));
            }
            prev = parent;
            let idx = self.tree.nodes.len() as u32;
            let p = &mut self.tree.nodes[parent];
            if p.child_count == 0 {
                p.first_child = idx;
            }
            p.child_count += 1;
            self.tree.nodes.push(Node {
                parent: parent as u32,
                generation,
                mark,
                first_child: 0,
                child_count: 0,
            });
        }
        if self.tree.nodes.len() > start {
            self.tree.offsets.push(self.tree.nodes.len());
        }
        Ok(())
    }

    /// Appends `counts[i]` children to the `i`-th node of the last
    /// generation, with marks taken in order from `marks`.
    pub(crate) fn push_counts(&mut self, counts: &[u32], marks: &[Interval]) {
        let parents = self.last_generation();
        debug_assert_eq!(counts.len(), parents.len());
        let generation = (self.tree.offsets.len() - 1) as u32;
        let mut next = marks.iter();
        for (parent, &c) in parents.zip(counts) {
            let first = self.tree.nodes.len() as u32;
            let p = &mut self.tree.nodes[parent];
            p.first_child = first;
            p.child_count = c;
            for _ in 0..c {
                self.tree.nodes.push(Node {
                    parent: parent as u32,
                    generation,
                    mark: *next.next().expect("one mark per child"),
                    first_child: 0,
                    child_count: 0,
                });
            }
        }
        if !marks.is_empty() {
            self.tree.offsets.push(self.tree.nodes.len());
        }
    }

    pub fn finish(self) -> MarkedTree {
        self.tree
    }
}

impl MarkedTree {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, u: usize) -> Result<&Node> {
        self.nodes.get(u).ok_or(Error::NodeOutOfRange { index: u, len: self.nodes.len() })
    }

    pub fn root(&self) -> usize {
        0
    }

    /// Generation of the deepest node.
    pub fn height(&self) -> u32 {
        (self.offsets.len() - 2) as u32
    }

    /// Node indices of generation `g` (empty past the height).
    pub fn generation(&self, g: u32) -> Range<usize> {
        let g = g as usize;
        if g + 1 < self.offsets.len() {
            self.offsets[g]..self.offsets[g + 1]
        } else {
            self.nodes.len()..self.nodes.len()
        }
    }

    pub fn generation_size(&self, g: u32) -> usize {
        self.generation(g).len()
    }

    pub fn parent(&self, u: usize) -> Option<usize> {
        let p = self.nodes[u].parent;
        (p != NO_PARENT).then_some(p as usize)
    }

    pub fn children(&self, u: usize) -> Range<usize> {
        let n = &self.nodes[u];
        let s = n.first_child as usize;
        s..s + n.child_count as usize
    }

    /// Most recent common ancestor `u ∧ v`.
    pub fn mrca(&self, u: usize, v: usize) -> Result<usize> {
        self.node(u)?;
        self.node(v)?;
        let (mut a, mut b) = (u, v);
        while self.nodes[a].generation > self.nodes[b].generation {
            a = self.nodes[a].parent as usize;
        }
        while self.nodes[b].generation > self.nodes[a].generation {
            b = self.nodes[b].parent as usize;
        }
        while a != b {
            a = self.nodes[a].parent as usize;
            b = self.nodes[b].parent as usize;
        }
        Ok(a)
    }

    /// Graph distance: edges from `u` and from `v` up to `u ∧ v`.
    pub fn tree_distance(&self, u: usize, v: usize) -> Result<u32> {
        let w = self.mrca(u, v)?;
        let gw = self.nodes[w].generation;
        Ok(self.nodes[u].generation - gw + self.nodes[v].generation - gw)
    }

    /// Number of generations traced back before two same-generation nodes
    /// meet, `|u| - |u ∧ v|`. Half the graph distance.
    pub fn genealogical_depth(&self, u: usize, v: usize) -> Result<u32> {
        let w = self.mrca(u, v)?;
        let (gu, gv) = (self.nodes[u].generation, self.nodes[v].generation);
        if gu != gv {
            return Err(Error::GenerationMismatch { u, v });
        }
        Ok(gu - self.nodes[w].generation)
    }

    /// Pairwise genealogical depths among `leaves` (row-major, k×k).
    pub fn depth_matrix(&self, leaves: &[usize]) -> Result<Vec<f64>> {
        let k = leaves.len();
        let mut d = vec![0.0; k * k];
        for i in 0..k {
            for j in i + 1..k {
                let x = self.genealogical_depth(leaves[i], leaves[j])? as f64;
                d[i * k + j] = x;
                d[j * k + i] = x;
            }
        }
        Ok(d)
    }

    /// Checks the structural invariants: single root, generation = parent's
    /// generation + 1, contiguous child ranges partitioning the non-root
    /// nodes, and marks nested in their parent's mark.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::MalformedTree(m));
        if self.nodes.is_empty() || self.nodes[0].parent != NO_PARENT {
            return bad("missing root".into());
        }
        let mut covered = vec![false; self.nodes.len()];
        covered[0] = true;
        for (u, n) in self.nodes.iter().enumerate() {
            if u > 0 && n.parent == NO_PARENT {
                return bad(format!("second root at {u}"));
            }
            for c in self.children(u) {
                if c >= self.nodes.len() || covered[c] {
                    return bad(format!("child range of {u} overlaps or overflows"));
                }
                covered[c] = true;
                let child = &self.nodes[c];
                if child.parent as usize != u || child.generation != n.generation + 1 {
                    return bad(format!("inconsistent parent/generation at {c}"));
                }
                if !child.mark.is_subinterval_of(&n.mark, DEFAULT_TOL) {
                    return bad(format!("mark of {c} not nested in its parent's"));
                }
            }
        }
        if covered.iter().any(|c| !c) {
            return bad("orphan node".into());
        }
        for g in 0..=self.height() {
            if self.generation(g).any(|u| self.nodes[u].generation != g) {
                return bad(format!("generation {g} range is inconsistent"));
            }
        }
        Ok(())
    }
}

/// Ancestors of a fixed set of same-generation nodes at every generation,
/// answering genealogical-depth queries in `O(log height)`.
#[derive(Debug, Clone)]
pub struct AncestorTable {
    generation: u32,
    // row g holds the generation-g ancestor of each leaf
    rows: Vec<Vec<u32>>,
}

impl AncestorTable {
    pub fn new(tree: &MarkedTree, leaves: &[usize]) -> Result<Self> {
        let generation = match leaves.first() {
            Some(&u) => tree.node(u)?.generation,
            None => 0,
        };
        let mut current = Vec::with_capacity(leaves.len());
        for (i, &u) in leaves.iter().enumerate() {
            if tree.node(u)?.generation != generation {
                return Err(Error::GenerationMismatch { u: leaves[0], v: leaves[i] });
            }
            current.push(u as u32);
        }
        let mut rows = vec![Vec::new(); generation as usize + 1];
        for g in (0..=generation as usize).rev() {
            let next: Vec<u32> = current.iter().map(|&u| tree.nodes[u as usize].parent).collect();
            rows[g] = std::mem::replace(&mut current, next);
        }
        Ok(Self { generation, rows })
    }

    pub fn len(&self) -> usize {
        self.rows.last().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Genealogical depth between the `a`-th and `b`-th leaves.
    pub fn depth(&self, a: usize, b: usize) -> u32 {
        if a == b {
            return 0;
        }
        // largest g with a common ancestor at generation g
        let (mut lo, mut hi) = (0usize, self.generation as usize);
        while lo < hi {
            let mid = (lo + hi + 1) / 2;
            if self.rows[mid][a] == self.rows[mid][b] {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        self.generation - lo as u32
    }
}
