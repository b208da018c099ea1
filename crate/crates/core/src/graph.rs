//! Vertex and edge indexing over the complete-graph coordinate space,
//! dynamic edge sets, and weighted Laplacians.
//!
//! Every unordered pair `{u, v}` of an `n`-vertex graph owns one coordinate
//! in `[0, n(n-1)/2)`: the lexicographic rank of `(min, max)`. Flow vectors
//! and incidence rows live in that space but are never materialised.

use std::collections::BTreeSet;
use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type VertexId = usize;

/// Number of unordered vertex pairs, `n choose 2`.
pub fn pair_count(n: usize) -> u64 {
    let n = n as u64;
    n * n.saturating_sub(1) / 2
}

/// Canonical unordered pair `u < v`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EdgeKey {
    u: u32,
    v: u32,
}

impl EdgeKey {
    /// Canonicalises `(a, b)`; fails on self-loops or vertices outside `[0, n)`.
    pub fn new(a: VertexId, b: VertexId, n: usize) -> Result<Self> {
        if a == b {
            return Err(Error::InvalidArgument(format!("self-loop on vertex {a}")));
        }
        if a >= n || b >= n {
            return Err(Error::InvalidArgument(format!(
                "edge ({a}, {b}) out of range for {n} vertices"
            )));
        }
        Ok(Self::canonical(a, b))
    }

    pub(crate) fn canonical(a: VertexId, b: VertexId) -> Self {
        debug_assert_ne!(a, b);
        let (u, v) = if a < b { (a, b) } else { (b, a) };
        Self {
            u: u as u32,
            v: v as u32,
        }
    }

    pub fn u(&self) -> VertexId {
        self.u as VertexId
    }

    pub fn v(&self) -> VertexId {
        self.v as VertexId
    }

    /// Lexicographic rank among all pairs of an `n`-vertex graph.
    pub fn index(&self, n: usize) -> u64 {
        let (u, v, n) = (self.u as u64, self.v as u64, n as u64);
        u * (2 * n - u - 1) / 2 + (v - u - 1)
    }

    /// Inverse of [`EdgeKey::index`].
    pub fn from_index(index: u64, n: usize) -> Result<Self> {
        if index >= pair_count(n) {
            return Err(Error::InvalidArgument(format!(
                "pair index {index} out of range for {n} vertices"
            )));
        }
        let nn = n as u64;
        let row_start = |u: u64| u * (2 * nn - u - 1) / 2;
        // Closed form for the row, then fix up floating-point drift.
        let nf = nn as f64;
        let disc = (2.0 * nf - 1.0).powi(2) - 8.0 * index as f64;
        let mut u = ((2.0 * nf - 1.0 - disc.max(0.0).sqrt()) / 2.0).floor().max(0.0) as u64;
        u = u.min(nn - 2);
        while u > 0 && row_start(u) > index {
            u -= 1;
        }
        while u + 1 < nn - 1 && row_start(u + 1) <= index {
            u += 1;
        }
        let v = index - row_start(u) + u + 1;
        Ok(Self {
            u: u as u32,
            v: v as u32,
        })
    }
}

impl fmt::Display for EdgeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.u, self.v)
    }
}

/// Lexicographic rank of the canonicalised pair `(u, v)`.
pub fn edge_index(u: VertexId, v: VertexId, n: usize) -> Result<u64> {
    EdgeKey::new(u, v, n).map(|e| e.index(n))
}

pub fn index_to_edge(index: u64, n: usize) -> Result<(VertexId, VertexId)> {
    EdgeKey::from_index(index, n).map(|e| (e.u(), e.v()))
}

/// Sparse incidence row `χ_u − χ_v`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IncidenceRow {
    pub u: VertexId,
    pub v: VertexId,
}

impl IncidenceRow {
    pub fn dot(&self, x: &[f64]) -> f64 {
        x[self.u] - x[self.v]
    }

    pub fn to_dense(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        out[self.u] += 1.0;
        out[self.v] -= 1.0;
        out
    }
}

impl From<EdgeKey> for IncidenceRow {
    fn from(e: EdgeKey) -> Self {
        Self { u: e.u(), v: e.v() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    Insert,
    Delete,
}

impl Sign {
    pub fn delta(self) -> f64 {
        match self {
            Sign::Insert => 1.0,
            Sign::Delete => -1.0,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Sign::Insert => '+',
            Sign::Delete => '-',
        }
    }
}

/// Simple unweighted graph maintained under insertions and deletions.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DynamicGraph {
    n: usize,
    edges: BTreeSet<EdgeKey>,
}

impl DynamicGraph {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            edges: BTreeSet::new(),
        }
    }

    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (VertexId, VertexId)>) -> Result<Self> {
        let mut g = Self::new(n);
        for (a, b) in edges {
            g.apply_update(Sign::Insert, a, b)?;
        }
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = EdgeKey> + '_ {
        self.edges.iter().copied()
    }

    pub fn contains(&self, e: EdgeKey) -> bool {
        self.edges.contains(&e)
    }

    pub fn apply_update(&mut self, sign: Sign, a: VertexId, b: VertexId) -> Result<EdgeKey> {
        let e = EdgeKey::new(a, b, self.n)?;
        match sign {
            Sign::Insert => {
                if !self.edges.insert(e) {
                    return Err(Error::Consistency(format!("edge {e} inserted twice")));
                }
            }
            Sign::Delete => {
                if !self.edges.remove(&e) {
                    return Err(Error::Consistency(format!("edge {e} deleted while absent")));
                }
            }
        }
        Ok(e)
    }

    /// Unit-weight view.
    pub fn to_weighted(&self) -> WeightedGraph {
        WeightedGraph {
            n: self.n,
            edges: self.edges.iter().map(|&e| (e, 1.0)).collect(),
        }
    }

    pub fn is_connected(&self) -> bool {
        components(self.n, self.edges.iter().copied()).iter().all(|&c| c == 0)
    }
}

/// Weighted simple graph with strictly positive weights, sorted by edge key.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WeightedGraph {
    n: usize,
    edges: Vec<(EdgeKey, f64)>,
}

impl WeightedGraph {
    pub fn empty(n: usize) -> Self {
        Self { n, edges: Vec::new() }
    }

    /// Merges duplicate keys by summing their weights and drops zero weights.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (EdgeKey, f64)>) -> Result<Self> {
        let mut list: Vec<(EdgeKey, f64)> = Vec::new();
        for (e, w) in edges {
            if e.v() >= n {
                return Err(Error::InvalidArgument(format!("edge {e} out of range for {n} vertices")));
            }
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::InvalidArgument(format!("edge {e} has weight {w}")));
            }
            list.push((e, w));
        }
        list.sort_by_key(|&(e, _)| e);
        let mut merged: Vec<(EdgeKey, f64)> = Vec::with_capacity(list.len());
        for (e, w) in list {
            match merged.last_mut() {
                Some((last, acc)) if *last == e => *acc += w,
                _ => merged.push((e, w)),
            }
        }
        merged.retain(|&(_, w)| w > 0.0);
        Ok(Self { n, edges: merged })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(EdgeKey, f64)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn weight(&self, e: EdgeKey) -> Option<f64> {
        self.edges
            .binary_search_by_key(&e, |&(k, _)| k)
            .ok()
            .map(|i| self.edges[i].1)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            n: self.n,
            edges: self
                .edges
                .iter()
                .map(|&(e, w)| (e, w * factor))
                .filter(|&(_, w)| w > 0.0)
                .collect(),
        }
    }

    /// `xᵀ L x = Σ_e w_e (x_u − x_v)²`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        self.edges
            .iter()
            .map(|&(e, w)| {
                let d = x[e.u()] - x[e.v()];
                w * d * d
            })
            .sum()
    }

    /// `y = L x`.
    pub fn laplacian_apply(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for &(e, w) in &self.edges {
            let f = w * (x[e.u()] - x[e.v()]);
            y[e.u()] += f;
            y[e.v()] -= f;
        }
    }

    pub fn laplacian_dense(&self) -> DMatrix<f64> {
        let mut l = DMatrix::zeros(self.n, self.n);
        for &(e, w) in &self.edges {
            let (u, v) = (e.u(), e.v());
            l[(u, u)] += w;
            l[(v, v)] += w;
            l[(u, v)] -= w;
            l[(v, u)] -= w;
        }
        l
    }

    pub fn degrees(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for &(e, w) in &self.edges {
            d[e.u()] += w;
            d[e.v()] += w;
        }
        d
    }

    /// Connected component label per vertex, labels in order of first vertex.
    pub fn components(&self) -> Vec<usize> {
        components(self.n, self.edges.iter().map(|&(e, _)| e))
    }
}

pub(crate) fn components(n: usize, edges: impl Iterator<Item = EdgeKey>) -> Vec<usize> {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for e in edges {
        let (a, b) = (find(&mut parent, e.u()), find(&mut parent, e.v()));
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut label = vec![usize::MAX; n];
    let mut out = vec![0; n];
    let mut next = 0;
    for v in 0..n {
        let r = find(&mut parent, v);
        if label[r] == usize::MAX {
            label[r] = next;
            next += 1;
        }
        out[v] = label[r];
    }
    out
}
