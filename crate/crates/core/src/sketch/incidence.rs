//! Sketched incidence matrices `Π^ℓ_s B^ℓ_s`.
//!
//! The matrix has `reps·buckets` rows and `n` columns but each present,
//! sampled edge touches only `2·reps` entries, so it is held sparsely. All
//! entries are integers at unit edge weights, which keeps ingestion exact and
//! order independent.

use super::heavy::{CounterView, HhGeometry};
use super::table::RowTable;
use crate::graph::{EdgeKey, Sign};
use crate::sampler::{edge_hash, keyed_bit, SeededPrf};

#[derive(Clone, Debug)]
pub struct SketchedIncidence {
    level: u32,
    rate: u32,
    n: usize,
    geometry: HhGeometry,
    sampler: SeededPrf,
    table: RowTable,
}

impl SketchedIncidence {
    pub fn new(level: u32, rate: u32, n: usize, geometry: HhGeometry, sampler: SeededPrf) -> Self {
        Self {
            level,
            rate,
            n,
            geometry,
            sampler,
            table: RowTable::default(),
        }
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn rate(&self) -> u32 {
        self.rate
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn geometry(&self) -> &HhGeometry {
        &self.geometry
    }

    pub fn sampler(&self) -> &SeededPrf {
        &self.sampler
    }

    /// `h^ℓ_s(e)`.
    pub fn is_sampled(&self, e: EdgeKey) -> bool {
        keyed_bit(&self.sampler, edge_hash(e), self.rate)
    }

    /// Applies `±Π·b_e·h(e)`. Returns whether the edge was sampled.
    pub fn update(&mut self, sign: Sign, e: EdgeKey) -> bool {
        self.update_hashed(sign, e, edge_hash(e))
    }

    #[inline]
    pub(crate) fn update_hashed(&mut self, sign: Sign, e: EdgeKey, hash: u64) -> bool {
        if !keyed_bit(&self.sampler, hash, self.rate) {
            return false;
        }
        let coord = e.index(self.n);
        let delta = sign.delta();
        let (u, v) = (e.u() as u32, e.v() as u32);
        // Locate a batch of counters first so their cache misses overlap.
        let mut hits = [(0u32, 0.0f64); 32];
        let reps = self.geometry.reps();
        for start in (0..reps).step_by(hits.len()) {
            let batch = &mut hits[..(reps - start).min(32) as usize];
            for (k, hit) in batch.iter_mut().enumerate() {
                *hit = self.geometry.locate(start + k as u32, coord);
                self.table.prefetch(hit.0);
            }
            for &(row, s) in batch.iter() {
                self.table.add_pair(row, (u, s * delta), (v, -s * delta));
            }
        }
        true
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn nnz(&self) -> usize {
        self.table.nnz()
    }

    /// Nonzero entries as `(row, column, value)`, sorted.
    pub fn entries(&self) -> Vec<(u32, u32, f64)> {
        let mut out: Vec<(u32, u32, f64)> = self.table.iter().collect();
        out.sort_unstable_by_key(|&(r, c, _)| (r, c));
        out
    }

    /// Restores entries written by [`SketchedIncidence::entries`]. Repeated
    /// positions add up.
    pub(crate) fn insert_raw(&mut self, row: u32, col: u32, value: f64) {
        self.table.add(row, col, value);
    }

    pub fn freeze(&self) -> FrozenIncidence {
        let entries = self.entries();
        let mut rows = Vec::new();
        let mut row_ptr = vec![0usize];
        let mut cols = Vec::with_capacity(entries.len());
        let mut vals = Vec::with_capacity(entries.len());
        for (r, c, v) in entries {
            if rows.last() != Some(&r) {
                if !rows.is_empty() {
                    row_ptr.push(cols.len());
                }
                rows.push(r);
            }
            cols.push(c);
            vals.push(v);
        }
        if !rows.is_empty() {
            row_ptr.push(cols.len());
        }
        FrozenIncidence {
            level: self.level,
            rate: self.rate,
            n: self.n,
            geometry: self.geometry,
            sampler: self.sampler,
            rows,
            row_ptr,
            cols,
            vals,
        }
    }
}

impl PartialEq for SketchedIncidence {
    fn eq(&self, other: &Self) -> bool {
        self.level == other.level
            && self.rate == other.rate
            && self.n == other.n
            && self.geometry == other.geometry
            && self.sampler == other.sampler
            && self.nnz() == other.nnz()
            && self.entries().iter().zip(other.entries()).all(|(x, y)| {
                x.0 == y.0 && x.1 == y.1 && x.2.to_bits() == y.2.to_bits()
            })
    }
}

/// Immutable row-compressed copy used during recovery.
#[derive(Clone, Debug)]
pub struct FrozenIncidence {
    level: u32,
    rate: u32,
    n: usize,
    geometry: HhGeometry,
    sampler: SeededPrf,
    rows: Vec<u32>,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl FrozenIncidence {
    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn rate(&self) -> u32 {
        self.rate
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn geometry(&self) -> &HhGeometry {
        &self.geometry
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn is_sampled(&self, e: EdgeKey) -> bool {
        keyed_bit(&self.sampler, edge_hash(e), self.rate)
    }

    /// `(Π B)·φ`, the sketch of the subsampled flow `B·φ`.
    pub fn flow_sketch_query(&self, phi: &[f64]) -> SketchVector {
        assert_eq!(phi.len(), self.n, "potential length mismatch");
        let mut entries = Vec::new();
        let mut rep_sq = vec![0.0; self.geometry.reps() as usize];
        for (i, &r) in self.rows.iter().enumerate() {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * phi[self.cols[k] as usize];
            }
            if acc != 0.0 {
                entries.push((r, acc));
                rep_sq[self.geometry.rep_of(r) as usize] += acc * acc;
            }
        }
        SketchVector { entries, rep_sq }
    }
}

/// A sketched vector with its nonzero counters sorted by row.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SketchVector {
    entries: Vec<(u32, f64)>,
    rep_sq: Vec<f64>,
}

impl SketchVector {
    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }
}

impl CounterView for SketchVector {
    fn counter(&self, row: u32) -> f64 {
        match self.entries.binary_search_by_key(&row, |&(r, _)| r) {
            Ok(i) => self.entries[i].1,
            Err(_) => 0.0,
        }
    }

    fn rep_sq_norms(&self) -> Vec<f64> {
        self.rep_sq.clone()
    }
}
