//! Edge recovery at one sampling band: shifted-grid hashing of the embedded
//! vertices, flow queries from a pivot per bucket, and the `p′_e` filter.

use std::collections::BTreeSet;

use rustc_hash::FxHashMap;

use crate::embed::{p_prime, EmbeddingM, KinvOperator};
use crate::error::Result;
use crate::graph::{pair_count, EdgeKey};
use crate::sampler::{shift_from, shift_stream, SeededPrf};
use crate::sketch::{hh_decode, FrozenIncidence, SketchVector};

/// `w = 2q·√(ε²/(c₂·2^s·log₂ n))`.
pub fn grid_width(s: i32, q: usize, epsilon: f64, c2: f64, log2n: f64) -> f64 {
    2.0 * q as f64 * (epsilon * epsilon / (c2 * 2f64.powi(s) * log2n)).sqrt()
}

/// `p′ ∈ (2^{-s-1}, 2^{-s}]`; with `open_top` the upper end is dropped.
pub fn in_band(p: f64, s: i32, open_top: bool) -> bool {
    p > 2f64.powi(-s - 1) && (open_top || p <= 2f64.powi(-s))
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridHasher {
    w: f64,
    shifts: Vec<f64>,
}

impl GridHasher {
    pub fn new(w: f64, shifts: Vec<f64>) -> Self {
        assert!(w > 0.0, "grid width must be positive");
        Self { w, shifts }
    }

    /// Shifts for repetition `j` of band `s` at `level`.
    pub fn seeded(q: usize, w: f64, prf: &SeededPrf, level: u32, s: i32, j: u32) -> Self {
        let stream = shift_stream(prf, level, s, j);
        let shifts = (0..q).map(|i| shift_from(&stream, i as u32, w)).collect();
        Self::new(w, shifts)
    }

    pub fn width(&self) -> f64 {
        self.w
    }

    pub fn q(&self) -> usize {
        self.shifts.len()
    }

    #[inline]
    pub fn cell(&self, i: usize, x: f64) -> i64 {
        // Truncation plus a correction is much cheaper than `f64::floor`
        // on targets without a native rounding instruction.
        let y = (x - self.shifts[i]) / self.w;
        let t = y as i64;
        if (t as f64) > y {
            t - 1
        } else {
            t
        }
    }

    pub fn key(&self, point: &[f64]) -> Vec<i64> {
        assert_eq!(point.len(), self.q(), "dimension mismatch");
        point.iter().enumerate().map(|(i, &x)| self.cell(i, x)).collect()
    }
}

/// `G(u)`, the grid cell of `Mχ_u`.
pub fn grid_key(m: &EmbeddingM, u: usize, hasher: &GridHasher) -> Vec<i64> {
    hasher.key(m.column(u))
}

/// Partition of the vertices by grid cell. Each bucket is sorted and buckets
/// are ordered by their smallest vertex, so the pivot is `bucket[0]`.
///
/// Vertices are grouped by a 64-bit digest of their cell vector, then each
/// group is checked coordinate by coordinate against its first member. A
/// digest collision falls back to exact refinement of that group.
pub fn buckets(m: &EmbeddingM, hasher: &GridHasher) -> Vec<Vec<usize>> {
    assert_eq!(m.q(), hasher.q(), "dimension mismatch");
    // Four independent lanes keep the multiply chain off the critical path.
    let digest = |u: usize| -> u64 {
        let mut h = [0x9e37_79b9_7f4a_7c15u64, 0x3c6e_f372_fe94_f82a, 0xdaa6_6d2c_7ddf_743f, 0x78dd_e6e5_fd29_f054];
        for (c, chunk) in m.column(u).chunks(4).enumerate() {
            for (k, &x) in chunk.iter().enumerate() {
                let cell = hasher.cell(4 * c + k, x) as u64;
                h[k] = (h[k] ^ cell).wrapping_mul(0x0100_0000_01b3).rotate_left(29);
            }
        }
        h.iter().fold(0u64, |a, &b| (a ^ b).wrapping_mul(0x9e37_79b9_7f4a_7c15).rotate_left(31))
    };
    let mut groups: FxHashMap<u64, Vec<usize>> = FxHashMap::default();
    for u in 0..m.n() {
        groups.entry(digest(u)).or_default().push(u);
    }
    let mut first = Vec::new();
    let mut done: Vec<Vec<usize>> = Vec::with_capacity(groups.len());
    for (_, group) in groups {
        if group.len() > 1 {
            first.clear();
            first.extend(m.column(group[0]).iter().enumerate().map(|(i, &x)| hasher.cell(i, x)));
        }
        let same = |v: usize| m.column(v).iter().enumerate().all(|(i, &x)| hasher.cell(i, x) == first[i]);
        if group.len() > 1 && !group[1..].iter().all(|&v| same(v)) {
            done.extend(refine(m, hasher, group));
        } else {
            done.push(group);
        }
    }
    for b in &mut done {
        b.sort_unstable();
    }
    done.sort_unstable_by_key(|b| b[0]);
    done
}

fn refine(m: &EmbeddingM, hasher: &GridHasher, group: Vec<usize>) -> Vec<Vec<usize>> {
    let mut done: Vec<Vec<usize>> = Vec::new();
    let mut active: Vec<Vec<usize>> = vec![group];
    for i in 0..m.q() {
        if active.is_empty() {
            break;
        }
        let mut next = Vec::with_capacity(active.len());
        for group in active {
            let mut keyed: Vec<(i64, usize)> =
                group.into_iter().map(|u| (hasher.cell(i, m.column(u)[i]), u)).collect();
            keyed.sort_unstable();
            for part in keyed.chunk_by(|a, b| a.0 == b.0) {
                let part: Vec<usize> = part.iter().map(|&(_, u)| u).collect();
                if part.len() == 1 {
                    done.push(part);
                } else {
                    next.push(part);
                }
            }
        }
        active = next;
    }
    done.extend(active);
    done
}

/// `max ‖M(χ_u − χ_v)‖₂ ≤ w·√q` over pairs in the bucket.
pub fn bucket_diameter_ok(m: &EmbeddingM, bucket: &[usize], w: f64) -> bool {
    let bound = w * w * m.q() as f64;
    bucket
        .iter()
        .enumerate()
        .all(|(i, &a)| bucket[i + 1..].iter().all(|&b| m.distance2(a, b) <= bound * (1.0 + 1e-12)))
}

/// Source of the heavy coordinates of a subsampled flow `B_s K̃⁺ b_xv`.
pub trait FlowOracle {
    /// Coordinates among `candidates` reported heavy for the flow `x → v`.
    /// The second value is set when the decode output was truncated.
    fn heavy_edges(&mut self, x: usize, v: usize, candidates: &[u64]) -> Result<(Vec<u64>, bool)>;

    fn queries(&self) -> (usize, usize) {
        (0, 0)
    }
}

/// Flow heavy hitters read from the sketch `Π^ℓ_s B^ℓ_s`.
pub struct SketchFlowOracle<'a> {
    sketch: &'a FrozenIncidence,
    kinv: &'a KinvOperator,
    eta: f64,
    cache: FxHashMap<(usize, usize), SketchVector>,
    computed: usize,
    hits: usize,
}

impl<'a> SketchFlowOracle<'a> {
    pub fn new(sketch: &'a FrozenIncidence, kinv: &'a KinvOperator, eta: f64) -> Self {
        Self {
            sketch,
            kinv,
            eta,
            cache: FxHashMap::default(),
            computed: 0,
            hits: 0,
        }
    }
}

impl FlowOracle for SketchFlowOracle<'_> {
    fn heavy_edges(&mut self, x: usize, v: usize, candidates: &[u64]) -> Result<(Vec<u64>, bool)> {
        if self.sketch.is_empty() || candidates.is_empty() {
            return Ok((Vec::new(), false));
        }
        if !self.cache.contains_key(&(x, v)) {
            let phi = self.kinv.potentials(x, v)?;
            self.cache.insert((x, v), self.sketch.flow_sketch_query(&phi));
            self.computed += 1;
        } else {
            self.hits += 1;
        }
        let vec = &self.cache[&(x, v)];
        let d = hh_decode(self.sketch.geometry(), vec, candidates.iter().copied(), self.eta);
        Ok((d.coords.into_iter().map(|(c, _)| c).collect(), d.truncated))
    }

    fn queries(&self) -> (usize, usize) {
        (self.computed, self.hits)
    }
}

/// The subsampled flow evaluated exactly from a known edge set, thresholded
/// at `η‖f‖₂`.
pub struct ExactFlowOracle<'a> {
    n: usize,
    sampled: Vec<EdgeKey>,
    kinv: &'a KinvOperator,
    eta: f64,
    cache: FxHashMap<(usize, usize), (FxHashMap<u64, f64>, f64)>,
    computed: usize,
    hits: usize,
}

impl<'a> ExactFlowOracle<'a> {
    /// `sampled` must be the present edges with sampler bit 1 at this rate.
    pub fn new(n: usize, sampled: Vec<EdgeKey>, kinv: &'a KinvOperator, eta: f64) -> Self {
        Self {
            n,
            sampled,
            kinv,
            eta,
            cache: FxHashMap::default(),
            computed: 0,
            hits: 0,
        }
    }
}

impl FlowOracle for ExactFlowOracle<'_> {
    fn heavy_edges(&mut self, x: usize, v: usize, candidates: &[u64]) -> Result<(Vec<u64>, bool)> {
        if self.sampled.is_empty() || candidates.is_empty() {
            return Ok((Vec::new(), false));
        }
        if !self.cache.contains_key(&(x, v)) {
            let phi = self.kinv.potentials(x, v)?;
            let mut flows = FxHashMap::default();
            let mut sq = 0.0;
            for e in &self.sampled {
                let f = phi[e.u()] - phi[e.v()];
                if f != 0.0 {
                    flows.insert(e.index(self.n), f);
                    sq += f * f;
                }
            }
            self.cache.insert((x, v), (flows, sq.sqrt()));
            self.computed += 1;
        } else {
            self.hits += 1;
        }
        let (flows, norm) = &self.cache[&(x, v)];
        let threshold = self.eta * norm;
        let out = candidates
            .iter()
            .copied()
            .filter(|c| flows.get(c).is_some_and(|f| f.abs() >= threshold))
            .collect();
        Ok((out, false))
    }

    fn queries(&self) -> (usize, usize) {
        (self.computed, self.hits)
    }
}

/// `‖Mb_e‖²` for every vertex pair, indexed by edge index. Only built when
/// the pair count is small enough to scan.
#[derive(Clone, Debug)]
pub struct PairDistances {
    n: usize,
    d2: Vec<f64>,
}

impl PairDistances {
    pub fn new(m: &EmbeddingM) -> Self {
        let n = m.n();
        let mut d2 = Vec::with_capacity(pair_count(n) as usize);
        for u in 0..n {
            for v in (u + 1)..n {
                d2.push(m.distance2(u, v));
            }
        }
        Self { n, d2 }
    }

    pub fn get(&self, index: u64) -> f64 {
        self.d2[index as usize]
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

#[derive(Clone, Debug)]
pub struct RecoverParams {
    pub level: u32,
    pub s: i32,
    pub epsilon: f64,
    pub c2: f64,
    pub log2n: f64,
    pub repetitions: u32,
    /// Treat the band at `s` as `(2^{-s-1}, ∞)`.
    pub open_top: bool,
    pub check_diameter: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RecoveryDiagnostics {
    pub s: i32,
    pub width: f64,
    pub band_pairs: usize,
    pub buckets: usize,
    pub largest_bucket: usize,
    pub flow_queries: usize,
    pub cached_queries: usize,
    pub decoded: usize,
    pub truncated_decodes: usize,
    pub zero_distance_hits: usize,
    pub diameter_violations: usize,
    pub skipped: bool,
}

#[derive(Clone, Debug, Default)]
pub struct Recovery {
    pub edges: BTreeSet<EdgeKey>,
    pub diagnostics: RecoveryDiagnostics,
}

/// One call of the recovery procedure at band `s`.
///
/// `pairs` switches between the two candidate modes: with all pair distances
/// available the decode is restricted to the pairs whose `p′` lies in the
/// band (the filter applied afterwards would discard the rest anyway);
/// without them the candidates are the in-band pairs inside the bucket.
pub fn recover_edges<O: FlowOracle>(
    oracle: &mut O,
    m: &EmbeddingM,
    pairs: Option<&PairDistances>,
    grid_prf: &SeededPrf,
    p: &RecoverParams,
) -> Result<Recovery> {
    let n = m.n();
    let pp = |d2: f64| p_prime(d2, p.epsilon, p.c2, p.log2n);
    let w = grid_width(p.s, m.q(), p.epsilon, p.c2, p.log2n);
    let mut out = Recovery::default();
    let diag = &mut out.diagnostics;
    diag.s = p.s;
    diag.width = w;

    let band: Option<Vec<u64>> = pairs.map(|pd| {
        (0..pair_count(n))
            .filter(|&i| in_band(pp(pd.get(i)), p.s, p.open_top))
            .collect()
    });
    if let Some(b) = &band {
        diag.band_pairs = b.len();
        if b.is_empty() {
            diag.skipped = true;
            return Ok(out);
        }
    }

    let mut local = Vec::new();
    let mut memo: FxHashMap<(usize, usize), Vec<u64>> = FxHashMap::default();
    for j in 0..p.repetitions {
        let hasher = GridHasher::seeded(m.q(), w, grid_prf, p.level, p.s, j);
        let table = buckets(m, &hasher);
        diag.buckets += table.len();
        for bucket in table.iter().filter(|b| b.len() > 1) {
            diag.largest_bucket = diag.largest_bucket.max(bucket.len());
            if p.check_diameter && !bucket_diameter_ok(m, bucket, w) {
                diag.diameter_violations += 1;
            }
            let candidates: &[u64] = match &band {
                Some(b) => b,
                None => {
                    local.clear();
                    for (i, &a) in bucket.iter().enumerate() {
                        for &c in &bucket[i + 1..] {
                            if in_band(pp(m.distance2(a, c)), p.s, p.open_top) {
                                local.push(EdgeKey::canonical(a, c).index(n));
                            }
                        }
                    }
                    &local
                }
            };
            if candidates.is_empty() {
                continue;
            }
            let x = bucket[0];
            for &v in &bucket[1..] {
                // With a fixed candidate list the decode of (x, v) cannot
                // change between repetitions.
                let found = match (&band, memo.get(&(x, v))) {
                    (Some(_), Some(f)) => f.clone(),
                    _ => {
                        let (found, truncated) = oracle.heavy_edges(x, v, candidates)?;
                        diag.truncated_decodes += truncated as usize;
                        if band.is_some() {
                            memo.insert((x, v), found.clone());
                        }
                        found
                    }
                };
                diag.decoded += found.len();
                for idx in found {
                    let e = EdgeKey::from_index(idx, n)?;
                    let d2 = match pairs {
                        Some(pd) => pd.get(idx),
                        None => m.distance2(e.u(), e.v()),
                    };
                    if d2 == 0.0 {
                        diag.zero_distance_hits += 1;
                    }
                    if in_band(pp(d2), p.s, p.open_top) {
                        out.edges.insert(e);
                    }
                }
            }
        }
    }
    let (computed, hits) = oracle.queries();
    diag.flow_queries = computed;
    diag.cached_queries = hits;
    Ok(out)
}
