//! Graph generators, shuffled update streams, and brute-force oracles for
//! recovery and spectral approximation.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::embed::{p_prime, EmbeddingM};
use crate::error::{Error, Result};
use crate::graph::{DynamicGraph, EdgeKey, Sign, WeightedGraph};
use crate::linalg::{pseudoinverse_dense, span_basis, DEFAULT_DENSE_LIMIT};
use crate::recover::{in_band, RecoverParams};
use crate::sketch::FrozenIncidence;
use crate::stream_io::StreamFile;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Clone, Debug, PartialEq)]
pub enum Family {
    /// Center 0, petals `1..n`, plus the edge `(1, 2)`.
    StarPlusEdge { n: usize },
    /// Center plus `petals` chains of `chain` cliques of size `clique`,
    /// consecutive cliques fully joined; one extra edge between the leaf
    /// cliques of the first two petals.
    ThickStar { petals: usize, chain: usize, clique: usize },
    /// Independent clusters with complete bipartite links between consecutive
    /// clusters, plus an edge from the first vertex of cluster 1 to the first
    /// vertex of cluster `far` (1-based).
    ThickLine { clusters: usize, cluster_size: usize, far: usize },
    RandomGnp { n: usize, p: f64 },
    /// Two cliques of `n/2` and `n − n/2` vertices joined by one edge.
    Barbell { n: usize },
    Complete { n: usize },
    Path { n: usize },
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Self::StarPlusEdge { .. } => "star-plus-edge",
            Self::ThickStar { .. } => "thick-star",
            Self::ThickLine { .. } => "thick-line",
            Self::RandomGnp { .. } => "random-gnp",
            Self::Barbell { .. } => "barbell",
            Self::Complete { .. } => "complete",
            Self::Path { .. } => "path",
        }
    }

    pub fn vertex_count(&self) -> usize {
        match *self {
            Self::StarPlusEdge { n } | Self::RandomGnp { n, .. } | Self::Barbell { n } | Self::Complete { n } | Self::Path { n } => n,
            Self::ThickStar { petals, chain, clique } => 1 + petals * chain * clique,
            Self::ThickLine { clusters, cluster_size, .. } => clusters * cluster_size,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct UnknownFamily(pub ());

impl fmt::Display for UnknownFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("unknown graph family")
    }
}

impl std::error::Error for UnknownFamily {}

/// Family names accepted on the command line.
pub const FAMILY_NAMES: [&str; 7] = [
    "star-plus-edge",
    "thick-star",
    "thick-line",
    "random-gnp",
    "barbell",
    "complete",
    "path",
];

impl FromStr for Family {
    type Err = UnknownFamily;

    /// Parses a bare family name with placeholder sizes.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s {
            "star-plus-edge" => Self::StarPlusEdge { n: 0 },
            "thick-star" => Self::ThickStar { petals: 0, chain: 0, clique: 0 },
            "thick-line" => Self::ThickLine { clusters: 0, cluster_size: 0, far: 0 },
            "random-gnp" => Self::RandomGnp { n: 0, p: 0.0 },
            "barbell" => Self::Barbell { n: 0 },
            "complete" => Self::Complete { n: 0 },
            "path" => Self::Path { n: 0 },
            _ => return Err(UnknownFamily(())),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorSpec {
    pub family: Family,
    pub seed: u64,
    /// Non-edges inserted and later deleted somewhere in the stream.
    pub decoys: usize,
}

impl GeneratorSpec {
    pub fn new(family: Family, seed: u64) -> Self {
        Self { family, seed, decoys: 0 }
    }

    pub fn with_decoys(mut self, decoys: usize) -> Self {
        self.decoys = decoys;
        self
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

fn clique(edges: &mut Vec<(usize, usize)>, vs: &[usize]) {
    for (i, &a) in vs.iter().enumerate() {
        for &b in &vs[i + 1..] {
            edges.push((a, b));
        }
    }
}

fn biclique(edges: &mut Vec<(usize, usize)>, a: &[usize], b: &[usize]) {
    for &x in a {
        for &y in b {
            edges.push((x, y));
        }
    }
}

/// The graph of `family`, drawing randomness (for `G(n, p)`) from `rng`.
pub fn build_graph<R: Rng>(family: &Family, rng: &mut R) -> Result<DynamicGraph> {
    let n = family.vertex_count();
    if n < 2 {
        return Err(invalid(format!("{} needs at least 2 vertices", family.name())));
    }
    let mut edges = Vec::new();
    match *family {
        Family::StarPlusEdge { n } => {
            if n < 3 {
                return Err(invalid("star-plus-edge needs n ≥ 3"));
            }
            edges.extend((1..n).map(|v| (0, v)));
            edges.push((1, 2));
        }
        Family::ThickStar { petals, chain, clique: size } => {
            if petals < 2 || chain < 1 || size < 1 {
                return Err(invalid("thick-star needs petals ≥ 2, chain ≥ 1, clique ≥ 1"));
            }
            let mut leaves = Vec::new();
            let mut next = 1;
            for _ in 0..petals {
                let mut prev: Vec<usize> = vec![0];
                for _ in 0..chain {
                    let c: Vec<usize> = (next..next + size).collect();
                    next += size;
                    clique(&mut edges, &c);
                    biclique(&mut edges, &prev, &c);
                    prev = c;
                }
                leaves.push(prev[0]);
            }
            edges.push((leaves[0], leaves[1]));
        }
        Family::ThickLine { clusters, cluster_size, far } => {
            if clusters < 3 || cluster_size < 1 || far < 3 || far > clusters {
                return Err(invalid("thick-line needs clusters ≥ 3 and 3 ≤ far ≤ clusters"));
            }
            let cluster = |i: usize| -> Vec<usize> { (i * cluster_size..(i + 1) * cluster_size).collect() };
            for i in 0..clusters - 1 {
                biclique(&mut edges, &cluster(i), &cluster(i + 1));
            }
            edges.push((0, (far - 1) * cluster_size));
        }
        Family::RandomGnp { n, p } => {
            if !(0.0..=1.0).contains(&p) {
                return Err(invalid(format!("edge probability {p} outside [0, 1]")));
            }
            for u in 0..n {
                for v in (u + 1)..n {
                    if rng.gen_bool(p) {
                        edges.push((u, v));
                    }
                }
            }
        }
        Family::Barbell { n } => {
            if n < 4 {
                return Err(invalid("barbell needs n ≥ 4"));
            }
            let h = n / 2;
            clique(&mut edges, &(0..h).collect::<Vec<_>>());
            clique(&mut edges, &(h..n).collect::<Vec<_>>());
            edges.push((h - 1, h));
        }
        Family::Complete { n } => clique(&mut edges, &(0..n).collect::<Vec<_>>()),
        Family::Path { n } => edges.extend((0..n - 1).map(|v| (v, v + 1))),
    }
    DynamicGraph::from_edges(n, edges)
}

/// Graph plus a shuffled insert-only stream for it, with `decoys` extra
/// non-edges each inserted and deleted later on.
pub fn generate(spec: &GeneratorSpec) -> Result<(DynamicGraph, StreamFile)> {
    let mut r = rng(spec.seed);
    let g = build_graph(&spec.family, &mut r)?;
    let stream = stream_for(&g, spec.decoys, &mut r);
    Ok((g, stream))
}

/// Stream realising `g`: its edges in random order, interleaved with decoy
/// insert/delete pairs.
pub fn stream_for<R: Rng>(g: &DynamicGraph, decoys: usize, rng: &mut R) -> StreamFile {
    let n = g.n();
    let mut fake: BTreeSet<EdgeKey> = BTreeSet::new();
    let available = crate::graph::pair_count(n) as usize - g.edge_count();
    let want = decoys.min(available);
    while fake.len() < want {
        let u = rng.gen_range(0..n);
        let v = rng.gen_range(0..n);
        if u == v {
            continue;
        }
        let e = EdgeKey::canonical(u, v);
        if !g.contains(e) {
            fake.insert(e);
        }
    }
    let mut ops: Vec<(Sign, EdgeKey)> = g.edges().chain(fake.iter().copied()).map(|e| (Sign::Insert, e)).collect();
    ops.shuffle(rng);
    for e in fake {
        let at = ops.iter().position(|&(_, x)| x == e).unwrap();
        let pos = rng.gen_range(at + 1..=ops.len());
        ops.insert(pos, (Sign::Delete, e));
    }
    let mut s = StreamFile::new(n);
    for (sign, e) in ops {
        s.push(sign, e.u(), e.v());
    }
    s
}

/// Random update stream of `len` updates over `n` vertices that keeps about
/// `target_edges` edges alive. Every prefix is consistent.
pub fn churn_stream<R: Rng>(n: usize, len: usize, target_edges: usize, rng: &mut R) -> StreamFile {
    let mut s = StreamFile::new(n);
    let mut live: Vec<EdgeKey> = Vec::new();
    let mut present: BTreeSet<EdgeKey> = BTreeSet::new();
    while s.updates.len() < len {
        let delete = !live.is_empty() && (live.len() >= target_edges || rng.gen_bool(0.3));
        if delete {
            let i = rng.gen_range(0..live.len());
            let e = live.swap_remove(i);
            present.remove(&e);
            s.push(Sign::Delete, e.u(), e.v());
        } else {
            let u = rng.gen_range(0..n);
            let v = rng.gen_range(0..n);
            if u == v {
                continue;
            }
            let e = EdgeKey::canonical(u, v);
            if present.insert(e) {
                live.push(e);
                s.push(Sign::Insert, e.u(), e.v());
            }
        }
    }
    s
}

/// `G(n, p)` redrawn until connected.
pub fn connected_gnp<R: Rng>(n: usize, p: f64, rng: &mut R) -> Result<DynamicGraph> {
    for _ in 0..1000 {
        let g = build_graph(&Family::RandomGnp { n, p }, rng)?;
        if g.is_connected() {
            return Ok(g);
        }
    }
    Err(invalid(format!("no connected G({n}, {p}) in 1000 draws")))
}

/// Edges `e` with sampler bit 1 in `sketch` and `p′_e` in the band of
/// `params.s`: exactly the edges a perfect recovery would return.
pub fn brute_force_expected_recovery(
    g: &DynamicGraph,
    sketch: &FrozenIncidence,
    m: &EmbeddingM,
    params: &RecoverParams,
) -> BTreeSet<EdgeKey> {
    g.edges()
        .filter(|&e| sketch.is_sampled(e))
        .filter(|&e| {
            let p = p_prime(m.distance2(e.u(), e.v()), params.epsilon, params.c2, params.log2n);
            in_band(p, params.s, params.open_top)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralReport {
    /// Largest `|xᵀHx / xᵀLx − 1|` observed over the row span of `L`.
    pub max_deviation: f64,
    /// Generalised eigenvalue extremes, when computed.
    pub eig_range: Option<(f64, f64)>,
    /// `xᵀHx` on the kernel of `L`, relative to `‖H‖`.
    pub kernel_leak: f64,
    pub passed: bool,
}

/// Checks `(1−ε)L ⪯ H ⪯ (1+ε)L`: random directions in the row span of `L`,
/// the exact generalised spectrum on that span when `n ≤ 128`, and that `H`
/// vanishes on the kernel of `L`.
pub fn spectral_check(l: &DMatrix<f64>, h: &DMatrix<f64>, epsilon: f64, trials: usize, seed: u64) -> SpectralReport {
    let n = l.nrows();
    let basis = span_basis(l);
    let r = basis.ncols();
    let scale = h.abs().max().max(l.abs().max()).max(1.0);
    let mut max_dev: f64 = 0.0;
    let mut eig_range = None;

    // Kernel of L: orthogonal complement of the span.
    let proj = DMatrix::identity(n, n) - &basis * basis.transpose();
    let leak_mat = proj.transpose() * h * &proj;
    let kernel_leak = leak_mat.abs().max() / scale;

    if r > 0 {
        let a = basis.transpose() * l * &basis;
        let b = basis.transpose() * h * &basis;
        if n <= 128 {
            let eig = nalgebra::SymmetricEigen::new((&a + a.transpose()) * 0.5);
            let mut inv_sqrt = DMatrix::zeros(r, r);
            for (i, &lam) in eig.eigenvalues.iter().enumerate() {
                let c = eig.eigenvectors.column(i);
                inv_sqrt += (c * c.transpose()) / lam.max(f64::MIN_POSITIVE).sqrt();
            }
            let g = &inv_sqrt * b * &inv_sqrt;
            let ge = nalgebra::SymmetricEigen::new((&g + g.transpose()) * 0.5);
            let lo = ge.eigenvalues.iter().fold(f64::INFINITY, |m, &v| m.min(v));
            let hi = ge.eigenvalues.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            eig_range = Some((lo, hi));
            max_dev = max_dev.max((lo - 1.0).abs()).max((hi - 1.0).abs());
        }
        let mut rg = rng(seed);
        for _ in 0..trials {
            let y = DVector::from_fn(r, |_, _| rg.gen_range(-1.0..1.0));
            let x = &basis * y;
            let xl = (x.transpose() * l * &x)[(0, 0)];
            let xh = (x.transpose() * h * &x)[(0, 0)];
            if xl > 0.0 {
                max_dev = max_dev.max((xh / xl - 1.0).abs());
            }
        }
    }
    let passed = max_dev <= epsilon && kernel_leak <= 1e-9;
    SpectralReport {
        max_deviation: max_dev,
        eig_range,
        kernel_leak,
        passed,
    }
}

/// Effective-resistance sampling with exact leverage scores: keep edge `e`
/// with probability `p_e = min(1, c·ε⁻²·log₂ n·w_e·R_e)` at weight `w_e/p_e`.
pub fn leverage_sample<R: Rng>(g: &WeightedGraph, epsilon: f64, c: f64, rng: &mut R) -> Result<WeightedGraph> {
    let n = g.n();
    let pinv = pseudoinverse_dense(&g.laplacian_dense(), DEFAULT_DENSE_LIMIT)?;
    let factor = c * (n as f64).log2() / (epsilon * epsilon);
    let mut kept = Vec::new();
    for &(e, w) in g.edges() {
        let (u, v) = (e.u(), e.v());
        let r = pinv[(u, u)] + pinv[(v, v)] - 2.0 * pinv[(u, v)];
        let p = (factor * w * r).min(1.0);
        if p > 0.0 && rng.gen_bool(p) {
            kept.push((e, w / p));
        }
    }
    WeightedGraph::new(n, kept)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{effective_resistance_exact, RegularizedLaplacian};

    fn graph(f: Family) -> DynamicGraph {
        build_graph(&f, &mut rng(0)).unwrap()
    }

    fn resistance(g: &DynamicGraph, u: usize, v: usize) -> f64 {
        let k = RegularizedLaplacian::new(g.to_weighted(), 0.0).unwrap();
        effective_resistance_exact(&k, u, v, 512).unwrap()
    }

    #[test]
    fn star_plus_edge() {
        let g = graph(Family::StarPlusEdge { n: 11 });
        assert_eq!(g.n(), 11);
        assert_eq!(g.edge_count(), 11);
        assert!((resistance(&g, 1, 2) - 2.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn thick_line_extra_edge() {
        let g = graph(Family::ThickLine { clusters: 8, cluster_size: 4, far: 4 });
        assert_eq!(g.n(), 32);
        assert_eq!(g.edge_count(), 7 * 16 + 1);
        let extra = resistance(&g, 0, 12);
        assert!(extra > 0.25, "{extra}");
        // Share of the flow energy carried by the extra edge: large for the
        // direct flow, small when the pivot sits at the far end of the line.
        let k = RegularizedLaplacian::new(g.to_weighted(), 0.0).unwrap();
        let pinv = pseudoinverse_dense(&k.dense(), 512).unwrap();
        let share = |x: usize, y: usize| {
            let phi: Vec<f64> = (0..32).map(|a| pinv[(a, x)] - pinv[(a, y)]).collect();
            let fe = phi[0] - phi[12];
            fe * fe / k.base().quadratic_form(&phi)
        };
        let near = share(0, 12);
        let far = share(31, 12).max(share(31, 0));
        assert!(near > 3.0 * far, "{near} vs {far}");
    }

    #[test]
    fn thick_star_shape() {
        let g = graph(Family::ThickStar { petals: 3, chain: 2, clique: 3 });
        assert_eq!(g.n(), 19);
        assert!(g.is_connected());
        // Each petal: 2 triangles, 3 center links, 9 between cliques.
        assert_eq!(g.edge_count(), 3 * (3 + 3 + 3 + 9) + 1);
    }

    #[test]
    fn other_families() {
        assert_eq!(graph(Family::Complete { n: 6 }).edge_count(), 15);
        assert_eq!(graph(Family::Path { n: 5 }).edge_count(), 4);
        let b = graph(Family::Barbell { n: 8 });
        assert_eq!(b.edge_count(), 6 + 6 + 1);
        assert!(b.is_connected());
        assert!(build_graph(&Family::ThickLine { clusters: 3, cluster_size: 2, far: 2 }, &mut rng(0)).is_err());
        assert!("nope".parse::<Family>().is_err());
        for name in FAMILY_NAMES {
            assert_eq!(name.parse::<Family>().unwrap().name(), name);
        }
    }

    #[test]
    fn decoy_stream_realises_graph() {
        let spec = GeneratorSpec::new(Family::Path { n: 3 }, 4).with_decoys(1);
        let (g, s) = generate(&spec).unwrap();
        assert_eq!(s.updates.len(), 4);
        let fin = s.final_graph().unwrap();
        assert_eq!(fin, g);
        assert_eq!(fin.edge_count(), 2);
    }

    #[test]
    fn generators_deterministic() {
        let spec = GeneratorSpec::new(Family::RandomGnp { n: 20, p: 0.3 }, 9).with_decoys(5);
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
    }

    #[test]
    fn churn_is_consistent() {
        let s = churn_stream(50, 2000, 40, &mut rng(3));
        assert_eq!(s.updates.len(), 2000);
        let g = s.final_graph().unwrap();
        assert!(g.edge_count() <= 41);
    }

    #[test]
    fn spectral_check_examples() {
        let g = graph(Family::RandomGnp { n: 12, p: 0.5 }).to_weighted();
        let l = g.laplacian_dense();
        let same = spectral_check(&l, &l, 0.01, 20, 1);
        assert!(same.passed);
        assert!(same.max_deviation < 1e-9);
        let scaled = g.scaled(1.4).laplacian_dense();
        assert!(spectral_check(&l, &scaled, 0.5, 20, 1).passed);
        assert!(!spectral_check(&l, &scaled, 0.3, 20, 1).passed);
        let empty = DMatrix::zeros(12, 12);
        assert!(!spectral_check(&l, &empty, 0.5, 20, 1).passed);
    }
}
