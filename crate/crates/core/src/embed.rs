//! Effective-resistance embedding `M` of a coarse sparsifier `K̃` and the
//! sampling functional `p′_e` derived from it.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graph::pair_count;
use crate::linalg::{gram_sqrt, solve, RegularizedLaplacian, SolverConfig};
use crate::sampler::{sign_entry, SeededPrf};

/// `K̃⁺` held either as a dense matrix (`n` solves up front) or as the
/// system itself (one solve per product).
#[derive(Clone, Debug)]
pub enum KinvOperator {
    Dense { n: usize, data: Vec<f64> },
    Solver { k: RegularizedLaplacian, cfg: SolverConfig },
}

impl KinvOperator {
    pub fn new(k: &RegularizedLaplacian, cfg: &SolverConfig, precompute: bool) -> Result<Self> {
        if !precompute {
            return Ok(Self::Solver { k: k.clone(), cfg: *cfg });
        }
        let n = k.n();
        let mut data = vec![0.0; n * n];
        let mut rhs = vec![0.0; n];
        for u in 0..n {
            rhs[u] = 1.0;
            let col = solve(k, &rhs, cfg)?;
            rhs[u] = 0.0;
            data[u * n..(u + 1) * n].copy_from_slice(&col);
        }
        // Average with the transpose so later products are exactly symmetric.
        for u in 0..n {
            for v in (u + 1)..n {
                let m = 0.5 * (data[u * n + v] + data[v * n + u]);
                data[u * n + v] = m;
                data[v * n + u] = m;
            }
        }
        Ok(Self::Dense { n, data })
    }

    pub fn n(&self) -> usize {
        match self {
            Self::Dense { n, .. } => *n,
            Self::Solver { k, .. } => k.n(),
        }
    }

    /// `K̃⁺ x`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            Self::Dense { n, data } => {
                let mut out = vec![0.0; *n];
                for (u, &xu) in x.iter().enumerate() {
                    if xu != 0.0 {
                        for (o, &c) in out.iter_mut().zip(&data[u * n..(u + 1) * n]) {
                            *o += xu * c;
                        }
                    }
                }
                Ok(out)
            }
            Self::Solver { k, cfg } => solve(k, x, cfg),
        }
    }

    /// `K̃⁺ (χ_x − χ_v)`.
    pub fn potentials(&self, x: usize, v: usize) -> Result<Vec<f64>> {
        match self {
            Self::Dense { n, data } => Ok(data[x * n..(x + 1) * n]
                .iter()
                .zip(&data[v * n..(v + 1) * n])
                .map(|(a, b)| a - b)
                .collect()),
            Self::Solver { .. } => {
                let mut rhs = vec![0.0; self.n()];
                rhs[x] += 1.0;
                rhs[v] -= 1.0;
                self.apply(&rhs)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EmbedOptions {
    /// Include the `√γ·I` rows of `K̃` alongside its edge rows.
    pub include_regularization: bool,
}

/// The `q × n` matrix `M`, stored column by column (one `q`-vector per
/// vertex).
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingM {
    q: usize,
    n: usize,
    columns: Vec<f64>,
}

impl EmbeddingM {
    pub fn from_columns(q: usize, n: usize, columns: Vec<f64>) -> Result<Self> {
        if columns.len() != q * n {
            return Err(Error::InvalidArgument(format!(
                "expected {} entries for a {q}x{n} embedding, got {}",
                q * n,
                columns.len()
            )));
        }
        Ok(Self { q, n, columns })
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `M χ_u`.
    pub fn column(&self, u: usize) -> &[f64] {
        &self.columns[u * self.q..(u + 1) * self.q]
    }

    /// `‖M(χ_u − χ_v)‖₂²`.
    pub fn distance2(&self, u: usize, v: usize) -> f64 {
        if u == v {
            return 0.0;
        }
        self.column(u)
            .iter()
            .zip(self.column(v))
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }
}

pub fn embedded_distance2(m: &EmbeddingM, u: usize, v: usize) -> f64 {
    m.distance2(u, v)
}

/// `p′_e = (5/4)·c₂·‖Mb_e‖²·log₂ n / ε²`.
pub fn p_prime(distance2: f64, epsilon: f64, c2: f64, log2n: f64) -> f64 {
    1.25 * c2 * distance2 * log2n / (epsilon * epsilon)
}

/// JL embedding `M = (1/√q)·Q·A·K̃⁺` with `A = W̃^{1/2}B̃` (stacked over
/// `√γ·I` when regularisation rows are kept).
///
/// Row `i` of `M` is `K̃⁺ Aᵀ Q_i / √q`, so only the entries of `Q` at the
/// coordinates of `K̃`'s edges (and the `n` regularisation coordinates after
/// them) are ever generated.
pub fn build_embedding(
    k: &RegularizedLaplacian,
    kinv: &KinvOperator,
    q: usize,
    prf: &SeededPrf,
    opts: &EmbedOptions,
) -> Result<EmbeddingM> {
    if q == 0 {
        return Err(Error::InvalidArgument("embedding dimension must be positive".into()));
    }
    let n = k.n();
    let reg_offset = pair_count(n);
    let sqrt_gamma = k.gamma().sqrt();
    let with_reg = opts.include_regularization && k.gamma() > 0.0;
    let scale = 1.0 / (q as f64).sqrt();
    let edges: Vec<(usize, usize, u64, f64)> = k
        .edges()
        .iter()
        .map(|&(e, w)| (e.u(), e.v(), e.index(n), w.sqrt()))
        .collect();
    let mut columns = vec![0.0; q * n];
    let mut z = vec![0.0; n];
    for i in 0..q {
        z.iter_mut().for_each(|x| *x = 0.0);
        for &(u, v, idx, sw) in &edges {
            let c = sign_entry(prf, i as u64, idx) * sw;
            z[u] += c;
            z[v] -= c;
        }
        if with_reg {
            for (u, zu) in z.iter_mut().enumerate() {
                *zu += sign_entry(prf, i as u64, reg_offset + u as u64) * sqrt_gamma;
            }
        }
        if z.iter().all(|&x| x == 0.0) {
            continue;
        }
        let row = kinv.apply(&z)?;
        for (u, r) in row.into_iter().enumerate() {
            columns[u * q + i] = r * scale;
        }
    }
    EmbeddingM::from_columns(q, n, columns)
}

/// Exact embedding `M = (K̃⁺ P K̃⁺)^{1/2}` where `P` is the part of `K̃` being
/// embedded; then `‖M b_uv‖² = b_uvᵀ K̃⁺ P K̃⁺ b_uv` exactly.
pub fn build_exact_embedding(
    k: &RegularizedLaplacian,
    kinv: &KinvOperator,
    opts: &EmbedOptions,
    dense_limit: usize,
) -> Result<EmbeddingM> {
    let n = k.n();
    if n > dense_limit {
        return Err(Error::DenseLimit { n, limit: dense_limit });
    }
    let mut pinv = DMatrix::zeros(n, n);
    let mut rhs = vec![0.0; n];
    for u in 0..n {
        rhs[u] = 1.0;
        let col = kinv.apply(&rhs)?;
        rhs[u] = 0.0;
        for (v, c) in col.into_iter().enumerate() {
            pinv[(v, u)] = c;
        }
    }
    let mut part = k.base().laplacian_dense();
    if opts.include_regularization {
        for u in 0..n {
            part[(u, u)] += k.gamma();
        }
    }
    let gram = &pinv * part * &pinv;
    let root = gram_sqrt(&gram, dense_limit)?;
    let mut columns = vec![0.0; n * n];
    for u in 0..n {
        for i in 0..n {
            columns[u * n + i] = root[(i, u)];
        }
    }
    EmbeddingM::from_columns(n, n, columns)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::DynamicGraph;
    use crate::linalg::{effective_resistance_exact, pseudoinverse_dense};
    use crate::sampler::Purpose;

    const LIMIT: usize = 512;

    fn reg(edges: &[(usize, usize)], n: usize, gamma: f64) -> RegularizedLaplacian {
        let g = DynamicGraph::from_edges(n, edges.iter().copied()).unwrap();
        RegularizedLaplacian::new(g.to_weighted(), gamma).unwrap()
    }

    #[test]
    fn identity_without_regularization_rows_is_zero() {
        let k = RegularizedLaplacian::identity(4, 1.0).unwrap();
        let kinv = KinvOperator::new(&k, &SolverConfig::default(), true).unwrap();
        let opts = EmbedOptions {
            include_regularization: false,
        };
        let m = build_embedding(&k, &kinv, 16, &SeededPrf::new(1), &opts).unwrap();
        assert_eq!(m.distance2(0, 3), 0.0);
        // Two isolated vertices at γ = 1 have resistance 2 but embed at 0.
        let k2 = RegularizedLaplacian::identity(2, 1.0).unwrap();
        let r = effective_resistance_exact(&k2, 0, 1, LIMIT).unwrap();
        assert!((r - 2.0).abs() < 1e-12);
        let kinv2 = KinvOperator::new(&k2, &SolverConfig::default(), true).unwrap();
        let m2 = build_embedding(&k2, &kinv2, 16, &SeededPrf::new(1), &opts).unwrap();
        assert_eq!(m2.distance2(0, 1), 0.0);
    }

    #[test]
    fn distance_basics() {
        // Columns (1,0), (0,2), (3,3).
        let m = EmbeddingM::from_columns(2, 3, vec![1.0, 0.0, 0.0, 2.0, 3.0, 3.0]).unwrap();
        assert_eq!(m.distance2(1, 1), 0.0);
        assert_eq!(m.distance2(0, 1), 5.0);
        assert_eq!(m.distance2(1, 0), 5.0);
        assert_eq!(m.distance2(0, 2), 13.0);
        assert_eq!(embedded_distance2(&m, 1, 2), 10.0);
    }

    #[test]
    fn p_prime_formula() {
        assert!((p_prime(0.01, 0.2, 1.0, 4.0) - 1.25).abs() < 1e-12);
        assert_eq!(p_prime(0.0, 0.2, 1.0, 4.0), 0.0);
        assert!((p_prime(0.02, 0.2, 1.0, 4.0) - 2.5).abs() < 1e-12);
    }

    #[test]
    fn split_identity() {
        // ‖W^{1/2}BK⁺b‖² + γ‖K⁺b‖² = R^K_uv.
        let k = reg(&[(0, 1), (1, 2), (2, 3), (0, 2), (4, 5)], 6, 0.3);
        let pinv = pseudoinverse_dense(&k.dense(), LIMIT).unwrap();
        for u in 0..6 {
            for v in (u + 1)..6 {
                let mut b = nalgebra::DVector::zeros(6);
                b[u] = 1.0;
                b[v] = -1.0;
                let phi = &pinv * &b;
                let edge_part = k.base().quadratic_form(phi.as_slice());
                let total = edge_part + k.gamma() * phi.norm_squared();
                let r = effective_resistance_exact(&k, u, v, LIMIT).unwrap();
                assert!((total - r).abs() < 1e-8, "{u} {v}: {total} vs {r}");
            }
        }
    }

    #[test]
    fn exact_embedding_matches_resistance() {
        let k = reg(&[(0, 1), (1, 2), (2, 3), (3, 0), (1, 4)], 5, 0.5);
        let kinv = KinvOperator::new(&k, &SolverConfig::default(), true).unwrap();
        let opts = EmbedOptions {
            include_regularization: true,
        };
        let m = build_exact_embedding(&k, &kinv, &opts, LIMIT).unwrap();
        for u in 0..5 {
            for v in 0..5 {
                let r = effective_resistance_exact(&k, u, v, LIMIT).unwrap();
                assert!((m.distance2(u, v) - r).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn jl_single_edge_concentrates() {
        // Single unit edge plus γ = 1, q = 400: the distance lands in
        // [4/5·R, 6/5·R] for at least 99 of 100 seeds.
        let k = reg(&[(0, 1)], 2, 1.0);
        let r = effective_resistance_exact(&k, 0, 1, LIMIT).unwrap();
        let kinv = KinvOperator::new(&k, &SolverConfig::default(), true).unwrap();
        let opts = EmbedOptions {
            include_regularization: true,
        };
        let mut good = 0;
        for seed in 0..100 {
            let prf = SeededPrf::new(seed).derive(Purpose::JlSign, &[0]);
            let m = build_embedding(&k, &kinv, 400, &prf, &opts).unwrap();
            let d = m.distance2(0, 1);
            good += (d >= 0.8 * r && d <= 1.2 * r) as usize;
        }
        assert!(good >= 99, "{good}/100");
    }

    #[test]
    fn solver_and_dense_operators_agree() {
        let k = reg(&[(0, 1), (1, 2), (2, 0), (2, 3)], 4, 0.25);
        let cfg = SolverConfig::default();
        let dense = KinvOperator::new(&k, &cfg, true).unwrap();
        let lazy = KinvOperator::new(&k, &cfg, false).unwrap();
        let a = dense.potentials(0, 3).unwrap();
        let b = lazy.potentials(0, 3).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-8);
        }
    }
}
