use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EdgeKey, WeightedGraph};

/// `K = L + γI` for a weighted graph `L`.
///
/// Equivalently the Laplacian of the graph whose incidence matrix is the
/// edge incidence of `L` with the rows of `√γ·I` appended.
#[derive(Clone, Debug, PartialEq)]
pub struct RegularizedLaplacian {
    base: WeightedGraph,
    gamma: f64,
}

impl RegularizedLaplacian {
    pub fn new(base: WeightedGraph, gamma: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma >= 0.0) {
            return Err(Error::InvalidArgument(format!("regularization {gamma} must be >= 0")));
        }
        Ok(Self { base, gamma })
    }

    /// `γ·I` on `n` vertices, no edges.
    pub fn identity(n: usize, gamma: f64) -> Result<Self> {
        Self::new(WeightedGraph::empty(n), gamma)
    }

    pub fn n(&self) -> usize {
        self.base.n()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn base(&self) -> &WeightedGraph {
        &self.base
    }

    pub fn edges(&self) -> &[(EdgeKey, f64)] {
        self.base.edges()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            base: self.base.scaled(factor),
            gamma: self.gamma * factor,
        }
    }

    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.base.laplacian_apply(x, y);
        if self.gamma > 0.0 {
            for (yi, xi) in y.iter_mut().zip(x) {
                *yi += self.gamma * xi;
            }
        }
    }

    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        self.base.quadratic_form(x) + self.gamma * x.iter().map(|v| v * v).sum::<f64>()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = self.base.degrees();
        d.iter_mut().for_each(|v| *v += self.gamma);
        d
    }

    pub fn dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = self.base.laplacian_dense();
        for i in 0..self.n() {
            m[(i, i)] += self.gamma;
        }
        m
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preconditioner {
    None,
    Diagonal,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub rel_tolerance: f64,
    pub max_iterations: usize,
    pub preconditioner: Preconditioner,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rel_tolerance: 1e-10,
            max_iterations: 10_000,
            preconditioner: Preconditioner::Diagonal,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Removes the per-component mean, projecting onto the row space of `L`.
fn project_mean_zero(x: &mut [f64], comp: &[usize]) {
    let ncomp = comp.iter().max().map_or(0, |m| m + 1);
    let mut sum = vec![0.0; ncomp];
    let mut count = vec![0usize; ncomp];
    for (v, &c) in comp.iter().enumerate() {
        sum[c] += x[v];
        count[c] += 1;
    }
    for (v, &c) in comp.iter().enumerate() {
        x[v] -= sum[c] / count[c] as f64;
    }
}

/// Solves `K x = rhs` by preconditioned conjugate gradients.
///
/// With `γ = 0` the right-hand side is first projected onto the row space of
/// `L` and the returned solution is the minimum-norm one, i.e. `K⁺·rhs`.
pub fn solve(k: &RegularizedLaplacian, rhs: &[f64], cfg: &SolverConfig) -> Result<Vec<f64>> {
    let n = k.n();
    if rhs.len() != n {
        return Err(Error::InvalidArgument(format!(
            "right-hand side has length {} for {} vertices",
            rhs.len(),
            n
        )));
    }
    if !(cfg.rel_tolerance > 0.0) {
        return Err(Error::InvalidArgument("solver tolerance must be positive".into()));
    }
    let singular = k.gamma() == 0.0;
    let comp = if singular { Some(k.base().components()) } else { None };

    let mut b = rhs.to_vec();
    if let Some(comp) = &comp {
        project_mean_zero(&mut b, comp);
    }
    let bnorm = norm(&b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(x);
    }

    let inv_diag: Vec<f64> = match cfg.preconditioner {
        Preconditioner::Diagonal => k
            .diagonal()
            .into_iter()
            .map(|d| if d > 0.0 { 1.0 / d } else { 1.0 })
            .collect(),
        Preconditioner::None => vec![1.0; n],
    };

    let mut r = b.clone();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, d)| a * d).collect();
    let mut p = z.clone();
    let mut kp = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let target = cfg.rel_tolerance * bnorm;

    for iter in 0..cfg.max_iterations {
        k.apply(&p, &mut kp);
        let pkp = dot(&p, &kp);
        if pkp <= 0.0 {
            // p in the kernel: the residual can no longer be reduced.
            return Err(Error::SolverFailure {
                iterations: iter,
                residual: norm(&r) / bnorm,
            });
        }
        let alpha = rz / pkp;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * kp[i];
        }
        if norm(&r) <= target {
            // Recompute the true residual to guard against drift.
            let mut kx = vec![0.0; n];
            k.apply(&x, &mut kx);
            let true_res = kx.iter().zip(&b).map(|(a, c)| (a - c) * (a - c)).sum::<f64>().sqrt();
            if true_res <= target {
                if let Some(comp) = &comp {
                    project_mean_zero(&mut x, comp);
                }
                return Ok(x);
            }
            r = b.iter().zip(&kx).map(|(c, a)| c - a).collect();
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::SolverFailure {
        iterations: cfg.max_iterations,
        residual: norm(&r) / bnorm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::DynamicGraph;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn residual(k: &RegularizedLaplacian, x: &[f64], rhs: &[f64]) -> f64 {
        let mut y = vec![0.0; x.len()];
        k.apply(x, &mut y);
        y.iter().zip(rhs).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
    }

    #[test]
    fn identity_system() {
        let k = RegularizedLaplacian::identity(4, 1.0).unwrap();
        let b = [1.0, -2.0, 3.5, 0.25];
        let x = solve(&k, &b, &SolverConfig::default()).unwrap();
        for (xi, bi) in x.iter().zip(&b) {
            assert!((xi - bi).abs() < 1e-12);
        }
    }

    #[test]
    fn single_resistor_and_series() {
        let cfg = SolverConfig::default();
        let one = RegularizedLaplacian::new(
            DynamicGraph::from_edges(2, [(0, 1)]).unwrap().to_weighted(),
            0.0,
        )
        .unwrap();
        let x = solve(&one, &[1.0, -1.0], &cfg).unwrap();
        assert!((x[0] - x[1] - 1.0).abs() < 1e-9);

        let path = RegularizedLaplacian::new(
            DynamicGraph::from_edges(3, [(0, 1), (1, 2)]).unwrap().to_weighted(),
            0.0,
        )
        .unwrap();
        let x = solve(&path, &[1.0, 0.0, -1.0], &cfg).unwrap();
        assert!((x[0] - x[2] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn singular_rhs_is_projected_per_component() {
        let g = DynamicGraph::from_edges(4, [(0, 1), (2, 3)]).unwrap().to_weighted();
        let k = RegularizedLaplacian::new(g, 0.0).unwrap();
        // Not mean-zero on either component.
        let x = solve(&k, &[1.0, 0.0, 0.0, 0.0], &SolverConfig::default()).unwrap();
        assert!((x[0] - x[1] - 0.5).abs() < 1e-9);
        assert!(x[2].abs() < 1e-12 && x[3].abs() < 1e-12);
        assert!((x[0] + x[1]).abs() < 1e-12);
    }

    #[test]
    fn reports_non_convergence() {
        let g = DynamicGraph::from_edges(6, (0..5).map(|i| (i, i + 1))).unwrap().to_weighted();
        let k = RegularizedLaplacian::new(g, 1e-3).unwrap();
        let cfg = SolverConfig {
            max_iterations: 1,
            ..SolverConfig::default()
        };
        let err = solve(&k, &[1.0, 0.0, 0.0, 0.0, 0.0, -1.0], &cfg).unwrap_err();
        assert!(matches!(err, Error::SolverFailure { iterations: 1, .. }));
    }

    #[test]
    fn random_rhs_reproduced_within_tolerance() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cfg = SolverConfig::default();
        for trial in 0..100 {
            let n = rng.gen_range(2..=256usize);
            let p = rng.gen_range(0.02..0.3);
            let mut edges = Vec::new();
            for u in 0..n {
                for v in (u + 1)..n {
                    if rng.gen_bool(p) {
                        edges.push((u, v));
                    }
                }
            }
            let g = DynamicGraph::from_edges(n, edges).unwrap().to_weighted();
            let lambda_u = 2.0 * n as f64;
            let gamma = if trial % 2 == 0 { 0.0 } else { lambda_u / 2f64.powi(rng.gen_range(0..20)) };
            let k = RegularizedLaplacian::new(g, gamma).unwrap();
            let mut rhs: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            if gamma == 0.0 {
                project_mean_zero(&mut rhs, &k.base().components());
            }
            let x = solve(&k, &rhs, &cfg).unwrap();
            let rn = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(residual(&k, &x, &rhs) <= 1e-10 * rn * 1.0001, "trial {trial}");
        }
    }
}
