//! Dense eigendecomposition oracles. Only for small instances: they are
//! `O(n³)` and exist to check the iterative machinery, not to run it.

use nalgebra::{DMatrix, SymmetricEigen};

use super::solver::RegularizedLaplacian;
use crate::error::{Error, Result};

pub const DEFAULT_DENSE_LIMIT: usize = 512;

fn check_limit(n: usize, limit: usize) -> Result<()> {
    if n > limit {
        Err(Error::DenseLimit { n, limit })
    } else {
        Ok(())
    }
}

fn zero_threshold(eig: &[f64]) -> f64 {
    let scale = eig.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    1e-10 * scale.max(f64::MIN_POSITIVE)
}

fn symmetric_eigen(a: &DMatrix<f64>) -> SymmetricEigen<f64, nalgebra::Dyn> {
    // Symmetrise first so round-off asymmetry cannot leak into the spectrum.
    let sym = (a + a.transpose()) * 0.5;
    SymmetricEigen::new(sym)
}

/// Moore-Penrose pseudoinverse of a symmetric matrix.
pub fn pseudoinverse_dense(k: &DMatrix<f64>, limit: usize) -> Result<DMatrix<f64>> {
    check_limit(k.nrows(), limit)?;
    let eig = symmetric_eigen(k);
    let vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let tol = zero_threshold(&vals);
    let n = k.nrows();
    let mut out = DMatrix::zeros(n, n);
    for (i, &lam) in vals.iter().enumerate() {
        if lam.abs() > tol {
            let col = eig.eigenvectors.column(i);
            out += (col * col.transpose()) / lam;
        }
    }
    Ok(out)
}

/// Symmetric square root of a PSD matrix; negative round-off eigenvalues are
/// clipped to zero.
pub fn gram_sqrt(g: &DMatrix<f64>, limit: usize) -> Result<DMatrix<f64>> {
    check_limit(g.nrows(), limit)?;
    let eig = symmetric_eigen(g);
    let n = g.nrows();
    let mut out = DMatrix::zeros(n, n);
    for (i, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam > 0.0 {
            let col = eig.eigenvectors.column(i);
            out += (col * col.transpose()) * lam.sqrt();
        }
    }
    Ok(out)
}

/// `R^K_uv = b_uvᵀ K⁺ b_uv`, with `R_uu = 0`.
pub fn effective_resistance_exact(
    k: &RegularizedLaplacian,
    u: usize,
    v: usize,
    limit: usize,
) -> Result<f64> {
    let n = k.n();
    if u >= n || v >= n {
        return Err(Error::InvalidArgument(format!("vertex out of range for {n} vertices")));
    }
    if u == v {
        return Ok(0.0);
    }
    let pinv = pseudoinverse_dense(&k.dense(), limit)?;
    Ok(pinv[(u, u)] + pinv[(v, v)] - 2.0 * pinv[(u, v)])
}

/// Orthonormal basis (as columns) of the row span of a symmetric matrix.
pub fn span_basis(b: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = symmetric_eigen(b);
    let vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let tol = zero_threshold(&vals);
    let keep: Vec<usize> = (0..vals.len()).filter(|&i| vals[i].abs() > tol).collect();
    let mut out = DMatrix::zeros(b.nrows(), keep.len());
    for (j, &i) in keep.iter().enumerate() {
        out.set_column(j, &eig.eigenvectors.column(i));
    }
    out
}

/// `xᵀ A x ≤ (1 + slack)·xᵀ B x` for every `x` in the row span of `span`.
pub fn psd_le_on_span(a: &DMatrix<f64>, b: &DMatrix<f64>, slack: f64, span: &DMatrix<f64>) -> bool {
    let basis = span_basis(span);
    if basis.ncols() == 0 {
        return true;
    }
    let diff = b * (1.0 + slack) - a;
    let restricted = basis.transpose() * diff * &basis;
    let eig = symmetric_eigen(&restricted);
    let min = eig.eigenvalues.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    let scale = a.abs().max().max(b.abs().max()).max(1.0);
    min >= -1e-9 * scale
}

/// `A ⪯ (1 + slack)·B` on the row span of `B`.
pub fn psd_order_check(a: &DMatrix<f64>, b: &DMatrix<f64>, slack: f64) -> bool {
    psd_le_on_span(a, b, slack, b)
}

/// Smallest nonzero and largest eigenvalue. The minimum is `None` when the
/// matrix is zero.
pub fn eigen_bounds(l: &DMatrix<f64>, limit: usize) -> Result<(Option<f64>, f64)> {
    check_limit(l.nrows(), limit)?;
    let eig = symmetric_eigen(l);
    let vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let tol = zero_threshold(&vals);
    let max = vals.iter().fold(0.0f64, |m, &v| m.max(v));
    let min_nonzero = vals
        .iter()
        .filter(|v| v.abs() > tol)
        .fold(None, |m: Option<f64>, &v| Some(m.map_or(v, |m| m.min(v))));
    Ok((min_nonzero, max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{DynamicGraph, WeightedGraph};

    fn close(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> bool {
        (a - b).abs().max() <= tol
    }

    #[test]
    fn pseudoinverse_examples() {
        let two_i = DMatrix::<f64>::identity(3, 3) * 2.0;
        let p = pseudoinverse_dense(&two_i, 512).unwrap();
        assert!(close(&p, &(DMatrix::identity(3, 3) * 0.5), 1e-12));

        // L of a single edge has eigenvalues {0, 2} with L = 2·vvᵀ, so L⁺ = L/4.
        let l = DynamicGraph::from_edges(2, [(0, 1)]).unwrap().to_weighted().laplacian_dense();
        let p = pseudoinverse_dense(&l, 512).unwrap();
        assert!(close(&p, &(&l / 4.0), 1e-12));

        let empty = WeightedGraph::empty(2).laplacian_dense();
        let p = pseudoinverse_dense(&empty, 512).unwrap();
        assert!(p.iter().all(|&x| x == 0.0));

        assert!(matches!(
            pseudoinverse_dense(&DMatrix::identity(4, 4), 3),
            Err(Error::DenseLimit { n: 4, limit: 3 })
        ));
    }

    #[test]
    fn pseudoinverse_is_generalized_inverse() {
        let g = DynamicGraph::from_edges(6, [(0, 1), (1, 2), (2, 0), (3, 4)]).unwrap();
        let l = g.to_weighted().laplacian_dense();
        let p = pseudoinverse_dense(&l, 512).unwrap();
        assert!(close(&(&l * &p * &l), &l, 1e-8));
    }

    #[test]
    fn resistance_examples() {
        let path = RegularizedLaplacian::new(
            DynamicGraph::from_edges(3, [(0, 1), (1, 2)]).unwrap().to_weighted(),
            0.0,
        )
        .unwrap();
        assert!((effective_resistance_exact(&path, 0, 2, 512).unwrap() - 2.0).abs() < 1e-9);
        assert_eq!(effective_resistance_exact(&path, 1, 1, 512).unwrap(), 0.0);

        let k4 = DynamicGraph::from_edges(4, (0..4).flat_map(|u| ((u + 1)..4).map(move |v| (u, v))))
            .unwrap()
            .to_weighted();
        let k4 = RegularizedLaplacian::new(k4, 0.0).unwrap();
        for u in 0..4 {
            for v in (u + 1)..4 {
                assert!((effective_resistance_exact(&k4, u, v, 512).unwrap() - 0.5).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn psd_order_examples() {
        let b = DMatrix::from_row_slice(3, 3, &[2.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 2.0]);
        assert!(psd_order_check(&b, &b, 0.0));
        let a = &b * 2.0;
        assert!(!psd_order_check(&a, &b, 0.5));
        assert!(psd_order_check(&a, &b, 1.0));
    }

    #[test]
    fn order_is_restricted_to_span() {
        // A has mass on the all-ones direction, which is outside span(L).
        let l = DynamicGraph::from_edges(3, [(0, 1), (1, 2)]).unwrap().to_weighted().laplacian_dense();
        let a = &l + DMatrix::from_element(3, 3, 1.0);
        assert!(psd_order_check(&a, &l, 0.0));
        assert!(!psd_le_on_span(&a, &l, 0.0, &DMatrix::identity(3, 3)));
    }

    #[test]
    fn eigen_bound_examples() {
        let l = DynamicGraph::from_edges(2, [(0, 1)]).unwrap().to_weighted().laplacian_dense();
        let (min, max) = eigen_bounds(&l, 512).unwrap();
        assert!((min.unwrap() - 2.0).abs() < 1e-12 && (max - 2.0).abs() < 1e-12);
        let (min, max) = eigen_bounds(&WeightedGraph::empty(3).laplacian_dense(), 512).unwrap();
        assert_eq!((min, max), (None, 0.0));
    }

    #[test]
    fn gram_sqrt_squares_back() {
        let l = DynamicGraph::from_edges(4, [(0, 1), (1, 2), (2, 3), (0, 3)])
            .unwrap()
            .to_weighted()
            .laplacian_dense();
        let s = gram_sqrt(&l, 512).unwrap();
        assert!(close(&(&s * &s), &l, 1e-10));
    }
}
