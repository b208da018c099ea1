//! Regularised Laplacian systems and the dense spectral oracles used to
//! verify them.

mod dense;
mod solver;

pub use dense::{
    effective_resistance_exact, eigen_bounds, gram_sqrt, psd_le_on_span, psd_order_check,
    pseudoinverse_dense, span_basis, DEFAULT_DENSE_LIMIT,
};
pub use solver::{solve, Preconditioner, RegularizedLaplacian, SolverConfig};
