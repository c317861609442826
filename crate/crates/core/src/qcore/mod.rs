//! Complex matrices and quantum-state primitives.

mod matrix;
pub mod random;
mod state;

pub use matrix::{hermitian_eigs, ComplexMatrix, HermitianEig, HERMITIAN_TOL};
pub use state::{
    concurrence_pure, embed_operator, expectation, fidelity_pure, hermitian_tol, max_entangled, psd_tol, trace_tol,
    DensityMatrix, MatrixJson, Observable, PureState,
};

/// Tensor product for states and operators.
pub trait Tensor {
    fn tensor(&self, other: &Self) -> Self;
}

impl<T: crate::scalar::Real> Tensor for DensityMatrix<T> {
    fn tensor(&self, other: &Self) -> Self {
        DensityMatrix::tensor(self, other)
    }
}

impl<T: crate::scalar::Real> Tensor for PureState<T> {
    fn tensor(&self, other: &Self) -> Self {
        PureState::tensor(self, other)
    }
}

/// `a ⊗ b`.
pub fn tensor<S: Tensor>(a: &S, b: &S) -> S {
    a.tensor(b)
}
