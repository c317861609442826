//! Random test states. Full rank comes from the Ginibre construction
//! `G G† / Tr(G G†)`; lower ranks use a `dim × rank` Ginibre block.

use rand::Rng;
use rand_distr::StandardNormal;

use super::matrix::ComplexMatrix;
use super::state::{DensityMatrix, PureState};
use crate::scalar::{cplx, Real, C};

fn gaussian<T: Real, R: Rng + ?Sized>(rng: &mut R) -> C<T> {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    cplx(T::lit(re), T::lit(im))
}

/// Haar-random pure state over the given factors.
pub fn random_pure<T: Real, R: Rng + ?Sized>(rng: &mut R, factors: &[usize]) -> PureState<T> {
    let n: usize = factors.iter().product();
    let amp = (0..n).map(|_| gaussian(rng)).collect();
    PureState::normalized(amp, factors.to_vec()).expect("gaussian vector is non-zero")
}

/// Random mixed state of the given rank (clamped to `1..=dim`).
pub fn random_density<T: Real, R: Rng + ?Sized>(rng: &mut R, factors: &[usize], rank: usize) -> DensityMatrix<T> {
    let n: usize = factors.iter().product();
    let rank = rank.clamp(1, n);
    let g: Vec<C<T>> = (0..n * rank).map(|_| gaussian(rng)).collect();
    let m = ComplexMatrix::from_fn(n, |i, j| {
        (0..rank).fold(C::new(T::zero(), T::zero()), |acc, k| {
            acc + g[i * rank + k] * g[j * rank + k].conj()
        })
    });
    DensityMatrix::new_unchecked(m.hermitian_part(), factors.to_vec())
        .and_then(DensityMatrix::normalized)
        .expect("factor product matches dimension")
}
