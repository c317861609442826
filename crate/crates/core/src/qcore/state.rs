use num_complex::Complex;
use serde::{Deserialize, Serialize};

use super::matrix::{hermitian_eigs, ComplexMatrix};
use crate::error::{Error, Result};
use crate::scalar::{cone, cplx, creal, czero, Real, C};

/// Tolerances for the state invariants, widened to the precision of `T`.
pub fn hermitian_tol<T: Real>() -> T {
    T::lit(1e-10).max(T::epsilon() * T::lit(256.0))
}

pub fn trace_tol<T: Real>() -> T {
    T::lit(1e-9).max(T::epsilon() * T::lit(256.0))
}

pub fn psd_tol<T: Real>() -> T {
    T::lit(1e-9).max(T::epsilon() * T::lit(256.0))
}

fn norm_tol<T: Real>() -> T {
    T::lit(1e-12).max(T::epsilon() * T::lit(64.0))
}

fn check_factors(dim: usize, factors: &[usize]) -> Result<()> {
    let prod: usize = factors.iter().product();
    if factors.is_empty() || factors.contains(&0) || prod != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: prod,
        });
    }
    Ok(())
}

fn digits(mut index: usize, factors: &[usize], out: &mut [usize]) {
    for k in (0..factors.len()).rev() {
        out[k] = index % factors[k];
        index /= factors[k];
    }
}

fn compose(digits: &[usize], factors: &[usize]) -> usize {
    digits.iter().zip(factors).fold(0, |acc, (&d, &f)| acc * f + d)
}

/// Lift `op`, acting on the listed factors (in that order), to the full space.
pub fn embed_operator<T: Real>(op: &ComplexMatrix<T>, factors: &[usize], on: &[usize]) -> Result<ComplexMatrix<T>> {
    for &k in on {
        if k >= factors.len() {
            return Err(Error::InvalidFactor {
                index: k,
                count: factors.len(),
            });
        }
    }
    let sub: Vec<usize> = on.iter().map(|&k| factors[k]).collect();
    let sub_dim: usize = sub.iter().product();
    if op.dim() != sub_dim {
        return Err(Error::DimensionMismatch {
            expected: sub_dim,
            found: op.dim(),
        });
    }
    let n: usize = factors.iter().product();
    let rest: Vec<usize> = (0..factors.len()).filter(|k| !on.contains(k)).collect();
    let (mut di, mut dj) = (vec![0; factors.len()], vec![0; factors.len()]);
    let (mut si, mut sj) = (vec![0; on.len()], vec![0; on.len()]);
    let mut out = ComplexMatrix::zeros(n);
    for i in 0..n {
        digits(i, factors, &mut di);
        for j in 0..n {
            digits(j, factors, &mut dj);
            if rest.iter().any(|&k| di[k] != dj[k]) {
                continue;
            }
            for (s, &k) in on.iter().enumerate() {
                si[s] = di[k];
                sj[s] = dj[k];
            }
            out[(i, j)] = op[(compose(&si, &sub), compose(&sj, &sub))];
        }
    }
    Ok(out)
}

/// Complex Hermitian, PSD, unit-trace matrix over a product of factors.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix<T> {
    matrix: ComplexMatrix<T>,
    factors: Vec<usize>,
    labels: Option<Vec<Vec<String>>>,
}

impl<T: Real> DensityMatrix<T> {
    /// Validates all three invariants.
    pub fn new(matrix: ComplexMatrix<T>, factors: Vec<usize>) -> Result<Self> {
        let rho = Self::new_unchecked(matrix, factors)?;
        rho.validate()?;
        Ok(rho)
    }

    /// Only checks the factor structure. Used for intermediate operators
    /// whose positivity is known by construction.
    pub fn new_unchecked(matrix: ComplexMatrix<T>, factors: Vec<usize>) -> Result<Self> {
        check_factors(matrix.dim(), &factors)?;
        Ok(Self {
            matrix,
            factors,
            labels: None,
        })
    }

    pub fn maximally_mixed(factors: Vec<usize>) -> Self {
        let n: usize = factors.iter().product();
        let m = ComplexMatrix::identity(n).scale(T::one() / T::from_count(n));
        Self {
            matrix: m,
            factors,
            labels: None,
        }
    }

    pub fn with_labels(mut self, labels: Vec<Vec<String>>) -> Result<Self> {
        if labels.len() != self.factors.len() || labels.iter().zip(&self.factors).any(|(l, &f)| l.len() != f) {
            return Err(Error::InvalidInput(
                "one basis label per level of every factor expected".into(),
            ));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let dev = self.matrix.hermiticity_error();
        if dev > hermitian_tol() {
            return Err(Error::NotHermitian {
                deviation: dev.as_f64(),
            });
        }
        let tr = self.matrix.trace().re;
        if (tr - T::one()).abs() > trace_tol() {
            return Err(Error::NotNormalized { trace: tr.as_f64() });
        }
        let min = self.min_eigenvalue()?;
        if min < -psd_tol::<T>() {
            return Err(Error::NotPsd {
                min_eigenvalue: min.as_f64(),
            });
        }
        Ok(())
    }

    pub fn matrix(&self) -> &ComplexMatrix<T> {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix<T> {
        self.matrix
    }

    pub fn factors(&self) -> &[usize] {
        &self.factors
    }

    pub fn labels(&self) -> Option<&[Vec<String>]> {
        self.labels.as_deref()
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn get(&self, i: usize, j: usize) -> C<T> {
        self.matrix[(i, j)]
    }

    pub fn eigenvalues(&self) -> Result<Vec<T>> {
        Ok(hermitian_eigs(&self.matrix)?.values)
    }

    pub fn min_eigenvalue(&self) -> Result<T> {
        Ok(self.eigenvalues()?.last().copied().unwrap_or_else(T::zero))
    }

    pub fn purity(&self) -> T {
        self.matrix.trace_product(&self.matrix).re
    }

    pub fn tensor(&self, other: &Self) -> Self {
        let mut factors = self.factors.clone();
        factors.extend_from_slice(&other.factors);
        let labels = match (&self.labels, &other.labels) {
            (Some(a), Some(b)) => Some(a.iter().chain(b).cloned().collect()),
            _ => None,
        };
        Self {
            matrix: self.matrix.kron(&other.matrix),
            factors,
            labels,
        }
    }

    /// Reduced state on the `keep` factors; they stay in their original order.
    pub fn partial_trace(&self, keep: &[usize]) -> Result<Self> {
        let nf = self.factors.len();
        if keep.is_empty() {
            return Err(Error::InvalidInput(
                "partial trace must keep at least one factor".into(),
            ));
        }
        for &k in keep {
            if k >= nf {
                return Err(Error::InvalidFactor { index: k, count: nf });
            }
        }
        let mut kept: Vec<usize> = keep.to_vec();
        kept.sort_unstable();
        kept.dedup();
        let traced: Vec<usize> = (0..nf).filter(|k| !kept.contains(k)).collect();
        let kept_dims: Vec<usize> = kept.iter().map(|&k| self.factors[k]).collect();
        let out_dim: usize = kept_dims.iter().product();

        let n = self.dim();
        let (mut di, mut dj) = (vec![0; nf], vec![0; nf]);
        let mut ki = vec![0; kept.len()];
        let mut kj = vec![0; kept.len()];
        let mut out = ComplexMatrix::zeros(out_dim);
        for i in 0..n {
            digits(i, &self.factors, &mut di);
            for j in 0..n {
                digits(j, &self.factors, &mut dj);
                if traced.iter().any(|&k| di[k] != dj[k]) {
                    continue;
                }
                for (s, &k) in kept.iter().enumerate() {
                    ki[s] = di[k];
                    kj[s] = dj[k];
                }
                out[(compose(&ki, &kept_dims), compose(&kj, &kept_dims))] += self.matrix[(i, j)];
            }
        }
        Ok(Self {
            matrix: out,
            factors: kept_dims,
            labels: self
                .labels
                .as_ref()
                .map(|l| kept.iter().map(|&k| l[k].clone()).collect()),
        })
    }

    /// Reorder factors: new factor `k` is old factor `order[k]`.
    pub fn permute_factors(&self, order: &[usize]) -> Result<Self> {
        let nf = self.factors.len();
        let mut seen = vec![false; nf];
        if order.len() != nf {
            return Err(Error::DimensionMismatch {
                expected: nf,
                found: order.len(),
            });
        }
        for &k in order {
            if k >= nf || seen[k] {
                return Err(Error::InvalidFactor { index: k, count: nf });
            }
            seen[k] = true;
        }
        let new_factors: Vec<usize> = order.iter().map(|&k| self.factors[k]).collect();
        let n = self.dim();
        let mut map = vec![0; n];
        let mut d = vec![0; nf];
        let mut nd = vec![0; nf];
        for (i, slot) in map.iter_mut().enumerate() {
            digits(i, &self.factors, &mut d);
            for (s, &k) in order.iter().enumerate() {
                nd[s] = d[k];
            }
            *slot = compose(&nd, &new_factors);
        }
        let mut out = ComplexMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out[(map[i], map[j])] = self.matrix[(i, j)];
            }
        }
        Ok(Self {
            matrix: out,
            factors: new_factors,
            labels: self
                .labels
                .as_ref()
                .map(|l| order.iter().map(|&k| l[k].clone()).collect()),
        })
    }

    /// `U ρ U†` with `u` acting on the listed factors.
    pub fn conjugate_local(&self, u: &ComplexMatrix<T>, on: &[usize]) -> Result<Self> {
        let full = embed_operator(u, &self.factors, on)?;
        Ok(self.conjugate(&full))
    }

    /// `U ρ U†` for a full-space `u`; callers guarantee unitarity.
    pub fn conjugate(&self, u: &ComplexMatrix<T>) -> Self {
        let m = u.matmul(&self.matrix).matmul(&u.adjoint()).hermitian_part();
        Self {
            matrix: m,
            factors: self.factors.clone(),
            labels: self.labels.clone(),
        }
    }

    /// Convex combination `(1−s)·self + s·other`.
    pub fn mix(&self, other: &Self, s: T) -> Result<Self> {
        if self.factors != other.factors {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(Self {
            matrix: self.matrix.scale(T::one() - s).add(&other.matrix.scale(s)),
            factors: self.factors.clone(),
            labels: self.labels.clone(),
        })
    }

    /// Zero every entry whose row and column differ on any of the listed factors.
    pub fn dephase_factors(&self, on: &[usize]) -> Result<Self> {
        let nf = self.factors.len();
        for &k in on {
            if k >= nf {
                return Err(Error::InvalidFactor { index: k, count: nf });
            }
        }
        let n = self.dim();
        let (mut di, mut dj) = (vec![0; nf], vec![0; nf]);
        let mut m = self.matrix.clone();
        for i in 0..n {
            digits(i, &self.factors, &mut di);
            for j in 0..n {
                digits(j, &self.factors, &mut dj);
                if on.iter().any(|&k| di[k] != dj[k]) {
                    m[(i, j)] = czero();
                }
            }
        }
        Ok(Self {
            matrix: m,
            factors: self.factors.clone(),
            labels: self.labels.clone(),
        })
    }

    /// Re-normalize to unit trace after an element-wise construction.
    pub fn normalized(mut self) -> Result<Self> {
        let tr = self.matrix.trace().re;
        if tr <= T::zero() {
            return Err(Error::Degenerate(
                "cannot normalize a matrix with non-positive trace".into(),
            ));
        }
        self.matrix = self.matrix.scale(T::one() / tr);
        Ok(self)
    }

    pub fn to_json(&self) -> MatrixJson {
        MatrixJson::from_complex(&self.matrix, &self.factors)
    }

    pub fn from_json(j: &MatrixJson) -> Result<Self> {
        let m = j.to_complex()?;
        Self::new(m, j.factors.clone())
    }

    pub fn cast<U: Real>(&self) -> DensityMatrix<U> {
        DensityMatrix {
            matrix: self.matrix.cast(),
            factors: self.factors.clone(),
            labels: self.labels.clone(),
        }
    }
}

/// `⟨ψ|ρ|ψ⟩`.
pub fn fidelity_pure<T: Real>(rho: &DensityMatrix<T>, psi: &PureState<T>) -> Result<T> {
    if rho.dim() != psi.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho.dim(),
            found: psi.dim(),
        });
    }
    let rv = rho.matrix.apply(&psi.amplitudes);
    let f = psi
        .amplitudes
        .iter()
        .zip(&rv)
        .fold(czero::<T>(), |acc, (a, b)| acc + a.conj() * b);
    debug_assert!(f.im.abs() <= hermitian_tol::<T>() * T::lit(10.0));
    Ok(f.re.max(T::zero()).min(T::one()))
}

/// `Re Tr(ρ O)`.
pub fn expectation<T: Real>(rho: &DensityMatrix<T>, obs: &Observable<T>) -> Result<T> {
    if rho.dim() != obs.matrix.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho.dim(),
            found: obs.matrix.dim(),
        });
    }
    let v = rho.matrix.trace_product(&obs.matrix);
    debug_assert!(v.im.abs() <= hermitian_tol::<T>() * T::lit(10.0) * T::from_count(rho.dim()));
    Ok(v.re)
}

/// Normalized state vector over a product of factors.
#[derive(Clone, Debug, PartialEq)]
pub struct PureState<T> {
    amplitudes: Vec<C<T>>,
    factors: Vec<usize>,
}

impl<T: Real> PureState<T> {
    pub fn new(amplitudes: Vec<C<T>>, factors: Vec<usize>) -> Result<Self> {
        check_factors(amplitudes.len(), &factors)?;
        let n2: T = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if (n2 - T::one()).abs() > norm_tol() {
            return Err(Error::NotNormalized { trace: n2.as_f64() });
        }
        Ok(Self { amplitudes, factors })
    }

    pub fn normalized(amplitudes: Vec<C<T>>, factors: Vec<usize>) -> Result<Self> {
        check_factors(amplitudes.len(), &factors)?;
        let n = amplitudes.iter().map(|a| a.norm_sqr()).sum::<T>().sqrt();
        if n <= T::min_positive_value() {
            return Err(Error::Degenerate("zero vector".into()));
        }
        Ok(Self {
            amplitudes: amplitudes.into_iter().map(|a| a / n).collect(),
            factors,
        })
    }

    /// Computational basis vector `|index⟩`.
    pub fn basis(factors: Vec<usize>, index: usize) -> Result<Self> {
        let n: usize = factors.iter().product();
        if index >= n {
            return Err(Error::OutOfRange {
                name: "index",
                value: index as f64,
                range: "[0, dim)",
            });
        }
        let mut amp = vec![czero(); n];
        amp[index] = cone();
        Self::new(amp, factors)
    }

    pub fn amplitudes(&self) -> &[C<T>] {
        &self.amplitudes
    }

    pub fn factors(&self) -> &[usize] {
        &self.factors
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn tensor(&self, other: &Self) -> Self {
        let mut amplitudes = Vec::with_capacity(self.dim() * other.dim());
        for &a in &self.amplitudes {
            for &b in &other.amplitudes {
                amplitudes.push(a * b);
            }
        }
        let mut factors = self.factors.clone();
        factors.extend_from_slice(&other.factors);
        Self { amplitudes, factors }
    }

    pub fn density(&self) -> DensityMatrix<T> {
        DensityMatrix {
            matrix: ComplexMatrix::outer(&self.amplitudes, &self.amplitudes),
            factors: self.factors.clone(),
            labels: None,
        }
    }

    pub fn inner(&self, other: &Self) -> C<T> {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .fold(czero(), |acc, (a, b)| acc + a.conj() * b)
    }

    /// Merge factors into two parties: the first `split` factors form A.
    pub fn bipartition(&self, split: usize) -> Result<Self> {
        if split == 0 || split >= self.factors.len() {
            return Err(Error::InvalidInput(format!(
                "split {split} does not leave two non-empty parties of {} factors",
                self.factors.len()
            )));
        }
        let da: usize = self.factors[..split].iter().product();
        let db: usize = self.factors[split..].iter().product();
        Ok(Self {
            amplitudes: self.amplitudes.clone(),
            factors: vec![da, db],
        })
    }

    pub fn cast<U: Real>(&self) -> PureState<U> {
        PureState {
            amplitudes: self
                .amplitudes
                .iter()
                .map(|z| Complex::new(U::lit(z.re.as_f64()), U::lit(z.im.as_f64())))
                .collect(),
            factors: self.factors.clone(),
        }
    }
}

/// `(1/√d) Σ_i |ii⟩` with factors `(d, d)`.
pub fn max_entangled<T: Real>(d: usize) -> Result<PureState<T>> {
    if d == 0 {
        return Err(Error::OutOfRange {
            name: "d",
            value: 0.0,
            range: "d >= 1",
        });
    }
    let a = creal(T::one() / T::from_count(d).sqrt());
    let mut amp = vec![czero(); d * d];
    for i in 0..d {
        amp[i * d + i] = a;
    }
    Ok(PureState {
        amplitudes: amp,
        factors: vec![d, d],
    })
}

/// `√(2(1 − Tr ρ_A²))` for a state with exactly two factors.
pub fn concurrence_pure<T: Real>(psi: &PureState<T>) -> Result<T> {
    if psi.factors.len() != 2 {
        return Err(Error::InvalidInput(format!(
            "concurrence needs a bipartite state, got {} factors",
            psi.factors.len()
        )));
    }
    let (da, db) = (psi.factors[0], psi.factors[1]);
    // ρ_A = M M† with M the da×db amplitude matrix.
    let m = &psi.amplitudes;
    let mut purity = T::zero();
    for i in 0..da {
        for k in 0..da {
            let mut s = czero::<T>();
            for j in 0..db {
                s += m[i * db + j] * m[k * db + j].conj();
            }
            purity += s.norm_sqr();
        }
    }
    Ok((T::two() * (T::one() - purity)).max(T::zero()).sqrt())
}

/// Hermitian operator with a display label.
#[derive(Clone, Debug, PartialEq)]
pub struct Observable<T> {
    matrix: ComplexMatrix<T>,
    label: String,
}

impl<T: Real> Observable<T> {
    pub fn new(matrix: ComplexMatrix<T>, label: impl Into<String>) -> Result<Self> {
        let dev = matrix.hermiticity_error();
        if dev > hermitian_tol() {
            return Err(Error::NotHermitian {
                deviation: dev.as_f64(),
            });
        }
        Ok(Self {
            matrix,
            label: label.into(),
        })
    }

    pub fn matrix(&self) -> &ComplexMatrix<T> {
        &self.matrix
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn identity(d: usize) -> Self {
        Self {
            matrix: ComplexMatrix::identity(d),
            label: "I".into(),
        }
    }

    pub fn pauli_x() -> Self {
        let (o, l) = (czero(), cone());
        Self {
            matrix: ComplexMatrix::from_rows(vec![vec![o, l], vec![l, o]]).expect("2x2"),
            label: "X".into(),
        }
    }

    pub fn pauli_y() -> Self {
        let o = czero();
        let i = cplx(T::zero(), T::one());
        Self {
            matrix: ComplexMatrix::from_rows(vec![vec![o, -i], vec![i, o]]).expect("2x2"),
            label: "Y".into(),
        }
    }

    pub fn pauli_z() -> Self {
        Self {
            matrix: ComplexMatrix::diag(&[T::one(), -T::one()]),
            label: "Z".into(),
        }
    }

    /// `cos φ σ^x + sin φ σ^y`.
    pub fn sigma_phi(phi: T) -> Self {
        let o = czero();
        let e = cplx(phi.cos(), phi.sin());
        Self {
            matrix: ComplexMatrix::from_rows(vec![vec![o, e.conj()], vec![e, o]]).expect("2x2"),
            label: format!("S(phi={})", phi),
        }
    }

    pub fn tensor(&self, other: &Self) -> Self {
        Self {
            matrix: self.matrix.kron(&other.matrix),
            label: format!("{}⊗{}", self.label, other.label),
        }
    }

    pub fn is_unitary(&self, tol: T) -> bool {
        let p = self.matrix.matmul(&self.matrix.adjoint());
        p.max_abs_diff(&ComplexMatrix::identity(self.matrix.dim())) <= tol
    }
}

/// JSON form of a matrix: `{dim, factors, re, im}` with nested row arrays.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixJson {
    pub dim: usize,
    pub factors: Vec<usize>,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl MatrixJson {
    pub fn from_complex<T: Real>(m: &ComplexMatrix<T>, factors: &[usize]) -> Self {
        let n = m.dim();
        Self {
            dim: n,
            factors: factors.to_vec(),
            re: (0..n)
                .map(|i| (0..n).map(|j| m[(i, j)].re.as_f64()).collect())
                .collect(),
            im: (0..n)
                .map(|i| (0..n).map(|j| m[(i, j)].im.as_f64()).collect())
                .collect(),
        }
    }

    pub fn to_complex<T: Real>(&self) -> Result<ComplexMatrix<T>> {
        let n = self.dim;
        let rows_ok = |rows: &Vec<Vec<f64>>| rows.len() == n && rows.iter().all(|r| r.len() == n);
        if !rows_ok(&self.re) || !rows_ok(&self.im) {
            return Err(Error::Format(format!("matrix JSON rows do not form a {n}x{n} array")));
        }
        check_factors(n, &self.factors)?;
        Ok(ComplexMatrix::from_fn(n, |i, j| {
            cplx(T::lit(self.re[i][j]), T::lit(self.im[i][j]))
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::random::{random_density, random_pure};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    type Dm = DensityMatrix<f64>;

    fn phi2() -> PureState<f64> {
        max_entangled(2).unwrap()
    }

    /// Brute-force partial trace written independently of the digit helpers.
    fn naive_trace_second(rho: &Dm, da: usize, db: usize) -> ComplexMatrix<f64> {
        ComplexMatrix::from_fn(da, |i, k| {
            (0..db).fold(czero(), |acc, j| acc + rho.get(i * db + j, k * db + j))
        })
    }

    #[test]
    fn tensor_of_bell_pairs_reorders_to_four_dim_bell() {
        let pp = phi2().tensor(&phi2()).density();
        // (pol_A, pol_B, et_A, et_B) -> (pol_A, et_A, pol_B, et_B)
        let r = pp.permute_factors(&[0, 2, 1, 3]).unwrap();
        let phi4 = max_entangled::<f64>(4).unwrap();
        assert!((fidelity_pure(&r, &phi4).unwrap() - 1.0).abs() < 1e-12);
        for i in 0..4 {
            assert!((r.get(i * 5, i * 5).re - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn tensor_with_trivial_factor() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rho = random_density::<f64, _>(&mut rng, &[2, 2], 4);
        let one = Dm::new(ComplexMatrix::identity(1), vec![1]).unwrap();
        let t = rho.tensor(&one);
        assert!(t.matrix().max_abs_diff(rho.matrix()) == 0.0);
        assert_eq!(t.factors(), &[2, 2, 1]);
    }

    #[test]
    fn partial_trace_round_trip_and_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_density::<f64, _>(&mut rng, &[2], 2);
        let b = random_density::<f64, _>(&mut rng, &[2], 2);
        let ab = a.tensor(&b);
        let back = ab.partial_trace(&[0]).unwrap();
        assert!(back.matrix().max_abs_diff(a.matrix()) < 1e-12);
        let back_b = ab.partial_trace(&[1]).unwrap();
        assert!(back_b.matrix().max_abs_diff(b.matrix()) < 1e-12);

        let big = random_density::<f64, _>(&mut rng, &[4, 4], 16);
        let pt = big.partial_trace(&[0]).unwrap();
        assert!(pt.matrix().max_abs_diff(&naive_trace_second(&big, 4, 4)) < 1e-15);
    }

    #[test]
    fn partial_trace_of_bell_is_mixed() {
        let r = phi2().density().partial_trace(&[0]).unwrap();
        assert!(r.matrix().max_abs_diff(&ComplexMatrix::identity(2).scale(0.5)) < 1e-15);
        assert!(matches!(
            phi2().density().partial_trace(&[2]),
            Err(Error::InvalidFactor { .. })
        ));
        assert!(phi2().density().partial_trace(&[]).is_err());
    }

    #[test]
    fn partial_trace_keeps_original_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rho = random_density::<f64, _>(&mut rng, &[2, 3, 2], 12);
        let a = rho.partial_trace(&[2, 0]).unwrap();
        assert_eq!(a.factors(), &[2, 2]);
        let b = rho.permute_factors(&[0, 2, 1]).unwrap().partial_trace(&[0, 1]).unwrap();
        assert!(a.matrix().max_abs_diff(b.matrix()) < 1e-15);
    }

    #[test]
    fn partial_trace_preserves_trace_and_positivity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let shapes: [&[usize]; 3] = [&[2, 2], &[2, 2, 2], &[2, 2, 2, 2]];
        for k in 0..1000 {
            let f = shapes[k % 3];
            let n: usize = f.iter().product();
            let rank = 1 + k % n;
            let rho = random_density::<f64, _>(&mut rng, f, rank);
            let keep: Vec<usize> = (0..f.len()).filter(|i| (k >> i) & 1 == 1).collect();
            let keep = if keep.is_empty() { vec![0] } else { keep };
            let r = rho.partial_trace(&keep).unwrap();
            assert!((r.matrix().trace().re - 1.0).abs() < 1e-12);
            assert!(r.min_eigenvalue().unwrap() >= -1e-9);
        }
    }

    #[test]
    fn fidelity_cases() {
        let phi4 = max_entangled::<f64>(4).unwrap();
        assert!((fidelity_pure(&phi4.density(), &phi4).unwrap() - 1.0).abs() < 1e-15);
        let mixed = Dm::maximally_mixed(vec![4, 4]);
        assert!((fidelity_pure(&mixed, &phi4).unwrap() - 1.0 / 16.0).abs() < 1e-15);
        assert!(fidelity_pure(&mixed, &phi2()).is_err());
    }

    #[test]
    fn max_entangled_reduced_purity() {
        for d in 2..=6 {
            let psi = max_entangled::<f64>(d).unwrap();
            let r = psi.density().partial_trace(&[0]).unwrap();
            assert!((r.purity() - 1.0 / d as f64).abs() < 1e-14);
        }
        let p = max_entangled::<f64>(4).unwrap();
        assert!(p.amplitudes().iter().enumerate().all(|(i, a)| {
            let want = if i % 5 == 0 { 0.5 } else { 0.0 };
            (a.re - want).abs() < 1e-15 && a.im == 0.0
        }));
    }

    #[test]
    fn concurrence_values() {
        assert!((concurrence_pure(&phi2()).unwrap() - 1.0).abs() < 1e-12);
        let prod = PureState::<f64>::basis(vec![2, 2], 0).unwrap();
        assert!(concurrence_pure(&prod).unwrap().abs() < 1e-12);
        for d in 2..=5 {
            let c = concurrence_pure(&max_entangled::<f64>(d).unwrap()).unwrap();
            assert!((c - (2.0 * (1.0 - 1.0 / d as f64)).sqrt()).abs() < 1e-12);
        }
        let three = PureState::<f64>::basis(vec![2, 2, 2], 0).unwrap();
        assert!(concurrence_pure(&three).is_err());
        assert!(concurrence_pure(&three.bipartition(1).unwrap()).unwrap() < 1e-12);
    }

    #[test]
    fn pauli_expectations_on_bell() {
        let rho = phi2().density();
        let zz = Observable::pauli_z().tensor(&Observable::pauli_z());
        let xx = Observable::pauli_x().tensor(&Observable::pauli_x());
        let yy = Observable::<f64>::pauli_y().tensor(&Observable::pauli_y());
        assert!((expectation(&rho, &zz).unwrap() - 1.0).abs() < 1e-15);
        assert!((expectation(&rho, &xx).unwrap() - 1.0).abs() < 1e-15);
        assert!((expectation(&rho, &yy).unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn expectation_is_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let obs = Observable::sigma_phi(0.7).tensor(&Observable::pauli_x());
        for _ in 0..100 {
            let r1 = random_density::<f64, _>(&mut rng, &[2, 2], 4);
            let r2 = random_density::<f64, _>(&mut rng, &[2, 2], 2);
            let a = 0.3;
            let lhs = expectation(&r1.mix(&r2, 1.0 - a).unwrap(), &obs).unwrap();
            let rhs = a * expectation(&r1, &obs).unwrap() + (1.0 - a) * expectation(&r2, &obs).unwrap();
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn validation_rejects_bad_matrices() {
        let m = ComplexMatrix::<f64>::diag(&[0.6, 0.6]);
        assert!(matches!(Dm::new(m, vec![2]), Err(Error::NotNormalized { .. })));
        let m = ComplexMatrix::<f64>::diag(&[1.5, -0.5]);
        assert!(matches!(Dm::new(m, vec![2]), Err(Error::NotPsd { .. })));
        let mut m = ComplexMatrix::<f64>::diag(&[0.5, 0.5]);
        m[(0, 1)] = cplx(0.1, 0.0);
        assert!(matches!(Dm::new(m, vec![2]), Err(Error::NotHermitian { .. })));
        let m = ComplexMatrix::<f64>::diag(&[0.5, 0.5]);
        assert!(Dm::new(m, vec![3]).is_err());
        assert!(PureState::<f64>::new(vec![cone(), cone()], vec![2]).is_err());
    }

    #[test]
    fn json_round_trip_is_bit_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let rho = random_density::<f64, _>(&mut rng, &[2, 2, 2, 2], 16);
        let s = serde_json::to_string(&rho.to_json()).unwrap();
        let back = Dm::from_json(&serde_json::from_str(&s).unwrap()).unwrap();
        assert_eq!(back.matrix().entries(), rho.matrix().entries());
        assert_eq!(back.factors(), rho.factors());
    }

    #[test]
    fn random_pure_is_normalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let psi = random_pure::<f64, _>(&mut rng, &[3, 3]);
        let n: f64 = psi.amplitudes().iter().map(|a| a.norm_sqr()).sum();
        assert!((n - 1.0).abs() < 1e-14);
    }

    #[test]
    fn embed_operator_matches_kron() {
        let x = Observable::<f64>::pauli_x().matrix().clone();
        let z = Observable::<f64>::pauli_z().matrix().clone();
        let full = embed_operator(&x, &[2, 2, 2], &[1]).unwrap();
        let want = ComplexMatrix::identity(2).kron(&x).kron(&ComplexMatrix::identity(2));
        assert_eq!(full, want);
        let xz = x.kron(&z);
        let swapped = embed_operator(&xz, &[2, 2], &[1, 0]).unwrap();
        assert_eq!(swapped, z.kron(&x));
    }
}
