//! The polarization/energy-time hyperentangled source: ideal state, N-bin
//! energy-time model and its effective two-level reduction, the calcite
//! transfer operator, and noise channels.
//!
//! Factor order is fixed as `(pol_A, et_A, pol_B, et_B)`. Per party the basis
//! map is `|0⟩=|H,t⟩, |1⟩=|H,t+τ⟩, |2⟩=|V,t⟩, |3⟩=|V,t+τ⟩`, so the 16-dim
//! index is `4·a + b` with party index `a = 2·pol + et`.

use serde::{Deserialize, Serialize};

use crate::error::{check_range, Error, Result};
use crate::qcore::{max_entangled, ComplexMatrix, DensityMatrix, MatrixJson, Observable};
use crate::scalar::{cone, czero, Real};

pub const POL_A: usize = 0;
pub const ET_A: usize = 1;
pub const POL_B: usize = 2;
pub const ET_B: usize = 3;
pub const HYPER_FACTORS: [usize; 4] = [2, 2, 2, 2];
pub const BASIS_MAP: [&str; 4] = ["H,t", "H,t+tau", "V,t", "V,t+tau"];

/// Source timescales. Times in the units named by each field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceParams {
    pub t_p_ns: f64,
    pub t_c_ps: f64,
    pub delta_t_ps: f64,
    pub tau_ps: f64,
    pub n_bins: u64,
}

impl SourceParams {
    /// Derives `n_bins = round(t_p/δt)`.
    pub fn new(t_p_ns: f64, t_c_ps: f64, delta_t_ps: f64, tau_ps: f64) -> Result<Self> {
        let p = Self {
            t_p_ns,
            t_c_ps,
            delta_t_ps,
            tau_ps,
            n_bins: (t_p_ns * 1e3 / delta_t_ps).round().max(0.0) as u64,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let all_finite = [self.t_p_ns, self.t_c_ps, self.delta_t_ps, self.tau_ps]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0);
        if !all_finite {
            return Err(Error::InvalidInput(
                "source timescales must be finite and positive".into(),
            ));
        }
        if self.t_c_ps > self.delta_t_ps {
            return Err(Error::InvalidInput("need t_c <= delta_t".into()));
        }
        if self.delta_t_ps > self.t_p_ns * 1e3 / 10.0 {
            return Err(Error::InvalidInput("need delta_t <= t_p/10".into()));
        }
        if self.tau_ps <= self.t_c_ps {
            return Err(Error::InvalidInput("need tau > t_c".into()));
        }
        if self.n_bins < 2 {
            return Err(Error::InvalidInput("need at least two time bins".into()));
        }
        Ok(())
    }
}

impl Default for SourceParams {
    fn default() -> Self {
        Self::new(100.0, 1.0, 2.0, 2.0).expect("default source parameters are valid")
    }
}

/// A two-photon state over `(pol_A, et_A, pol_B, et_B)`.
#[derive(Clone, Debug, PartialEq)]
pub struct HyperState<T> {
    rho: DensityMatrix<T>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Werner,
    DephasePol,
    DephaseEt,
    Accidental,
}

impl<T: Real> HyperState<T> {
    pub fn from_density(rho: DensityMatrix<T>) -> Result<Self> {
        if rho.factors() != HYPER_FACTORS {
            return Err(Error::InvalidInput(format!(
                "hyperstate needs factors {HYPER_FACTORS:?}, got {:?}",
                rho.factors()
            )));
        }
        Ok(Self { rho })
    }

    /// `ρ_pol ⊗ ρ_et` with each input over `(A, B)`.
    pub fn from_product(pol: &DensityMatrix<T>, et: &DensityMatrix<T>) -> Result<Self> {
        if pol.factors() != [2, 2] || et.factors() != [2, 2] {
            return Err(Error::InvalidInput(
                "both subsystem states must have factors (2, 2)".into(),
            ));
        }
        // (pol_A, pol_B, et_A, et_B) -> (pol_A, et_A, pol_B, et_B)
        let rho = pol.tensor(et).permute_factors(&[0, 2, 1, 3])?;
        Ok(Self { rho })
    }

    pub fn rho(&self) -> &DensityMatrix<T> {
        &self.rho
    }

    pub fn into_density(self) -> DensityMatrix<T> {
        self.rho
    }

    /// Conjugate by the transfer unitary of each selected party.
    pub fn apply_transfer(&self, at_alice: bool, at_bob: bool) -> Result<Self> {
        let t = transfer_operator::<T>();
        let mut rho = self.rho.clone();
        if at_alice {
            rho = rho.conjugate_local(t.matrix(), &[POL_A, ET_A])?;
        }
        if at_bob {
            rho = rho.conjugate_local(t.matrix(), &[POL_B, ET_B])?;
        }
        Ok(Self { rho })
    }

    /// Trace out both energy-time factors.
    pub fn reduced_pol(&self) -> Result<DensityMatrix<T>> {
        self.rho.partial_trace(&[POL_A, POL_B])
    }

    /// Trace out both polarization factors.
    pub fn reduced_et(&self) -> Result<DensityMatrix<T>> {
        self.rho.partial_trace(&[ET_A, ET_B])
    }

    pub fn apply_noise(&self, kind: NoiseKind, strength: T) -> Result<Self> {
        check_range("strength", strength.as_f64(), 0.0, 1.0, "[0, 1]")?;
        let target = match kind {
            NoiseKind::Werner => DensityMatrix::maximally_mixed(HYPER_FACTORS.to_vec()),
            NoiseKind::DephasePol => self.rho.dephase_factors(&[POL_A, POL_B])?,
            NoiseKind::DephaseEt => self.rho.dephase_factors(&[ET_A, ET_B])?,
            NoiseKind::Accidental => {
                // Uncorrelated pairing of Alice's and Bob's marginal populations.
                let a = self.rho.partial_trace(&[POL_A, ET_A])?.dephase_factors(&[0, 1])?;
                let b = self.rho.partial_trace(&[POL_B, ET_B])?.dephase_factors(&[0, 1])?;
                a.tensor(&b)
            }
        };
        Ok(Self {
            rho: self.rho.mix(&target, strength)?,
        })
    }

    pub fn to_json(&self) -> HyperStateJson {
        HyperStateJson {
            factor_order: ["pol_A", "et_A", "pol_B", "et_B"].map(String::from).to_vec(),
            basis_map: BASIS_MAP.map(String::from).to_vec(),
            matrix: self.rho.to_json(),
        }
    }

    pub fn from_json(j: &HyperStateJson) -> Result<Self> {
        Self::from_density(DensityMatrix::from_json(&j.matrix)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperStateJson {
    pub factor_order: Vec<String>,
    pub basis_map: Vec<String>,
    pub matrix: MatrixJson,
}

/// `Φ⁺_pol ⊗ Φ⁺_et`, i.e. `Φ⁺_4` under the basis map.
pub fn ideal_hyper_state<T: Real>() -> HyperState<T> {
    let bell = max_entangled::<T>(2).expect("d = 2").density();
    HyperState::from_product(&bell, &bell).expect("2x2 factors")
}

/// `(1/√n) Σ_i |t_i t_i⟩` over `(n, n)` time bins.
pub fn nbins_energy_time<T: Real>(n: usize) -> Result<DensityMatrix<T>> {
    if n < 2 {
        return Err(Error::OutOfRange {
            name: "n",
            value: n as f64,
            range: "n >= 2",
        });
    }
    Ok(max_entangled::<T>(n)?.density())
}

/// Collapse an `(n, n)`-bin state onto the `{t, t+τ}` subspace by summing the
/// adjacent-bin blocks `⟨t_{i+a} t_{i+b}|ρ|t_{i+c} t_{i+d}⟩` over `i`, then
/// renormalizing. The open chain runs over `i = 0..n−2`; the populations
/// also receive the cyclic `i = n−1` term, which is where the NOT replacement
/// of the shift wraps the last bin. Every summand is a compression of ρ, so
/// the result stays positive.
pub fn effective_2dim<T: Real>(rho_et: &DensityMatrix<T>) -> Result<DensityMatrix<T>> {
    let f = rho_et.factors();
    if f.len() != 2 || f[0] != f[1] {
        return Err(Error::InvalidInput("expected an (n, n) bin state".into()));
    }
    let n = f[0];
    if n < 3 {
        return Err(Error::OutOfRange {
            name: "n",
            value: n as f64,
            range: "n >= 3",
        });
    }
    let idx = |i: usize, a: usize, b: usize| ((i + a) % n) * n + (i + b) % n;
    let mut m = ComplexMatrix::<T>::zeros(4);
    for r in 0..4 {
        let (a, b) = (r >> 1, r & 1);
        for c in 0..4 {
            let (ca, cb) = (c >> 1, c & 1);
            let mut s = czero();
            for i in 0..n - 1 {
                s += rho_et.get(idx(i, a, b), idx(i, ca, cb));
            }
            if r == c {
                s += rho_et.get(idx(n - 1, a, b), idx(n - 1, a, b));
            }
            m[(r, c)] = s;
        }
    }
    DensityMatrix::new_unchecked(m.hermitian_part(), vec![2, 2])?.normalized()
}

/// NOT on the `{t, t+τ}` pair.
pub fn tau_not<T: Real>() -> Observable<T> {
    let (o, l) = (czero(), cone());
    Observable::new(
        ComplexMatrix::from_rows(vec![vec![o, l], vec![l, o]]).expect("2x2"),
        "tau",
    )
    .expect("Pauli X is Hermitian")
}

/// `|H⟩⟨H| ⊗ τ̂ + |V⟩⟨V| ⊗ 1` on one party's `(pol, et)`.
pub fn transfer_operator<T: Real>() -> Observable<T> {
    let mut m = ComplexMatrix::zeros(4);
    m[(0, 1)] = cone();
    m[(1, 0)] = cone();
    m[(2, 2)] = cone();
    m[(3, 3)] = cone();
    Observable::new(m, "T").expect("permutation is Hermitian")
}
