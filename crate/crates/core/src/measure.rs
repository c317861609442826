//! Correlations, visibilities, phase scans, sinusoid fits and count sampling.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{check_range, Error, Result};
use crate::hyperstate::HyperState;
use crate::linalg::solve_dense;
use crate::qcore::{expectation, ComplexMatrix, DensityMatrix, Observable};
use crate::scalar::{creal, Real};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "basis", content = "phi")]
pub enum AliceBasis {
    Z,
    /// `cos φ σ^x + sin φ σ^y`
    Phi(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BobBasis {
    Z,
    X,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementSetting {
    pub alice: AliceBasis,
    pub bob: BobBasis,
    pub transfer_alice: bool,
    pub transfer_bob: bool,
}

impl MeasurementSetting {
    /// Computational basis on both sides.
    pub fn hv() -> Self {
        Self {
            alice: AliceBasis::Z,
            bob: BobBasis::Z,
            transfer_alice: false,
            transfer_bob: false,
        }
    }

    /// Polarization superposition basis at phase `phi`.
    pub fn pol(phi: f64) -> Self {
        Self {
            alice: AliceBasis::Phi(phi),
            bob: BobBasis::X,
            transfer_alice: false,
            transfer_bob: false,
        }
    }

    /// Franson-type scan: both transfer setups inserted.
    pub fn et(phi: f64) -> Self {
        Self {
            transfer_alice: true,
            transfer_bob: true,
            ..Self::pol(phi)
        }
    }

    pub fn alice_only(phi: f64) -> Self {
        Self {
            transfer_alice: true,
            ..Self::pol(phi)
        }
    }

    /// Same setting at a different Alice phase; `Z` stays `Z`.
    pub fn with_phi(self, phi: f64) -> Self {
        match self.alice {
            AliceBasis::Z => self,
            AliceBasis::Phi(_) => Self {
                alice: AliceBasis::Phi(phi),
                ..self
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let AliceBasis::Phi(p) = self.alice {
            if !p.is_finite() {
                return Err(Error::InvalidInput("measurement phase must be finite".into()));
            }
        }
        Ok(())
    }

    pub fn observable<T: Real>(&self) -> Observable<T> {
        let (a, b) = self.local_observables();
        a.tensor(&b)
    }

    fn local_observables<T: Real>(&self) -> (Observable<T>, Observable<T>) {
        let a = match self.alice {
            AliceBasis::Z => Observable::pauli_z(),
            AliceBasis::Phi(p) => Observable::sigma_phi(T::lit(p)),
        };
        let b = match self.bob {
            BobBasis::Z => Observable::pauli_z(),
            BobBasis::X => Observable::pauli_x(),
        };
        (a, b)
    }
}

/// Coincidence counts for one setting. Outcome `0` is the `+1` eigenvalue.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountRecord {
    pub n11: u64,
    pub n00: u64,
    pub n10: u64,
    pub n01: u64,
    pub duration: f64,
    pub setting: MeasurementSetting,
}

impl CountRecord {
    pub fn total(&self) -> u64 {
        self.n11 + self.n00 + self.n10 + self.n01
    }
}

/// `E = (N11 + N00 − N10 − N01) / ΣN`.
pub fn correlation_from_counts(c: &CountRecord) -> Result<f64> {
    let total = c.total();
    if total == 0 {
        return Err(Error::InvalidInput("correlation of an empty count record".into()));
    }
    let same = (c.n11 + c.n00) as f64;
    let diff = (c.n10 + c.n01) as f64;
    Ok((same - diff) / total as f64)
}

/// Binomial standard error of [`correlation_from_counts`].
pub fn correlation_sigma(c: &CountRecord) -> Result<f64> {
    let e = correlation_from_counts(c)?;
    Ok(((1.0 - e * e).max(0.0) / c.total() as f64).sqrt())
}

fn pol_state_for<T: Real>(state: &HyperState<T>, setting: &MeasurementSetting) -> Result<DensityMatrix<T>> {
    setting.validate()?;
    state
        .apply_transfer(setting.transfer_alice, setting.transfer_bob)?
        .reduced_pol()
}

/// `⟨O_A ⊗ O_B⟩` on the transferred, polarization-reduced state.
pub fn expected_correlation<T: Real>(state: &HyperState<T>, setting: &MeasurementSetting) -> Result<T> {
    let rho = pol_state_for(state, setting)?;
    expectation(&rho, &setting.observable())
}

/// Born-rule probabilities `[p00, p01, p10, p11]` for the setting.
pub fn outcome_probabilities<T: Real>(state: &HyperState<T>, setting: &MeasurementSetting) -> Result<[T; 4]> {
    let rho = pol_state_for(state, setting)?;
    let (a, b) = setting.local_observables::<T>();
    let proj = |o: &Observable<T>, sign: T| ComplexMatrix::identity(2).add(&o.matrix().scale(sign)).scale(T::half());
    let mut p = [T::zero(); 4];
    for (ia, sa) in [T::one(), -T::one()].into_iter().enumerate() {
        for (ib, sb) in [T::one(), -T::one()].into_iter().enumerate() {
            let pr = proj(&a, sa).kron(&proj(&b, sb));
            p[2 * ia + ib] = rho.matrix().trace_product(&pr).re.max(T::zero());
        }
    }
    Ok(p)
}

fn require_two_qubits<T: Real>(rho: &DensityMatrix<T>) -> Result<()> {
    if rho.factors() != [2, 2] {
        return Err(Error::InvalidInput(format!(
            "expected a two-qubit state, got factors {:?}",
            rho.factors()
        )));
    }
    Ok(())
}

/// `ρ_{00,00} − ρ_{01,01} − ρ_{10,10} + ρ_{11,11}`.
pub fn visibility_hv<T: Real>(rho_pol: &DensityMatrix<T>) -> Result<T> {
    require_two_qubits(rho_pol)?;
    let d = |i| rho_pol.get(i, i).re;
    Ok(d(0) - d(1) - d(2) + d(3))
}

/// Closed-form maximum over φ of `⟨σ^φ ⊗ σ^x⟩`: returns `(2|ρ03 + ρ12|, φ*)`
/// where `φ* = −arg(ρ03 + ρ12)` is the maximizing phase.
pub fn visibility_phi<T: Real>(rho_pol: &DensityMatrix<T>) -> Result<(T, T)> {
    require_two_qubits(rho_pol)?;
    let s = rho_pol.get(0, 3) + rho_pol.get(1, 2);
    let phi = if s.norm() > T::zero() { -s.arg() } else { T::zero() };
    Ok((T::two() * s.norm(), phi))
}

/// Energy-time visibility read through the double transfer. With
/// `assume_no_accidental_coherence` the `(t, t+τ) ↔ (t+τ, t)` coherence of the
/// energy-time factors is removed first.
pub fn visibility_et<T: Real>(state: &HyperState<T>, assume_no_accidental_coherence: bool) -> Result<T> {
    use crate::hyperstate::{ET_A, ET_B};
    let base = if assume_no_accidental_coherence {
        // Zero entries where the et pair goes |0 1⟩ ↔ |1 0⟩ (and back).
        let rho = state.rho();
        let f = rho.factors().to_vec();
        let m = ComplexMatrix::from_fn(rho.dim(), |i, j| {
            let et = |k: usize| {
                let ea = (k / (f[2] * f[3])) % f[1];
                let eb = k % f[3];
                (ea, eb)
            };
            let (ri, ci) = (et(i), et(j));
            let flip = ri.0 != ci.0 && ri.1 != ci.1 && ri.0 != ri.1;
            if flip {
                creal(T::zero())
            } else {
                rho.get(i, j)
            }
        });
        debug_assert_eq!((ET_A, ET_B), (1, 3));
        HyperState::from_density(DensityMatrix::new_unchecked(m, f)?)?
    } else {
        state.clone()
    };
    let rho = base.apply_transfer(true, true)?.reduced_pol()?;
    Ok(visibility_phi(&rho)?.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanPoint {
    pub phi: f64,
    pub e: f64,
    pub sigma: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanCurve {
    pub points: Vec<ScanPoint>,
}

#[derive(Serialize, Deserialize)]
struct ScanRow {
    phi_rad: f64,
    #[serde(rename = "E")]
    e: f64,
    sigma: f64,
}

impl ScanCurve {
    pub fn validate(&self) -> Result<()> {
        for p in &self.points {
            if !(p.phi.is_finite() && p.e.is_finite() && p.sigma.is_finite()) {
                return Err(Error::InvalidInput("non-finite scan point".into()));
            }
            if p.e.abs() > 1.0 + 1e-9 || p.sigma < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "scan point out of range: E = {}, sigma = {}",
                    p.e, p.sigma
                )));
            }
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for p in &self.points {
            out.serialize(ScanRow {
                phi_rad: p.phi,
                e: p.e,
                sigma: p.sigma,
            })?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let mut points = Vec::new();
        for row in rd.deserialize::<ScanRow>() {
            let row = row?;
            points.push(ScanPoint {
                phi: row.phi_rad,
                e: row.e,
                sigma: row.sigma,
            });
        }
        let c = Self { points };
        c.validate()?;
        Ok(c)
    }
}

#[derive(Serialize, Deserialize)]
struct CountRow {
    n11: u64,
    n00: u64,
    n10: u64,
    n01: u64,
    duration: f64,
}

/// CSV with columns `n11,n00,n10,n01,duration`. Settings travel in JSON only.
pub fn write_counts_csv<W: Write>(records: &[CountRecord], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for c in records {
        out.serialize(CountRow {
            n11: c.n11,
            n00: c.n00,
            n10: c.n10,
            n01: c.n01,
            duration: c.duration,
        })?;
    }
    out.flush()?;
    Ok(())
}

/// Counterpart of [`write_counts_csv`]; every row gets `setting`.
pub fn read_counts_csv<R: Read>(r: R, setting: MeasurementSetting) -> Result<Vec<CountRecord>> {
    let mut rd = csv::Reader::from_reader(r);
    rd.deserialize::<CountRow>()
        .map(|row| {
            let row = row?;
            Ok(CountRecord {
                n11: row.n11,
                n00: row.n00,
                n10: row.n10,
                n01: row.n01,
                duration: row.duration,
                setting,
            })
        })
        .collect()
}

/// `E(φ)` of the setting template over the grid, with zero sigma.
pub fn phase_scan<T: Real>(state: &HyperState<T>, template: &MeasurementSetting, phis: &[f64]) -> Result<ScanCurve> {
    if phis.len() < 2 {
        return Err(Error::InvalidInput(
            "a phase scan needs at least two grid points".into(),
        ));
    }
    let points = phis
        .iter()
        .map(|&phi| {
            let e = expected_correlation(state, &template.with_phi(phi))?;
            Ok(ScanPoint {
                phi,
                e: e.as_f64(),
                sigma: 0.0,
            })
        })
        .collect::<Result<_>>()?;
    Ok(ScanCurve { points })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Adds a constant term to the model.
    pub with_offset: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VisibilityFit {
    pub v_fit: f64,
    pub phi0: f64,
    pub stderr: f64,
    pub offset: f64,
    pub rms_residual: f64,
}

impl VisibilityFit {
    pub fn model(&self, phi: f64) -> f64 {
        self.offset + self.v_fit * (phi - self.phi0).cos()
    }
}

/// Least-squares `a·cos(φ − φ0)` (plus an optional offset), solved linearly
/// as `α cos φ + β sin φ`.
pub fn fit_visibility(curve: &ScanCurve, opts: FitOptions) -> Result<VisibilityFit> {
    curve.validate()?;
    let pts = &curve.points;
    if pts.len() < 4 {
        return Err(Error::InvalidInput("fit needs at least four points".into()));
    }
    let (lo, hi) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), p| {
        (l.min(p.phi), h.max(p.phi))
    });
    if hi - lo < std::f64::consts::PI - 1e-12 {
        return Err(Error::Degenerate(format!(
            "scan spans {:.3} rad, less than half a period",
            hi - lo
        )));
    }
    let k = if opts.with_offset { 3 } else { 2 };
    let row = |phi: f64| {
        let mut r = vec![phi.cos(), phi.sin()];
        if opts.with_offset {
            r.push(1.0);
        }
        r
    };
    let mut ata = vec![0.0; k * k];
    let mut atb = vec![0.0; k];
    for p in pts {
        let r = row(p.phi);
        for i in 0..k {
            atb[i] += r[i] * p.e;
            for j in 0..k {
                ata[i * k + j] += r[i] * r[j];
            }
        }
    }
    let coef = solve_dense(&ata, &atb)?;
    let (alpha, beta) = (coef[0], coef[1]);
    let offset = if opts.with_offset { coef[2] } else { 0.0 };

    let rss: f64 = pts
        .iter()
        .map(|p| {
            let r = row(p.phi);
            let m: f64 = r.iter().zip(&coef).map(|(a, b)| a * b).sum();
            (p.e - m).powi(2)
        })
        .sum();
    let dof = (pts.len() - k) as f64;
    let s2 = if dof > 0.0 { rss / dof } else { 0.0 };

    // Covariance = s² (AᵀA)⁻¹; only the α/β block is needed.
    let mut cov = [[0.0; 2]; 2];
    for (c, col) in cov.iter_mut().enumerate() {
        let mut e = vec![0.0; k];
        e[c] = 1.0;
        let x = solve_dense(&ata, &e)?;
        col[0] = x[0] * s2;
        col[1] = x[1] * s2;
    }
    let v = alpha.hypot(beta);
    let stderr = if v > 0.0 {
        let (ga, gb) = (alpha / v, beta / v);
        (ga * ga * cov[0][0] + 2.0 * ga * gb * cov[0][1] + gb * gb * cov[1][1])
            .max(0.0)
            .sqrt()
    } else {
        (0.5 * (cov[0][0] + cov[1][1])).max(0.0).sqrt()
    };
    Ok(VisibilityFit {
        v_fit: v,
        phi0: beta.atan2(alpha),
        stderr,
        offset,
        rms_residual: (rss / pts.len() as f64).sqrt(),
    })
}

fn poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    if mean <= 0.0 || !mean.is_finite() {
        return 0;
    }
    Poisson::new(mean).map(|d| d.sample(rng) as u64).unwrap_or(0)
}

/// Draw coincidence counts: Poisson(rate·p·T) per outcome from the Born rule,
/// plus accidentals spread evenly over the four outcomes.
pub fn sample_counts_with<T: Real, R: Rng + ?Sized>(
    state: &HyperState<T>,
    setting: &MeasurementSetting,
    pair_rate: f64,
    duration: f64,
    accidental_rate: f64,
    rng: &mut R,
) -> Result<CountRecord> {
    check_range("pair_rate", pair_rate, 0.0, f64::MAX, ">= 0")?;
    check_range("accidental_rate", accidental_rate, 0.0, f64::MAX, ">= 0")?;
    check_range("duration", duration, 0.0, f64::MAX, ">= 0")?;
    let p = outcome_probabilities(state, setting)?;
    let mut n = [0u64; 4];
    for (k, slot) in n.iter_mut().enumerate() {
        let mean = pair_rate * p[k].as_f64() * duration + accidental_rate * duration / 4.0;
        *slot = poisson(rng, mean);
    }
    Ok(CountRecord {
        n00: n[0],
        n01: n[1],
        n10: n[2],
        n11: n[3],
        duration,
        setting: *setting,
    })
}

/// [`sample_counts_with`] driven by a fresh ChaCha8 stream seeded with `seed`.
pub fn sample_counts<T: Real>(
    state: &HyperState<T>,
    setting: &MeasurementSetting,
    pair_rate: f64,
    duration: f64,
    accidental_rate: f64,
    seed: u64,
) -> Result<CountRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_counts_with(state, setting, pair_rate, duration, accidental_rate, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hyperstate::{ideal_hyper_state, NoiseKind};
    use crate::qcore::{max_entangled, random::random_density, PureState};
    use crate::scalar::cplx;
    use rand_distr::Normal;
    use std::f64::consts::PI;

    type Hs = HyperState<f64>;

    fn counts(n11: u64, n00: u64, n10: u64, n01: u64) -> CountRecord {
        CountRecord {
            n11,
            n00,
            n10,
            n01,
            duration: 1.0,
            setting: MeasurementSetting::hv(),
        }
    }

    fn grid(n: usize) -> Vec<f64> {
        (0..n).map(|k| 2.0 * PI * k as f64 / n as f64).collect()
    }

    fn bell() -> DensityMatrix<f64> {
        max_entangled::<f64>(2).unwrap().density()
    }

    #[test]
    fn correlation_arithmetic() {
        assert_eq!(correlation_from_counts(&counts(50, 50, 0, 0)).unwrap(), 1.0);
        assert_eq!(correlation_from_counts(&counts(25, 25, 25, 25)).unwrap(), 0.0);
        // (990 + 985 − 10 − 15) / 2000
        assert!((correlation_from_counts(&counts(990, 985, 10, 15)).unwrap() - 0.975).abs() < 1e-15);
        assert!(correlation_from_counts(&counts(0, 0, 0, 0)).is_err());
    }

    #[test]
    fn expected_correlations_of_ideal_state() {
        let s = ideal_hyper_state::<f64>();
        assert!((expected_correlation(&s, &MeasurementSetting::hv()).unwrap() - 1.0).abs() < 1e-15);
        assert!((expected_correlation(&s, &MeasurementSetting::pol(0.0)).unwrap() - 1.0).abs() < 1e-15);
        assert!((expected_correlation(&s, &MeasurementSetting::et(PI)).unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn visibility_hv_cases() {
        assert!((visibility_hv(&bell()).unwrap() - 1.0).abs() < 1e-15);
        let w = bell().mix(&DensityMatrix::maximally_mixed(vec![2, 2]), 0.2).unwrap();
        assert!((visibility_hv(&w).unwrap() - 0.8).abs() < 1e-15);
        let c = DensityMatrix::new(ComplexMatrix::diag(&[0.5, 0.5, 0.0, 0.0]), vec![2, 2]).unwrap();
        assert_eq!(visibility_hv(&c).unwrap(), 0.0);
    }

    #[test]
    fn visibility_phi_cases() {
        let (v, p) = visibility_phi(&bell()).unwrap();
        assert!((v - 1.0).abs() < 1e-15 && p.abs() < 1e-15);
        let alpha: f64 = 0.6;
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let z = cplx(0.0, 0.0);
        let psi = PureState::new(
            vec![cplx(h, 0.0), z, z, cplx(h * alpha.cos(), h * alpha.sin())],
            vec![2, 2],
        )
        .unwrap();
        let (v, p) = visibility_phi(&psi.density()).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
        // φ* is the argmax of the scan, which sits at +α for this state.
        assert!((p - alpha).abs() < 1e-12);
        let e = expectation(&psi.density(), &MeasurementSetting::pol(p).observable()).unwrap();
        assert!((e - 1.0).abs() < 1e-12);
        let deph = bell().dephase_factors(&[0]).unwrap();
        assert!(visibility_phi(&deph).unwrap().0.abs() < 1e-15);
    }

    #[test]
    fn visibility_phi_matches_grid_maximum() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let phis: Vec<f64> = (0..3600).map(|k| 2.0 * PI * k as f64 / 3600.0).collect();
        for k in 0..500 {
            let rho = random_density::<f64, _>(&mut rng, &[2, 2], 1 + k % 4);
            let (v, _) = visibility_phi(&rho).unwrap();
            let best = phis
                .iter()
                .map(|&p| expectation(&rho, &MeasurementSetting::pol(p).observable()).unwrap())
                .fold(f64::NEG_INFINITY, f64::max);
            // grid step 2π/3600 caps the miss at v(1 − cos(π/3600)) < 4e-7
            assert!((v - best).abs() < 1e-6, "{v} vs {best}");
            assert!(v <= 1.0 + 1e-12);
            assert!(visibility_hv(&rho).unwrap().abs() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn visibility_et_cases() {
        let ideal = ideal_hyper_state::<f64>();
        for flag in [false, true] {
            assert!((visibility_et(&ideal, flag).unwrap() - 1.0).abs() < 1e-15);
        }
        let s = 0.3;
        let et = bell().mix(&bell().dephase_factors(&[0, 1]).unwrap(), s).unwrap();
        let st = Hs::from_product(&bell(), &et).unwrap();
        assert!((visibility_et(&st, true).unwrap() - (1.0 - s)).abs() < 1e-15);
        let mixed = Hs::from_product(&bell(), &DensityMatrix::maximally_mixed(vec![2, 2])).unwrap();
        assert!(visibility_et(&mixed, true).unwrap().abs() < 1e-15);
    }

    #[test]
    fn visibility_et_flag_drops_cross_coherence() {
        // et state with only ρ'_{01,10} coherence: visible without the flag, gone with it.
        let mut m = ComplexMatrix::diag(&[0.0, 0.5, 0.5, 0.0]);
        m[(1, 2)] = cplx(0.5, 0.0);
        m[(2, 1)] = cplx(0.5, 0.0);
        let et = DensityMatrix::new(m, vec![2, 2]).unwrap();
        let st = Hs::from_product(&bell(), &et).unwrap();
        assert!((visibility_et(&st, false).unwrap() - 1.0).abs() < 1e-15);
        assert!(visibility_et(&st, true).unwrap().abs() < 1e-15);
    }

    #[test]
    fn scans() {
        let ideal = ideal_hyper_state::<f64>();
        let phis = grid(24);
        let c = phase_scan(&ideal, &MeasurementSetting::pol(0.0), &phis).unwrap();
        for p in &c.points {
            assert!((p.e - p.phi.cos()).abs() < 1e-14);
        }
        let flat = phase_scan(&ideal, &MeasurementSetting::alice_only(0.0), &phis).unwrap();
        assert!(flat.points.iter().all(|p| p.e.abs() < 1e-15));
        let w = ideal.apply_noise(NoiseKind::Werner, 0.05).unwrap();
        let c = phase_scan(&w, &MeasurementSetting::pol(0.0), &phis).unwrap();
        for p in &c.points {
            assert!((p.e - 0.95 * p.phi.cos()).abs() < 1e-14);
        }
        assert!(phase_scan(&ideal, &MeasurementSetting::pol(0.0), &[0.0]).is_err());
    }

    #[test]
    fn fit_noiseless_and_flat() {
        let curve = ScanCurve {
            points: grid(20)
                .into_iter()
                .map(|p| ScanPoint {
                    phi: p,
                    e: p.cos(),
                    sigma: 0.0,
                })
                .collect(),
        };
        let f = fit_visibility(&curve, FitOptions::default()).unwrap();
        assert!((f.v_fit - 1.0).abs() < 1e-9);
        assert!(f.phi0.abs() < 1e-9);
        let flat = ScanCurve {
            points: grid(20)
                .into_iter()
                .map(|p| ScanPoint {
                    phi: p,
                    e: 0.0,
                    sigma: 0.0,
                })
                .collect(),
        };
        let f = fit_visibility(&flat, FitOptions::default()).unwrap();
        assert!(f.v_fit <= f.stderr);
        let shifted = ScanCurve {
            points: grid(20)
                .into_iter()
                .map(|p| ScanPoint {
                    phi: p,
                    e: 0.1 + 0.8 * (p - 1.0).cos(),
                    sigma: 0.0,
                })
                .collect(),
        };
        let f = fit_visibility(&shifted, FitOptions { with_offset: true }).unwrap();
        assert!((f.v_fit - 0.8).abs() < 1e-12 && (f.phi0 - 1.0).abs() < 1e-12 && (f.offset - 0.1).abs() < 1e-12);
    }

    #[test]
    fn fit_rejects_degenerate_grids() {
        let pts = |phis: &[f64]| ScanCurve {
            points: phis
                .iter()
                .map(|&p| ScanPoint {
                    phi: p,
                    e: p.cos(),
                    sigma: 0.0,
                })
                .collect(),
        };
        assert!(fit_visibility(&pts(&[0.0, 1.0, 2.0]), FitOptions::default()).is_err());
        assert!(fit_visibility(&pts(&[0.0, 0.5, 1.0, 1.5, 2.0]), FitOptions::default()).is_err());
        assert!(fit_visibility(&pts(&[0.0, 0.0, 0.0, PI, PI]), FitOptions::default()).is_err());
    }

    #[test]
    fn fit_recovers_noisy_amplitude() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let noise = Normal::new(0.0, 0.005).unwrap();
        let phis = grid(24);
        let mut inside = 0;
        for trial in 0..1000 {
            let curve = ScanCurve {
                points: phis
                    .iter()
                    .map(|&p| ScanPoint {
                        phi: p,
                        e: (0.983 * p.cos() + noise.sample(&mut rng)).clamp(-1.0, 1.0),
                        sigma: 0.005,
                    })
                    .collect(),
            };
            let f = fit_visibility(&curve, FitOptions::default()).unwrap();
            if trial == 0 {
                assert!((f.v_fit - 0.983).abs() < 0.005);
            }
            if (f.v_fit - 0.983).abs() <= 3.0 * f.stderr {
                inside += 1;
            }
        }
        assert!(inside >= 990, "{inside}");
    }

    #[test]
    fn sampling() {
        let ideal = ideal_hyper_state::<f64>();
        let c = sample_counts(&ideal, &MeasurementSetting::hv(), 20_000.0, 1.0, 0.0, 7).unwrap();
        assert_eq!((c.n10, c.n01), (0, 0));
        let total = c.total() as f64;
        assert!((total - 20_000.0).abs() < 5.0 * 20_000f64.sqrt());
        assert_eq!(
            c,
            sample_counts(&ideal, &MeasurementSetting::hv(), 20_000.0, 1.0, 0.0, 7).unwrap()
        );

        // Accidentals at rate r over four outcomes: E = R/(R + r).
        let r = 20_000.0 * (1.0 / 0.9933 - 1.0);
        let c = sample_counts(&ideal, &MeasurementSetting::hv(), 20_000.0, 10.0, r, 8).unwrap();
        let e = correlation_from_counts(&c).unwrap();
        assert!((e - 0.9933).abs() < 5.0 * correlation_sigma(&c).unwrap());
    }

    #[test]
    fn sampled_correlation_converges() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let st = Hs::from_density(random_density(&mut rng, &crate::hyperstate::HYPER_FACTORS, 3)).unwrap();
        for setting in [
            MeasurementSetting::hv(),
            MeasurementSetting::pol(0.4),
            MeasurementSetting::et(1.1),
        ] {
            let want = expected_correlation(&st, &setting).unwrap();
            for (k, dur) in [1.0, 100.0].into_iter().enumerate() {
                let c = sample_counts(&st, &setting, 10_000.0, dur, 0.0, 100 + k as u64).unwrap();
                let e = correlation_from_counts(&c).unwrap();
                assert!((e - want).abs() < 5.0 * correlation_sigma(&c).unwrap().max(1e-4));
            }
        }
    }

    #[test]
    fn csv_and_json_round_trips() {
        let curve = ScanCurve {
            points: vec![
                ScanPoint {
                    phi: 0.1,
                    e: 0.5,
                    sigma: 0.01,
                },
                ScanPoint {
                    phi: 0.2,
                    e: -0.25,
                    sigma: 0.0,
                },
            ],
        };
        let mut buf = Vec::new();
        curve.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf.clone()).unwrap().starts_with("phi_rad,E,sigma\n"));
        assert_eq!(ScanCurve::read_csv(buf.as_slice()).unwrap(), curve);

        let recs = vec![counts(1, 2, 3, 4), counts(5, 6, 7, 8)];
        let mut buf = Vec::new();
        write_counts_csv(&recs, &mut buf).unwrap();
        assert!(String::from_utf8(buf.clone())
            .unwrap()
            .starts_with("n11,n00,n10,n01,duration\n"));
        assert_eq!(read_counts_csv(buf.as_slice(), MeasurementSetting::hv()).unwrap(), recs);

        let j = serde_json::to_string(&recs[0]).unwrap();
        assert_eq!(serde_json::from_str::<CountRecord>(&j).unwrap(), recs[0]);
        let j = serde_json::to_string(&MeasurementSetting::et(0.25)).unwrap();
        assert_eq!(
            serde_json::from_str::<MeasurementSetting>(&j).unwrap(),
            MeasurementSetting::et(0.25)
        );
    }
}
