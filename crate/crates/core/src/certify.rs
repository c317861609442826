//! Concurrence witnesses, visibility bounds, entanglement-of-formation and
//! dimension certification.

use std::thread;

use log::info;
use serde::{Deserialize, Serialize};

use crate::error::{check_range, Error, Result};
use crate::qcore::{ComplexMatrix, DensityMatrix};
use crate::scalar::{cplx, creal, Real};
use crate::sdp::{self, BoundOptions, SdpSolution, SdpStatus};

/// `W(d) = √(2/(d(d−1))) Σ_{i<j} (2|jj⟩⟨ii| − |ij⟩⟨ij| − |ji⟩⟨ji|)`, stored as
/// written (not Hermitian). Only `Re Tr(ρW)` is ever used, which equals
/// `Tr(ρ·(W+W†)/2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct WitnessOperator<T> {
    pub d: usize,
    pub matrix: ComplexMatrix<T>,
}

impl<T: Real> WitnessOperator<T> {
    pub fn hermitian(&self) -> ComplexMatrix<T> {
        self.matrix.hermitian_part()
    }

    /// `Re Tr(ρW)`.
    pub fn evaluate(&self, rho: &DensityMatrix<T>) -> Result<T> {
        if rho.dim() != self.matrix.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.matrix.dim(),
                found: rho.dim(),
            });
        }
        Ok(rho.matrix().trace_product(&self.matrix).re)
    }

    /// Largest value on any state, `√(2(1 − 1/d))`, reached by `Φ⁺_d`.
    pub fn max_value(&self) -> T {
        max_concurrence(self.d)
    }
}

pub fn max_concurrence<T: Real>(d: usize) -> T {
    (T::two() * (T::one() - T::one() / T::from_count(d))).sqrt()
}

pub fn witness_operator<T: Real>(d: usize) -> Result<WitnessOperator<T>> {
    if d < 2 {
        return Err(Error::OutOfRange {
            name: "d",
            value: d as f64,
            range: "d >= 2",
        });
    }
    let n = d * d;
    let k = (T::two() / T::from_count(d * (d - 1))).sqrt();
    let mut m = ComplexMatrix::zeros(n);
    for i in 0..d {
        for j in i + 1..d {
            let (ii, jj, ij, ji) = (i * d + i, j * d + j, i * d + j, j * d + i);
            m[(jj, ii)] += creal(T::two() * k);
            m[(ij, ij)] -= creal(k);
            m[(ji, ji)] -= creal(k);
        }
    }
    Ok(WitnessOperator { d, matrix: m })
}

fn check_bipartite<T: Real>(rho: &DensityMatrix<T>, d: usize) -> Result<()> {
    if d < 2 || rho.dim() != d * d {
        return Err(Error::DimensionMismatch {
            expected: d * d,
            found: rho.dim(),
        });
    }
    Ok(())
}

/// Linear concurrence bound `Re Tr(ρ W(d))` for a `d × d` state. May be
/// negative, in which case it certifies nothing.
pub fn c_lin<T: Real>(rho: &DensityMatrix<T>, d: usize) -> Result<T> {
    check_bipartite(rho, d)?;
    witness_operator(d)?.evaluate(rho)
}

/// `c_lin` after rotating Alice's qubit so the coherence `ρ03 + ρ12` is real
/// and positive (the phase a visibility scan would select).
pub fn c_lin_aligned<T: Real>(rho: &DensityMatrix<T>) -> Result<T> {
    check_bipartite(rho, 2)?;
    let s = rho.get(0, 3) + rho.get(1, 2);
    let theta = if s.norm() > T::zero() { s.arg() } else { T::zero() };
    let u = ComplexMatrix::from_fn(2, |i, j| match (i, j) {
        (0, 0) => creal(T::one()),
        (1, 1) => cplx(theta.cos(), theta.sin()),
        _ => creal(T::zero()),
    });
    let rotated = DensityMatrix::new_unchecked(rho.matrix().clone(), vec![2, 2])?.conjugate_local(&u, &[0])?;
    c_lin(&rotated, 2)
}

/// `√(2/(d(d−1))) Σ_{i<j} 2(|⟨ii|ρ|jj⟩| − √(⟨ij|ρ|ij⟩⟨ji|ρ|ji⟩))`.
pub fn c_bound_full<T: Real>(rho: &DensityMatrix<T>, d: usize) -> Result<T> {
    check_bipartite(rho, d)?;
    let k = (T::two() / T::from_count(d * (d - 1))).sqrt();
    let mut sum = T::zero();
    for i in 0..d {
        for j in i + 1..d {
            let (ii, jj, ij, ji) = (i * d + i, j * d + j, i * d + j, j * d + i);
            let coh = rho.get(ii, jj).norm();
            let geo = (rho.get(ij, ij).re.max(T::zero()) * rho.get(ji, ji).re.max(T::zero())).sqrt();
            sum += T::two() * (coh - geo);
        }
    }
    Ok(k * sum)
}

/// `V^φ + V^{H/V} − 1`.
pub fn c_lin_pol_from_vis(v_phi: f64, v_hv: f64) -> Result<f64> {
    check_range("v_phi", v_phi, 0.0, 1.0, "[0, 1]")?;
    check_range("v_hv", v_hv, 0.0, 1.0, "[0, 1]")?;
    Ok(v_phi + v_hv - 1.0)
}

/// `2V − 1`.
pub fn c_lin_et_from_vis(v_et: f64) -> Result<f64> {
    check_range("v_et", v_et, 0.0, 1.0, "[0, 1]")?;
    Ok(2.0 * v_et - 1.0)
}

/// Slack allowed above the pure-state maximum before `eof_lower` rejects.
const EOF_SLACK: f64 = 1e-9;

/// `−log₂(1 − c²/2)` in ebits; the pure maximum maps to `log₂ d`.
pub fn eof_lower(c: f64, d: usize) -> Result<f64> {
    if d < 2 {
        return Err(Error::OutOfRange {
            name: "d",
            value: d as f64,
            range: "d >= 2",
        });
    }
    let cmax = max_concurrence::<f64>(d);
    if !(0.0..=cmax + EOF_SLACK).contains(&c) {
        return Err(Error::OutOfRange {
            name: "c",
            value: c,
            range: "[0, sqrt(2(1-1/d))]",
        });
    }
    if c >= cmax {
        return Ok((d as f64).log2());
    }
    Ok(-(1.0 - c * c / 2.0).log2())
}

/// States of Schmidt number `k` have EoF at most `log₂ k`, so the certified
/// dimension is one more than the number of `k ≥ 1` with `eof > log₂ k`.
pub fn certified_dim_from_eof(eof: f64) -> usize {
    if !(eof > 0.0) {
        return 1;
    }
    let mut k = 1usize;
    while k < 1 << 20 && eof > (k as f64).log2() {
        k += 1;
    }
    k
}

/// Schmidt-number-`k` states have `F ≤ k/d`; returns `1 + #{k < d : f·d > k}`.
pub fn certified_dim_from_fidelity(f: f64, d: usize) -> usize {
    if !(f > 0.0) || d == 0 {
        return 1;
    }
    let fd = f * d as f64;
    1 + (1..d).filter(|&k| fd > k as f64).count()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportOptions {
    /// Replaces the visibility-derived subspace values fed to the SDPs.
    pub sdp_inputs: Option<(f64, f64)>,
    pub bound: BoundOptions,
    /// Run the two SDPs on separate threads.
    pub concurrent: bool,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            sdp_inputs: None,
            bound: BoundOptions::default(),
            concurrent: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverSummary {
    pub status: SdpStatus,
    pub value: f64,
    pub dual_value: f64,
    pub dual_y: Vec<f64>,
    pub dual_slack_min_eig: f64,
    pub duality_gap: f64,
    pub primal_residual: f64,
    pub iterations: usize,
    pub face_dim: Option<usize>,
    pub certificate_verified: bool,
}

impl SolverSummary {
    fn new(p: &sdp::SdpProblem<f64>, s: &SdpSolution<f64>) -> Self {
        Self {
            status: s.status,
            value: s.primal_value,
            dual_value: s.dual_value,
            dual_y: s.dual_y.clone(),
            dual_slack_min_eig: s.dual_slack_min_eig,
            duality_gap: s.duality_gap,
            primal_residual: s.primal_residual,
            iterations: s.iterations,
            face_dim: s.face_dim,
            certificate_verified: sdp::verify_certificate(p, s),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub v_phi_pol: f64,
    pub v_hv_pol: f64,
    pub v_et: f64,
    /// Subspace values actually passed to the SDPs.
    pub sdp_inputs: (f64, f64),
    /// `"visibilities"` or `"override"`.
    pub sdp_inputs_source: String,
    /// Override minus visibility-derived values; zero without an override.
    pub sdp_input_discrepancy: (f64, f64),
    pub tol: f64,
    pub inequality_constraints: bool,
    pub eof_log_base: u32,
    pub c_lb_solver: SolverSummary,
    pub f_lb_solver: SolverSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertReport {
    pub c_lin_pol: f64,
    pub c_lin_et: f64,
    pub eof_pol: f64,
    pub eof_et: f64,
    pub c_lb: f64,
    pub f_lb: f64,
    pub eof_global: f64,
    pub certified_dim_eof: usize,
    pub certified_dim_fid: usize,
    pub vacuous: Vec<String>,
    pub entanglement_certified: bool,
    pub summary: String,
    pub provenance: Provenance,
}

fn clamp_eof(c: f64, d: usize) -> Result<f64> {
    eof_lower(c.clamp(0.0, max_concurrence::<f64>(d)), d)
}

fn bound_or_err(
    kind: sdp::BoundKind,
    a: f64,
    b: f64,
    opts: &BoundOptions,
) -> Result<(sdp::SdpProblem<f64>, SdpSolution<f64>)> {
    let p = sdp::subspace_problem(kind, a, b, 2, 2, opts)?;
    let s = sdp::solve_bound(&p, opts)?;
    Ok((p, s))
}

/// An SDP bound together with the problem it solved.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundCertificate {
    pub problem: sdp::SdpProblem<f64>,
    pub solution: SdpSolution<f64>,
}

/// Every derived quantity for one set of measured visibilities.
pub fn full_report(v_phi_pol: f64, v_hv_pol: f64, v_et: f64, opts: &ReportOptions) -> Result<CertReport> {
    full_report_with_certificates(v_phi_pol, v_hv_pol, v_et, opts).map(|r| r.0)
}

/// [`full_report`] plus the concurrence and fidelity SDPs behind it.
pub fn full_report_with_certificates(
    v_phi_pol: f64,
    v_hv_pol: f64,
    v_et: f64,
    opts: &ReportOptions,
) -> Result<(CertReport, [BoundCertificate; 2])> {
    let c_lin_pol = c_lin_pol_from_vis(v_phi_pol, v_hv_pol)?;
    let c_lin_et = c_lin_et_from_vis(v_et)?;
    let (a, b, source) = match opts.sdp_inputs {
        Some((a, b)) => (a, b, "override"),
        None => (c_lin_pol, c_lin_et, "visibilities"),
    };
    let bo = &opts.bound;
    let (cres, fres) = if opts.concurrent {
        thread::scope(|sc| {
            let hc = sc.spawn(|| bound_or_err(sdp::BoundKind::Concurrence, a, b, bo));
            let hf = sc.spawn(|| bound_or_err(sdp::BoundKind::Fidelity, a, b, bo));
            (
                hc.join()
                    .unwrap_or_else(|_| Err(Error::Degenerate("solver thread panicked".into()))),
                hf.join()
                    .unwrap_or_else(|_| Err(Error::Degenerate("solver thread panicked".into()))),
            )
        })
    } else {
        (
            bound_or_err(sdp::BoundKind::Concurrence, a, b, bo),
            bound_or_err(sdp::BoundKind::Fidelity, a, b, bo),
        )
    };
    let (cp, cs) = cres?;
    let (fp, fs) = fres?;
    let c_lb = cs.primal_value;
    let f_lb = fs.primal_value;

    let eof_pol = clamp_eof(c_lin_pol, 2)?;
    let eof_et = clamp_eof(c_lin_et, 2)?;
    let eof_global = clamp_eof(c_lb, 4)?;
    let certified_dim_eof = certified_dim_from_eof(eof_global);
    let certified_dim_fid = certified_dim_from_fidelity(f_lb, 4);

    let mut vacuous = Vec::new();
    for (name, v) in [("c_lin_pol", c_lin_pol), ("c_lin_et", c_lin_et), ("c_lb", c_lb)] {
        if v <= 0.0 {
            vacuous.push(name.to_string());
        }
    }
    if f_lb <= 0.25 {
        vacuous.push("f_lb".into());
    }
    let certified = certified_dim_eof > 1 || certified_dim_fid > 1;
    let summary = if certified {
        format!(
            "entanglement dimension >= {} (EoF), >= {} (fidelity)",
            certified_dim_eof, certified_dim_fid
        )
    } else {
        "no entanglement certified".to_string()
    };
    info!("report: c_lb {c_lb:.6} f_lb {f_lb:.6} -> {summary}");

    let report = CertReport {
        c_lin_pol,
        c_lin_et,
        eof_pol,
        eof_et,
        c_lb,
        f_lb,
        eof_global,
        certified_dim_eof,
        certified_dim_fid,
        vacuous,
        entanglement_certified: certified,
        summary,
        provenance: Provenance {
            v_phi_pol,
            v_hv_pol,
            v_et,
            sdp_inputs: (a, b),
            sdp_inputs_source: source.into(),
            sdp_input_discrepancy: (a - c_lin_pol, b - c_lin_et),
            tol: bo.tol,
            inequality_constraints: bo.inequality,
            eof_log_base: 2,
            c_lb_solver: SolverSummary::new(&cp, &cs),
            f_lb_solver: SolverSummary::new(&fp, &fs),
        },
    };
    Ok((
        report,
        [
            BoundCertificate {
                problem: cp,
                solution: cs,
            },
            BoundCertificate {
                problem: fp,
                solution: fs,
            },
        ],
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hyperstate::HyperState;
    use crate::measure::{visibility_et, visibility_hv, visibility_phi};
    use crate::qcore::random::{random_density, random_pure};
    use crate::qcore::{concurrence_pure, max_entangled, PureState};
    use crate::scalar::czero;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bell_phase(alpha: f64) -> DensityMatrix<f64> {
        let a = std::f64::consts::FRAC_1_SQRT_2;
        PureState::new(
            vec![creal(a), czero(), czero(), cplx(a * alpha.cos(), a * alpha.sin())],
            vec![2, 2],
        )
        .unwrap()
        .density()
    }

    #[test]
    fn witness_on_max_entangled() {
        for d in 2..=5 {
            let w = witness_operator::<f64>(d).unwrap();
            let phi = max_entangled::<f64>(d).unwrap().density();
            let v = w.evaluate(&phi).unwrap();
            assert!((v - (2.0 * (1.0 - 1.0 / d as f64)).sqrt()).abs() < 1e-12, "d={d}");
            assert!(w.hermitian().is_hermitian(1e-12));
            assert!((phi.matrix().trace_product(&w.hermitian()).re - v).abs() < 1e-12);
        }
        let w2 = witness_operator::<f64>(2).unwrap();
        let mixed = DensityMatrix::maximally_mixed(vec![2, 2]);
        assert!((w2.evaluate(&mixed).unwrap() + 0.5).abs() < 1e-12);
        assert!(witness_operator::<f64>(1).is_err());
    }

    #[test]
    fn raw_and_symmetrized_agree_on_random_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for d in [2usize, 3, 4] {
            let w = witness_operator::<f64>(d).unwrap();
            let h = w.hermitian();
            for _ in 0..50 {
                let rho = random_density::<f64, _>(&mut rng, &[d, d], d * d);
                let a = w.evaluate(&rho).unwrap();
                let b = rho.matrix().trace_product(&h);
                assert!((a - b.re).abs() < 1e-12 && b.im.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn c_lin_examples() {
        assert!((c_lin(&bell_phase(0.0), 2).unwrap() - 1.0).abs() < 1e-12);
        let p01 = PureState::<f64>::basis(vec![2, 2], 1).unwrap().density();
        assert!((c_lin(&p01, 2).unwrap() + 1.0).abs() < 1e-12);
        assert!(c_lin(&p01, 4).is_err());
        // Werner-4 line: s·Φ + (1−s)·I/16 is linear in s.
        let phi = max_entangled::<f64>(4).unwrap().density();
        let mixed = DensityMatrix::maximally_mixed(vec![4, 4]);
        let line = |s: f64| c_lin(&mixed.mix(&phi, s).unwrap(), 4).unwrap();
        let (v0, v1) = (line(0.0), line(1.0));
        for s in [0.2, 0.5, 0.9] {
            assert!((line(s) - ((1.0 - s) * v0 + s * v1)).abs() < 1e-12);
        }
        assert!((v0 + 0.75 * (2.0 / 12.0f64).sqrt() * 2.0 / 2.0).abs() < 1e-12);
    }

    #[test]
    fn full_bound_is_phase_invariant() {
        for alpha in [0.0, 0.4, 1.7, 3.0] {
            let rho = bell_phase(alpha);
            assert!((c_bound_full(&rho, 2).unwrap() - 1.0).abs() < 1e-12);
            assert!((c_lin(&rho, 2).unwrap() - alpha.cos()).abs() < 1e-12);
            assert!((c_lin_aligned(&rho).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn witness_soundness_random_pure() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for d in [2usize, 4] {
            for _ in 0..1000 {
                let psi = random_pure::<f64, _>(&mut rng, &[d, d]);
                let rho = psi.density();
                let lin = c_lin(&rho, d).unwrap();
                let full = c_bound_full(&rho, d).unwrap();
                let c = concurrence_pure(&psi).unwrap();
                assert!(lin <= full + 1e-9 && full <= c + 1e-9, "d={d}: {lin} {full} {c}");
            }
        }
    }

    #[test]
    fn proposition_polarization() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..1000 {
            let rank = 1 + (rand::Rng::random::<u32>(&mut rng) % 4) as usize;
            let rho = random_density::<f64, _>(&mut rng, &[2, 2], rank);
            let lhs = visibility_hv(&rho).unwrap() + visibility_phi(&rho).unwrap().0 - 1.0;
            assert!(lhs <= c_lin_aligned(&rho).unwrap() + 1e-9);
        }
    }

    #[test]
    fn proposition_energy_time() {
        // Energy-time coherence reaches the polarization analyzers through the
        // transfer only with the ideal polarization Bell state alongside it.
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let pol = bell_phase(0.0);
        let flip = ComplexMatrix::diag(&[1.0, 1.0, -1.0, 1.0]);
        for _ in 0..1000 {
            let rank = 1 + (rand::Rng::random::<u32>(&mut rng) % 4) as usize;
            let raw = random_density::<f64, _>(&mut rng, &[2, 2], rank);
            // Twirl away the |01⟩ ↔ |10⟩ coherence, keeping |00⟩ ↔ |11⟩.
            let et = raw.mix(&raw.conjugate(&flip), 0.5).unwrap();
            assert!(et.get(1, 2).norm() < 1e-15);
            let hs = HyperState::from_product(&pol, &et).unwrap();
            let lhs = 2.0 * visibility_et(&hs, true).unwrap() - 1.0;
            assert!(lhs <= c_lin_aligned(&et).unwrap() + 1e-9);
        }
    }

    #[test]
    fn concurrence_subadditive_on_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..1000 {
            let a = random_pure::<f64, _>(&mut rng, &[2, 2]);
            let b = random_pure::<f64, _>(&mut rng, &[2, 2]);
            // (A1 B1)(A2 B2) → A = (A1, A2), B = (B1, B2).
            let joint = a.tensor(&b);
            let amps = joint.amplitudes();
            let mut perm = vec![czero(); 16];
            for (i, v) in amps.iter().enumerate() {
                let (a1, b1, a2, b2) = ((i >> 3) & 1, (i >> 2) & 1, (i >> 1) & 1, i & 1);
                perm[(a1 << 3) | (a2 << 2) | (b1 << 1) | b2] = *v;
            }
            let ab = PureState::new(perm, vec![4, 4]).unwrap();
            let lhs = concurrence_pure(&ab).unwrap();
            let rhs = concurrence_pure(&a).unwrap() + concurrence_pure(&b).unwrap();
            assert!(lhs <= rhs + 1e-9);
        }
    }

    #[test]
    fn visibility_bounds() {
        assert!((c_lin_pol_from_vis(1.0, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((c_lin_pol_from_vis(0.985, 0.9933).unwrap() - 0.9783).abs() < 1e-12);
        assert!(c_lin_pol_from_vis(0.5, 0.5).unwrap().abs() < 1e-15);
        assert!(c_lin_pol_from_vis(1.1, 0.5).is_err());
        assert!((c_lin_et_from_vis(0.956).unwrap() - 0.912).abs() < 1e-12);
        assert_eq!(c_lin_et_from_vis(1.0).unwrap(), 1.0);
        assert_eq!(c_lin_et_from_vis(0.5).unwrap(), 0.0);
        assert!(c_lin_et_from_vis(-0.1).is_err());
    }

    #[test]
    fn eof_values() {
        assert!((eof_lower(0.9788, 2).unwrap() - 0.941).abs() < 0.001);
        assert!((eof_lower(0.912, 2).unwrap() - 0.776).abs() < 0.001);
        assert_eq!(eof_lower(1.5f64.sqrt(), 4).unwrap(), 2.0);
        assert_eq!(eof_lower(0.0, 2).unwrap(), 0.0);
        assert!(eof_lower(-0.1, 2).is_err());
        assert!(eof_lower(1.01, 2).is_err());
        let cmax = max_concurrence::<f64>(4);
        let mut prev = -1.0;
        for k in 0..=200 {
            let v = eof_lower(cmax * k as f64 / 200.0, 4).unwrap();
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn dimensions() {
        assert_eq!(certified_dim_from_eof(1.4671), 3);
        assert_eq!(certified_dim_from_eof(0.5), 2);
        assert_eq!(certified_dim_from_eof(0.0), 1);
        assert_eq!(certified_dim_from_eof(1.0), 2);
        assert_eq!(certified_dim_from_eof(2.0), 4);
        assert_eq!(certified_dim_from_fidelity(0.9419, 4), 4);
        assert_eq!(certified_dim_from_fidelity(0.25 + 1e-9, 4), 2);
        assert_eq!(certified_dim_from_fidelity(0.25, 4), 1);
        assert_eq!(certified_dim_from_fidelity(0.5, 4), 2);
        assert_eq!(certified_dim_from_fidelity(1.0, 4), 4);
    }

    #[test]
    fn report_with_override() {
        let opts = ReportOptions {
            sdp_inputs: Some((0.977, 0.906)),
            ..Default::default()
        };
        let r = full_report(0.985, 0.9933, 0.956, &opts).unwrap();
        assert!((1.125..=1.133).contains(&r.c_lb), "{}", r.c_lb);
        assert!((0.938..=0.945).contains(&r.f_lb), "{}", r.f_lb);
        assert!((r.eof_global - 1.4671).abs() < 0.005);
        assert_eq!((r.certified_dim_eof, r.certified_dim_fid), (3, 4));
        assert!(r.provenance.c_lb_solver.certificate_verified);
        assert!(r.provenance.f_lb_solver.certificate_verified);
        assert!((r.provenance.sdp_input_discrepancy.1 + 0.006).abs() < 1e-12);
        let seq = full_report(
            0.985,
            0.9933,
            0.956,
            &ReportOptions {
                concurrent: false,
                ..opts
            },
        )
        .unwrap();
        assert_eq!(serde_json::to_string(&r).unwrap(), serde_json::to_string(&seq).unwrap());
    }

    #[test]
    fn report_ideal_and_vacuous() {
        let r = full_report(1.0, 1.0, 1.0, &ReportOptions::default()).unwrap();
        assert!(r.provenance.c_lb_solver.certificate_verified);
        assert!((r.c_lb - 1.5f64.sqrt()).abs() < 1e-7);
        assert!((r.f_lb - 1.0).abs() < 1e-7);
        assert_eq!(r.certified_dim_fid, 4);
        assert!(r.certified_dim_eof >= 3);
        let v = full_report(0.5, 0.5, 0.5, &ReportOptions::default()).unwrap();
        assert!(!v.entanglement_certified);
        assert_eq!(v.summary, "no entanglement certified");
        assert!(v.vacuous.contains(&"c_lb".to_string()));
        assert!(v.c_lb <= 0.0);
    }
}
