//! Dense SDP over complex Hermitian matrices, solved through the real
//! embedding `H ↦ [[Re H, −Im H], [Im H, Re H]]`, plus the two subspace-bound
//! problems built on it.
//!
//! The real variable is `X = embed(ρ)/2`, so `Tr X = Tr ρ` and
//! `⟨embed(A), X⟩ = Re Tr(Aρ)`; dual multipliers carry over unchanged.

mod engine;
mod problems;

use serde::{Deserialize, Serialize};

pub use engine::IterRecord;
pub use problems::{
    c_lb, c_lb_with, f_lb, f_lb_with, solve_bound, subspace_problem, BoundKind, BoundOptions, SubspaceWiring, WIRING,
};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::qcore::{hermitian_eigs, ComplexMatrix, DensityMatrix, MatrixJson};
use crate::scalar::{cone, czero, Real, C};
use engine::{solve_ipm, IpmSettings, IpmStatus, RealSdp};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    /// `Re Tr(Aρ) = b`
    Eq,
    /// `Re Tr(Aρ) ≥ b`
    Geq,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Constraint<T> {
    pub a: ComplexMatrix<T>,
    pub b: T,
    pub kind: ConstraintKind,
    pub label: String,
}

/// `min Re Tr(Cρ)` subject to linear constraints and `ρ ⪰ 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct SdpProblem<T> {
    pub n: usize,
    pub objective: ComplexMatrix<T>,
    pub constraints: Vec<Constraint<T>>,
    /// Factor structure handed to the recovered `ρ*`.
    pub factors: Vec<usize>,
}

impl<T: Real> SdpProblem<T> {
    /// Problem with only the trace constraint `Tr ρ = 1`.
    pub fn new(objective: ComplexMatrix<T>, factors: Vec<usize>) -> Result<Self> {
        let n = objective.dim();
        if factors.iter().product::<usize>() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: factors.iter().product(),
            });
        }
        let p = Self {
            n,
            objective,
            constraints: vec![Constraint {
                a: ComplexMatrix::identity(n),
                b: T::one(),
                kind: ConstraintKind::Eq,
                label: "trace".into(),
            }],
            factors,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_constraint(mut self, c: Constraint<T>) -> Result<Self> {
        self.constraints.push(c);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let tol = crate::qcore::hermitian_tol::<T>();
        let check = |m: &ComplexMatrix<T>| -> Result<()> {
            if m.dim() != self.n {
                return Err(Error::DimensionMismatch {
                    expected: self.n,
                    found: m.dim(),
                });
            }
            let dev = m.hermiticity_error();
            if dev > tol {
                return Err(Error::NotHermitian {
                    deviation: dev.as_f64(),
                });
            }
            Ok(())
        };
        check(&self.objective)?;
        for c in &self.constraints {
            check(&c.a)?;
            if !c.b.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "constraint '{}' has a non-finite bound",
                    c.label
                )));
            }
        }
        let has_trace = self.constraints.iter().any(|c| {
            c.kind == ConstraintKind::Eq
                && c.b == T::one()
                && c.a.max_abs_diff(&ComplexMatrix::identity(self.n)) == T::zero()
        });
        if !has_trace {
            return Err(Error::InvalidInput("problem must include Tr(rho) = 1".into()));
        }
        Ok(())
    }

    fn geq_count(&self) -> usize {
        self.constraints
            .iter()
            .filter(|c| c.kind == ConstraintKind::Geq)
            .count()
    }

    /// Real standard form; `≥` rows get a surplus variable on the diagonal.
    fn to_real(&self) -> RealSdp<T> {
        let n2 = 2 * self.n;
        let big = n2 + self.geq_count();
        let pad = |m: &Matrix<T>| Matrix::from_fn(big, |i, j| if i < n2 && j < n2 { m[(i, j)] } else { T::zero() });
        let c = pad(&self.objective.real_embedding());
        let mut slot = n2;
        let a = self
            .constraints
            .iter()
            .map(|con| {
                let mut m = pad(&con.a.real_embedding());
                if con.kind == ConstraintKind::Geq {
                    m[(slot, slot)] = -T::one();
                    slot += 1;
                }
                m
            })
            .collect();
        let b = self.constraints.iter().map(|c| c.b).collect();
        RealSdp { c, a, b }
    }

    /// `C − Σ y_k A_k`.
    pub fn dual_slack(&self, y: &[T]) -> ComplexMatrix<T> {
        let mut s = self.objective.clone();
        for (c, &yk) in self.constraints.iter().zip(y) {
            s = s.sub(&c.a.scale(yk));
        }
        s
    }

    pub fn objective_value(&self, rho: &ComplexMatrix<T>) -> T {
        self.objective.trace_product(rho).re
    }

    /// Signed constraint violations; `≥` rows only count shortfall.
    pub fn residuals(&self, rho: &ComplexMatrix<T>) -> Vec<T> {
        self.constraints
            .iter()
            .map(|c| {
                let v = c.a.trace_product(rho).re - c.b;
                match c.kind {
                    ConstraintKind::Eq => v,
                    ConstraintKind::Geq => v.min(T::zero()),
                }
            })
            .collect()
    }

    pub fn to_json(&self) -> SdpProblemJson {
        SdpProblemJson {
            n: self.n,
            sense: "minimize".into(),
            objective: MatrixJson::from_complex(&self.objective, &self.factors),
            constraints: self
                .constraints
                .iter()
                .map(|c| ConstraintJson {
                    label: c.label.clone(),
                    kind: c.kind,
                    b: c.b.as_f64(),
                    a: MatrixJson::from_complex(&c.a, &self.factors),
                })
                .collect(),
        }
    }

    /// Inverse of [`Self::to_json`]; the problem must be a minimization.
    pub fn from_json(j: &SdpProblemJson) -> Result<Self> {
        if j.sense != "minimize" {
            return Err(Error::Format(format!("unsupported sense '{}'", j.sense)));
        }
        let p = Self {
            n: j.n,
            objective: j.objective.to_complex()?,
            constraints: j
                .constraints
                .iter()
                .map(|c| {
                    Ok(Constraint {
                        a: c.a.to_complex()?,
                        b: T::lit(c.b),
                        kind: c.kind,
                        label: c.label.clone(),
                    })
                })
                .collect::<Result<_>>()?,
            factors: j.objective.factors.clone(),
        };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SdpStatus {
    Optimal,
    Infeasible,
    MaxIter,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SdpSolution<T> {
    pub rho_star: DensityMatrix<T>,
    pub primal_value: T,
    pub dual_value: T,
    pub dual_y: Vec<T>,
    pub dual_slack_min_eig: T,
    pub duality_gap: T,
    pub primal_residual: T,
    pub iterations: usize,
    pub status: SdpStatus,
    /// Tolerance the solve was asked for.
    pub tol: T,
    /// Phase-I optimum when it was run (total constraint violation).
    pub phase1_violation: Option<T>,
    pub history: Vec<IterRecord>,
    /// Dimension of the eigenspace the problem was restricted to, when some
    /// constraint pinned `ρ` to it.
    pub face_dim: Option<usize>,
}

impl<T: Real> SdpSolution<T> {
    pub fn to_json(&self) -> SdpSolutionJson {
        SdpSolutionJson {
            status: self.status,
            primal_value: self.primal_value.as_f64(),
            dual_value: self.dual_value.as_f64(),
            dual_y: self.dual_y.iter().map(|v| v.as_f64()).collect(),
            dual_slack_min_eig: self.dual_slack_min_eig.as_f64(),
            duality_gap: self.duality_gap.as_f64(),
            primal_residual: self.primal_residual.as_f64(),
            iterations: self.iterations,
            tol: self.tol.as_f64(),
            phase1_violation: self.phase1_violation.map(|v| v.as_f64()),
            face_dim: self.face_dim,
            rho_star: self.rho_star.to_json(),
            history: self.history.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintJson {
    pub label: String,
    pub kind: ConstraintKind,
    pub b: f64,
    pub a: MatrixJson,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdpProblemJson {
    pub n: usize,
    pub sense: String,
    pub objective: MatrixJson,
    pub constraints: Vec<ConstraintJson>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SdpSolutionJson {
    pub status: SdpStatus,
    pub primal_value: f64,
    pub dual_value: f64,
    pub dual_y: Vec<f64>,
    pub dual_slack_min_eig: f64,
    pub duality_gap: f64,
    pub primal_residual: f64,
    pub iterations: usize,
    pub tol: f64,
    pub phase1_violation: Option<f64>,
    pub face_dim: Option<usize>,
    pub rho_star: MatrixJson,
    pub history: Vec<IterRecord>,
}

pub const DEFAULT_TOL: f64 = 1e-8;
pub const MAX_ITER: usize = 100;

fn settings<T: Real>(tol: T) -> IpmSettings<T> {
    IpmSettings {
        tol_gap: tol,
        tol_feas: tol / T::lit(10.0),
        max_iter: MAX_ITER,
    }
}

fn hermitian_min_eig<T: Real>(m: &ComplexMatrix<T>) -> Result<T> {
    Ok(hermitian_eigs(&m.hermitian_part())?
        .values
        .last()
        .copied()
        .unwrap_or_else(T::zero))
}

/// Solve `p` to relative gap `tol`. Equality constraints pinned at an extreme
/// eigenvalue of their operator leave no interior; those are handled by
/// restricting to the forced eigenspace first. A run that does not converge is
/// classified by a Phase-I problem minimizing total constraint violation.
pub fn solve<T: Real>(p: &SdpProblem<T>, tol: T) -> Result<SdpSolution<T>> {
    p.validate()?;
    if !(tol > T::zero()) {
        return Err(Error::InvalidInput("tolerance must be positive".into()));
    }
    if let Some(face) = forced_face(p)? {
        return solve_on_face(p, tol, face);
    }
    solve_full(p, tol)
}

fn solve_full<T: Real>(p: &SdpProblem<T>, tol: T) -> Result<SdpSolution<T>> {
    let real = p.to_real();
    let out = solve_ipm(&real, &settings(tol));
    let n2 = 2 * p.n;
    let main = Matrix::from_fn(n2, |i, j| out.x[(i, j)]);
    let rho_m = ComplexMatrix::from_real_embedding(&main)
        .scale(T::two())
        .hermitian_part();

    let primal_value = p.objective_value(&rho_m);
    let dual_value: T = p.constraints.iter().zip(&out.y).map(|(c, &y)| c.b * y).sum();
    let slack = p.dual_slack(&out.y);
    let mut slack_min = hermitian_min_eig(&slack)?;
    for (c, &y) in p.constraints.iter().zip(&out.y) {
        if c.kind == ConstraintKind::Geq {
            slack_min = slack_min.min(y);
        }
    }
    let residual = p.residuals(&rho_m).iter().fold(T::zero(), |m, v| m.max(v.abs()));
    let gap = (primal_value - dual_value).abs();

    let mut status = SdpStatus::Optimal;
    let mut phase1 = None;
    if out.status != IpmStatus::Converged {
        let v = phase_one(p, tol)?;
        phase1 = Some(v);
        let threshold = T::lit(1e-6).max(tol * T::lit(100.0));
        status = if v > threshold {
            SdpStatus::Infeasible
        } else {
            SdpStatus::MaxIter
        };
    }
    let rho_star = DensityMatrix::new_unchecked(rho_m, p.factors.clone())?;
    Ok(SdpSolution {
        rho_star,
        primal_value,
        dual_value,
        dual_y: out.y,
        dual_slack_min_eig: slack_min,
        duality_gap: gap,
        primal_residual: residual,
        iterations: out.iterations,
        status,
        tol,
        phase1_violation: phase1,
        history: out.history,
        face_dim: None,
    })
}

/// Orthonormal basis of the face every feasible `ρ` must live on, and the
/// constraints that pinned it (index, +1 for top / −1 for bottom eigenvalue).
struct Face<T> {
    cols: Vec<Vec<C<T>>>,
    forced: Vec<(usize, T)>,
}

fn inner<T: Real>(u: &[C<T>], v: &[C<T>]) -> C<T> {
    u.iter().zip(v).map(|(a, b)| a.conj() * b).sum()
}

fn compress<T: Real>(a: &ComplexMatrix<T>, cols: &[Vec<C<T>>]) -> ComplexMatrix<T> {
    let av: Vec<Vec<C<T>>> = cols.iter().map(|v| a.apply(v)).collect();
    ComplexMatrix::from_fn(cols.len(), |i, j| inner(&cols[i], &av[j])).hermitian_part()
}

fn is_identity<T: Real>(a: &ComplexMatrix<T>) -> bool {
    a.max_abs_diff(&ComplexMatrix::identity(a.dim())) == T::zero()
}

fn forced_face<T: Real>(p: &SdpProblem<T>) -> Result<Option<Face<T>>> {
    let pin = T::lit(1e-10).max(T::epsilon() * T::lit(1024.0));
    let cluster = T::lit(1e-7).max(T::epsilon() * T::lit(4096.0));
    let n = p.n;
    let mut cols: Vec<Vec<C<T>>> = (0..n)
        .map(|k| (0..n).map(|i| if i == k { cone() } else { czero() }).collect())
        .collect();
    let mut forced: Vec<(usize, T)> = Vec::new();
    loop {
        let mut changed = false;
        for (k, c) in p.constraints.iter().enumerate() {
            if forced.iter().any(|f| f.0 == k) {
                continue;
            }
            let eig = hermitian_eigs(&compress(&c.a, &cols))?;
            let (top, bottom) = (eig.values[0], *eig.values.last().unwrap());
            if top - bottom <= cluster {
                continue;
            }
            let sign = if (c.b - top).abs() <= pin {
                T::one()
            } else if c.kind == ConstraintKind::Eq && (c.b - bottom).abs() <= pin {
                -T::one()
            } else {
                continue;
            };
            let edge = if sign > T::zero() { top } else { bottom };
            let mut next = Vec::new();
            for (j, &v) in eig.values.iter().enumerate() {
                if (v - edge).abs() <= cluster {
                    let w = eig.vector(j);
                    next.push(
                        (0..n)
                            .map(|i| cols.iter().zip(&w).map(|(col, &wj)| col[i] * wj).sum())
                            .collect(),
                    );
                }
            }
            cols = next;
            forced.push((k, sign));
            changed = true;
        }
        if !changed {
            break;
        }
    }
    if forced.is_empty() {
        return Ok(None);
    }
    Ok(Some(Face { cols, forced }))
}

fn solve_on_face<T: Real>(p: &SdpProblem<T>, tol: T, face: Face<T>) -> Result<SdpSolution<T>> {
    let m = face.cols.len();
    let kept: Vec<usize> = (0..p.constraints.len())
        .filter(|k| !face.forced.iter().any(|f| f.0 == *k))
        .collect();
    let reduced = SdpProblem {
        n: m,
        objective: compress(&p.objective, &face.cols),
        constraints: kept
            .iter()
            .map(|&k| {
                let c = &p.constraints[k];
                Constraint {
                    a: if is_identity(&c.a) {
                        ComplexMatrix::identity(m)
                    } else {
                        compress(&c.a, &face.cols)
                    },
                    b: c.b,
                    kind: c.kind,
                    label: c.label.clone(),
                }
            })
            .collect(),
        factors: vec![m],
    };
    log::debug!(
        "restricted to a face of dimension {m} by {} pinned constraint(s)",
        face.forced.len()
    );
    let sub = if m == 1 {
        // Single point: ρ' = [1], all weight on the trace multiplier.
        let one = ComplexMatrix::identity(1);
        let viol: T = reduced.residuals(&one).iter().map(|r| r.abs()).sum();
        let ti = reduced.constraints.iter().position(|c| is_identity(&c.a)).unwrap();
        let mut y = vec![T::zero(); reduced.constraints.len()];
        y[ti] = reduced.objective[(0, 0)].re;
        let feasible = viol <= tol;
        SdpSolution {
            rho_star: DensityMatrix::new_unchecked(one, vec![1])?,
            primal_value: reduced.objective[(0, 0)].re,
            dual_value: y[ti],
            dual_y: y,
            dual_slack_min_eig: T::zero(),
            duality_gap: T::zero(),
            primal_residual: viol,
            iterations: 0,
            status: if feasible {
                SdpStatus::Optimal
            } else {
                SdpStatus::Infeasible
            },
            tol,
            phase1_violation: if feasible { None } else { Some(viol) },
            history: Vec::new(),
            face_dim: Some(1),
        }
    } else {
        solve_full(&reduced, tol)?
    };

    // Lift ρ' back and extend the dual with large multipliers on the pinned rows.
    let rho_sub = sub.rho_star.matrix();
    let rho_m = ComplexMatrix::from_fn(p.n, |i, j| {
        let mut s = czero();
        for a in 0..m {
            for b in 0..m {
                s += face.cols[a][i] * rho_sub[(a, b)] * face.cols[b][j].conj();
            }
        }
        s
    })
    .hermitian_part();
    let ti = p.constraints.iter().position(|c| is_identity(&c.a)).unwrap();
    let mut base = vec![T::zero(); p.constraints.len()];
    for (r, &k) in kept.iter().enumerate() {
        base[k] = sub.dual_y[r];
    }
    let target = -tol / T::lit(10.0);
    let mut t = T::one();
    let mut best: Option<(Vec<T>, T)> = None;
    for _ in 0..64 {
        let mut y = base.clone();
        for &(k, sign) in &face.forced {
            y[k] = sign * t;
            y[ti] -= sign * t * p.constraints[k].b;
        }
        let mut smin = hermitian_min_eig(&p.dual_slack(&y))?;
        for (c, &v) in p.constraints.iter().zip(&y) {
            if c.kind == ConstraintKind::Geq {
                smin = smin.min(v);
            }
        }
        let done = smin >= target;
        if best.as_ref().is_none_or(|b| smin > b.1) {
            best = Some((y, smin));
        }
        if done {
            break;
        }
        t *= T::two();
    }
    let (y, slack_min) = best.unwrap();
    let primal_value = p.objective_value(&rho_m);
    let dual_value: T = p.constraints.iter().zip(&y).map(|(c, &v)| c.b * v).sum();
    let residual = p.residuals(&rho_m).iter().fold(T::zero(), |a, v| a.max(v.abs()));
    Ok(SdpSolution {
        rho_star: DensityMatrix::new_unchecked(rho_m, p.factors.clone())?,
        primal_value,
        dual_value,
        dual_y: y,
        dual_slack_min_eig: slack_min,
        duality_gap: (primal_value - dual_value).abs(),
        primal_residual: residual,
        iterations: sub.iterations,
        status: sub.status,
        tol,
        phase1_violation: sub.phase1_violation,
        history: sub.history,
        face_dim: Some(m),
    })
}

/// `min Σ (u_k + v_k)` s.t. `⟨A_k, X⟩ + u_k − v_k = b_k`, everything
/// nonnegative. Always strictly feasible; its optimum is the smallest total
/// violation of the original constraints.
fn phase_one<T: Real>(p: &SdpProblem<T>, tol: T) -> Result<T> {
    let base = p.to_real();
    let n = base.c.dim();
    let m = base.a.len();
    let big = n + 2 * m;
    let pad = |src: &Matrix<T>| Matrix::from_fn(big, |i, j| if i < n && j < n { src[(i, j)] } else { T::zero() });
    let c = Matrix::from_fn(big, |i, j| if i == j && i >= n { T::one() } else { T::zero() });
    let a = base
        .a
        .iter()
        .enumerate()
        .map(|(k, ak)| {
            let mut am = pad(ak);
            am[(n + 2 * k, n + 2 * k)] = T::one();
            am[(n + 2 * k + 1, n + 2 * k + 1)] = -T::one();
            am
        })
        .collect();
    let aux = RealSdp { c, a, b: base.b };
    let out = solve_ipm(&aux, &settings(tol));
    Ok(aux.c.dot(&out.x).max(T::zero()))
}

/// Independent audit of a claimed optimum, recomputed from the problem data,
/// `ρ*` and `y` alone. Passes iff every check is within `10·tol`.
pub fn verify_certificate<T: Real>(p: &SdpProblem<T>, s: &SdpSolution<T>) -> bool {
    verify_certificate_with(p, s, s.tol)
}

pub fn verify_certificate_with<T: Real>(p: &SdpProblem<T>, s: &SdpSolution<T>, tol: T) -> bool {
    if s.status != SdpStatus::Optimal || s.dual_y.len() != p.constraints.len() || s.rho_star.dim() != p.n {
        return false;
    }
    let lim = tol * T::lit(10.0);
    let rho = s.rho_star.matrix();
    if rho.hermiticity_error() > lim {
        return false;
    }
    let Ok(rho_min) = hermitian_min_eig(rho) else {
        return false;
    };
    let Ok(slack_min) = hermitian_min_eig(&p.dual_slack(&s.dual_y)) else {
        return false;
    };
    let geq_ok = p
        .constraints
        .iter()
        .zip(&s.dual_y)
        .all(|(c, &y)| c.kind == ConstraintKind::Eq || y >= -lim);
    let res_ok = p.residuals(rho).iter().all(|r| r.abs() <= lim);
    let obj = p.objective_value(rho);
    let dual: T = p.constraints.iter().zip(&s.dual_y).map(|(c, &y)| c.b * y).sum();
    let gap_ok = (obj - dual).abs() <= lim * T::one().max(obj.abs());
    rho_min >= -lim && slack_min >= -lim && geq_ok && res_ok && gap_ok
}

/// Feasibility audit of a candidate point: constraint residuals and the
/// smallest eigenvalue. Strict feasibility means positive definite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub objective: f64,
    pub residuals: Vec<f64>,
    pub min_eigenvalue: f64,
    pub feasible: bool,
    pub strictly_feasible: bool,
}

pub fn check_feasible<T: Real>(p: &SdpProblem<T>, rho: &DensityMatrix<T>, tol: T) -> Result<FeasibilityReport> {
    if rho.dim() != p.n {
        return Err(Error::DimensionMismatch {
            expected: p.n,
            found: rho.dim(),
        });
    }
    let res = p.residuals(rho.matrix());
    let min = hermitian_min_eig(rho.matrix())?;
    let feasible = res.iter().all(|r| r.abs() <= tol) && min >= -tol && rho.matrix().hermiticity_error() <= tol;
    Ok(FeasibilityReport {
        objective: p.objective_value(rho.matrix()).as_f64(),
        residuals: res.iter().map(|r| r.as_f64()).collect(),
        min_eigenvalue: min.as_f64(),
        feasible,
        strictly_feasible: feasible && min > tol,
    })
}
