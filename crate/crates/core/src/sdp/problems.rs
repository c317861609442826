//! Global bounds from two subspace values: the concurrence bound
//! `min Re Tr(ρ W(dA·dB))` and the fidelity bound `min ⟨Φ⁺|ρ|Φ⁺⟩`, both over
//! states whose polarization and energy-time reductions reproduce the given
//! linear witness values.

use log::warn;
use serde::{Deserialize, Serialize};

use super::{solve, Constraint, ConstraintKind, SdpProblem, SdpSolution, SdpStatus, DEFAULT_TOL};
use crate::certify::witness_operator;
use crate::error::{Error, Result};
use crate::qcore::{embed_operator, max_entangled};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    Concurrence,
    Fidelity,
}

/// Which factors of `(pol_A, et_A, pol_B, et_B)` each subspace witness acts on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubspaceWiring {
    pub pol: [usize; 2],
    pub et: [usize; 2],
}

/// Tracing out energy-time leaves factors 0, 2; tracing out polarization leaves 1, 3.
pub const WIRING: SubspaceWiring = SubspaceWiring {
    pol: [0, 2],
    et: [1, 3],
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundOptions {
    pub tol: f64,
    /// Use `≥` instead of `=` for the subspace constraints.
    pub inequality: bool,
    pub wiring: SubspaceWiring,
}

impl Default for BoundOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            inequality: false,
            wiring: WIRING,
        }
    }
}

fn check_wiring(w: &SubspaceWiring, factors: &[usize], da: usize, db: usize) -> Result<()> {
    let mut seen = [false; 4];
    for &k in w.pol.iter().chain(&w.et) {
        if k >= 4 {
            return Err(Error::InvalidFactor { index: k, count: 4 });
        }
        if seen[k] {
            return Err(Error::InvalidInput(format!("factor {k} wired twice")));
        }
        seen[k] = true;
    }
    if w.pol.iter().any(|&k| factors[k] != da) || w.et.iter().any(|&k| factors[k] != db) {
        return Err(Error::InvalidInput("wiring does not match subspace dimensions".into()));
    }
    Ok(())
}

/// The 16-dimensional (for `dA = dB = 2`) problem behind both bounds.
pub fn subspace_problem<T: Real>(
    kind: BoundKind,
    c_a: T,
    c_b: T,
    da: usize,
    db: usize,
    opts: &BoundOptions,
) -> Result<SdpProblem<T>> {
    if da < 2 || db < 2 {
        return Err(Error::OutOfRange {
            name: "subspace dimension",
            value: da.min(db) as f64,
            range: ">= 2",
        });
    }
    if !c_a.is_finite() || !c_b.is_finite() {
        return Err(Error::InvalidInput("subspace values must be finite".into()));
    }
    let factors = vec![da, db, da, db];
    check_wiring(&opts.wiring, &factors, da, db)?;
    let d = da * db;
    let objective = match kind {
        BoundKind::Concurrence => witness_operator::<T>(d)?.hermitian(),
        BoundKind::Fidelity => max_entangled::<T>(d)?.density().into_matrix(),
    };
    let a_pol = embed_operator(&witness_operator::<T>(da)?.hermitian(), &factors, &opts.wiring.pol)?;
    let a_et = embed_operator(&witness_operator::<T>(db)?.hermitian(), &factors, &opts.wiring.et)?;
    let ck = if opts.inequality {
        ConstraintKind::Geq
    } else {
        ConstraintKind::Eq
    };
    SdpProblem::new(objective, factors)?
        .with_constraint(Constraint {
            a: a_pol,
            b: c_a,
            kind: ck,
            label: "c_lin_pol".into(),
        })?
        .with_constraint(Constraint {
            a: a_et,
            b: c_b,
            kind: ck,
            label: "c_lin_et".into(),
        })
}

/// Solves a problem from [`subspace_problem`]; infeasible or stalled runs
/// become errors.
pub fn solve_bound<T: Real>(p: &SdpProblem<T>, opts: &BoundOptions) -> Result<SdpSolution<T>> {
    let s = solve(p, T::lit(opts.tol))?;
    match s.status {
        SdpStatus::Optimal => Ok(s),
        SdpStatus::Infeasible => {
            warn!("subspace values are not jointly attainable");
            Err(Error::Infeasible {
                residual: s.phase1_violation.map(|v| v.as_f64()).unwrap_or(f64::NAN),
            })
        }
        SdpStatus::MaxIter => Err(Error::MaxIter {
            iterations: s.iterations,
        }),
    }
}

fn bound<T: Real>(
    kind: BoundKind,
    c_a: T,
    c_b: T,
    da: usize,
    db: usize,
    opts: &BoundOptions,
) -> Result<(T, SdpSolution<T>)> {
    let p = subspace_problem(kind, c_a, c_b, da, db, opts)?;
    let s = solve_bound(&p, opts)?;
    Ok((s.primal_value, s))
}

/// Certified global concurrence lower bound.
pub fn c_lb<T: Real>(c_a: T, c_b: T, da: usize, db: usize) -> Result<(T, SdpSolution<T>)> {
    c_lb_with(c_a, c_b, da, db, &BoundOptions::default())
}

pub fn c_lb_with<T: Real>(c_a: T, c_b: T, da: usize, db: usize, opts: &BoundOptions) -> Result<(T, SdpSolution<T>)> {
    bound(BoundKind::Concurrence, c_a, c_b, da, db, opts)
}

/// Certified lower bound on the fidelity to `Φ⁺_{dA·dB}`.
pub fn f_lb<T: Real>(c_a: T, c_b: T, da: usize, db: usize) -> Result<(T, SdpSolution<T>)> {
    f_lb_with(c_a, c_b, da, db, &BoundOptions::default())
}

pub fn f_lb_with<T: Real>(c_a: T, c_b: T, da: usize, db: usize, opts: &BoundOptions) -> Result<(T, SdpSolution<T>)> {
    bound(BoundKind::Fidelity, c_a, c_b, da, db, opts)
}
