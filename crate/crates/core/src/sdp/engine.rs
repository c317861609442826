//! Infeasible-start primal-dual interior-point method for the real standard form
//!
//! ```text
//! min ⟨C, X⟩  s.t.  ⟨A_i, X⟩ = b_i,  X ⪰ 0
//! max bᵀy     s.t.  S = C − Σ y_i A_i ⪰ 0
//! ```
//!
//! Search directions use Nesterov-Todd scaling with a Mehrotra
//! predictor-corrector step. Everything is dense; the problems here have a few
//! dozen rows and a handful of constraints.

use log::debug;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::linalg::{cholesky, min_eigenvalue, solve_dense, sym_eig, Matrix};
use crate::scalar::Real;

pub(crate) struct RealSdp<T> {
    pub c: Matrix<T>,
    pub a: Vec<Matrix<T>>,
    pub b: Vec<T>,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct IpmSettings<T> {
    pub tol_gap: T,
    pub tol_feas: T,
    pub max_iter: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum IpmStatus {
    Converged,
    MaxIter,
    /// Scaling or Schur-complement factorization broke down.
    Numerical,
}

/// One row of the convergence log.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iteration: usize,
    pub primal_obj: f64,
    pub dual_obj: f64,
    pub mu: f64,
    pub primal_res: f64,
    pub dual_res: f64,
}

pub(crate) struct IpmOutcome<T> {
    pub x: Matrix<T>,
    pub y: Vec<T>,
    pub status: IpmStatus,
    pub iterations: usize,
    pub history: Vec<IterRecord>,
}

fn apply_a<T: Real>(a: &[Matrix<T>], x: &Matrix<T>) -> Vec<T> {
    a.iter().map(|ai| ai.dot(x)).collect()
}

fn combine<T: Real>(a: &[Matrix<T>], y: &[T], n: usize) -> Matrix<T> {
    let mut out = Matrix::zeros(n);
    for (ai, &yi) in a.iter().zip(y) {
        out.axpy(yi, ai);
    }
    out
}

fn inf_norm<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
}

/// Largest `α` with `D + α·dM ⪰ 0`, where `D = diag(d)` is the scaled iterate.
fn max_step<T: Real>(dm: &Matrix<T>, d: &[T]) -> T {
    let n = d.len();
    let p = Matrix::from_fn(n, |i, j| dm[(i, j)] / (d[i] * d[j]).sqrt());
    let lmin = min_eigenvalue(&p);
    if lmin >= T::zero() {
        T::infinity()
    } else {
        -T::one() / lmin
    }
}

struct Scaling<T> {
    g: Matrix<T>,
    d: Vec<T>,
    at: Vec<Matrix<T>>,
    m: Vec<T>,
}

fn nt_scaling<T: Real>(x: &Matrix<T>, s: &Matrix<T>, a: &[Matrix<T>]) -> Result<Scaling<T>> {
    let n = x.dim();
    let lx = cholesky(x)?;
    let w = lx.congruence_t(s);
    let eig = sym_eig(&w);
    if eig.values.iter().any(|&v| v <= T::zero()) {
        return Err(crate::Error::Degenerate(
            "scaled complementarity lost definiteness".into(),
        ));
    }
    let d: Vec<T> = eig.values.iter().map(|v| v.sqrt()).collect();
    let inv_sqrt_d: Vec<T> = d.iter().map(|v| T::one() / v.sqrt()).collect();
    let v = eig.vectors;
    let lv = lx.matmul(&v);
    let g = Matrix::from_fn(n, |i, j| lv[(i, j)] * inv_sqrt_d[j]);
    let at: Vec<Matrix<T>> = a.iter().map(|ai| g.congruence_t(ai)).collect();
    let k = at.len();
    let mut m = vec![T::zero(); k * k];
    for i in 0..k {
        for j in i..k {
            let v = at[i].dot(&at[j]);
            m[i * k + j] = v;
            m[j * k + i] = v;
        }
    }
    Ok(Scaling { g, d, at, m })
}

/// Solves the scaled Newton system for a complementarity target `rc`.
fn direction<T: Real>(
    sc: &Scaling<T>,
    rp: &[T],
    rdt: &Matrix<T>,
    rc: &Matrix<T>,
) -> Result<(Vec<T>, Matrix<T>, Matrix<T>)> {
    let n = sc.d.len();
    let k = Matrix::from_fn(n, |i, j| T::two() * rc[(i, j)] / (sc.d[i] + sc.d[j]));
    let krd = k.sub(rdt);
    let rhs: Vec<T> = sc.at.iter().zip(rp).map(|(ai, &r)| r - ai.dot(&krd)).collect();
    let dy = solve_dense(&sc.m, &rhs)?;
    let mut dst = rdt.clone();
    for (ai, &v) in sc.at.iter().zip(&dy) {
        dst.axpy(-v, ai);
    }
    let dxt = k.sub(&dst);
    Ok((dy, dxt, dst))
}

pub(crate) fn solve_ipm<T: Real>(p: &RealSdp<T>, set: &IpmSettings<T>) -> IpmOutcome<T> {
    let n = p.c.dim();
    let m = p.a.len();
    let nf = T::from_count(n);
    let norm_c = p.c.norm_fro();
    let norm_b = inf_norm(&p.b);

    let mut xi = T::lit(10.0).max(nf.sqrt());
    let mut eta = T::lit(10.0).max(nf.sqrt()).max(norm_c);
    for (ai, &bi) in p.a.iter().zip(&p.b) {
        let na = ai.norm_fro();
        xi = xi.max(nf * (T::one() + bi.abs()) / (T::one() + na));
        eta = eta.max(na);
    }
    let mut x = Matrix::identity(n).scale(xi);
    let mut s = Matrix::identity(n).scale(eta);
    let mut y = vec![T::zero(); m];
    let mut history = Vec::new();
    let tau = T::lit(0.98);

    for iter in 0..=set.max_iter {
        let ax = apply_a(&p.a, &x);
        let rp: Vec<T> = p.b.iter().zip(&ax).map(|(&b, &v)| b - v).collect();
        let mut rd = p.c.sub(&combine(&p.a, &y, n));
        rd = rd.sub(&s);
        let pobj = p.c.dot(&x);
        let dobj: T = p.b.iter().zip(&y).map(|(&b, &v)| b * v).sum();
        let mu = x.dot(&s) / nf;
        let pres = inf_norm(&rp) / (T::one() + norm_b);
        let dres = rd.norm_fro() / (T::one() + norm_c);
        history.push(IterRecord {
            iteration: iter,
            primal_obj: pobj.as_f64(),
            dual_obj: dobj.as_f64(),
            mu: mu.as_f64(),
            primal_res: pres.as_f64(),
            dual_res: dres.as_f64(),
        });
        debug!(
            "ipm {iter:3}: pobj {:.10e} dobj {:.10e} mu {:.2e} rp {:.2e} rd {:.2e}",
            pobj.as_f64(),
            dobj.as_f64(),
            mu.as_f64(),
            pres.as_f64(),
            dres.as_f64()
        );
        let gap = (pobj - dobj).abs() / T::one().max(pobj.abs());
        let gap_xs = (mu * nf) / T::one().max(pobj.abs());
        if gap <= set.tol_gap && gap_xs <= set.tol_gap && pres <= set.tol_feas && dres <= set.tol_feas {
            return IpmOutcome {
                x,
                y,
                status: IpmStatus::Converged,
                iterations: iter,
                history,
            };
        }
        if iter == set.max_iter {
            break;
        }

        let sc = match nt_scaling(&x, &s, &p.a) {
            Ok(sc) => sc,
            Err(_) => {
                return IpmOutcome {
                    x,
                    y,
                    status: IpmStatus::Numerical,
                    iterations: iter,
                    history,
                }
            }
        };
        let rdt = sc.g.congruence_t(&rd);
        let d2 = Matrix::from_diag(&sc.d.iter().map(|&v| v * v).collect::<Vec<_>>());

        let step = (|| -> Result<(Vec<T>, Matrix<T>, Matrix<T>)> {
            // Predictor: affine-scaling target.
            let (_, dxa, dsa) = direction(&sc, &rp, &rdt, &d2.scale(-T::one()))?;
            let ap = T::one().min(tau * max_step(&dxa, &sc.d));
            let ad = T::one().min(tau * max_step(&dsa, &sc.d));
            let dmat = Matrix::from_diag(&sc.d);
            let mut xa = dmat.clone();
            xa.axpy(ap, &dxa);
            let mut sa = dmat;
            sa.axpy(ad, &dsa);
            let mu_aff = xa.dot(&sa) / nf;
            let sigma = (mu_aff / mu).powi(3).max(T::zero()).min(T::one());
            // Corrector: centering plus second-order term.
            let mut cross = dxa.matmul(&dsa);
            cross = cross.add(&cross.transpose()).scale(T::half());
            let rc = Matrix::identity(n).scale(sigma * mu).sub(&d2).sub(&cross);
            direction(&sc, &rp, &rdt, &rc)
        })();
        let (dy, dxt, dst) = match step {
            Ok(v) => v,
            Err(_) => {
                return IpmOutcome {
                    x,
                    y,
                    status: IpmStatus::Numerical,
                    iterations: iter,
                    history,
                }
            }
        };
        let ap = T::one().min(tau * max_step(&dxt, &sc.d));
        let ad = T::one().min(tau * max_step(&dst, &sc.d));

        let dx = sc.g.transpose().congruence_t(&dxt);
        let mut ds = rd;
        for (ai, &v) in p.a.iter().zip(&dy) {
            ds.axpy(-v, ai);
        }
        x.axpy(ap, &dx);
        x.symmetrize();
        s.axpy(ad, &ds);
        s.symmetrize();
        for (yi, &v) in y.iter_mut().zip(&dy) {
            *yi += ad * v;
        }
    }
    IpmOutcome {
        x,
        y,
        status: IpmStatus::MaxIter,
        iterations: set.max_iter,
        history,
    }
}
