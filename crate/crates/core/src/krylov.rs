//! Preconditioned conjugate gradients and Lanczos condition estimates.
//!
//! [`estimate_condition`] runs the Lanczos process for `C A` in the
//! `C^{-1}`-inner product, which only needs applications of `A` and `C`:
//!
//! ```text
//! u  = A z_j;  alpha_j = z_j . u
//! u -= alpha_j v_j + beta_{j-1} v_{j-1}      (then reorthogonalize)
//! z  = C u;    beta_j = sqrt(u . z)
//! v_{j+1} = u / beta_j,  z_{j+1} = z / beta_j
//! ```
//!
//! The vectors `v_j` are `C`-orthonormal and the tridiagonal matrix of the
//! `alpha`, `beta` has the Ritz values of `C A`. Every basis vector is kept so
//! the recurrence can be fully reorthogonalized.

use faer::{Mat, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::sparse::{Cholesky, CsrMatrix};

/// A linear map on `R^n`.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);

    fn apply_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        self.apply(x, &mut y);
        y
    }
}

impl LinearOperator for CsrMatrix {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        CsrMatrix::apply(self, x, y);
    }
}

/// `A^{-1}` through a Cholesky factorization.
impl LinearOperator for Cholesky {
    fn dim(&self) -> usize {
        Cholesky::dim(self)
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(x);
        self.solve_in_place(y);
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Identity(pub usize);

impl LinearOperator for Identity {
    fn dim(&self) -> usize {
        self.0
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(x);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(a, b)| *a += alpha * b);
}

#[derive(Clone, Debug)]
pub struct PcgOutcome {
    pub solution: Vec<f64>,
    pub iterations: usize,
    /// `sqrt(r . C r)` after each iteration, starting with the initial residual.
    pub residuals: Vec<f64>,
    pub converged: bool,
}

/// Solves `A x = b` from `x = 0` until `sqrt(r.Cr) <= tol sqrt(b.Cb)`.
pub fn pcg(a: &dyn LinearOperator, c: &dyn LinearOperator, b: &[f64], tol: f64, max_it: usize) -> Result<PcgOutcome> {
    let n = a.dim();
    if b.len() != n || c.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, got: b.len() });
    }
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z = c.apply_vec(&r);
    let mut rz = dot(&r, &z);
    if rz < 0.0 {
        return Err(Error::NotPositiveDefinite("preconditioner produced r.Cr < 0".into()));
    }
    let r0 = rz.sqrt();
    let mut residuals = vec![r0];
    if r0 == 0.0 {
        return Ok(PcgOutcome { solution: x, iterations: 0, residuals, converged: true });
    }
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    for it in 1..=max_it {
        a.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::NotPositiveDefinite(format!("negative curvature p.Ap = {pap:e} at iteration {it}")));
        }
        let alpha = rz / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        c.apply(&r, &mut z);
        let rz_new = dot(&r, &z);
        if rz_new < 0.0 {
            return Err(Error::NotPositiveDefinite("preconditioner produced r.Cr < 0".into()));
        }
        residuals.push(rz_new.sqrt());
        if rz_new.sqrt() <= tol * r0 {
            return Ok(PcgOutcome { solution: x, iterations: it, residuals, converged: true });
        }
        let beta = rz_new / rz;
        rz = rz_new;
        p.iter_mut().zip(&z).for_each(|(pi, zi)| *pi = zi + beta * *pi);
    }
    Ok(PcgOutcome { solution: x, iterations: max_it, residuals, converged: false })
}

#[derive(Clone, Copy, Debug)]
pub struct LanczosOptions {
    /// Relative Ritz residual required of both extreme Ritz values.
    pub tol: f64,
    pub max_it: usize,
    pub seed: u64,
    pub max_restarts: usize,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        Self { tol: 1e-4, max_it: 400, seed: 0, max_restarts: 3 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectrumEstimate {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub kappa: f64,
    /// Relative Ritz residual bounds of the two extreme Ritz values.
    pub residual_min: f64,
    pub residual_max: f64,
    pub iterations: usize,
    pub restarts: usize,
    pub converged: bool,
    /// Condition estimate after each convergence check.
    pub history: Vec<f64>,
}

struct Ritz {
    min: f64,
    max: f64,
    res_min: f64,
    res_max: f64,
}

/// Extreme eigenpairs of the tridiagonal matrix with the given diagonal and
/// off-diagonal; `tail` is the coupling to the next (unseen) basis vector.
fn ritz(alpha: &[f64], beta: &[f64], tail: f64) -> Result<Ritz> {
    let k = alpha.len();
    let t = Mat::from_fn(k, k, |i, j| {
        if i == j {
            alpha[i]
        } else if i + 1 == j {
            beta[i]
        } else if j + 1 == i {
            beta[j]
        } else {
            0.0
        }
    });
    let eig = t
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| Error::NonConvergence { what: "tridiagonal eigensolver", iterations: k })?;
    let s = eig.S();
    let u = eig.U();
    let (min, max) = (s[0], s[k - 1]);
    Ok(Ritz {
        min,
        max,
        res_min: (tail * u[(k - 1, 0)]).abs() / min.abs(),
        res_max: (tail * u[(k - 1, k - 1)]).abs() / max.abs(),
    })
}

/// `u -= sum_i (z_i . u) v_i`, applied twice.
fn c_orthogonalize(u: &mut [f64], vs: &[Vec<f64>], zs: &[Vec<f64>]) {
    for _ in 0..2 {
        for (v, z) in vs.iter().zip(zs) {
            let h = dot(z, u);
            axpy(-h, v, u);
        }
    }
}

/// Extreme eigenvalues of `C A` for symmetric positive definite `A` and `C`.
///
/// An exhausted invariant subspace restarts the process from a fresh random
/// vector orthogonal to the basis (at most `max_restarts` times); when the
/// restarts run out the estimate from the current basis is returned. A
/// non-positive `u.Cu` on a nonzero vector also restarts, and is an error once
/// the restarts run out.
pub fn estimate_condition(
    a: &dyn LinearOperator,
    c: &dyn LinearOperator,
    opts: &LanczosOptions,
) -> Result<SpectrumEstimate> {
    let n = a.dim();
    if c.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, got: c.dim() });
    }
    if n == 0 {
        return Err(Error::InvalidParameter("empty operator".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut vs: Vec<Vec<f64>> = Vec::new();
    let mut zs: Vec<Vec<f64>> = Vec::new();
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut history = Vec::new();
    let mut restarts = 0;
    let mut hard = 0;

    let fresh = |rng: &mut ChaCha8Rng, vs: &[Vec<f64>], zs: &[Vec<f64>]| {
        let mut u: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        c_orthogonalize(&mut u, vs, zs);
        let z = c.apply_vec(&u);
        let b2 = dot(&u, &z);
        (u, z, b2)
    };

    let (mut u, mut z, mut b2) = fresh(&mut rng, &vs, &zs);
    // size of a typical first vector, to judge when the remainder vanished
    let scale = b2.abs().max(f64::MIN_POSITIVE);
    let limit = opts.max_it.min(n);
    let mut current: Option<Ritz> = None;
    // squared size of C A on the Krylov space seen so far
    let mut amax2 = 0.0f64;
    while vs.len() < limit {
        let floor = if alpha.is_empty() { scale } else { amax2 } * 1e-24;
        // decoupled restart block when the recurrence has broken down
        let mut coupling = None;
        if b2.is_finite() && b2 > floor {
            coupling = Some(b2.sqrt());
        } else {
            let lucky = b2.is_finite() && b2 >= -floor;
            if lucky {
                if restarts >= opts.max_restarts {
                    break;
                }
                restarts += 1;
            } else {
                hard += 1;
                if hard > opts.max_restarts {
                    return Err(Error::Breakdown { restarts: opts.max_restarts });
                }
            }
            (u, z, b2) = fresh(&mut rng, &vs, &zs);
            if !(b2.is_finite() && b2 > 1e-20 * scale) {
                if lucky {
                    break;
                }
                continue;
            }
        }
        let bj = b2.sqrt();
        if !vs.is_empty() {
            beta.push(coupling.unwrap_or(0.0));
        }
        vs.push(u.iter().map(|x| x / bj).collect());
        zs.push(z.iter().map(|x| x / bj).collect());

        let j = vs.len() - 1;
        let mut w = a.apply_vec(&zs[j]);
        let aj = dot(&zs[j], &w);
        alpha.push(aj);
        amax2 = amax2.max(aj * aj);
        axpy(-aj, &vs[j], &mut w);
        if j > 0 && beta[j - 1] != 0.0 {
            axpy(-beta[j - 1], &vs[j - 1], &mut w);
        }
        c_orthogonalize(&mut w, &vs, &zs);
        z = c.apply_vec(&w);
        b2 = dot(&w, &z);
        u = w;

        let k = alpha.len();
        if k < 20 || k % 5 == 0 || k == limit {
            let tail = if b2 > 0.0 { b2.sqrt() } else { 0.0 };
            let r = ritz(&alpha, &beta, tail)?;
            history.push(r.max / r.min);
            let done = r.res_min <= opts.tol && r.res_max <= opts.tol;
            current = Some(r);
            if done && !(tail * tail <= 1e-24 * amax2 && k < n) {
                break;
            }
            continue;
        }
        current = None;
    }
    let r = match current {
        Some(r) => r,
        None => {
            let r = ritz(&alpha, &beta, 0.0)?;
            history.push(r.max / r.min);
            r
        }
    };
    if !(r.min > 0.0) {
        return Err(Error::NotPositiveDefinite(format!("smallest Ritz value {} is not positive", r.min)));
    }
    Ok(SpectrumEstimate {
        lambda_min: r.min,
        lambda_max: r.max,
        kappa: r.max / r.min,
        residual_min: r.res_min,
        residual_max: r.res_max,
        iterations: alpha.len(),
        restarts,
        converged: r.res_min <= opts.tol && r.res_max <= opts.tol,
        history,
    })
}
