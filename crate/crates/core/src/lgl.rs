//! Legendre–Gauss–Lobatto rules and Lagrange interpolation.
//!
//! The LGL rule of degree `p` has `p + 1` nodes: the endpoints of the interval
//! and the `p - 1` roots of `L_p'`. It integrates polynomials of degree
//! `2p - 1` exactly and its weights are `w_j = 2 / (p (p + 1) L_p(x_j)^2)` on
//! the reference interval `[-1, 1]`.
//!
//! Interpolation uses the second (true) barycentric formula. Node sets of any
//! shape are accepted, which the transfer operators rely on.

use faer::Mat;
use rand::Rng;

use crate::error::{Error, Result};

const NEWTON_TOL: f64 = 1e-14;
const NEWTON_MAX_ITERS: usize = 100;

/// A closed interval `[lo, hi]` with `lo < hi`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidInterval { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    pub fn reference() -> Self {
        Self { lo: -1.0, hi: 1.0 }
    }

    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    /// Affine image of a reference coordinate in `[-1, 1]`.
    pub fn from_reference(&self, t: f64) -> f64 {
        self.lo + 0.5 * self.len() * (t + 1.0)
    }

    pub fn to_reference(&self, x: f64) -> f64 {
        2.0 * (x - self.lo) / self.len() - 1.0
    }

    pub fn contains(&self, x: f64) -> bool {
        let slack = 1e-12 * self.len();
        x >= self.lo - slack && x <= self.hi + slack
    }
}

/// Evaluates `(L_n(x), L_n'(x))` by the three-term recurrence.
pub fn legendre(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let (mut l_prev, mut l) = (1.0, x);
    let (mut d_prev, mut d) = (0.0, 1.0);
    for k in 1..n {
        let kf = k as f64;
        let l_next = ((2.0 * kf + 1.0) * x * l - kf * l_prev) / (kf + 1.0);
        let d_next = d_prev + (2.0 * kf + 1.0) * l;
        l_prev = l;
        l = l_next;
        d_prev = d;
        d = d_next;
    }
    (l, d)
}

/// LGL nodes and weights on `[-1, 1]`, ascending.
///
/// Newton's method on `(1 - x^2) L_p'(x) = p (L_{p-1}(x) - x L_p(x))` started
/// from the Chebyshev–Lobatto points. Only the left half is iterated; the
/// right half is mirrored so that the rule is exactly symmetric.
pub fn reference_lgl(p: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if p == 0 {
        return Err(Error::InvalidDegree(p));
    }
    let n = p + 1;
    let mut x = vec![0.0; n];
    x[0] = -1.0;
    x[p] = 1.0;
    let pf = p as f64;
    for j in 1..=(p - 1) / 2 {
        let mut xj = -(std::f64::consts::PI * j as f64 / pf).cos();
        let mut converged = false;
        for _ in 0..NEWTON_MAX_ITERS {
            let (lp, _) = legendre(p, xj);
            let (lm, _) = legendre(p - 1, xj);
            // d/dx[(1 - x^2) L_p'] = -p (p + 1) L_p
            let step = (lm - xj * lp) / ((pf + 1.0) * lp);
            xj += step;
            if step.abs() <= NEWTON_TOL {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NonConvergence {
                what: "LGL Newton iteration",
                iterations: NEWTON_MAX_ITERS,
            });
        }
        x[j] = xj;
        x[p - j] = -xj;
    }
    // even p has x = 0 as a node
    if p % 2 == 0 {
        x[p / 2] = 0.0;
    }
    let mut w = vec![0.0; n];
    for j in 0..=p / 2 {
        let (lp, _) = legendre(p, x[j]);
        w[j] = 2.0 / (pf * (pf + 1.0) * lp * lp);
        w[p - j] = w[j];
    }
    Ok((x, w))
}

/// Gauss–Legendre rule with `q` points on `interval`.
pub fn gauss_legendre(q: usize, interval: Interval) -> Result<(Vec<f64>, Vec<f64>)> {
    if q == 0 {
        return Err(Error::InvalidDegree(q));
    }
    let qf = q as f64;
    let mut x = vec![0.0; q];
    let mut w = vec![0.0; q];
    for i in 0..q.div_ceil(2) {
        let mut xi = -(std::f64::consts::PI * (i as f64 + 0.75) / (qf + 0.5)).cos();
        let mut converged = false;
        for _ in 0..NEWTON_MAX_ITERS {
            let (l, d) = legendre(q, xi);
            let step = l / d;
            xi -= step;
            if step.abs() <= NEWTON_TOL {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NonConvergence {
                what: "Gauss-Legendre Newton iteration",
                iterations: NEWTON_MAX_ITERS,
            });
        }
        let (_, d) = legendre(q, xi);
        let wi = 2.0 / ((1.0 - xi * xi) * d * d);
        x[i] = xi;
        x[q - 1 - i] = -xi;
        w[i] = wi;
        w[q - 1 - i] = wi;
    }
    if q % 2 == 1 {
        x[q / 2] = 0.0;
    }
    let half = 0.5 * interval.len();
    Ok((
        x.iter().map(|&t| interval.from_reference(t)).collect(),
        w.iter().map(|&v| v * half).collect(),
    ))
}

/// An LGL rule mapped to an interval.
#[derive(Clone, Debug)]
pub struct LglRule {
    degree: usize,
    interval: Interval,
    reference: Vec<f64>,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    bary: Vec<f64>,
}

impl LglRule {
    pub fn new(p: usize, interval: Interval) -> Result<Self> {
        let (reference, ref_weights) = reference_lgl(p)?;
        let half = 0.5 * interval.len();
        let mut nodes: Vec<f64> = reference.iter().map(|&t| interval.from_reference(t)).collect();
        nodes[0] = interval.lo;
        nodes[p] = interval.hi;
        let bary = barycentric_weights(&reference);
        Ok(Self {
            degree: p,
            interval,
            nodes,
            weights: ref_weights.iter().map(|&w| w * half).collect(),
            reference,
            bary,
        })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn interval(&self) -> Interval {
        self.interval
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Nodes on `[-1, 1]`.
    pub fn reference_nodes(&self) -> &[f64] {
        &self.reference
    }

    pub fn quadrature(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }

    /// Discrete inner product `sum_j w_j u_j v_j`.
    pub fn discrete_dot(&self, u: &[f64], v: &[f64]) -> f64 {
        self.weights.iter().zip(u).zip(v).map(|((w, a), b)| w * a * b).sum()
    }

    /// Evaluates the degree-`p` interpolant of `values` at `points`.
    pub fn interpolate(&self, values: &[f64], points: &[f64]) -> Result<Vec<f64>> {
        if values.len() != self.nodes.len() {
            return Err(Error::DimensionMismatch { expected: self.nodes.len(), got: values.len() });
        }
        points
            .iter()
            .map(|&x| {
                if !self.interval.contains(x) {
                    return Err(Error::OutOfDomain { x, lo: self.interval.lo, hi: self.interval.hi });
                }
                Ok(barycentric_eval(&self.reference, &self.bary, values, self.interval.to_reference(x)))
            })
            .collect()
    }

    /// Lengths `h_j` of the `p` grid cells.
    pub fn cell_lengths(&self) -> Vec<f64> {
        self.nodes.windows(2).map(|s| s[1] - s[0]).collect()
    }
}

/// Barycentric weights `1 / prod_{k != j} (x_j - x_k)`, scaled to unit maximum.
pub fn barycentric_weights(nodes: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    let scale = if n > 1 { 4.0 / (nodes[n - 1] - nodes[0]) } else { 1.0 };
    let mut lam: Vec<f64> = (0..n)
        .map(|j| {
            let prod: f64 = (0..n).filter(|&k| k != j).map(|k| scale * (nodes[j] - nodes[k])).product();
            1.0 / prod
        })
        .collect();
    let max = lam.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max > 0.0 {
        lam.iter_mut().for_each(|v| *v /= max);
    }
    lam
}

fn barycentric_eval(nodes: &[f64], lam: &[f64], values: &[f64], x: f64) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for ((&xj, &lj), &vj) in nodes.iter().zip(lam).zip(values) {
        let d = x - xj;
        if d == 0.0 {
            return vj;
        }
        let t = lj / d;
        num += t * vj;
        den += t;
    }
    num / den
}

/// Matrix `L[q, j] = l_j(points[q])` of the Lagrange basis on `nodes`.
///
/// Points must lie in the convex hull of the nodes.
pub fn lagrange_matrix(nodes: &[f64], points: &[f64]) -> Result<Mat<f64>> {
    let n = nodes.len();
    if n == 0 {
        return Err(Error::InvalidGrid("empty node set".into()));
    }
    let hull = Interval { lo: nodes[0], hi: nodes[n - 1] };
    let lam = barycentric_weights(nodes);
    let mut m = Mat::zeros(points.len(), n);
    for (q, &x) in points.iter().enumerate() {
        if n == 1 {
            m[(q, 0)] = 1.0;
            continue;
        }
        if !hull.contains(x) {
            return Err(Error::OutOfDomain { x, lo: hull.lo, hi: hull.hi });
        }
        if let Some(j) = nodes.iter().position(|&xj| xj == x) {
            m[(q, j)] = 1.0;
            continue;
        }
        let mut den = 0.0;
        for j in 0..n {
            let t = lam[j] / (x - nodes[j]);
            m[(q, j)] = t;
            den += t;
        }
        for j in 0..n {
            m[(q, j)] /= den;
        }
    }
    Ok(m)
}

/// Differentiation matrix `D[i, j] = l_j'(x_i)`.
pub fn differentiation_matrix(nodes: &[f64]) -> Mat<f64> {
    let n = nodes.len();
    let lam = barycentric_weights(nodes);
    let mut d = Mat::zeros(n, n);
    for i in 0..n {
        let mut diag = 0.0;
        for j in 0..n {
            if i != j {
                let v = lam[j] / lam[i] / (nodes[i] - nodes[j]);
                d[(i, j)] = v;
                diag -= v;
            }
        }
        d[(i, i)] = diag;
    }
    d
}

/// Consistent 1D mass matrix `M[i, j] = (l_i, l_j)` of the Lagrange basis on
/// `nodes`, integrated exactly.
pub fn mass_matrix(nodes: &[f64]) -> Result<Mat<f64>> {
    let n = nodes.len();
    let iv = Interval::new(nodes[0], nodes[n - 1])?;
    let (gx, gw) = gauss_legendre(n + 1, iv)?;
    let l = lagrange_matrix(nodes, &gx)?;
    Ok(Mat::from_fn(n, n, |i, j| (0..gx.len()).map(|q| gw[q] * l[(q, i)] * l[(q, j)]).sum()))
}

/// Largest ratio `||v||_p / ||v||` over random `v` in `P_p`, where `||.||_p` is
/// the LGL-discrete norm and `||.||` the exact `L^2` norm. Theory bounds the
/// ratio by `sqrt(3)` from above and by one from below.
pub fn check_trace_inequality<R: Rng>(rule: &LglRule, trials: usize, rng: &mut R) -> Result<f64> {
    let n = rule.degree + 1;
    let (gx, gw) = gauss_legendre(n + 1, rule.interval)?;
    let l = lagrange_matrix(&rule.nodes, &gx)?;
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let discrete = rule.discrete_dot(&v, &v);
        let exact: f64 = (0..gx.len())
            .map(|q| {
                let vq: f64 = (0..n).map(|j| l[(q, j)] * v[j]).sum();
                gw[q] * vq * vq
            })
            .sum();
        worst = worst.max((discrete / exact).sqrt());
    }
    Ok(worst)
}
