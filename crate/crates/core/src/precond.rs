//! Additive auxiliary space preconditioners `C = B^{-1} + S C_aux S^T`.
//!
//! Stage one preconditions the SE-DG matrix with a diagonal smoother and the
//! SE-CG problem as auxiliary space (`S` the SE-CG prolongation). Stage two
//! preconditions the SE-CG matrix with the form `B2` and the DFE-CG problem
//! (`S = Q`). The combined preconditioner uses stage two in place of the exact
//! SE-CG solve of stage one.

use serde::{Deserialize, Serialize};

use crate::assembly::multilinear_stiffness;
use crate::auxiliary::{assemble_b2, interior_groups, AnisotropyClassification};
use crate::error::{Error, Result};
use crate::krylov::{pcg, LinearOperator};
use crate::mesh::Mesh;
use crate::space::ConformingSpace;
use crate::sparse::{Cholesky, CsrMatrix};
use crate::transfer::StageTwoTransfer;

/// `x -> diag(d)^{-1} x`.
#[derive(Clone, Debug)]
pub struct DiagonalInverse {
    inv: Vec<f64>,
}

impl DiagonalInverse {
    pub fn new(diag: &[f64]) -> Result<Self> {
        if let Some(i) = diag.iter().position(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::NotPositiveDefinite(format!("diagonal entry {i} is {}", diag[i])));
        }
        Ok(Self { inv: diag.iter().map(|v| 1.0 / v).collect() })
    }
}

impl LinearOperator for DiagonalInverse {
    fn dim(&self) -> usize {
        self.inv.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for ((yi, xi), s) in y.iter_mut().zip(x).zip(&self.inv) {
            *yi = xi * s;
        }
    }
}

/// `B^{-1} + S C S^T` for a smoother `B^{-1}`, a transfer `S` and an
/// auxiliary preconditioner `C`.
pub struct AdditiveSchwarz<'a> {
    smoother: &'a dyn LinearOperator,
    transfer: Option<&'a CsrMatrix>,
    auxiliary: &'a dyn LinearOperator,
}

impl<'a> AdditiveSchwarz<'a> {
    pub fn new(smoother: &'a dyn LinearOperator, transfer: &'a CsrMatrix, auxiliary: &'a dyn LinearOperator) -> Result<Self> {
        if transfer.nrows() != smoother.dim() || transfer.ncols() != auxiliary.dim() {
            return Err(Error::Config(format!(
                "transfer is {}x{}, smoother acts on {} and the auxiliary space has {} unknowns",
                transfer.nrows(),
                transfer.ncols(),
                smoother.dim(),
                auxiliary.dim()
            )));
        }
        Ok(Self { smoother, transfer: Some(transfer), auxiliary })
    }

    /// The degenerate case `S = 0`.
    pub fn smoother_only(smoother: &'a dyn LinearOperator) -> Self {
        Self { smoother, transfer: None, auxiliary: smoother }
    }
}

impl LinearOperator for AdditiveSchwarz<'_> {
    fn dim(&self) -> usize {
        self.smoother.dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.smoother.apply(x, y);
        if let Some(s) = self.transfer {
            let coarse = self.auxiliary.apply_vec(&s.mul_vec_transposed(x));
            for (yi, ci) in y.iter_mut().zip(s.mul_vec(&coarse)) {
                *yi += ci;
            }
        }
    }
}

/// A symmetric tridiagonal block factored for the Thomas algorithm.
#[derive(Clone, Debug)]
struct Tridiagonal {
    ids: Vec<usize>,
    /// Off-diagonal between positions `t` and `t + 1`.
    off: Vec<f64>,
    /// Pivots of the elimination.
    pivot: Vec<f64>,
}

impl Tridiagonal {
    fn factor(ids: Vec<usize>, diag: &[f64], off: Vec<f64>) -> Result<Self> {
        let n = ids.len();
        let mut pivot = Vec::with_capacity(n);
        for t in 0..n {
            let p = if t == 0 { diag[0] } else { diag[t] - off[t - 1] * off[t - 1] / pivot[t - 1] };
            if !(p > 0.0) {
                return Err(Error::NotPositiveDefinite(format!("tridiagonal pivot {p:e} at unknown {}", ids[t])));
            }
            pivot.push(p);
        }
        Ok(Self { ids, off, pivot })
    }

    fn solve(&self, rhs: &mut [f64]) {
        let n = rhs.len();
        for t in 1..n {
            rhs[t] -= self.off[t - 1] / self.pivot[t - 1] * rhs[t - 1];
        }
        rhs[n - 1] /= self.pivot[n - 1];
        for t in (0..n - 1).rev() {
            rhs[t] = (rhs[t] - self.off[t] * rhs[t + 1]) / self.pivot[t];
        }
    }
}

/// Interior orderings of one patch after verification.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubstructureOrdering {
    /// SE-CG unknowns interior to the patch in solve order.
    pub order: Vec<usize>,
    /// Lengths of the consecutive tridiagonal blocks of `order`.
    pub blocks: Vec<usize>,
}

/// Orders the interior unknowns of patch `r`: line by line along direction 0,
/// except nodes of strongly anisotropic cells in a direction `k >= 1`, which
/// run line by line along `k`. Fails if the permuted interior block of `b2`
/// is not block diagonal with tridiagonal blocks.
pub fn substructure_ordering(
    space: &ConformingSpace,
    class: &AnisotropyClassification,
    b2: &CsrMatrix,
    r: usize,
) -> Result<SubstructureOrdering> {
    let layout = space.layout();
    let mut by_node = vec![usize::MAX; layout.patch_len(r)];
    for &dof in space.patch_interior(r) {
        by_node[space.dofs()[dof].node] = dof;
    }
    let order: Vec<usize> = interior_groups(layout, class, r).into_iter().flatten().map(|n| by_node[n]).collect();
    debug_assert!(order.iter().all(|&i| i != usize::MAX));
    let mut pos = std::collections::HashMap::with_capacity(order.len());
    for (t, &i) in order.iter().enumerate() {
        pos.insert(i, t);
    }
    let mut link = vec![false; order.len().saturating_sub(1)];
    for (t, &i) in order.iter().enumerate() {
        let (cols, vals) = b2.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            if v == 0.0 || j == i {
                continue;
            }
            let Some(&s) = pos.get(&j) else {
                if space.facet_dims()[j] == layout.counts(r).len() {
                    return Err(Error::Structure(format!("interior unknowns {i} and {j} of different patches are coupled")));
                }
                continue;
            };
            match s.abs_diff(t) {
                1 => link[t.min(s)] = true,
                _ => {
                    return Err(Error::Structure(format!(
                        "patch {r}: entry ({i}, {j}) lies {} positions off the diagonal after reordering",
                        s.abs_diff(t)
                    )))
                }
            }
        }
    }
    let mut blocks = Vec::new();
    let mut len = 0;
    for t in 0..order.len() {
        len += 1;
        if t + 1 == order.len() || !link[t] {
            blocks.push(len);
            len = 0;
        }
    }
    Ok(SubstructureOrdering { order, blocks })
}

/// Approximate `B2^{-1}`: symmetric block Gauss-Seidel alternating pointwise
/// updates of the skeleton unknowns with exact tridiagonal solves in the
/// patch interiors. One sweep is skeleton forward, interiors, skeleton
/// backward, so any number of sweeps from zero is a symmetric operator.
#[derive(Clone, Debug)]
pub struct SubstructuredSolver {
    b2: CsrMatrix,
    skeleton: Vec<usize>,
    blocks: Vec<Tridiagonal>,
    orderings: Vec<SubstructureOrdering>,
    sweeps: usize,
}

impl SubstructuredSolver {
    pub fn new(mesh: &Mesh, space: &ConformingSpace, class: &AnisotropyClassification, b2: CsrMatrix, sweeps: usize) -> Result<Self> {
        if sweeps == 0 {
            return Err(Error::InvalidParameter("the substructured solver needs at least one sweep".into()));
        }
        let diag = b2.diagonal();
        let mut blocks = Vec::new();
        let mut orderings = Vec::new();
        for r in 0..mesh.patches().len() {
            let ord = substructure_ordering(space, class, &b2, r)?;
            let mut start = 0;
            for &len in &ord.blocks {
                let ids = ord.order[start..start + len].to_vec();
                let d: Vec<f64> = ids.iter().map(|&i| diag[i]).collect();
                let off: Vec<f64> = ids.windows(2).map(|w| b2.get(w[0], w[1])).collect();
                blocks.push(Tridiagonal::factor(ids, &d, off)?);
                start += len;
            }
            orderings.push(ord);
        }
        let skeleton = space.skeleton(mesh);
        if let Some(&s) = skeleton.iter().find(|&&s| !(diag[s] > 0.0)) {
            return Err(Error::NotPositiveDefinite(format!("skeleton diagonal entry {s} is {}", diag[s])));
        }
        Ok(Self { b2, skeleton, blocks, orderings, sweeps })
    }

    pub fn orderings(&self) -> &[SubstructureOrdering] {
        &self.orderings
    }

    pub fn sweeps(&self) -> usize {
        self.sweeps
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.b2
    }

    fn relax(&self, i: usize, r: &[f64], x: &mut [f64]) {
        let (cols, vals) = self.b2.row(i);
        let mut acc = r[i];
        let mut diag = 0.0;
        for (&j, &v) in cols.iter().zip(vals) {
            if j == i {
                diag = v;
            } else {
                acc -= v * x[j];
            }
        }
        x[i] = acc / diag;
    }

    fn interiors(&self, r: &[f64], x: &mut [f64], scratch: &mut Vec<f64>) {
        for blk in &self.blocks {
            scratch.clear();
            for (t, &i) in blk.ids.iter().enumerate() {
                let (cols, vals) = self.b2.row(i);
                let mut acc = r[i];
                for (&j, &v) in cols.iter().zip(vals) {
                    let inside = j == i || (t > 0 && j == blk.ids[t - 1]) || (t + 1 < blk.ids.len() && j == blk.ids[t + 1]);
                    if !inside {
                        acc -= v * x[j];
                    }
                }
                scratch.push(acc);
            }
            blk.solve(scratch);
            for (&i, &v) in blk.ids.iter().zip(scratch.iter()) {
                x[i] = v;
            }
        }
    }

    /// Runs `sweeps` symmetric sweeps for `B2 x = r` starting from `x`.
    pub fn smooth(&self, r: &[f64], x: &mut [f64], sweeps: usize) {
        let mut scratch = Vec::new();
        for _ in 0..sweeps {
            for &s in &self.skeleton {
                self.relax(s, r, x);
            }
            self.interiors(r, x, &mut scratch);
            for &s in self.skeleton.iter().rev() {
                self.relax(s, r, x);
            }
        }
    }
}

impl LinearOperator for SubstructuredSolver {
    fn dim(&self) -> usize {
        self.b2.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        self.smooth(x, y, self.sweeps);
    }
}

/// How the second-stage smoothing problem is solved.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmootherSolve {
    Exact,
    Sweeps(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTwoOptions {
    pub alpha: f64,
    pub c_aspect: f64,
    pub c_tune: f64,
    pub smoother: SmootherSolve,
}

impl Default for StageTwoOptions {
    fn default() -> Self {
        Self { alpha: 1.2, c_aspect: 2.0, c_tune: 0.6, smoother: SmootherSolve::Sweeps(7) }
    }
}

enum B2Solve {
    Exact(Cholesky),
    Sweeps(SubstructuredSolver),
}

impl B2Solve {
    fn op(&self) -> &dyn LinearOperator {
        match self {
            B2Solve::Exact(c) => c,
            B2Solve::Sweeps(s) => s,
        }
    }
}

/// `B2^{-1} + Q A2^{-1} Q^T` on SE-CG, with `A2` the DFE-CG stiffness.
pub struct StageTwo {
    b2: B2Solve,
    transfer: StageTwoTransfer,
    a2: Cholesky,
    dfe: ConformingSpace,
    b2_matrix: CsrMatrix,
}

impl StageTwo {
    pub fn build(mesh: &Mesh, cg: &ConformingSpace, opts: &StageTwoOptions) -> Result<Self> {
        let class = AnisotropyClassification::new(cg.layout(), opts.c_aspect)?;
        let b2_matrix = assemble_b2(cg, &class, opts.c_tune)?;
        let b2 = match opts.smoother {
            SmootherSolve::Exact => B2Solve::Exact(Cholesky::factor(&b2_matrix)?),
            SmootherSolve::Sweeps(n) => B2Solve::Sweeps(SubstructuredSolver::new(mesh, cg, &class, b2_matrix.clone(), n)?),
        };
        let dfe = ConformingSpace::dfe_cg(mesh, opts.alpha)?;
        let a2 = Cholesky::factor(&multilinear_stiffness(dfe.layout()).galerkin(dfe.prolongation()))?;
        let transfer = StageTwoTransfer::new(mesh, cg, &dfe, opts.alpha)?;
        Ok(Self { b2, transfer, a2, dfe, b2_matrix })
    }

    pub fn dfe(&self) -> &ConformingSpace {
        &self.dfe
    }

    pub fn transfer(&self) -> &StageTwoTransfer {
        &self.transfer
    }

    pub fn b2(&self) -> &CsrMatrix {
        &self.b2_matrix
    }

    pub fn substructured(&self) -> Option<&SubstructuredSolver> {
        match &self.b2 {
            B2Solve::Sweeps(s) => Some(s),
            B2Solve::Exact(_) => None,
        }
    }
}

impl LinearOperator for StageTwo {
    fn dim(&self) -> usize {
        self.b2.op().dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.b2.op().apply(x, y);
        let coarse = self.a2.solve(&self.transfer.q_transpose(x));
        for (yi, ci) in y.iter_mut().zip(self.transfer.q(&coarse)) {
            *yi += ci;
        }
    }
}

/// How the first-stage auxiliary (SE-CG) problem is solved.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum InnerSolve {
    /// Sparse Cholesky of the SE-CG stiffness.
    Direct,
    /// One application of the second-stage preconditioner.
    StageTwo,
    /// Conjugate gradients preconditioned by stage two.
    StageTwoCg { tol: f64, max_it: usize },
}

/// Unknown count up to which the SE-CG problem is factored directly.
pub const DIRECT_LIMIT: usize = 20_000;

impl InnerSolve {
    /// Direct up to [`DIRECT_LIMIT`] unknowns, otherwise stage-two CG to `1e-10`.
    pub fn for_size(n: usize) -> Self {
        if n <= DIRECT_LIMIT {
            InnerSolve::Direct
        } else {
            InnerSolve::StageTwoCg { tol: 1e-10, max_it: 2000 }
        }
    }
}

/// Solver for the SE-CG stiffness inside stage one.
pub enum Inner {
    Direct(Cholesky),
    StageTwo(StageTwo),
    StageTwoCg { stage: StageTwo, matrix: CsrMatrix, tol: f64, max_it: usize },
}

impl Inner {
    pub fn build(mesh: &Mesh, cg: &ConformingSpace, a1: &CsrMatrix, how: InnerSolve, stage2: &StageTwoOptions) -> Result<Self> {
        Ok(match how {
            InnerSolve::Direct => Inner::Direct(Cholesky::factor(a1)?),
            InnerSolve::StageTwo => Inner::StageTwo(StageTwo::build(mesh, cg, stage2)?),
            InnerSolve::StageTwoCg { tol, max_it } => {
                if max_it == 0 || !(tol > 0.0) {
                    return Err(Error::InvalidParameter("inner CG needs a positive tolerance and at least one iteration".into()));
                }
                Inner::StageTwoCg { stage: StageTwo::build(mesh, cg, stage2)?, matrix: a1.clone(), tol, max_it }
            }
        })
    }
}

impl LinearOperator for Inner {
    fn dim(&self) -> usize {
        match self {
            Inner::Direct(c) => c.dim(),
            Inner::StageTwo(s) => s.dim(),
            Inner::StageTwoCg { matrix, .. } => matrix.nrows(),
        }
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        match self {
            Inner::Direct(c) => LinearOperator::apply(c, x, y),
            Inner::StageTwo(s) => s.apply(x, y),
            Inner::StageTwoCg { stage, matrix, tol, max_it } => match pcg(matrix, stage, x, *tol, *max_it) {
                Ok(out) => y.copy_from_slice(&out.solution),
                // a failed inner solve poisons the outer iteration, which reports it
                Err(_) => y.iter_mut().for_each(|v| *v = f64::NAN),
            },
        }
    }
}

/// The first-stage preconditioner `B1^{-1} + P C_inner P^T`.
pub struct StageOne {
    b1: DiagonalInverse,
    prolongation: CsrMatrix,
    inner: Inner,
}

impl StageOne {
    pub fn new(b1_diag: &[f64], cg: &ConformingSpace, inner: Inner) -> Result<Self> {
        let b1 = DiagonalInverse::new(b1_diag)?;
        let prolongation = cg.prolongation().clone();
        if prolongation.nrows() != b1.dim() || prolongation.ncols() != inner.dim() {
            return Err(Error::Config("stage-one ingredients live on different spaces".into()));
        }
        Ok(Self { b1, prolongation, inner })
    }

    pub fn inner(&self) -> &Inner {
        &self.inner
    }
}

impl LinearOperator for StageOne {
    fn dim(&self) -> usize {
        self.b1.dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        AdditiveSchwarz { smoother: &self.b1, transfer: Some(&self.prolongation), auxiliary: &self.inner }.apply(x, y)
    }
}
