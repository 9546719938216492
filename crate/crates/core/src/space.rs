//! Degree-of-freedom layouts for the three discrete spaces.
//!
//! * SE-DG: one LGL tensor lattice per patch, no coupling ([`BrokenLayout`]).
//! * SE-CG: continuous piecewise polynomials on the LGL lattices.
//! * DFE-CG: continuous piecewise multilinears on the dyadic lattices.
//!
//! Both conforming spaces use the same construction. A degree of freedom is a
//! node of the lattice of `R#(F)` lying in the relative interior of a facet `F`
//! not on the boundary. Values on the other patches incident to `F` are
//! obtained by interpolating the trace of `R#(F)`: polynomially for SE-CG,
//! piecewise linearly for DFE-CG (the dyadic families are nested, so the
//! coarser side's grid is contained in the finer one). The prolongation
//! `P` maps degrees of freedom to the broken per-patch vector.

use std::collections::BTreeMap;

use faer::Mat;

use crate::dyadic::family_member;
use crate::error::{Error, Result};
use crate::lgl::{lagrange_matrix, Interval, LglRule};
use crate::mesh::{interior_code, pattern_code, pattern_digits, Mesh};
use crate::sparse::{CsrMatrix, TripletBuilder};
use crate::tensor::{linear_index, multi_index};

/// Which one-dimensional node set a patch carries per direction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NodeFamily {
    Lgl,
    Dyadic { alpha: f64 },
}

/// How traces of the carrying patch are extended to its neighbours.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TraceInterpolation {
    Polynomial,
    PiecewiseLinear,
}

/// Per-patch tensor lattices laid out patch after patch.
#[derive(Clone, Debug)]
pub struct BrokenLayout {
    family: NodeFamily,
    grids: Vec<Vec<Vec<f64>>>,
    counts: Vec<Vec<usize>>,
    offsets: Vec<usize>,
}

/// One-dimensional nodes of `family` for degree `p` on `iv`.
pub fn family_nodes(family: NodeFamily, p: usize, iv: Interval) -> Result<Vec<f64>> {
    match family {
        NodeFamily::Lgl => Ok(LglRule::new(p, iv)?.nodes().to_vec()),
        NodeFamily::Dyadic { alpha } => Ok(family_member(p, alpha)?.mapped(iv).nodes()),
    }
}

impl BrokenLayout {
    pub fn new(mesh: &Mesh, family: NodeFamily) -> Result<Self> {
        let mut grids = Vec::with_capacity(mesh.patches().len());
        let mut counts = Vec::with_capacity(mesh.patches().len());
        let mut offsets = vec![0];
        for r in mesh.patches() {
            let g: Vec<Vec<f64>> =
                (0..mesh.dim()).map(|k| family_nodes(family, r.degrees[k], r.interval(k))).collect::<Result<_>>()?;
            let c: Vec<usize> = g.iter().map(Vec::len).collect();
            offsets.push(offsets.last().unwrap() + c.iter().product::<usize>());
            grids.push(g);
            counts.push(c);
        }
        Ok(Self { family, grids, counts, offsets })
    }

    pub fn lgl(mesh: &Mesh) -> Result<Self> {
        Self::new(mesh, NodeFamily::Lgl)
    }

    pub fn family(&self) -> NodeFamily {
        self.family
    }

    pub fn dim(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn patch_count(&self) -> usize {
        self.grids.len()
    }

    pub fn offset(&self, r: usize) -> usize {
        self.offsets[r]
    }

    pub fn patch_len(&self, r: usize) -> usize {
        self.offsets[r + 1] - self.offsets[r]
    }

    pub fn counts(&self, r: usize) -> &[usize] {
        &self.counts[r]
    }

    pub fn grid(&self, r: usize, k: usize) -> &[f64] {
        &self.grids[r][k]
    }

    pub fn coords(&self, r: usize, multi: &[usize]) -> Vec<f64> {
        multi.iter().enumerate().map(|(k, &i)| self.grids[r][k][i]).collect()
    }

    /// Nodal values of `f` on every lattice.
    pub fn sample(&self, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim());
        for r in 0..self.patch_count() {
            for local in 0..self.patch_len(r) {
                out.push(f(&self.coords(r, &multi_index(&self.counts[r], local))));
            }
        }
        out
    }
}

/// A conforming degree of freedom: node `node` of patch `patch`, interior to `facet`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dof {
    pub facet: usize,
    pub patch: usize,
    pub node: usize,
}

/// SE-CG or DFE-CG with its prolongation into the broken layout.
#[derive(Clone, Debug)]
pub struct ConformingSpace {
    layout: BrokenLayout,
    interpolation: TraceInterpolation,
    dofs: Vec<Dof>,
    prolongation: CsrMatrix,
    selection: CsrMatrix,
    patch_interior: Vec<Vec<usize>>,
    facet_dim: Vec<usize>,
}

impl ConformingSpace {
    pub fn se_cg(mesh: &Mesh) -> Result<Self> {
        Self::build(mesh, BrokenLayout::lgl(mesh)?, TraceInterpolation::Polynomial)
    }

    pub fn dfe_cg(mesh: &Mesh, alpha: f64) -> Result<Self> {
        Self::build(mesh, BrokenLayout::new(mesh, NodeFamily::Dyadic { alpha })?, TraceInterpolation::PiecewiseLinear)
    }

    pub fn build(mesh: &Mesh, layout: BrokenLayout, interpolation: TraceInterpolation) -> Result<Self> {
        let d = mesh.dim();
        let mut dofs = Vec::new();
        let mut carrier = vec![usize::MAX; layout.dim()];
        let mut patch_interior = Vec::with_capacity(mesh.patches().len());

        let mut add = |dofs: &mut Vec<Dof>, facet: usize, patch: usize, node: usize| {
            carrier[layout.offset(patch) + node] = dofs.len();
            dofs.push(Dof { facet, patch, node });
            dofs.len() - 1
        };

        for r in 0..mesh.patches().len() {
            let f = mesh.patch_facet(r, interior_code(d));
            let counts = layout.counts(r);
            let mut ids = Vec::new();
            for local in 0..layout.patch_len(r) {
                let m = multi_index(counts, local);
                if m.iter().zip(counts).all(|(&i, &n)| i > 0 && i + 1 < n) {
                    ids.push(add(&mut dofs, f, r, local));
                }
            }
            patch_interior.push(ids);
        }
        for l in (0..d).rev() {
            for f in mesh.facets().iter().filter(|f| f.dim() == l && !f.boundary) {
                let s = f.sharp;
                let digits = pattern_digits(f.pattern_in(s).expect("sharp patch is incident"), d);
                let counts = layout.counts(s);
                for local in 0..layout.patch_len(s) {
                    let m = multi_index(counts, local);
                    let on_facet = (0..d).all(|k| match digits[k] {
                        0 => m[k] == 0,
                        2 => m[k] + 1 == counts[k],
                        _ => m[k] > 0 && m[k] + 1 < counts[k],
                    });
                    if on_facet {
                        add(&mut dofs, f.id, s, local);
                    }
                }
            }
        }

        let mut ex = Expander { mesh, layout: &layout, interpolation, carrier: &carrier, memo: vec![None; layout.dim()] };
        let mut pb = TripletBuilder::new(layout.dim(), dofs.len());
        for r in 0..mesh.patches().len() {
            for local in 0..layout.patch_len(r) {
                let row = layout.offset(r) + local;
                for (dof, w) in ex.expand(r, local)? {
                    pb.push(row, dof, w);
                }
            }
        }
        let prolongation = pb.build();
        let mut sb = TripletBuilder::new(dofs.len(), layout.dim());
        for (i, dof) in dofs.iter().enumerate() {
            sb.push(i, layout.offset(dof.patch) + dof.node, 1.0);
        }
        let selection = sb.build();
        let facet_dim = dofs.iter().map(|dof| mesh.facet(dof.facet).dim()).collect();
        Ok(Self { layout, interpolation, dofs, prolongation, selection, patch_interior, facet_dim })
    }

    pub fn ndofs(&self) -> usize {
        self.dofs.len()
    }

    pub fn layout(&self) -> &BrokenLayout {
        &self.layout
    }

    pub fn interpolation(&self) -> TraceInterpolation {
        self.interpolation
    }

    pub fn dofs(&self) -> &[Dof] {
        &self.dofs
    }

    /// Broken-layout values of a conforming function: `P u`.
    pub fn prolongation(&self) -> &CsrMatrix {
        &self.prolongation
    }

    /// Picks the carrying node of every degree of freedom from a broken vector.
    pub fn selection(&self) -> &CsrMatrix {
        &self.selection
    }

    /// Degrees of freedom interior to patch `r`, in lattice order.
    pub fn patch_interior(&self, r: usize) -> &[usize] {
        &self.patch_interior[r]
    }

    /// Dimension of the facet carrying each degree of freedom.
    pub fn facet_dims(&self) -> &[usize] {
        &self.facet_dim
    }

    /// Degrees of freedom on edges, faces and vertices between patches.
    pub fn skeleton(&self, mesh: &Mesh) -> Vec<usize> {
        (0..self.ndofs()).filter(|&i| self.facet_dim[i] < mesh.dim()).collect()
    }

    /// Nodal interpolant of `f` (its values at the carrying nodes).
    pub fn interpolate(&self, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        self.dofs
            .iter()
            .map(|dof| {
                let m = multi_index(self.layout.counts(dof.patch), dof.node);
                f(&self.layout.coords(dof.patch, &m))
            })
            .collect()
    }
}

struct Expander<'a> {
    mesh: &'a Mesh,
    layout: &'a BrokenLayout,
    interpolation: TraceInterpolation,
    carrier: &'a [usize],
    memo: Vec<Option<Vec<(usize, f64)>>>,
}

impl Expander<'_> {
    /// The value at node `local` of patch `r` as a combination of degrees of freedom.
    fn expand(&mut self, r: usize, local: usize) -> Result<Vec<(usize, f64)>> {
        let gi = self.layout.offset(r) + local;
        if let Some(v) = &self.memo[gi] {
            return Ok(v.clone());
        }
        let d = self.mesh.dim();
        let counts = self.layout.counts(r).to_vec();
        let m = multi_index(&counts, local);
        let digits: Vec<u8> = (0..d)
            .map(|k| if m[k] == 0 { 0 } else if m[k] + 1 == counts[k] { 2 } else { 1 })
            .collect();
        let facet = self.mesh.facet(self.mesh.patch_facet(r, pattern_code(&digits)));
        let out = if facet.boundary {
            Vec::new()
        } else if self.carrier[gi] != usize::MAX {
            vec![(self.carrier[gi], 1.0)]
        } else {
            let s = facet.sharp;
            let sd = pattern_digits(facet.pattern_in(s).expect("sharp patch is incident"), d);
            let sc = self.layout.counts(s).to_vec();
            let x = self.layout.coords(r, &m);
            // per-direction (index, weight) lists on the carrying lattice
            let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(d);
            for k in 0..d {
                rows.push(match sd[k] {
                    0 => vec![(0, 1.0)],
                    2 => vec![(sc[k] - 1, 1.0)],
                    _ => basis_row(self.layout.grid(s, k), x[k], self.interpolation)?,
                });
            }
            let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
            let mut idx = vec![0usize; d];
            'outer: loop {
                let w: f64 = (0..d).map(|k| rows[k][idx[k]].1).product();
                let node: Vec<usize> = (0..d).map(|k| rows[k][idx[k]].0).collect();
                for (dof, v) in self.expand(s, linear_index(&sc, &node))? {
                    *acc.entry(dof).or_insert(0.0) += w * v;
                }
                for k in 0..d {
                    idx[k] += 1;
                    if idx[k] < rows[k].len() {
                        continue 'outer;
                    }
                    idx[k] = 0;
                }
                break;
            }
            acc.into_iter().filter(|&(_, v)| v != 0.0).collect()
        };
        self.memo[gi] = Some(out.clone());
        Ok(out)
    }
}

/// Nonzero basis-function values at `x` for the nodes `grid`.
fn basis_row(grid: &[f64], x: f64, interp: TraceInterpolation) -> Result<Vec<(usize, f64)>> {
    match interp {
        TraceInterpolation::Polynomial => {
            let l = lagrange_matrix(grid, &[x])?;
            Ok((0..grid.len()).map(|j| (j, l[(0, j)])).filter(|&(_, v)| v != 0.0).collect())
        }
        TraceInterpolation::PiecewiseLinear => Ok(hat_row(grid, x)?.into_iter().filter(|&(_, v)| v != 0.0).collect()),
    }
}

fn hat_row(grid: &[f64], x: f64) -> Result<Vec<(usize, f64)>> {
    let n = grid.len();
    let iv = Interval { lo: grid[0], hi: grid[n - 1] };
    if !iv.contains(x) {
        return Err(Error::OutOfDomain { x, lo: iv.lo, hi: iv.hi });
    }
    if let Some(j) = grid.iter().position(|&g| g == x) {
        return Ok(vec![(j, 1.0)]);
    }
    let x = x.clamp(iv.lo, iv.hi);
    let j = grid.partition_point(|&g| g <= x).clamp(1, n - 1);
    let t = (x - grid[j - 1]) / (grid[j] - grid[j - 1]);
    Ok(vec![(j - 1, 1.0 - t), (j, t)])
}

/// Polynomial interpolation from `nodes` evaluated at `points`.
pub fn polynomial_interp(nodes: &[f64], points: &[f64]) -> Result<Mat<f64>> {
    lagrange_matrix(nodes, points)
}

/// Piecewise-linear interpolation on the ordered grid `nodes`, evaluated at `points`.
pub fn linear_interp(nodes: &[f64], points: &[f64]) -> Result<Mat<f64>> {
    if nodes.len() < 2 || nodes.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidGrid("piecewise-linear interpolation needs an increasing grid".into()));
    }
    let mut m = Mat::zeros(points.len(), nodes.len());
    for (q, &x) in points.iter().enumerate() {
        for (j, v) in hat_row(nodes, x)? {
            m[(q, j)] = v;
        }
    }
    Ok(m)
}

/// The composite map taking LGL nodal values to the dyadic nodal values of
/// their piecewise-linear interpolant.
pub fn composite_lgl_to_dyadic(lgl: &[f64], dyadic: &[f64]) -> Result<Mat<f64>> {
    linear_interp(lgl, dyadic)
}

/// Row selection of `subset` (a subset of `nodes`, both increasing).
pub fn restriction(nodes: &[f64], subset: &[f64]) -> Result<Mat<f64>> {
    let mut m = Mat::zeros(subset.len(), nodes.len());
    for (q, &x) in subset.iter().enumerate() {
        let j = nodes
            .iter()
            .position(|&g| g == x)
            .ok_or_else(|| Error::InvalidGrid(format!("{x} is not a node of the finer grid")))?;
        m[(q, j)] = 1.0;
    }
    Ok(m)
}
