//! Transfer operators between the three discrete spaces.
//!
//! The first stage transfers SE-DG to SE-CG by reading every conforming degree
//! of freedom off its carrying patch (the selection of [`ConformingSpace`]).
//!
//! The second stage localizes to the vertices of each patch with the
//! multilinear hats `Phi_z` and moves between the dyadic and the LGL lattices
//! at the reduced degree `p*_z`, whose `k`-th entry is the direction-`k`
//! degree of the carrying patch of the edge through `z` parallel to `k`.
//! Every chain is a product of one-dimensional maps, so each patch operator is
//! a sum of `2^d` Kronecker products and is applied without being formed:
//!
//! ```text
//! Q_R  = sum_z  (x)_k  Poly(G*->G) Lin(D*->G*) Restr(D->D*) diag(phi_zk on D)
//! Q~_R = sum_z  (x)_k  Lin(D*->D) Lin(G*->D*) diag(phi_zk on G*) Poly(G->G*)
//! ```
//!
//! with `G`, `D` the LGL and dyadic grids of the patch degree and `G*`, `D*`
//! those of `p*_z`.

use faer::Mat;

use crate::dyadic::family_member;
use crate::error::{Error, Result};
use crate::lgl::{lagrange_matrix, LglRule};
use crate::mesh::{pattern_code, Mesh};
use crate::space::{linear_interp, polynomial_interp, restriction, BrokenLayout, ConformingSpace, NodeFamily};
use crate::sparse::CsrMatrix;
use crate::tensor::{multi_index, KronSum};

/// Vertex `z` of a patch given by its corner bits (1 = upper end) with its reduced degrees.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VertexLocalization {
    pub corner: Vec<u8>,
    pub reduced: Vec<usize>,
}

/// The `2^d` vertex localizations of patch `r`.
pub fn vertex_localizations(mesh: &Mesh, r: usize) -> Vec<VertexLocalization> {
    let d = mesh.dim();
    (0..1usize << d)
        .map(|bits| {
            let corner: Vec<u8> = (0..d).map(|k| ((bits >> k) & 1) as u8).collect();
            let reduced = (0..d)
                .map(|k| {
                    let digits: Vec<u8> = (0..d).map(|j| if j == k { 1 } else { 2 * corner[j] }).collect();
                    let edge = mesh.facet(mesh.patch_facet(r, pattern_code(&digits)));
                    mesh.patch(edge.sharp).degrees[k]
                })
                .collect();
            VertexLocalization { corner, reduced }
        })
        .collect()
}

fn hat_values(points: &[f64], lo: f64, hi: f64, upper: bool) -> Vec<f64> {
    points.iter().map(|&x| if upper { (x - lo) / (hi - lo) } else { (hi - x) / (hi - lo) }).collect()
}

fn scale_cols(m: &Mat<f64>, s: &[f64]) -> Mat<f64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * s[j])
}

fn scale_rows(m: &Mat<f64>, s: &[f64]) -> Mat<f64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * s[i])
}

/// The two patch operators for every patch of the mesh.
#[derive(Clone, Debug)]
pub struct PatchTransfers {
    /// Dyadic lattice to LGL lattice.
    pub q: Vec<KronSum>,
    /// LGL lattice to dyadic lattice.
    pub qtilde: Vec<KronSum>,
}

impl PatchTransfers {
    pub fn build(mesh: &Mesh, alpha: f64) -> Result<Self> {
        let d = mesh.dim();
        let mut q = Vec::with_capacity(mesh.patches().len());
        let mut qtilde = Vec::with_capacity(mesh.patches().len());
        for patch in mesh.patches() {
            let r = patch.id;
            let ivs: Vec<_> = (0..d).map(|k| patch.interval(k)).collect();
            let g: Vec<Vec<f64>> = (0..d).map(|k| Ok(LglRule::new(patch.degrees[k], ivs[k])?.nodes().to_vec())).collect::<Result<_>>()?;
            let dy: Vec<Vec<f64>> = (0..d).map(|k| Ok(family_member(patch.degrees[k], alpha)?.mapped(ivs[k]).nodes())).collect::<Result<_>>()?;
            let gl: Vec<usize> = g.iter().map(Vec::len).collect();
            let dl: Vec<usize> = dy.iter().map(Vec::len).collect();
            let mut qr = KronSum::new(dl.clone(), gl.clone());
            let mut qtr = KronSum::new(gl, dl);
            for z in vertex_localizations(mesh, r) {
                let mut fq = Vec::with_capacity(d);
                let mut fqt = Vec::with_capacity(d);
                for k in 0..d {
                    let (lo, hi) = (ivs[k].lo, ivs[k].hi);
                    let upper = z.corner[k] == 1;
                    let gs = LglRule::new(z.reduced[k], ivs[k])?.nodes().to_vec();
                    let ds = family_member(z.reduced[k], alpha)?.mapped(ivs[k]).nodes();
                    let to_reduced = restriction(&dy[k], &ds)?;
                    let lin_d_g = linear_interp(&ds, &gs)?;
                    let poly_up = polynomial_interp(&gs, &g[k])?;
                    let m = &poly_up * (&lin_d_g * &to_reduced);
                    fq.push(scale_cols(&m, &hat_values(&dy[k], lo, hi, upper)));

                    let poly_down = polynomial_interp(&g[k], &gs)?;
                    let localized = scale_rows(&poly_down, &hat_values(&gs, lo, hi, upper));
                    let lin_g_d = linear_interp(&gs, &ds)?;
                    let lin_d_d = linear_interp(&ds, &dy[k])?;
                    fqt.push(&lin_d_d * (&lin_g_d * &localized));
                }
                qr.push(fq)?;
                qtr.push(fqt)?;
            }
            q.push(qr);
            qtilde.push(qtr);
        }
        Ok(Self { q, qtilde })
    }
}

/// The second-stage transfers as operators between conforming spaces.
///
/// `Q` maps DFE-CG to SE-CG; its transpose is used for the auxiliary
/// correction so that the preconditioner stays symmetric. `Q~` maps SE-CG to
/// DFE-CG.
#[derive(Clone, Debug)]
pub struct StageTwoTransfer {
    patches: PatchTransfers,
    lgl: ConformingSpace,
    dyadic: ConformingSpace,
}

fn apply_blocks(blocks: &[KronSum], from: &BrokenLayout, to: &BrokenLayout, x: &[f64], transpose: bool) -> Vec<f64> {
    let mut y = vec![0.0; to.dim()];
    for (r, b) in blocks.iter().enumerate() {
        let xs = &x[from.offset(r)..from.offset(r) + from.patch_len(r)];
        let ys = &mut y[to.offset(r)..to.offset(r) + to.patch_len(r)];
        if transpose {
            b.apply_transpose_add(xs, ys);
        } else {
            b.apply_add(xs, ys);
        }
    }
    y
}

impl StageTwoTransfer {
    pub fn new(mesh: &Mesh, lgl: &ConformingSpace, dyadic: &ConformingSpace, alpha: f64) -> Result<Self> {
        if lgl.layout().family() != NodeFamily::Lgl || dyadic.layout().family() != (NodeFamily::Dyadic { alpha }) {
            return Err(Error::Config("second-stage transfer needs an LGL space and a dyadic space of the same alpha".into()));
        }
        if lgl.layout().patch_count() != mesh.patches().len() || dyadic.layout().patch_count() != mesh.patches().len() {
            return Err(Error::Config("spaces were built on a different mesh".into()));
        }
        Ok(Self { patches: PatchTransfers::build(mesh, alpha)?, lgl: lgl.clone(), dyadic: dyadic.clone() })
    }

    pub fn patches(&self) -> &PatchTransfers {
        &self.patches
    }

    /// Broken LGL values of `Q x` for DFE-CG coefficients `x`.
    pub fn q_broken(&self, x: &[f64]) -> Vec<f64> {
        let u = self.dyadic.prolongation().mul_vec(x);
        apply_blocks(&self.patches.q, self.dyadic.layout(), self.lgl.layout(), &u, false)
    }

    /// SE-CG coefficients of `Q x`.
    pub fn q(&self, x: &[f64]) -> Vec<f64> {
        self.lgl.selection().mul_vec(&self.q_broken(x))
    }

    /// `Q^T y` for SE-CG coefficients `y`.
    pub fn q_transpose(&self, y: &[f64]) -> Vec<f64> {
        let w = self.lgl.selection().mul_vec_transposed(y);
        let u = apply_blocks(&self.patches.q, self.lgl.layout(), self.dyadic.layout(), &w, true);
        self.dyadic.prolongation().mul_vec_transposed(&u)
    }

    /// Broken dyadic values of `Q~ v` for SE-CG coefficients `v`.
    pub fn qtilde_broken(&self, v: &[f64]) -> Vec<f64> {
        let u = self.lgl.prolongation().mul_vec(v);
        apply_blocks(&self.patches.qtilde, self.lgl.layout(), self.dyadic.layout(), &u, false)
    }

    /// DFE-CG coefficients of `Q~ v`.
    pub fn qtilde(&self, v: &[f64]) -> Vec<f64> {
        self.dyadic.selection().mul_vec(&self.qtilde_broken(v))
    }

    /// `Q` as a dense matrix (tests and small dumps only).
    pub fn q_dense(&self) -> Mat<f64> {
        let n = self.dyadic.ndofs();
        let m = self.lgl.ndofs();
        let mut out = Mat::zeros(m, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            for (i, v) in self.q(&e).into_iter().enumerate() {
                out[(i, j)] = v;
            }
            e[j] = 0.0;
        }
        out
    }
}

/// The first-stage transfer from SE-DG to SE-CG: the carrying-node selection.
pub fn stage_one_qtilde(space: &ConformingSpace) -> CsrMatrix {
    space.selection().clone()
}

/// Largest difference between the two traces of a broken vector across any
/// interior face, sampled on the union of both sides' face grids.
///
/// Traces are evaluated polynomially on LGL layouts and piecewise linearly on
/// dyadic layouts.
pub fn max_interface_jump(mesh: &Mesh, layout: &BrokenLayout, v: &[f64]) -> Result<f64> {
    let d = mesh.dim();
    let mut worst = 0.0f64;
    for face in mesh.faces().filter(|f| !f.boundary) {
        let k = face.normal().expect("faces have a normal");
        let sides: Vec<usize> = face.patches().collect();
        if sides.len() != 2 {
            continue;
        }
        // union of tangential grids per free direction
        let mut pts: Vec<Vec<f64>> = Vec::new();
        for &j in &face.free {
            let mut all: Vec<f64> = sides.iter().flat_map(|&r| layout.grid(r, j).to_vec()).collect();
            all.sort_by(f64::total_cmp);
            all.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * (1.0 + b.abs()));
            pts.push(all);
        }
        let mut traces = Vec::with_capacity(2);
        for &r in &sides {
            let counts = layout.counts(r);
            let end = if face.pattern_in(r).map(|c| crate::mesh::pattern_digits(c, d)[k]) == Some(0) { 0 } else { counts[k] - 1 };
            let tcounts: Vec<usize> = face.free.iter().map(|&j| counts[j]).collect();
            let n: usize = tcounts.iter().product();
            let mut trace = Vec::with_capacity(n);
            for t in 0..n {
                let tm = multi_index(&tcounts, t);
                let mut m = vec![0; d];
                m[k] = end;
                for (i, &j) in face.free.iter().enumerate() {
                    m[j] = tm[i];
                }
                trace.push(v[layout.offset(r) + crate::tensor::linear_index(counts, &m)]);
            }
            let out: Vec<usize> = pts.iter().map(Vec::len).collect();
            let mut op = KronSum::new(tcounts.clone(), out);
            let factors = face
                .free
                .iter()
                .zip(&pts)
                .map(|(&j, p)| match layout.family() {
                    NodeFamily::Lgl => lagrange_matrix(layout.grid(r, j), p),
                    NodeFamily::Dyadic { .. } => linear_interp(layout.grid(r, j), p),
                })
                .collect::<Result<Vec<_>>>()?;
            op.push(factors)?;
            traces.push(op.apply(&trace));
        }
        for (a, b) in traces[0].iter().zip(&traces[1]) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok(worst)
}
