//! Matrices of the symmetric interior penalty form and of the auxiliary
//! conforming problems.
//!
//! Volume terms use LGL quadrature per patch, which makes the mass lumped and
//! the stiffness a sum of one-dimensional stiffness matrices tensorized with
//! diagonal weights. Face integrals use the LGL grid of the componentwise
//! maximal tangential degree of the two sides; each side's trace is evaluated
//! there by polynomial interpolation. On an interior face with lower side `R-`
//! the jump is `u- - u+` and the flux average is `(d_k u- + d_k u+) / 2`; on a
//! boundary face the jump is the trace and the flux the outward derivative.

use faer::Mat;

use crate::error::{Error, Result};
use crate::lgl::{differentiation_matrix, gauss_legendre, lagrange_matrix, mass_matrix, Interval, LglRule};
use crate::mesh::{pattern_digits, Mesh};
use crate::space::BrokenLayout;
use crate::sparse::{kron, CsrMatrix, TripletBuilder};
use crate::tensor::{kron_all, linear_index, multi_index};

/// How integrals are evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Quadrature {
    /// LGL quadrature on the patch grids and on the face grids.
    Lgl,
    /// Exact integration of the polynomial integrands.
    Exact,
}

/// Which terms of the interior penalty form to assemble.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DgForm {
    pub gamma: f64,
    pub quadrature: Quadrature,
    /// Include the symmetric consistency terms `-({grad u}, [v]) - ({grad v}, [u])`.
    pub consistency: bool,
}

impl DgForm {
    pub fn ni(gamma: f64) -> Self {
        Self { gamma, quadrature: Quadrature::Lgl, consistency: true }
    }
}

/// LGL rules of every patch and direction.
pub fn patch_rules(mesh: &Mesh) -> Result<Vec<Vec<LglRule>>> {
    mesh.patches()
        .iter()
        .map(|r| (0..mesh.dim()).map(|k| LglRule::new(r.degrees[k], r.interval(k))).collect())
        .collect()
}

fn check_lgl_layout(mesh: &Mesh, layout: &BrokenLayout) -> Result<()> {
    for r in mesh.patches() {
        let want: Vec<usize> = r.node_counts();
        if layout.counts(r.id) != want.as_slice() {
            return Err(Error::DimensionMismatch { expected: want.iter().product(), got: layout.patch_len(r.id) });
        }
    }
    Ok(())
}

/// Lattice matrix of `A_0 ⊗ ... ⊗ A_{d-1}` (direction 0 fastest) from sparse factors.
fn lattice_kron(factors: &[CsrMatrix]) -> CsrMatrix {
    let mut acc = CsrMatrix::identity(1);
    for f in factors {
        acc = kron(f, &acc);
    }
    acc
}

/// Per-patch `sum_k (D_k^T W_k D_k) ⊗ (weights or masses in the other directions)`.
pub fn patch_stiffness(rules: &[LglRule], quadrature: Quadrature) -> Result<CsrMatrix> {
    let d = rules.len();
    let mut one_d_stiff = Vec::with_capacity(d);
    let mut one_d_mass = Vec::with_capacity(d);
    for rule in rules {
        let dm = differentiation_matrix(rule.nodes());
        let w = rule.weights();
        let n = w.len();
        let s = Mat::from_fn(n, n, |i, j| (0..n).map(|q| dm[(q, i)] * w[q] * dm[(q, j)]).sum());
        one_d_stiff.push(CsrMatrix::from_dense(&s, 0.0));
        one_d_mass.push(match quadrature {
            Quadrature::Lgl => CsrMatrix::diagonal_matrix(w),
            Quadrature::Exact => CsrMatrix::from_dense(&mass_matrix(rule.nodes())?, 0.0),
        });
    }
    let mut total: Option<CsrMatrix> = None;
    for k in 0..d {
        let factors: Vec<CsrMatrix> =
            (0..d).map(|j| if j == k { one_d_stiff[j].clone() } else { one_d_mass[j].clone() }).collect();
        let term = lattice_kron(&factors);
        total = Some(match total {
            None => term,
            Some(t) => t.add(1.0, &term, 1.0),
        });
    }
    Ok(total.expect("at least one direction"))
}

/// Block diagonal of the patch stiffness matrices on the LGL layout.
pub fn volume_stiffness(mesh: &Mesh, layout: &BrokenLayout, quadrature: Quadrature) -> Result<CsrMatrix> {
    check_lgl_layout(mesh, layout)?;
    let rules = patch_rules(mesh)?;
    let mut b = TripletBuilder::new(layout.dim(), layout.dim());
    for (r, rr) in rules.iter().enumerate() {
        let off = layout.offset(r);
        for (i, j, v) in patch_stiffness(rr, quadrature)?.triplets() {
            b.push(off + i, off + j, v);
        }
    }
    Ok(b.build())
}

struct Side {
    /// Lattice index of the face along the normal.
    end: usize,
    /// +1 on the lower side of an interior face (or on a boundary face), -1 on the upper side.
    jump_sign: f64,
    /// Coefficient of the side's normal derivative in the flux.
    flux_coef: f64,
    /// Broken-vector index of each volume node, `[m][t]` with `m` along the normal.
    vol: Vec<Vec<usize>>,
    /// Derivative along the normal at the face, per normal index `m`.
    dnormal: Vec<f64>,
    /// Tangential trace operators to the face quadrature grid, per free direction.
    trace: Vec<Mat<f64>>,
}

/// The interior penalty matrix on the broken LGL layout.
pub fn assemble_dg(mesh: &Mesh, layout: &BrokenLayout, form: DgForm) -> Result<CsrMatrix> {
    if !(form.gamma > 0.0) {
        return Err(Error::InvalidParameter(format!("penalty gamma must be positive, got {}", form.gamma)));
    }
    check_lgl_layout(mesh, layout)?;
    let d = mesh.dim();
    let volume = volume_stiffness(mesh, layout, form.quadrature)?;
    let mut b = TripletBuilder::new(layout.dim(), layout.dim());

    for face in mesh.faces() {
        let k = face.normal().expect("faces have a normal");
        let free = &face.free;
        let omega = mesh.face_weight(face.id);
        // face quadrature per tangential direction
        let mut quad_nodes = Vec::with_capacity(free.len());
        let mut quad_weights = Vec::with_capacity(free.len());
        for &j in free {
            let pstar = face.patches().map(|r| mesh.patch(r).degrees[j]).max().unwrap();
            let iv = Interval::new(face.lower[j], face.upper[j])?;
            let (x, w) = match form.quadrature {
                Quadrature::Lgl => {
                    let rule = LglRule::new(pstar, iv)?;
                    (rule.nodes().to_vec(), rule.weights().to_vec())
                }
                Quadrature::Exact => gauss_legendre(pstar + 1, iv)?,
            };
            quad_nodes.push(x);
            quad_weights.push(w);
        }

        let interior = face.incidence.len() == 2;
        let mut sides = Vec::with_capacity(2);
        for &(r, code) in &face.incidence {
            let digits = pattern_digits(code, d);
            let counts = layout.counts(r);
            let nk = counts[k];
            let upper_face = digits[k] == 2;
            let e = if upper_face { nk - 1 } else { 0 };
            let (jump_sign, flux_coef) = if interior {
                (if upper_face { 1.0 } else { -1.0 }, 0.5)
            } else {
                (1.0, if upper_face { 1.0 } else { -1.0 })
            };
            let rule_k = LglRule::new(mesh.patch(r).degrees[k], mesh.patch(r).interval(k))?;
            let dm = differentiation_matrix(rule_k.nodes());
            let tcounts: Vec<usize> = free.iter().map(|&j| counts[j]).collect();
            let nt: usize = tcounts.iter().product();
            let off = layout.offset(r);
            let vol = (0..nk)
                .map(|m| {
                    (0..nt)
                        .map(|t| {
                            let tm = multi_index(&tcounts, t);
                            let mut full = vec![0usize; d];
                            full[k] = m;
                            for (a, &j) in free.iter().enumerate() {
                                full[j] = tm[a];
                            }
                            off + linear_index(counts, &full)
                        })
                        .collect()
                })
                .collect();
            let trace = free
                .iter()
                .enumerate()
                .map(|(a, &j)| lagrange_matrix(layout.grid(r, j), &quad_nodes[a]))
                .collect::<Result<Vec<_>>>()?;
            sides.push(Side { end: e, jump_sign, flux_coef, vol, dnormal: (0..nk).map(|m| dm[(e, m)]).collect(), trace });
        }
        if interior && sides[0].jump_sign < 0.0 {
            sides.swap(0, 1);
        }

        for s in &sides {
            let es = s.end;
            for t in &sides {
                let et = t.end;
                // X = Tr_s^T W Tr_t on the face lattices
                let per_dir: Vec<Mat<f64>> = (0..free.len())
                    .map(|a| {
                        let (ts, tt, w) = (&s.trace[a], &t.trace[a], &quad_weights[a]);
                        Mat::from_fn(ts.ncols(), tt.ncols(), |i, j| {
                            (0..w.len()).map(|q| ts[(q, i)] * w[q] * tt[(q, j)]).sum()
                        })
                    })
                    .collect();
                let x = kron_all(&per_dir);
                let pen = form.gamma * omega * s.jump_sign * t.jump_sign;
                for i in 0..x.nrows() {
                    for j in 0..x.ncols() {
                        let v = x[(i, j)];
                        if v == 0.0 {
                            continue;
                        }
                        b.push(s.vol[es][i], t.vol[et][j], pen * v);
                        if form.consistency {
                            // -(flux of s) * (jump of t) and its transpose
                            let c = -s.flux_coef * t.jump_sign * v;
                            for (m, &dn) in s.dnormal.iter().enumerate() {
                                if dn != 0.0 {
                                    b.push(s.vol[m][i], t.vol[et][j], c * dn);
                                    b.push(t.vol[et][j], s.vol[m][i], c * dn);
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    let faces = b.build();
    Ok(volume.add(1.0, &faces, 1.0).symmetrized())
}

/// The full form with LGL quadrature.
pub fn assemble_dg_ni(mesh: &Mesh, layout: &BrokenLayout, gamma: f64) -> Result<CsrMatrix> {
    assemble_dg(mesh, layout, DgForm::ni(gamma))
}

/// Volume and penalty terms only.
pub fn assemble_reduced(mesh: &Mesh, layout: &BrokenLayout, gamma: f64, quadrature: Quadrature) -> Result<CsrMatrix> {
    assemble_dg(mesh, layout, DgForm { gamma, quadrature, consistency: false })
}

/// LGL right-hand side `f(xi) w_xi`.
pub fn rhs_ni(mesh: &Mesh, layout: &BrokenLayout, f: impl Fn(&[f64]) -> f64) -> Result<Vec<f64>> {
    check_lgl_layout(mesh, layout)?;
    let rules = patch_rules(mesh)?;
    let mut out = Vec::with_capacity(layout.dim());
    for (r, rr) in rules.iter().enumerate() {
        let counts = layout.counts(r);
        for local in 0..layout.patch_len(r) {
            let m = multi_index(counts, local);
            let w: f64 = (0..mesh.dim()).map(|k| rr[k].weights()[m[k]]).product();
            out.push(f(&layout.coords(r, &m)) * w);
        }
    }
    Ok(out)
}

/// One-dimensional piecewise-linear stiffness and consistent mass on `nodes`.
pub fn linear_element_matrices(nodes: &[f64]) -> (CsrMatrix, CsrMatrix) {
    let n = nodes.len();
    let mut s = TripletBuilder::new(n, n);
    let mut m = TripletBuilder::new(n, n);
    for c in 0..n - 1 {
        let h = nodes[c + 1] - nodes[c];
        for (a, b, sv, mv) in [(c, c, 1.0, 2.0), (c, c + 1, -1.0, 1.0), (c + 1, c, -1.0, 1.0), (c + 1, c + 1, 1.0, 2.0)] {
            s.push(a, b, sv / h);
            m.push(a, b, mv * h / 6.0);
        }
    }
    (s.build(), m.build())
}

/// Block diagonal of the exact multilinear stiffness on each patch lattice.
pub fn multilinear_stiffness(layout: &BrokenLayout) -> CsrMatrix {
    let mut b = TripletBuilder::new(layout.dim(), layout.dim());
    for r in 0..layout.patch_count() {
        let d = layout.counts(r).len();
        let mats: Vec<(CsrMatrix, CsrMatrix)> = (0..d).map(|k| linear_element_matrices(layout.grid(r, k))).collect();
        let off = layout.offset(r);
        for k in 0..d {
            let factors: Vec<CsrMatrix> =
                (0..d).map(|j| if j == k { mats[j].0.clone() } else { mats[j].1.clone() }).collect();
            for (i, j, v) in lattice_kron(&factors).triplets() {
                b.push(off + i, off + j, v);
            }
        }
    }
    b.build()
}
