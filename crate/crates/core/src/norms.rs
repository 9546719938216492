//! Error measurement of broken solutions in the DG energy norm
//! `sum_R |grad v|^2_R + gamma sum_F omega_F |[v]|^2_F`, with boundary
//! faces carrying the trace as jump.

use faer::Mat;

use crate::error::{Error, Result};
use crate::lgl::{differentiation_matrix, gauss_legendre, lagrange_matrix};
use crate::mesh::Mesh;
use crate::space::BrokenLayout;
use crate::tensor::multi_index;

/// Per-direction tables of a patch: basis values and derivatives at Gauss points.
struct PatchEval {
    points: Vec<Vec<f64>>,
    weights: Vec<Vec<f64>>,
    values: Vec<Mat<f64>>,
    derivs: Vec<Mat<f64>>,
}

fn patch_eval(mesh: &Mesh, layout: &BrokenLayout, r: usize, extra: usize) -> Result<PatchEval> {
    let patch = mesh.patch(r);
    let mut out = PatchEval { points: vec![], weights: vec![], values: vec![], derivs: vec![] };
    for k in 0..mesh.dim() {
        let nodes = layout.grid(r, k);
        let (x, w) = gauss_legendre(patch.degrees[k] + 1 + extra, patch.interval(k))?;
        let l = lagrange_matrix(nodes, &x)?;
        out.derivs.push(&l * differentiation_matrix(nodes));
        out.values.push(l);
        out.points.push(x);
        out.weights.push(w);
    }
    Ok(out)
}

/// Value and (optionally) gradient of a patch polynomial, reading the basis
/// factor of direction `k` from row `rows[k]` of `tables[k]`.
fn eval_at(coeffs: &[f64], counts: &[usize], tables: &[&Mat<f64>], rows: &[usize], grad_tables: Option<&[Mat<f64>]>) -> (f64, Vec<f64>) {
    let d = counts.len();
    let mut val = 0.0;
    let mut grad = vec![0.0; d];
    for (j, &c) in coeffs.iter().enumerate() {
        let m = multi_index(counts, j);
        let f: Vec<f64> = (0..d).map(|k| tables[k][(rows[k], m[k])]).collect();
        val += c * f.iter().product::<f64>();
        if let Some(g) = grad_tables {
            for k in 0..d {
                let mut t = c * g[k][(rows[k], m[k])];
                for l in (0..d).filter(|&l| l != k) {
                    t *= f[l];
                }
                grad[k] += t;
            }
        }
    }
    (val, grad)
}

/// DG-norm of `uh - u` for a broken coefficient vector `uh` on `layout`, using
/// Gauss rules `extra` points richer than the element degree.
pub fn dg_norm_error(
    mesh: &Mesh,
    layout: &BrokenLayout,
    uh: &[f64],
    gamma: f64,
    extra: usize,
    u: impl Fn(&[f64]) -> f64,
    grad_u: impl Fn(&[f64]) -> Vec<f64>,
) -> Result<f64> {
    if uh.len() != layout.dim() {
        return Err(Error::DimensionMismatch { expected: layout.dim(), got: uh.len() });
    }
    let d = mesh.dim();
    let evals: Vec<PatchEval> = (0..mesh.patches().len()).map(|r| patch_eval(mesh, layout, r, extra)).collect::<Result<_>>()?;
    let coeffs = |r: usize| &uh[layout.offset(r)..layout.offset(r) + layout.patch_len(r)];

    let mut volume = 0.0;
    for (r, ev) in evals.iter().enumerate() {
        let qcounts: Vec<usize> = ev.points.iter().map(Vec::len).collect();
        let tables: Vec<&Mat<f64>> = ev.values.iter().collect();
        for q in 0..qcounts.iter().product() {
            let m = multi_index(&qcounts, q);
            let x: Vec<f64> = (0..d).map(|k| ev.points[k][m[k]]).collect();
            let w: f64 = (0..d).map(|k| ev.weights[k][m[k]]).product();
            let (_, g) = eval_at(coeffs(r), layout.counts(r), &tables, &m, Some(&ev.derivs));
            let ge = grad_u(&x);
            volume += w * (0..d).map(|k| (g[k] - ge[k]).powi(2)).sum::<f64>();
        }
    }

    let mut faces = 0.0;
    for face in mesh.faces() {
        let k = face.normal().expect("faces have a normal direction");
        let sides: Vec<usize> = face.patches().collect();
        // Gauss rule on the face fine enough for the richer side
        let deg = face.free.iter().map(|&j| sides.iter().map(|&r| mesh.patch(r).degrees[j]).max().unwrap()).collect::<Vec<_>>();
        let rules: Vec<(Vec<f64>, Vec<f64>)> = face
            .free
            .iter()
            .zip(&deg)
            .map(|(&j, &p)| gauss_legendre(p + 1 + extra, mesh.patch(sides[0]).interval(j)))
            .collect::<Result<_>>()?;
        let counts: Vec<usize> = rules.iter().map(|r| r.0.len()).collect();
        let xk = face.lower[k];
        let mut side_tables = Vec::new();
        for &r in &sides {
            let mut t = Vec::with_capacity(d);
            let mut fi = 0;
            for j in 0..d {
                if j == k {
                    t.push(lagrange_matrix(layout.grid(r, j), &[xk])?);
                } else {
                    t.push(lagrange_matrix(layout.grid(r, j), &rules[fi].0)?);
                    fi += 1;
                }
            }
            side_tables.push(t);
        }
        let mut sum = 0.0;
        for q in 0..counts.iter().product() {
            let m = multi_index(&counts, q);
            let mut x = vec![xk; d];
            let mut rows = vec![0; d];
            let mut w = 1.0;
            for (fi, &j) in face.free.iter().enumerate() {
                x[j] = rules[fi].0[m[fi]];
                rows[j] = m[fi];
                w *= rules[fi].1[m[fi]];
            }
            let exact = u(&x);
            let err: Vec<f64> = sides
                .iter()
                .zip(&side_tables)
                .map(|(&r, t)| {
                    let tr: Vec<&Mat<f64>> = t.iter().collect();
                    eval_at(coeffs(r), layout.counts(r), &tr, &rows, None).0 - exact
                })
                .collect();
            let jump = if err.len() == 2 { err[0] - err[1] } else { err[0] };
            sum += w * jump * jump;
        }
        faces += mesh.face_weight(face.id) * sum;
    }
    Ok((volume + gamma * faces).sqrt())
}
