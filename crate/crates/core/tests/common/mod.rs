//! Brute-force reference implementations shared by the integration tests.

#![allow(dead_code)]

use dgasm::assembly::{assemble_dg, volume_stiffness, DgForm, Quadrature};
use dgasm::lgl::{gauss_legendre, reference_lgl, Interval};
use dgasm::mesh::Mesh;
use dgasm::space::BrokenLayout;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A polynomial given by monomial coefficients in `x - center`.
#[derive(Clone)]
pub struct Poly {
    center: [f64; 2],
    coef: Vec<Vec<f64>>, // coef[a][b] of (x-cx)^a (y-cy)^b
}

impl Poly {
    pub fn random(rng: &mut impl Rng, deg: &[usize], center: [f64; 2]) -> Self {
        let coef = (0..=deg[0]).map(|_| (0..=deg[1]).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        Self { center, coef }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let (s, t) = (x[0] - self.center[0], x[1] - self.center[1]);
        let mut v = 0.0;
        for (a, row) in self.coef.iter().enumerate() {
            for (b, c) in row.iter().enumerate() {
                v += c * s.powi(a as i32) * t.powi(b as i32);
            }
        }
        v
    }

    pub fn grad(&self, x: &[f64]) -> [f64; 2] {
        let (s, t) = (x[0] - self.center[0], x[1] - self.center[1]);
        let mut g = [0.0; 2];
        for (a, row) in self.coef.iter().enumerate() {
            for (b, c) in row.iter().enumerate() {
                if a > 0 {
                    g[0] += c * a as f64 * s.powi(a as i32 - 1) * t.powi(b as i32);
                }
                if b > 0 {
                    g[1] += c * b as f64 * s.powi(a as i32) * t.powi(b as i32 - 1);
                }
            }
        }
        g
    }
}

/// One-dimensional rule on `iv` for the requested oracle.
pub fn rule(q: Quadrature, p: usize, iv: Interval) -> (Vec<f64>, Vec<f64>) {
    match q {
        Quadrature::Exact => gauss_legendre(p + 3, iv).unwrap(),
        Quadrature::Lgl => {
            let (x, w) = reference_lgl(p).unwrap();
            let h = iv.len() / 2.0;
            (x.iter().map(|&t| iv.lo + h * (t + 1.0)).collect(), w.iter().map(|&w| w * h).collect())
        }
    }
}

/// Brute-force interior penalty form of broken polynomials `u`, `v` (one per patch).
pub fn oracle_form(mesh: &Mesh, form: DgForm, u: &[Poly], v: &[Poly]) -> f64 {
    let mut total = 0.0;
    for (r, patch) in mesh.patches().iter().enumerate() {
        let (x0, w0) = rule(form.quadrature, patch.degrees[0], patch.interval(0));
        let (x1, w1) = rule(form.quadrature, patch.degrees[1], patch.interval(1));
        for (a, &xa) in x0.iter().enumerate() {
            for (b, &yb) in x1.iter().enumerate() {
                let (gu, gv) = (u[r].grad(&[xa, yb]), v[r].grad(&[xa, yb]));
                total += w0[a] * w1[b] * (gu[0] * gv[0] + gu[1] * gv[1]);
            }
        }
    }
    for face in mesh.faces() {
        let k = face.normal().unwrap();
        let j = 1 - k;
        let sides: Vec<usize> = face.patches().collect();
        let pstar = sides.iter().map(|&r| mesh.patch(r).degrees[j]).max().unwrap();
        let (xs, ws) = rule(form.quadrature, pstar, Interval::new(face.lower[j], face.upper[j]).unwrap());
        // side below the face in direction k gets orientation +1
        let orient = |r: usize| if mesh.patch(r).upper[k] <= face.lower[k] + 1e-12 { 1.0 } else { -1.0 };
        for (q, &s) in xs.iter().enumerate() {
            let mut pt = [0.0; 2];
            pt[k] = face.lower[k];
            pt[j] = s;
            let (mut ju, mut jv, mut du, mut dv) = (0.0, 0.0, 0.0, 0.0);
            for &r in &sides {
                ju += orient(r) * u[r].eval(&pt);
                jv += orient(r) * v[r].eval(&pt);
                du += u[r].grad(&pt)[k] / sides.len() as f64;
                dv += v[r].grad(&pt)[k] / sides.len() as f64;
            }
            let mut t = form.gamma * mesh.face_weight(face.id) * ju * jv;
            if form.consistency {
                t -= du * jv + dv * ju;
            }
            total += ws[q] * t;
        }
    }
    total
}

pub fn meshes() -> Vec<Mesh> {
    let i01 = Interval::new(0.0, 1.0).unwrap();
    let i13 = Interval::new(0.0, 2.0).unwrap();
    vec![
        Mesh::tensor(&[i01, i13], &[1, 1], |_| vec![3, 4]).unwrap(),
        Mesh::tensor(&[i13, i01], &[2, 1], |m| if m[0] == 0 { vec![2, 3] } else { vec![4, 2] }).unwrap(),
        Mesh::tensor(&[i01, i13], &[1, 2], |m| if m[1] == 0 { vec![4, 4] } else { vec![1, 3] }).unwrap(),
    ]
}

/// Worst relative deviation of `u^T A v` from the oracle over random broken
/// polynomial pairs on the meshes of [`meshes`].
pub fn random_pair_deviation(form: DgForm, pairs: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for mesh in meshes() {
        let layout = BrokenLayout::lgl(&mesh).unwrap();
        let a = assemble_dg(&mesh, &layout, form).unwrap();
        for _ in 0..pairs {
            let mut mk = || -> Vec<Poly> {
                mesh.patches()
                    .iter()
                    .map(|p| Poly::random(&mut rng, &p.degrees, [(p.lower[0] + p.upper[0]) / 2.0, (p.lower[1] + p.upper[1]) / 2.0]))
                    .collect()
            };
            let (u, v) = (mk(), mk());
            let (uu, vv) = (sample(&layout, &u), sample(&layout, &v));
            let got: f64 = uu.iter().zip(a.mul_vec(&vv)).map(|(x, y)| x * y).sum();
            let expect = oracle_form(&mesh, form, &u, &v);
            let scale = (oracle_form(&mesh, form, &u, &u).abs() * oracle_form(&mesh, form, &v, &v).abs()).sqrt();
            worst = worst.max((got - expect).abs() / scale.max(expect.abs()));
        }
    }
    worst
}

/// Nodal values of per-patch polynomials on a broken layout.
pub fn sample(layout: &BrokenLayout, w: &[Poly]) -> Vec<f64> {
    let mut out = Vec::with_capacity(layout.dim());
    for r in 0..layout.patch_count() {
        let counts = layout.counts(r).to_vec();
        for local in 0..layout.patch_len(r) {
            out.push(w[r].eval(&layout.coords(r, &dgasm::tensor::multi_index(&counts, local))));
        }
    }
    out
}

/// Worst relative deviation of `u^T K u` for the volume stiffness `K` from
/// the oracle over random broken polynomials.
pub fn volume_deviation(quadrature: Quadrature, samples: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let form = DgForm { gamma: 0.0, quadrature, consistency: false };
    let mut worst = 0.0f64;
    for mesh in meshes() {
        let layout = BrokenLayout::lgl(&mesh).unwrap();
        let k = volume_stiffness(&mesh, &layout, quadrature).unwrap();
        for _ in 0..samples {
            let u: Vec<Poly> = mesh.patches().iter().map(|p| Poly::random(&mut rng, &p.degrees, [0.0, 0.0])).collect();
            let uu = sample(&layout, &u);
            let got: f64 = uu.iter().zip(k.mul_vec(&uu)).map(|(x, y)| x * y).sum();
            let expect = oracle_form(&mesh, form, &u, &u);
            worst = worst.max((got - expect).abs() / expect.abs());
        }
    }
    worst
}
