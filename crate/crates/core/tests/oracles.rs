//! Assembled operators checked against independently computed references:
//! frozen exact values for tiny cases, and brute-force quadrature of analytic
//! polynomials for random pairs on one- and two-patch meshes.

use dgasm::assembly::{assemble_dg, multilinear_stiffness, DgForm, Quadrature};
use dgasm::auxiliary::{assemble_b1, StageOneWeights};
use dgasm::dyadic::{dyadic_generate, DyadicPartition, OrderedGrid};
use dgasm::lgl::{reference_lgl, Interval, LglRule};
use dgasm::mesh::Mesh;
use dgasm::space::{linear_interp, polynomial_interp, BrokenLayout, NodeFamily};
use dgasm::sparse::CsrMatrix;

mod common;

use common::{meshes, random_pair_deviation, volume_deviation};

fn unit_square(p: usize) -> Mesh {
    let iv = Interval::new(0.0, 1.0).unwrap();
    Mesh::tensor(&[iv, iv], &[1, 1], |_| vec![p, p]).unwrap()
}

fn assert_matrix(a: &CsrMatrix, expect: &[[f64; 4]; 4], tol: f64) {
    for i in 0..4 {
        for j in 0..4 {
            let got = a.get(i, j);
            assert!((got - expect[i][j]).abs() <= tol * expect[i][j].abs().max(1.0), "entry ({i},{j}): {got} vs {}", expect[i][j]);
        }
    }
}

// Frozen from exact symbolic integration of the bilinear Q1 basis on [0,1]^2,
// gamma = 3, omega = 4 on every boundary face.
#[test]
fn q1_single_patch_exact_form() {
    let mesh = unit_square(1);
    let layout = BrokenLayout::lgl(&mesh).unwrap();
    let a = assemble_dg(&mesh, &layout, DgForm { gamma: 3.0, quadrature: Quadrature::Exact, consistency: true }).unwrap();
    let (d, e, c) = (22.0 / 3.0, 13.0 / 6.0, 1.0 / 3.0);
    assert_matrix(&a, &[[d, e, e, c], [e, d, c, e], [e, c, d, e], [c, e, e, d]], 1e-12);
}

#[test]
fn q1_single_patch_reduced_form() {
    let mesh = unit_square(1);
    let layout = BrokenLayout::lgl(&mesh).unwrap();
    let a = assemble_dg(&mesh, &layout, DgForm { gamma: 3.0, quadrature: Quadrature::Exact, consistency: false }).unwrap();
    let (d, e, c) = (26.0 / 3.0, 11.0 / 6.0, -1.0 / 3.0);
    assert_matrix(&a, &[[d, e, e, c], [e, d, c, e], [e, c, d, e], [c, e, e, d]], 1e-12);
}

// Same basis with the trapezoidal (degree-one LGL) rule in volume and on faces.
#[test]
fn q1_single_patch_ni_form() {
    let mesh = unit_square(1);
    let layout = BrokenLayout::lgl(&mesh).unwrap();
    let a = assemble_dg(&mesh, &layout, DgForm::ni(3.0)).unwrap();
    assert_matrix(&a, &[[11.0, 0.5, 0.5, 0.0], [0.5, 11.0, 0.0, 0.5], [0.5, 0.0, 11.0, 0.5], [0.0, 0.5, 0.5, 11.0]], 1e-12);
}

#[test]
fn cubic_interpolant_of_quartic_at_origin() {
    // Vandermonde solve on {-1, -1/sqrt5, 1/sqrt5, 1}: p(x) = -1/5 + 6/5 x^2
    let rule = LglRule::new(3, Interval::reference()).unwrap();
    let samples: Vec<f64> = rule.nodes().iter().map(|x| x.powi(4)).collect();
    let v = rule.interpolate(&samples, &[0.0, 0.5]).unwrap();
    assert!((v[0] + 0.2).abs() < 1e-14, "{}", v[0]);
    assert!((v[1] - (-0.2 + 1.2 * 0.25)).abs() < 1e-14);
}

#[test]
fn lgl_rule_is_inexact_beyond_its_degree() {
    let rule = LglRule::new(2, Interval::reference()).unwrap();
    assert!((rule.quadrature(|x| x.powi(4)) - 2.0 / 3.0).abs() < 1e-15);
}

#[test]
fn piecewise_linear_reconstruction_of_square() {
    let m = linear_interp(&[-1.0, 0.0, 1.0], &[0.5]).unwrap();
    let v: f64 = (0..3).map(|j| m[(0, j)] * [1.0, 0.0, 1.0][j]).sum();
    assert!((v - 0.5).abs() < 1e-15);
}

#[test]
fn polynomial_transfer_reproduces_quadratics() {
    let (g2, _) = reference_lgl(2).unwrap();
    let (g4, _) = reference_lgl(4).unwrap();
    let m = polynomial_interp(&g2, &g4).unwrap();
    for (i, &x) in g4.iter().enumerate() {
        let v: f64 = g2.iter().enumerate().map(|(j, &y)| m[(i, j)] * y * y).sum();
        assert!((v - x * x).abs() < 1e-12);
    }
}

#[test]
fn lgl_to_identical_dyadic_grid_is_identity() {
    let iv = Interval::new(0.0, 1.0).unwrap();
    let grid = OrderedGrid::new(LglRule::new(2, iv).unwrap().nodes().to_vec()).unwrap();
    let d = dyadic_generate(&grid, &DyadicPartition::trivial(iv), 1.0).unwrap();
    assert_eq!(d.nodes(), vec![0.0, 0.5, 1.0]);
    let k = linear_interp(&d.nodes(), grid.points()).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            assert_eq!(k[(i, j)], if i == j { 1.0 } else { 0.0 });
        }
    }
}

#[test]
fn dg_ni_form_matches_lgl_quadrature_oracle() {
    let dev = random_pair_deviation(DgForm::ni(3.0), 20);
    assert!(dev <= 1e-11, "{dev}");
}

#[test]
fn dg_exact_form_matches_gauss_oracle() {
    let dev = random_pair_deviation(DgForm { gamma: 3.0, quadrature: Quadrature::Exact, consistency: true }, 20);
    assert!(dev <= 1e-11, "{dev}");
}

#[test]
fn reduced_forms_match_oracle() {
    for quadrature in [Quadrature::Exact, Quadrature::Lgl] {
        let dev = random_pair_deviation(DgForm { gamma: 2.5, quadrature, consistency: false }, 20);
        assert!(dev <= 1e-11, "{quadrature:?}: {dev}");
    }
}

#[test]
fn volume_stiffness_matches_oracle() {
    for q in [Quadrature::Lgl, Quadrature::Exact] {
        let dev = volume_deviation(q, 5);
        assert!(dev <= 1e-11, "{q:?}: {dev}");
    }
}

#[test]
fn stage_one_smoother_matches_weight_formula() {
    let mesh = meshes().remove(1);
    let layout = BrokenLayout::lgl(&mesh).unwrap();
    let w = StageOneWeights { beta1: 0.4, rho1: 0.7, c1sq: 10.0, gamma: 3.0 };
    let b1 = assemble_b1(&mesh, &layout, &w).unwrap();
    for r in 0..layout.patch_count() {
        let patch = mesh.patch(r);
        let rules: Vec<_> = (0..2).map(|k| LglRule::new(patch.degrees[k], patch.interval(k)).unwrap()).collect();
        for (local, &got) in b1[layout.offset(r)..layout.offset(r) + layout.patch_len(r)].iter().enumerate() {
            let m = dgasm::tensor::multi_index(layout.counts(r), local);
            let (wx, wy) = (rules[0].weights()[m[0]], rules[1].weights()[m[1]]);
            let mut expect = w.c1sq * (wy / wx + wx / wy);
            let pt = layout.coords(r, &m);
            for face in mesh.faces().filter(|f| f.patches().any(|s| s == r)) {
                let k = face.normal().unwrap();
                if (pt[k] - face.lower[k]).abs() < 1e-14 {
                    let wf = if k == 0 { wy } else { wx };
                    expect += w.gamma * w.rho1 * mesh.face_weight(face.id) * wf;
                }
            }
            expect *= w.beta1;
            assert!((got - expect).abs() <= 1e-13 * expect, "patch {r} node {local}: {got} vs {expect}");
        }
    }
}

#[test]
fn multilinear_stiffness_matches_bilinear_oracle() {
    // degree 2 gives the dyadic grid {0, 1/2, 1}: four square cells, and the
    // bilinear element matrix has diagonal 2/3 and off-diagonals -1/6, -1/6, -1/3
    let mesh = unit_square(2);
    let layout = BrokenLayout::new(&mesh, NodeFamily::Dyadic { alpha: 1.2 }).unwrap();
    assert_eq!(layout.grid(0, 0), [0.0, 0.5, 1.0]);
    let k = multilinear_stiffness(&layout);
    assert!((k.get(4, 4) - 8.0 / 3.0).abs() < 1e-13);
    for j in [0, 1, 2, 3, 5, 6, 7, 8] {
        assert!((k.get(4, j) + 1.0 / 3.0).abs() < 1e-13, "{j}: {}", k.get(4, j));
    }
    assert!((k.get(0, 0) - 2.0 / 3.0).abs() < 1e-13);
    assert!((k.get(0, 1) + 1.0 / 6.0).abs() < 1e-13);
    assert_eq!(k.get(0, 2), 0.0);
}
