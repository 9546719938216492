//! Randomized and swept invariants of the discretization and preconditioners.

use dgasm::assembly::{assemble_dg_ni, assemble_reduced, volume_stiffness, Quadrature};
use dgasm::auxiliary::{assemble_b2, AnisotropyClassification};
use dgasm::dyadic::{check_local_equivalence, family_member, DyadicFamily, OrderedGrid};
use dgasm::experiment::{run_sweep, scenario_mesh, to_csv, ExperimentConfig};
use dgasm::krylov::{estimate_condition, pcg, LanczosOptions, LinearOperator};
use dgasm::lgl::{differentiation_matrix, gauss_legendre, mass_matrix, reference_lgl, Interval, LglRule};
use dgasm::mesh::{Mesh, Patch};
use dgasm::precond::{SmootherSolve, StageTwo, StageTwoOptions};
use dgasm::space::{linear_interp, BrokenLayout, ConformingSpace};
use dgasm::sparse::CsrMatrix;
use dgasm::transfer::{max_interface_jump, StageTwoTransfer};
use faer::{Mat, Side};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cfg(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, ..ProptestConfig::default() }
}

fn legendre_series(coef: &[f64], x: f64) -> f64 {
    let (mut p0, mut p1) = (1.0, x);
    let mut v = coef[0];
    for (n, c) in coef.iter().enumerate().skip(1) {
        v += c * p1;
        let p2 = ((2 * n + 1) as f64 * x * p1 - n as f64 * p0) / (n + 1) as f64;
        p0 = p1;
        p1 = p2;
    }
    v
}

proptest! {
    #![proptest_config(cfg(64))]

    #[test]
    fn lgl_quadrature_exact_to_degree_2p_minus_1(p in 1usize..=32, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rule = LglRule::new(p, Interval::reference()).unwrap();
        // nonnegative monomial coefficients: the exact integral has no cancellation
        let c: Vec<f64> = (0..2 * p).map(|_| rng.gen_range(0.0..1.0)).collect();
        let exact: f64 = c.iter().enumerate().filter(|(k, _)| k % 2 == 0).map(|(k, c)| 2.0 * c / (k + 1) as f64).sum();
        let quad = rule.quadrature(|x| c.iter().rev().fold(0.0, |acc, c| acc * x + c));
        prop_assert!((quad - exact).abs() <= 1e-11 * exact.abs());
    }

    #[test]
    fn discrete_norm_within_band(p in 1usize..=32, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let iv = Interval::new(-0.5, 2.0).unwrap();
        let rule = LglRule::new(p, iv).unwrap();
        let c: Vec<f64> = (0..=p).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let f = |x: f64| legendre_series(&c, iv.to_reference(x));
        let discrete = rule.quadrature(|x| f(x) * f(x)).sqrt();
        let (gx, gw) = gauss_legendre(p + 1, iv).unwrap();
        let exact = gx.iter().zip(&gw).map(|(&x, w)| w * f(x) * f(x)).sum::<f64>().sqrt();
        let ratio = discrete / exact;
        prop_assert!(ratio >= 1.0 - 1e-12 && ratio <= 3f64.sqrt() + 1e-10, "ratio {ratio}");
    }

    #[test]
    fn dyadic_partitions_are_fixed_points(p in 1usize..=64, ai in 0usize..3) {
        let alpha = [1.0, 1.2, 1.5][ai];
        let d = family_member(p, alpha).unwrap();
        let (g, _) = reference_lgl(p).unwrap();
        let nodes = d.nodes();
        for c in nodes.windows(2) {
            let largest = g.windows(2).filter(|i| i[1] > c[0] && i[0] < c[1]).map(|i| i[1] - i[0]).fold(0.0, f64::max);
            prop_assert!(c[1] - c[0] <= alpha * largest * (1.0 + 1e-14));
        }
        // symmetric grids give symmetric partitions
        let n = nodes.len();
        for i in 0..n {
            prop_assert!((nodes[i] + nodes[n - 1 - i]).abs() < 1e-14);
        }
        // Against the largest grid cell it meets, each dyadic cell is within alpha
        // (checked above). Over all meeting pairs the ratio |I|/|D| is smaller but
        // p-independent: observed minima 0.43, 0.36, 0.18 for alpha 1.0, 1.2, 1.5.
        let (lo, _) = check_local_equivalence(&OrderedGrid::new(g).unwrap(), &d.grid());
        prop_assert!(lo >= 0.15, "A = {lo}");
    }

    #[test]
    fn perturbed_corner_is_rejected(which in 0usize..4, dx in 0.01f64..0.4) {
        let iv = Interval::new(0.0, 1.0).unwrap();
        let mesh = Mesh::tensor(&[iv, iv], &[2, 2], |_| vec![2, 2]).unwrap();
        let mut patches: Vec<Patch> = mesh.patches().to_vec();
        patches[which].upper[0] += dx;
        prop_assert!(Mesh::new(patches).is_err());
    }

    #[test]
    fn selection_inverts_prolongation_and_traces_agree(p0 in 1usize..6, p1 in 1usize..6, p2 in 1usize..6, dyadic in any::<bool>(), seed in any::<u64>()) {
        let iv = Interval::new(0.0, 3.0).unwrap();
        let degs = [p0, p1, p2];
        let mesh = Mesh::tensor(&[iv, Interval::new(0.0, 1.0).unwrap()], &[3, 1], |m| vec![degs[m[0]], degs[(m[0] + 1) % 3]]).unwrap();
        let space = if dyadic { ConformingSpace::dfe_cg(&mesh, 1.2).unwrap() } else { ConformingSpace::se_cg(&mesh).unwrap() };
        let sp = space.selection().matmul(space.prolongation());
        for i in 0..space.ndofs() {
            for j in 0..space.ndofs() {
                let id = if i == j { 1.0 } else { 0.0 };
                prop_assert!((sp.get(i, j) - id).abs() < 1e-13);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..space.ndofs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v = space.prolongation().mul_vec(&x);
        prop_assert!(max_interface_jump(&mesh, space.layout(), &v).unwrap() < 1e-12);
    }

    #[test]
    fn linear_interpolation_onto_subgrid_is_h1_stable(n in 2usize..30, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fine: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        fine.extend([0.0, 1.0]);
        fine.sort_by(f64::total_cmp);
        fine.dedup();
        let coarse: Vec<f64> = fine.iter().enumerate().filter(|(i, _)| i % 2 == 0 || *i == fine.len() - 1).map(|(_, &x)| x).collect();
        let v: Vec<f64> = fine.iter().map(|_| rng.gen_range(-1.0..1.0)).collect();
        let semi = |g: &[f64], u: &[f64]| g.windows(2).zip(u.windows(2)).map(|(x, u)| (u[1] - u[0]).powi(2) / (x[1] - x[0])).sum::<f64>();
        // sample the fine piecewise-linear function at the coarse nodes
        let m = linear_interp(&fine, &coarse).unwrap();
        let vc: Vec<f64> = (0..coarse.len()).map(|i| (0..fine.len()).map(|j| m[(i, j)] * v[j]).sum()).collect();
        prop_assert!(semi(&coarse, &vc) <= semi(&fine, &v) * (1.0 + 1e-10));
    }
}

#[test]
fn lgl_weight_and_spacing_ratios_are_bounded() {
    // the adjacent-weight ratio saturates near 6.16 and h_j / w_j stays in [0.59, 3.67]
    for p in 1..=64 {
        let (x, w) = reference_lgl(p).unwrap();
        let ratio = w.windows(2).map(|w| (w[0] / w[1]).max(w[1] / w[0])).fold(1.0, f64::max);
        assert!(ratio <= 6.2, "p={p}: {ratio}");
        for j in 0..p {
            let h = x[j + 1] - x[j];
            for wj in [w[j], w[j + 1]] {
                assert!((0.25..=4.0).contains(&(h / wj)), "p={p} j={j}: {}", h / wj);
            }
        }
    }
}

#[test]
fn refined_inverse_inequality_constant_is_p_independent() {
    // largest generalized eigenvalue of (stiffness, diag(1/w)); it saturates near 9.6
    let mut last = 0.0;
    for p in [1, 2, 4, 8, 16, 32, 48, 64] {
        let (x, w) = reference_lgl(p).unwrap();
        let d = differentiation_matrix(&x);
        let m = mass_matrix(&x).unwrap();
        let k = d.transpose() * &m * &d;
        let s = Mat::<f64>::from_fn(p + 1, p + 1, |i, j| w[i].sqrt() * k[(i, j)] * w[j].sqrt());
        let ev = s.self_adjoint_eigen(Side::Lower).unwrap();
        let c = (0..=p).map(|i| ev.S()[i]).fold(0.0, f64::max);
        assert!(c <= 10.0, "p={p}: {c}");
        assert!(c >= last - 1e-9, "not monotone at p={p}");
        last = c;
    }
}

#[test]
fn dyadic_families_are_nested() {
    for alpha in [1.0, 1.2, 1.5] {
        let fam = DyadicFamily::build(64, alpha).unwrap();
        for p in 2..=64 {
            assert!(fam.get(p).unwrap().refines(fam.get(p - 1).unwrap()), "alpha={alpha} p={p}");
        }
    }
}

#[test]
fn facet_lattice_is_closed() {
    let mesh = scenario_mesh(&[2, 3, 4, 5, 6, 7, 8, 9, 10]).unwrap();
    for f in mesh.facets() {
        for g in mesh.facets() {
            let inside = g.dim() + 1 == f.dim() && (0..2).all(|k| g.lower[k] >= f.lower[k] && g.upper[k] <= f.upper[k]);
            if inside {
                for r in f.patches() {
                    assert!(g.patches().any(|s| s == r), "facet {} of {} misses patch {r}", g.id, f.id);
                }
            }
        }
    }
}

fn dense_min_max(a: &CsrMatrix, b: &CsrMatrix) -> (f64, f64) {
    // generalized eigenvalues of (a, b) through b^(-1/2)
    let (ad, bd) = (a.to_dense(), b.to_dense());
    let n = ad.nrows();
    let eb = bd.self_adjoint_eigen(Side::Lower).unwrap();
    let (sb, ub) = (eb.S(), eb.U());
    let half = Mat::<f64>::from_fn(n, n, |i, j| (0..n).map(|l| ub[(i, l)] * ub[(j, l)] / sb[l].sqrt()).sum());
    let s = &half * &ad * &half;
    let s = Mat::<f64>::from_fn(n, n, |i, j| 0.5 * (s[(i, j)] + s[(j, i)]));
    let ev = s.self_adjoint_eigen(Side::Lower).unwrap();
    (ev.S()[0], ev.S()[n - 1])
}

#[test]
fn dg_form_is_symmetric_and_coercive_in_the_dg_norm() {
    // the reduced form is the DG-norm Gramian
    let mut mins = Vec::new();
    for p in [2, 4, 6] {
        let mesh = scenario_mesh(&[p, 2 * p, p, 2 * p, p, 2 * p, p, 2 * p, p]).unwrap();
        let layout = BrokenLayout::lgl(&mesh).unwrap();
        let a = assemble_dg_ni(&mesh, &layout, 3.0).unwrap();
        assert!(a.is_symmetric(0.0));
        let g = assemble_reduced(&mesh, &layout, 3.0, Quadrature::Lgl).unwrap();
        let (lo, _) = dense_min_max(&a, &g);
        assert!(lo > 0.05, "p={p}: {lo}");
        mins.push(lo);
    }
    assert!(mins.windows(2).all(|m| m[1] > 0.5 * m[0]), "{mins:?}");
}

#[test]
fn lanczos_matches_dense_generalized_eigensolve() {
    let mesh = scenario_mesh(&[3, 4, 3, 4, 3, 4, 3, 4, 3]).unwrap();
    let layout = BrokenLayout::lgl(&mesh).unwrap();
    let a = assemble_dg_ni(&mesh, &layout, 3.0).unwrap();
    assert!(a.nrows() <= 500);
    let b = assemble_reduced(&mesh, &layout, 3.0, Quadrature::Lgl).unwrap();
    let (lo, hi) = dense_min_max(&a, &b);
    let chol = dgasm::sparse::Cholesky::factor(&b).unwrap();
    let est = estimate_condition(&a, &chol, &LanczosOptions { tol: 1e-10, max_it: 500, ..Default::default() }).unwrap();
    assert!((est.lambda_min - lo).abs() <= 1e-6 * lo, "{} vs {lo}", est.lambda_min);
    assert!((est.lambda_max - hi).abs() <= 1e-6 * hi, "{} vs {hi}", est.lambda_max);
    // condition estimates only grow as the Krylov space grows
    assert!(est.history.windows(2).all(|h| h[1] >= h[0] * (1.0 - 1e-12)));
}

#[test]
fn pcg_energy_error_decreases() {
    let mesh = scenario_mesh(&[4; 9]).unwrap();
    let layout = BrokenLayout::lgl(&mesh).unwrap();
    let cg = ConformingSpace::se_cg(&mesh).unwrap();
    let a = volume_stiffness(&mesh, &layout, Quadrature::Lgl).unwrap().galerkin(cg.prolongation());
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let xs: Vec<f64> = (0..a.nrows()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let b = a.mul_vec(&xs);
    let id = dgasm::krylov::Identity(a.nrows());
    let energy = |x: &[f64]| {
        let e: Vec<f64> = x.iter().zip(&xs).map(|(a, b)| a - b).collect();
        e.iter().zip(a.mul_vec(&e)).map(|(x, y)| x * y).sum::<f64>()
    };
    let mut last = f64::INFINITY;
    for it in 1..40 {
        let out = pcg(&a, &id, &b, 0.0, it).unwrap();
        let e = energy(&out.solution);
        assert!(e <= last * (1.0 + 1e-12), "iteration {it}: {e} > {last}");
        last = e;
    }
}

#[test]
fn stage_two_transfers_are_jump_free() {
    let mesh = scenario_mesh(&[4, 5, 7, 5, 7, 11, 7, 11, 19]).unwrap();
    let cg = ConformingSpace::se_cg(&mesh).unwrap();
    let dfe = ConformingSpace::dfe_cg(&mesh, 1.2).unwrap();
    let t = StageTwoTransfer::new(&mesh, &cg, &dfe, 1.2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..5 {
        let x: Vec<f64> = (0..dfe.ndofs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v = cg.prolongation().mul_vec(&t.q(&x));
        assert!(max_interface_jump(&mesh, cg.layout(), &v).unwrap() < 1e-12);
        let y: Vec<f64> = (0..cg.ndofs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w = dfe.prolongation().mul_vec(&t.qtilde(&y));
        assert!(max_interface_jump(&mesh, dfe.layout(), &w).unwrap() < 1e-12);
    }
}

#[test]
fn stage_two_is_symmetric_positive_definite() {
    let mesh = scenario_mesh(&[4, 5, 7, 5, 7, 11, 7, 11, 19]).unwrap();
    let cg = ConformingSpace::se_cg(&mesh).unwrap();
    let c = StageTwo::build(&mesh, &cg, &StageTwoOptions { smoother: SmootherSolve::Sweeps(7), ..Default::default() }).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let x: Vec<f64> = (0..cg.ndofs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..cg.ndofs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (cx, cy) = (c.apply_vec(&x), c.apply_vec(&y));
        let (xcy, ycx): (f64, f64) = (x.iter().zip(&cy).map(|(a, b)| a * b).sum(), y.iter().zip(&cx).map(|(a, b)| a * b).sum());
        assert!((xcy - ycx).abs() <= 1e-12 * xcy.abs().max(ycx.abs()).max(1.0), "{xcy} vs {ycx}");
        assert!(x.iter().zip(&cx).map(|(a, b)| a * b).sum::<f64>() > 0.0);
    }
}

#[test]
fn auxiliary_form_dominates_stiffness_in_stage_two() {
    // a(v,v) <= C b(v,v) with C stable in p
    let mut highs = Vec::new();
    for p in [4, 8, 12] {
        let mesh = scenario_mesh(&[p; 9]).unwrap();
        let cg = ConformingSpace::se_cg(&mesh).unwrap();
        let a = volume_stiffness(&mesh, cg.layout(), Quadrature::Lgl).unwrap().galerkin(cg.prolongation());
        let class = AnisotropyClassification::new(cg.layout(), 2.0).unwrap();
        let b2 = assemble_b2(&cg, &class, 0.6).unwrap();
        let (_, hi) = dense_min_max(&a, &b2);
        highs.push(hi);
    }
    assert!(highs.iter().all(|&h| h < 20.0), "{highs:?}");
}

#[test]
fn sweeps_are_byte_reproducible() {
    let cfg = ExperimentConfig::from_json(r#"{"scenario":"adaptation","p_values":[3,4],"stage":"stage1-exact","seed":7}"#).unwrap();
    let a = to_csv(&run_sweep(&cfg, Some(1)).unwrap());
    let b = to_csv(&run_sweep(&cfg, Some(2)).unwrap());
    assert_eq!(a, b);
}
