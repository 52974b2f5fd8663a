mod common;

use approx::assert_relative_eq;
use common::*;
use gadmm::convex::ConvexFunctionSpec;
use gadmm::hpe::{CertContext, OperatorM};
use gadmm::linalg::{self, seminorm_sq, solve_spd, spectral_norm_sq, DenseMatrix, PsdOperator};
use gadmm::problem::{kkt_gap, solve_ground_truth};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DenseMatrix {
    DenseMatrix::new(r, c, (0..r * c).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap()
}

#[test]
fn vanilla_admm_matches_unit_relaxation() {
    for seed in 0..5 {
        let inst = qp(seed);
        let params = gadmm::GadmmParams::new(1.3, 1.0).with_max_iter(100).with_stop_tol(0.0);
        let traj = gadmm::run(&inst, &params).unwrap();
        let reference = vanilla_admm(&inst, 1.3, 100);
        assert_eq!(traj.states().len(), reference.len());
        for (s, (x, y, g)) in traj.states().iter().zip(&reference) {
            for (a, b) in s.x.iter().zip(x).chain(s.y.iter().zip(y)).chain(s.gamma.iter().zip(g)) {
                assert!((a - b).abs() <= 1e-10, "seed {seed} k {}: {a} vs {b}", s.k);
            }
        }
    }
}

#[test]
fn spectral_norm_matches_svd() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let (r, c) = (rng.random_range(1..7), rng.random_range(1..7));
        let a = random_matrix(&mut rng, r, c);
        let s = to_na(&a).singular_values().max();
        assert_relative_eq!(spectral_norm_sq(&a).unwrap(), s * s, max_relative = 1e-8);
    }
}

#[test]
fn solve_spd_matches_nalgebra_cholesky() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for n in 1..8 {
        let k = random_spd(&mut rng, n, 0.1);
        let rhs: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let ours = solve_spd(k.matrix(), &rhs).unwrap();
        let theirs = to_na(k.matrix()).cholesky().unwrap().solve(&DVector::from_column_slice(&rhs));
        for (a, b) in ours.iter().zip(theirs.iter()) {
            assert_relative_eq!(*a, *b, epsilon = 1e-9, max_relative = 1e-9);
        }
    }
}

#[test]
fn ground_truth_matches_dense_kkt_solve() {
    for seed in 0..10 {
        let inst = qp(seed);
        let (n, p, m) = (inst.n(), inst.p(), inst.m());
        let (pf, qf) = quad_parts(inst.f());
        let (pg, qg) = quad_parts(inst.g());
        let a = to_na(inst.a());
        let b = to_na(inst.b_mat());
        let size = n + p + m;
        let mut k = DMatrix::zeros(size, size);
        k.view_mut((0, 0), (n, n)).copy_from(&pf);
        k.view_mut((n, n), (p, p)).copy_from(&pg);
        k.view_mut((0, n + p), (n, m)).copy_from(&(-a.transpose()));
        k.view_mut((n, n + p), (p, m)).copy_from(&(-b.transpose()));
        k.view_mut((n + p, 0), (m, n)).copy_from(&a);
        k.view_mut((n + p, n), (m, p)).copy_from(&b);
        let mut rhs = DVector::zeros(size);
        rhs.rows_mut(0, n).copy_from(&(-&qf));
        rhs.rows_mut(n, p).copy_from(&(-&qg));
        rhs.rows_mut(n + p, m).copy_from(&DVector::from_column_slice(inst.rhs()));
        let sol = k.lu().solve(&rhs).expect("nonsingular KKT");
        let ours = solve_ground_truth(&inst).unwrap().stacked();
        for (a, b) in ours.iter().zip(sol.iter()) {
            assert_relative_eq!(*a, *b, epsilon = 1e-8, max_relative = 1e-8);
        }
    }
}

#[test]
fn lasso_ground_truth_satisfies_subgradient_conditions() {
    for seed in [7, 1, 2] {
        let inst = lasso(seed);
        let z = solution(&inst);
        assert!(kkt_gap(&inst, &z).unwrap() <= 1e-6);
        // γ = ∇f(x) and Bᵀγ = −γ ∈ μ∂‖y‖₁ checked directly
        let (pf, qf) = quad_parts(inst.f());
        let grad = &pf * DVector::from_column_slice(&z.x) + &qf;
        for i in 0..inst.n() {
            assert!((grad[i] - z.gamma[i]).abs() <= 1e-6);
            assert!(z.gamma[i].abs() <= 0.1 + 1e-9);
            if z.y[i].abs() > 1e-8 {
                assert!((z.gamma[i] + 0.1 * z.y[i].signum()).abs() <= 1e-6, "seed {seed} i {i}: y {} gamma {} grad {}", z.y[i], z.gamma[i], grad[i]);
            }
        }
    }
}

#[test]
fn metric_is_psd_on_parameter_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for trial in 0..4 {
        let p = 2 + trial;
        let m = 1 + trial;
        let b = random_matrix(&mut rng, m, p);
        let h1 = random_spd(&mut rng, 3, 0.0);
        let h2 = if trial % 2 == 0 { PsdOperator::zeros(p) } else { random_spd(&mut rng, p, 0.0) };
        for alpha in [0.1, 0.5, 1.0, 1.5, 1.9, 2.0] {
            for beta in [0.1, 1.0, 10.0] {
                let op = OperatorM::from_parts(h1.matrix(), h2.matrix(), &b, alpha, beta).unwrap();
                let na = to_na(op.matrix());
                let eig = na.clone().symmetric_eigen();
                let scale = na.amax().max(1.0);
                assert!(
                    eig.eigenvalues.min() >= -1e-9 * scale,
                    "alpha {alpha} beta {beta}: min eigenvalue {}",
                    eig.eigenvalues.min()
                );
            }
        }
    }
}

#[test]
fn three_point_identity_along_trajectories() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for seed in 0..3 {
        let inst = qp(seed);
        let zs = solution(&inst);
        for alpha in [0.5, 1.0, 2.0] {
            let traj = qp_trajectory(&inst, alpha);
            let ctx = CertContext::new(&inst, &traj, &zs).unwrap();
            let m = &ctx.metric;
            for k in 1..=ctx.last_k().min(50) {
                let z: Vec<f64> = (0..ctx.z(0).len()).map(|_| rng.random_range(-5.0..5.0)).collect();
                let (zk, zp, zt) = (ctx.z(k), ctx.z(k - 1), ctx.z_tilde(k));
                let lhs = m.inner(&linalg::sub(&z, zk), &linalg::sub(&z, zk))
                    - m.inner(&linalg::sub(&z, zp), &linalg::sub(&z, zp));
                let rhs = m.inner(&linalg::sub(zt, zk), &linalg::sub(zt, zk))
                    - m.inner(&linalg::sub(zt, zp), &linalg::sub(zt, zp))
                    + 2.0 * m.inner(&linalg::sub(zp, zk), &linalg::sub(&z, zt));
                let scale = 1.0 + lhs.abs() + m.inner(&z, &z);
                assert!((lhs - rhs).abs() <= 1e-10 * scale, "k {k}: {lhs} vs {rhs}");
            }
        }
    }
}

#[test]
fn prox_is_optimal_on_random_probes() {
    for dim in [1, 2, 4] {
        let worst = worst_prox_gap(100 + dim as u64, dim, ORACLE_PROBES);
        assert!(worst <= 1e-8, "dim {dim}: worst prox gap {worst:e}");
    }
}

#[test]
fn fenchel_gap_agrees_with_grid_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for dim in [1, 2] {
        for _ in 0..ORACLE_PROBES / 20 {
            for f in variants(&mut rng, dim) {
                let u = finite_gap_probe(&mut rng, &f);
                let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect();
                let gap = f.fenchel_gap(&u, &x).unwrap();
                let grid = grid_gap(&f, &u, &x, 50.0);
                assert!((gap - grid).abs() <= 1e-6, "{} dim {dim}: {gap} vs {grid}", f.name());
            }
        }
    }
}

#[test]
fn fenchel_gap_scalar_example_by_grid() {
    let f = ConvexFunctionSpec::quadratic(PsdOperator::identity(1), vec![0.0], 0.0).unwrap();
    assert_relative_eq!(f.fenchel_gap(&[3.0], &[2.0]).unwrap(), 0.5);
    assert_relative_eq!(grid_gap(&f, &[3.0], &[2.0], 10.0), 0.5, epsilon = 1e-9);
    let f2 = ConvexFunctionSpec::quadratic(PsdOperator::identity(2), vec![0.0; 2], 0.0).unwrap();
    assert_relative_eq!(f2.conjugate_eval(&[3.0, 4.0]).unwrap(), 12.5);
    // sup_x ⟨u, x⟩ − ½‖x‖² on a grid around the origin
    let grid_conj = grid_gap(&f2, &[3.0, 4.0], &[0.0, 0.0], 10.0);
    assert_relative_eq!(grid_conj, 12.5, epsilon = 1e-6);
}

proptest! {
    #[test]
    fn seminorm_is_nonnegative_and_homogeneous(
        seed in 0u64..1000,
        s in -10.0f64..10.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(1..6);
        let q = random_spd(&mut rng, n, 0.0);
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let base = seminorm_sq(&q, &v).unwrap();
        prop_assert!(base >= 0.0);
        let scaled = seminorm_sq(&q, &linalg::scale(&v, s)).unwrap();
        prop_assert!((scaled - s * s * base).abs() <= 1e-9 * (1.0 + s * s * base));
    }

    #[test]
    fn inner_is_bilinear_and_symmetric(seed in 0u64..1000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(1..6);
        let q = random_spd(&mut rng, n, 0.0);
        let mut draw = || -> Vec<f64> { (0..n).map(|_| rng.random_range(-3.0..3.0)).collect() };
        let (u, v, w) = (draw(), draw(), draw());
        let combo: Vec<f64> = u.iter().zip(&v).map(|(ui, vi)| a * ui + b * vi).collect();
        let lhs = q.inner(&combo, &w);
        let rhs = a * q.inner(&u, &w) + b * q.inner(&v, &w);
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()));
        prop_assert!((q.inner(&u, &w) - q.inner(&w, &u)).abs() <= 1e-12 * (1.0 + q.inner(&u, &w).abs()));
    }

    #[test]
    fn solve_spd_residual_is_small(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(1..8);
        let k = random_spd(&mut rng, n, 0.05);
        let rhs: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let u = solve_spd(k.matrix(), &rhs).unwrap();
        let r = linalg::sub(&k.matrix().matvec(&u), &rhs);
        prop_assert!(linalg::norm(&r) <= 1e-10 * (1.0 + linalg::norm(&rhs)));
    }
}
