#![allow(dead_code)]

use std::io::Write;

use gadmm::convex::ConvexFunctionSpec;
use gadmm::linalg::{DenseMatrix, PsdOperator};
use gadmm::problem::{generate_lasso, generate_qp, KktPoint, SeparableInstance};
use gadmm::{run, GadmmParams, ProximalMode, Tau, Trajectory};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const QP_SEEDS: std::ops::Range<u64> = 0..10;
pub const LASSO_SEEDS: [u64; 3] = [7, 1, 2];
pub const MAX_ITER: usize = 2000;

/// Small QP dimensions varying with the seed.
pub fn qp_dims(seed: u64) -> (usize, usize, usize) {
    let n = 3 + (seed % 5) as usize;
    let p = 2 + (seed % 4) as usize;
    let m = 2 + (seed % 3) as usize;
    (n, p, m)
}

pub fn qp(seed: u64) -> SeparableInstance {
    let (n, p, m) = qp_dims(seed);
    generate_qp(seed, n, p, m).expect("qp instance")
}

pub fn lasso(seed: u64) -> SeparableInstance {
    generate_lasso(seed, 10, 20, 0.1).expect("lasso instance")
}

pub fn qp_trajectory(inst: &SeparableInstance, alpha: f64) -> Trajectory {
    run(inst, &GadmmParams::new(1.0, alpha).with_max_iter(MAX_ITER)).expect("qp run")
}

/// The l1 block needs a linearized `H2`.
pub fn lasso_trajectory(inst: &SeparableInstance, alpha: f64) -> Trajectory {
    let params = GadmmParams::new(1.0, alpha)
        .with_modes(ProximalMode::Zero, ProximalMode::Linearized(Tau::Auto))
        .with_max_iter(5000);
    run(inst, &params).expect("lasso run")
}

pub fn solution(inst: &SeparableInstance) -> KktPoint {
    inst.solution().expect("generated with solution").clone()
}

/// One result line, written past the test harness's output capture.
pub fn report(criterion: &str, passed: bool, detail: &str) {
    let tag = if passed { "PASS" } else { "FAIL" };
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "[acceptance] {tag} {criterion}: {detail}");
}

pub fn to_na(m: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.data())
}

pub fn quad_parts(f: &ConvexFunctionSpec) -> (DMatrix<f64>, DVector<f64>) {
    match f {
        ConvexFunctionSpec::Quadratic(q) => (
            to_na(q.hessian().matrix()),
            DVector::from_column_slice(q.linear()),
        ),
        other => panic!("expected quadratic, got {}", other.name()),
    }
}

/// Textbook ADMM (unit relaxation, no proximal terms), written against
/// nalgebra from the augmented Lagrangian.
pub fn vanilla_admm(inst: &SeparableInstance, beta: f64, iters: usize) -> Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let (pf, qf) = quad_parts(inst.f());
    let (pg, qg) = quad_parts(inst.g());
    let a = to_na(inst.a());
    let b = to_na(inst.b_mat());
    let rhs = DVector::from_column_slice(inst.rhs());
    let kx = (&pf + beta * a.transpose() * &a).cholesky().expect("x system SPD");
    let ky = (&pg + beta * b.transpose() * &b).cholesky().expect("y system SPD");
    let mut x = DVector::zeros(inst.n());
    let mut y = DVector::zeros(inst.p());
    let mut g = DVector::zeros(inst.m());
    let mut out = vec![(x.as_slice().to_vec(), y.as_slice().to_vec(), g.as_slice().to_vec())];
    for _ in 0..iters {
        let rx = a.transpose() * (&g - beta * (&b * &y - &rhs)) - &qf;
        x = kx.solve(&rx);
        let ry = b.transpose() * (&g - beta * (&a * &x - &rhs)) - &qg;
        y = ky.solve(&ry);
        g = &g - beta * (&a * &x + &b * &y - &rhs);
        out.push((x.as_slice().to_vec(), y.as_slice().to_vec(), g.as_slice().to_vec()));
    }
    out
}

pub const ORACLE_PROBES: usize = 1000;

pub fn random_spd(rng: &mut ChaCha8Rng, n: usize, ridge: f64) -> PsdOperator {
    let g: Vec<f64> = (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let g = DenseMatrix::new(n, n, g).unwrap();
    let p = g.gram().add(&DenseMatrix::identity(n).scaled(ridge)).unwrap();
    PsdOperator::new(p).unwrap()
}

/// One instance of each variant in dimension `dim`, drawn from `rng`.
pub fn variants(rng: &mut ChaCha8Rng, dim: usize) -> Vec<ConvexFunctionSpec> {
    let q: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let c = rng.random_range(-1.0..1.0);
    let mu = rng.random_range(0.1..2.0);
    vec![
        ConvexFunctionSpec::quadratic(random_spd(rng, dim, 0.2), q.clone(), c).unwrap(),
        ConvexFunctionSpec::quadratic(rank_deficient(rng, dim), q.iter().map(|_| 0.0).collect(), c).unwrap(),
        ConvexFunctionSpec::l1(dim, mu).unwrap(),
        ConvexFunctionSpec::zero(dim).unwrap(),
    ]
}

/// `ggᵀ` for one random `g`: singular once `dim ≥ 2`.
pub fn rank_deficient(rng: &mut ChaCha8Rng, dim: usize) -> PsdOperator {
    let g: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let g = DenseMatrix::new(1, dim, g).unwrap();
    PsdOperator::new(g.gram()).unwrap()
}

/// Largest `prox` optimality gap `fenchel_gap(F, (v − p)/t, p)` over random
/// probes of every variant.
pub fn worst_prox_gap(seed: u64, dim: usize, probes: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..probes {
        for f in variants(&mut rng, dim) {
            let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-5.0..5.0)).collect();
            let t = 10f64.powf(rng.random_range(-2.0..1.0));
            let p = f.prox(t, &v).unwrap();
            let u: Vec<f64> = v.iter().zip(&p).map(|(vi, pi)| (vi - pi) / t).collect();
            worst = worst.max(f.fenchel_gap(&u, &p).unwrap());
        }
    }
    worst
}

/// `sup_ṽ F(x) + ⟨u, ṽ − x⟩ − F(ṽ)` by brute force over a box grid centred
/// at the origin, re-gridded around the best point several times.
pub fn grid_gap(f: &ConvexFunctionSpec, u: &[f64], x: &[f64], radius: f64) -> f64 {
    let dim = u.len();
    let fx = f.eval(x).unwrap();
    let objective = |v: &[f64]| {
        let inner: f64 = u.iter().zip(v.iter().zip(x)).map(|(ui, (vi, xi))| ui * (vi - xi)).sum();
        fx + inner - f.eval(v).unwrap()
    };
    let per_axis: usize = if dim == 1 { 401 } else { 61 };
    let mut c = vec![0.0; dim];
    let mut r = radius;
    let mut best = objective(&c);
    for _ in 0..8 {
        let h = 2.0 * r / (per_axis - 1) as f64;
        let mut best_pt = c.clone();
        for idx in 0..per_axis.pow(dim as u32) {
            let mut rem = idx;
            let pt: Vec<f64> = (0..dim)
                .map(|d| {
                    let i = rem % per_axis;
                    rem /= per_axis;
                    c[d] - r + h * i as f64
                })
                .collect();
            let val = objective(&pt);
            if val > best {
                best = val;
                best_pt = pt;
            }
        }
        c = best_pt;
        r = 10.0 * h;
    }
    best
}

/// A subgradient probe `u` with a finite gap whose maximizer lies well
/// inside a radius-50 box.
pub fn finite_gap_probe(rng: &mut ChaCha8Rng, f: &ConvexFunctionSpec) -> Vec<f64> {
    let dim = f.dim();
    match f {
        ConvexFunctionSpec::Quadratic(q) => {
            let p = q.hessian().matrix();
            let w = rng.random_range(-2.0..2.0);
            if is_ridge(p) {
                (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect()
            } else {
                // rank one P = ggᵀ: u = w·P g stays in the range, maximizer w·g
                let g = rank_one_factor(p);
                p.matvec(&g).iter().map(|v| w * v).collect()
            }
        }
        ConvexFunctionSpec::L1 { mu, .. } => (0..dim).map(|_| rng.random_range(-*mu..*mu)).collect(),
        ConvexFunctionSpec::Zero { .. } => vec![0.0; dim],
    }
}

fn is_ridge(p: &DenseMatrix) -> bool {
    let eig = to_na(p).symmetric_eigen();
    eig.eigenvalues.min() > 0.15
}

fn rank_one_factor(p: &DenseMatrix) -> Vec<f64> {
    let eig = to_na(p).symmetric_eigen();
    let i = eig.eigenvalues.imax();
    let s = eig.eigenvalues[i].max(0.0).sqrt();
    eig.eigenvectors.column(i).iter().map(|v| v * s).collect()
}
