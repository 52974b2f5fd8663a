//! Acceptance criteria, one test each. Every test writes a single
//! `[acceptance] PASS|FAIL` line to stderr.

mod common;

use std::sync::OnceLock;

use common::*;
use gadmm::certificates::{
    c_alpha, c_tilde_alpha, ergodic_certificate, pointwise_certificate, rate_estimate, KGrid,
    EPSILON_SPLIT, ERGODIC_EPSILON_BOUND, ERGODIC_RESIDUAL_BOUND,
};
use gadmm::checks::CheckReport;
use gadmm::hpe::{certify_hpe, check_rho_bound, CertContext};
use gadmm::problem::{scalar_instance, SeparableInstance};
use gadmm::{run, Error, GadmmParams, Trajectory};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Case {
    label: String,
    inst: SeparableInstance,
    alpha: f64,
    lasso: bool,
    traj: Trajectory,
}

impl Case {
    fn ctx(&self) -> CertContext<'_> {
        CertContext::new(&self.inst, &self.traj, &solution(&self.inst)).expect("context")
    }
}

const QP_ALPHAS: [f64; 5] = [0.5, 1.0, 1.5, 1.9, 2.0];
const LASSO_ALPHAS: [f64; 2] = [1.0, 2.0];

fn suite() -> &'static [Case] {
    static SUITE: OnceLock<Vec<Case>> = OnceLock::new();
    SUITE.get_or_init(|| {
        let mut cases = Vec::new();
        for seed in QP_SEEDS {
            let inst = qp(seed);
            for alpha in QP_ALPHAS {
                cases.push(Case {
                    label: format!("qp seed {seed} alpha {alpha}"),
                    traj: qp_trajectory(&inst, alpha),
                    inst: inst.clone(),
                    alpha,
                    lasso: false,
                });
            }
        }
        for seed in LASSO_SEEDS {
            let inst = lasso(seed);
            for alpha in LASSO_ALPHAS {
                cases.push(Case {
                    label: format!("lasso seed {seed} alpha {alpha}"),
                    traj: lasso_trajectory(&inst, alpha),
                    inst: inst.clone(),
                    alpha,
                    lasso: true,
                });
            }
        }
        cases
    })
}

/// The QP cases at the listed alphas plus, when `with_lasso`, every lasso case.
fn cases(alphas: &[f64], with_lasso: bool) -> impl Iterator<Item = &'static Case> + '_ {
    suite()
        .iter()
        .filter(move |c| if c.lasso { with_lasso } else { alphas.contains(&c.alpha) })
}

/// Aggregates check reports across cases.
#[derive(Default)]
struct Tally {
    runs: usize,
    rows: usize,
    failures: Vec<String>,
    /// Largest `−slack / tol`; at most 1 when every check passes.
    worst_usage: f64,
}

impl Tally {
    fn new() -> Self {
        Self {
            worst_usage: f64::NEG_INFINITY,
            ..Self::default()
        }
    }

    fn add(&mut self, label: &str, report: &CheckReport) {
        self.rows += report.per_k.len();
        for e in &report.per_k {
            self.worst_usage = self.worst_usage.max(-e.slack / e.tol);
        }
        if let Some(k) = report.first_failure_k {
            self.failures.push(format!("{label}: {} at k = {k}", report.name));
        }
    }

    fn finish(self, criterion: &str) {
        let passed = self.failures.is_empty();
        let detail = if passed {
            format!(
                "{} runs, {} per-k checks, worst -slack/tol = {:.3e}",
                self.runs, self.rows, self.worst_usage
            )
        } else {
            format!("{} failures, first: {}", self.failures.len(), self.failures[0])
        };
        report(criterion, passed, &detail);
        assert!(passed, "{criterion}: {:?}", self.failures);
    }
}

#[test]
fn criterion_1_hpe_certification() {
    let mut t = Tally::new();
    for case in cases(&[0.5, 1.0, 1.5, 2.0], true) {
        let cert = certify_hpe(&case.ctx()).expect("certify");
        t.runs += 1;
        for c in &cert.checks {
            t.add(&case.label, c);
        }
    }
    t.finish("criterion 1 (per-iteration HPE conditions, inclusions and identities)");
}

#[test]
fn criterion_2_pointwise_bound() {
    let mut t = Tally::new();
    for case in cases(&[0.5, 1.0, 1.5, 1.9], false) {
        let ctx = case.ctx();
        assert!(ctx.last_k() <= 2000);
        let pw = pointwise_certificate(&ctx).expect("pointwise");
        t.runs += 1;
        t.add(&case.label, &pw.bound);
        t.add(&case.label, &pw.inclusion);
    }
    for case in cases(&[2.0], true).filter(|c| c.alpha == 2.0) {
        match pointwise_certificate(&case.ctx()) {
            Err(Error::PointwiseUndefined(_)) => {}
            other => t
                .failures
                .push(format!("{}: alpha = 2 not rejected ({:?})", case.label, other.map(|_| ()))),
        }
    }
    t.finish("criterion 2 (pointwise bound, alpha = 2 rejected)");
}

#[test]
fn criterion_3_ergodic_bounds() {
    let mut t = Tally::new();
    let expected = [(1.0, 3.0, 40.5), (2.0, 1.0, 12.0)];
    for (alpha, c, ct) in expected {
        let (got_c, got_ct) = (c_alpha(alpha).unwrap(), c_tilde_alpha(alpha).unwrap());
        if (got_c - c).abs() > 1e-12 || (got_ct - ct).abs() > 1e-12 {
            t.failures
                .push(format!("constants at alpha {alpha}: ({got_c}, {got_ct}) != ({c}, {ct})"));
        }
    }
    for case in cases(&[0.5, 1.0, 1.5, 1.9, 2.0], true) {
        let erg = ergodic_certificate(&case.ctx(), KGrid::Full).expect("ergodic");
        t.runs += 1;
        for c in &erg.checks {
            if c.name == ERGODIC_RESIDUAL_BOUND || c.name == ERGODIC_EPSILON_BOUND {
                t.add(&case.label, c);
            }
        }
    }
    t.finish("criterion 3 (ergodic residual and epsilon bounds, constants at alpha 1 and 2)");
}

#[test]
fn criterion_4_rho_bound() {
    let mut t = Tally::new();
    for case in suite() {
        t.runs += 1;
        t.add(&case.label, &check_rho_bound(&case.ctx()).expect("rho"));
    }
    t.finish("criterion 4 (rho_k bound, all alphas including 2)");
}

#[test]
fn criterion_5_epsilon_split_identity() {
    let mut t = Tally::new();
    for case in suite() {
        let erg = ergodic_certificate(&case.ctx(), KGrid::Full).expect("ergodic");
        t.runs += 1;
        for c in erg.checks.iter().filter(|c| c.name == EPSILON_SPLIT) {
            t.add(&case.label, c);
        }
    }
    t.finish("criterion 5 (epsilon split identity)");
}

#[test]
fn criterion_6_vanilla_admm_equivalence() {
    let mut worst: f64 = 0.0;
    for seed in 0..5 {
        let inst = qp(seed);
        let params = GadmmParams::new(1.0, 1.0).with_max_iter(100).with_stop_tol(0.0);
        let traj = run(&inst, &params).unwrap();
        let reference = vanilla_admm(&inst, 1.0, 100);
        assert_eq!(traj.states().len(), 101);
        for (s, (x, y, g)) in traj.states().iter().zip(&reference) {
            for (a, b) in s.x.iter().zip(x).chain(s.y.iter().zip(y)).chain(s.gamma.iter().zip(g)) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    let passed = worst <= 1e-10;
    report(
        "criterion 6 (unit relaxation matches textbook ADMM)",
        passed,
        &format!("5 seeds x 100 iterations, max componentwise difference {worst:.3e}"),
    );
    assert!(passed);
}

#[test]
fn criterion_7_hand_trajectory() {
    let inst = scalar_instance();
    let one = run(&inst, &GadmmParams::new(1.0, 1.0).with_max_iter(1).with_stop_tol(0.0)).unwrap();
    let s = one.state(1);
    let got1 = [s.x[0], s.y[0], s.gamma[0], s.gamma_tilde.as_ref().unwrap()[0]];
    let want1 = [1.5, 0.75, 0.75, 1.5];
    let two = run(&inst, &GadmmParams::new(1.0, 2.0)).unwrap();
    let s = two.state(1);
    let got2 = [s.x[0], s.y[0], s.gamma[0]];
    let err = got1
        .iter()
        .zip(&want1)
        .chain(got2.iter().zip(&[1.5, 1.5, 1.5]))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let passed = err <= 1e-12 && two.iterations() == 1 && two.converged();
    report(
        "criterion 7 (1-D hand trajectory)",
        passed,
        &format!(
            "alpha 1 step {got1:?}, alpha 2 stops at k = {} with {got2:?}, max error {err:.1e}",
            two.iterations()
        ),
    );
    assert!(passed);
}

#[test]
fn criterion_8_empirical_rates() {
    let mut worst_r = f64::NEG_INFINITY;
    let mut worst_pw = f64::NEG_INFINITY;
    let mut failures = Vec::new();
    for case in cases(&[0.5, 1.0, 1.5, 1.9, 2.0], false) {
        let ctx = case.ctx();
        let erg = ergodic_certificate(&ctx, KGrid::Full).expect("ergodic");
        let r_pts: Vec<(usize, f64)> = erg.rows.iter().map(|r| (r.k, r.r_norm)).collect();
        match rate_estimate(&r_pts) {
            Ok(s) => {
                worst_r = worst_r.max(s);
                if s > -0.9 {
                    failures.push(format!("{}: ergodic slope {s:.3}", case.label));
                }
            }
            Err(e) => failures.push(format!("{}: {e}", case.label)),
        }
        if case.alpha < 2.0 {
            let pw = pointwise_certificate(&ctx).expect("pointwise");
            let pts: Vec<(usize, f64)> = pw.rows.iter().map(|r| (r.k, r.lhs)).collect();
            match rate_estimate(&pts) {
                Ok(s) => {
                    worst_pw = worst_pw.max(s);
                    if s > -0.45 {
                        failures.push(format!("{}: pointwise slope {s:.3}", case.label));
                    }
                }
                Err(e) => failures.push(format!("{}: {e}", case.label)),
            }
        }
    }
    let passed = failures.is_empty();
    let detail = if passed {
        format!("shallowest slopes: ergodic {worst_r:.3}, pointwise running min {worst_pw:.3}")
    } else {
        format!("{} failures, first: {}", failures.len(), failures[0])
    };
    report("criterion 8 (empirical log-log rates)", passed, &detail);
    assert!(passed, "{failures:?}");
}

#[test]
fn criterion_9_oracle_soundness() {
    let mut failures = Vec::new();
    let prox_worst = [1usize, 2, 4]
        .iter()
        .map(|&d| worst_prox_gap(200 + d as u64, d, ORACLE_PROBES))
        .fold(0.0, f64::max);
    if prox_worst > 1e-8 {
        failures.push(format!("prox optimality gap {prox_worst:e}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(900);
    let mut grid_worst: f64 = 0.0;
    let mut probes = 0;
    for dim in [1usize, 2] {
        for _ in 0..ORACLE_PROBES / 2 {
            for f in variants(&mut rng, dim) {
                let u = finite_gap_probe(&mut rng, &f);
                let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect();
                let gap = f.fenchel_gap(&u, &x).unwrap();
                let diff = (gap - grid_gap(&f, &u, &x, 50.0)).abs();
                grid_worst = grid_worst.max(diff);
                probes += 1;
            }
        }
    }
    if grid_worst > 1e-6 {
        failures.push(format!("grid agreement {grid_worst:e}"));
    }
    let passed = failures.is_empty();
    report(
        "criterion 9 (prox optimality and Fenchel gap grid agreement)",
        passed,
        &format!(
            "{} prox probes per variant, worst gap {prox_worst:.2e}; {} grid probes ({} per variant), worst diff {grid_worst:.2e}",
            3 * ORACLE_PROBES,
            probes,
            probes / 4
        ),
    );
    assert!(passed, "{failures:?}");
}
