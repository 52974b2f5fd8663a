//! Pointwise and ergodic complexity bounds, checked against a recorded
//! trajectory.

use std::fmt::Write as _;

use serde::Serialize;

use crate::admm::fmt_real;
use crate::checks::{Check, CheckReport, Tolerance, ERGODIC_IDENTITY_TOL};
use crate::error::{Error, Result};
use crate::hpe::{sigma_alpha, CertContext};
use crate::linalg::{self, CompensatedSum, CompensatedVecSum, Vector};

pub const POINTWISE_BOUND: &str = "pointwise_bound";
pub const POINTWISE_INCLUSION: &str = "pointwise_inclusion";
pub const ERGODIC_RESIDUAL_BOUND: &str = "ergodic_residual_bound";
pub const ERGODIC_EPSILON_BOUND: &str = "ergodic_epsilon_bound";
pub const ERGODIC_EPSILON_NONNEG: &str = "ergodic_epsilon_nonnegative";
pub const ERGODIC_INCLUSION_F: &str = "ergodic_inclusion_f";
pub const ERGODIC_INCLUSION_G: &str = "ergodic_inclusion_g";
pub const ERGODIC_CONSTRAINT: &str = "ergodic_constraint_identity";
pub const EPSILON_SPLIT: &str = "epsilon_split_identity";

/// Fewest points accepted by [`rate_estimate`].
pub const MIN_RATE_POINTS: usize = 10;

/// `C_α` with `min_{i≤k} ‖Δz_i‖_M ≤ C_α √(d0/k)`; undefined at `α = 2`.
pub fn pointwise_constant(alpha: f64) -> Result<f64> {
    let sigma = sigma_alpha(alpha)?;
    if sigma >= 1.0 {
        return Err(Error::PointwiseUndefined(alpha));
    }
    let num = 2.0 * (alpha * (1.0 + sigma) + 8.0 * (2.0 - alpha) * sigma);
    Ok((num / (alpha * (1.0 - sigma))).sqrt())
}

/// `c_α = [α + 4(2 − α)σ]/α`.
pub fn c_alpha(alpha: f64) -> Result<f64> {
    let sigma = sigma_alpha(alpha)?;
    Ok((alpha + 4.0 * (2.0 - alpha) * sigma) / alpha)
}

/// `c̃_α = 3[3α² + 4(1 + 2α)σ][α + 4(2 − α)σ]/(2α³)`.
pub fn c_tilde_alpha(alpha: f64) -> Result<f64> {
    let sigma = sigma_alpha(alpha)?;
    Ok(3.0 * (3.0 * alpha * alpha + 4.0 * (1.0 + 2.0 * alpha) * sigma)
        * (alpha + 4.0 * (2.0 - alpha) * sigma)
        / (2.0 * alpha.powi(3)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PointwiseRow {
    pub k: usize,
    /// `min_{i≤k} ‖Δz_i‖_M`
    pub lhs: f64,
    pub rhs: f64,
    /// Index attaining the minimum.
    pub argmin: usize,
}

#[derive(Clone, Debug)]
pub struct PointwiseCertificate {
    pub rows: Vec<PointwiseRow>,
    pub bound: CheckReport,
    pub inclusion: CheckReport,
}

/// Checks the pointwise bound at every `k`, and that the iterate attaining
/// the minimum satisfies its inclusion.
pub fn pointwise_certificate(ctx: &CertContext) -> Result<PointwiseCertificate> {
    let c = pointwise_constant(ctx.alpha)?;
    let mut bound = Check::new(POINTWISE_BOUND, Tolerance::cert());
    let mut inclusion = Check::new(POINTWISE_INCLUSION, Tolerance::inclusion());
    let mut rows = Vec::with_capacity(ctx.last_k());
    let mut best = (f64::INFINITY, 0);
    for k in 1..=ctx.last_k() {
        let d = ctx.dz_norm_m(k);
        if d < best.0 {
            best = (d, k);
        }
        let rhs = c * (ctx.d0 / k as f64).sqrt();
        bound.le(k, best.0, rhs);
        let inc = ctx.inclusion_residuals(best.1)?;
        let worst = inc
            .gap_f
            .max(inc.gap_g)
            .max(inc.constraint / (1.0 + inc.constraint_scale));
        inclusion.le(k, worst, 0.0);
        rows.push(PointwiseRow {
            k,
            lhs: best.0,
            rhs,
            argmin: best.1,
        });
    }
    Ok(PointwiseCertificate {
        rows,
        bound: bound.finish(),
        inclusion: inclusion.finish(),
    })
}

/// Averaged iterates and their residual and ε after `k` steps.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErgodicPoint {
    pub k: usize,
    pub x: Vector,
    pub y: Vector,
    pub gamma: Vector,
    pub gamma_tilde: Vector,
    /// `rᵃ = (z_k − z_0)/k`, stacked.
    pub r: Vector,
    pub eps_x: f64,
    pub eps_y: f64,
    /// `(1/k) Σ ⟨MΔz_i, z̃ᵃ − z̃_i⟩`
    pub eps_hpe: f64,
}

/// Averages over `i = 1..k` with compensated summation.
pub fn ergodic_point(ctx: &CertContext, k: usize) -> Result<ErgodicPoint> {
    if k == 0 || k > ctx.last_k() {
        return Err(Error::Config(format!(
            "ergodic index {k} outside 1..={}",
            ctx.last_k()
        )));
    }
    let size = ctx.z(0).len();
    let mut zs = CompensatedVecSum::new(size);
    let mut zts = CompensatedVecSum::new(size);
    for i in 1..=k {
        zs.add(ctx.z(i));
        zts.add(ctx.z_tilde(i));
    }
    let z_bar = zs.mean(k);
    let zt_bar = zts.mean(k);
    let (x, y, gamma) = ctx.metric.split(&z_bar);
    let (_, _, gamma_tilde) = ctx.metric.split(&zt_bar);
    let r = linalg::scale(&linalg::sub(ctx.z(k), ctx.z(0)), 1.0 / k as f64);

    let mut ex = CompensatedSum::new();
    let mut ey = CompensatedSum::new();
    let mut eh = CompensatedSum::new();
    for i in 1..=k {
        let (xi, yi, _) = ctx.metric.split(ctx.z_tilde(i));
        // ⟨H1Δx_i − Aᵀγ̃_i, x̄ − x_i⟩ = −⟨u_{x,i}, x̄ − x_i⟩
        ex.add(-dot_diff(ctx.u_x(i), x, xi));
        ey.add(-dot_diff(ctx.u_y(i), y, yi));
        // MΔz_i = −v_i
        eh.add(-dot_diff(ctx.v(i), &zt_bar, ctx.z_tilde(i)));
    }
    let kf = k as f64;
    Ok(ErgodicPoint {
        k,
        x: x.to_vec(),
        y: y.to_vec(),
        gamma: gamma.to_vec(),
        gamma_tilde: gamma_tilde.to_vec(),
        r,
        eps_x: ex.value() / kf,
        eps_y: ey.value() / kf,
        eps_hpe: eh.value() / kf,
    })
}

/// `⟨u, a − b⟩`
fn dot_diff(u: &[f64], a: &[f64], b: &[f64]) -> f64 {
    u.iter().zip(a.iter().zip(b)).map(|(ui, (ai, bi))| ui * (ai - bi)).sum()
}

/// `|εᵃ − (εᵃ_x + εᵃ_y)|`
pub fn epsilon_split_identity(point: &ErgodicPoint) -> f64 {
    (point.eps_hpe - (point.eps_x + point.eps_y)).abs()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum KGrid {
    /// `1, 2, 4, …` and the final index.
    Log,
    Full,
}

pub fn k_grid(last: usize, grid: KGrid) -> Vec<usize> {
    match grid {
        KGrid::Full => (1..=last).collect(),
        KGrid::Log => {
            let mut ks = Vec::new();
            let mut k = 1;
            while k < last {
                ks.push(k);
                k *= 2;
            }
            if last >= 1 {
                ks.push(last);
            }
            ks
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ErgodicRow {
    pub k: usize,
    /// `‖rᵃ‖_M`
    pub r_norm: f64,
    pub r_bound: f64,
    pub eps_x: f64,
    pub eps_y: f64,
    pub eps_bound: f64,
    pub eps_hpe: f64,
    pub split_residual: f64,
    pub gap_f: f64,
    pub gap_g: f64,
}

#[derive(Clone, Debug)]
pub struct ErgodicCertificate {
    pub rows: Vec<ErgodicRow>,
    pub checks: Vec<CheckReport>,
}

pub fn ergodic_certificate(ctx: &CertContext, grid: KGrid) -> Result<ErgodicCertificate> {
    let r_c = 2.0 * (c_alpha(ctx.alpha)? * ctx.d0).sqrt();
    let e_c = c_tilde_alpha(ctx.alpha)? * ctx.d0;
    let mut r_chk = Check::new(ERGODIC_RESIDUAL_BOUND, Tolerance::cert());
    let mut e_chk = Check::new(ERGODIC_EPSILON_BOUND, Tolerance::cert());
    let mut nn_chk = Check::new(ERGODIC_EPSILON_NONNEG, Tolerance::cert());
    let mut f_chk = Check::new(ERGODIC_INCLUSION_F, Tolerance::cert());
    let mut g_chk = Check::new(ERGODIC_INCLUSION_G, Tolerance::cert());
    let mut c_chk = Check::new(
        ERGODIC_CONSTRAINT,
        Tolerance::new(ERGODIC_IDENTITY_TOL, ERGODIC_IDENTITY_TOL),
    );
    let mut s_chk = Check::new(
        EPSILON_SPLIT,
        Tolerance::new(ERGODIC_IDENTITY_TOL, ERGODIC_IDENTITY_TOL),
    );
    let inst = ctx.inst;
    let mut rows = Vec::new();
    for k in k_grid(ctx.last_k(), grid) {
        let pt = ergodic_point(ctx, k)?;
        let kf = k as f64;
        let r_norm = ctx.metric.norm_sq(&pt.r).sqrt();
        r_chk.le(k, r_norm, r_c / kf);
        let eps = pt.eps_x + pt.eps_y;
        e_chk.le(k, eps, e_c / kf);
        nn_chk.le(k, -pt.eps_x.min(pt.eps_y), 0.0);

        let neg_mr = linalg::scale(&ctx.metric.apply(&pt.r), -1.0);
        let (vx, vy, vg) = ctx.metric.split(&neg_mr);
        let mut ux = inst.a().tmatvec(&pt.gamma_tilde);
        linalg::axpy(&mut ux, 1.0, vx);
        let mut uy = inst.b_mat().tmatvec(&pt.gamma_tilde);
        linalg::axpy(&mut uy, 1.0, vy);
        let gap_f = inst.f().fenchel_gap(&ux, &pt.x)?;
        let gap_g = inst.g().fenchel_gap(&uy, &pt.y)?;
        f_chk.le(k, gap_f, pt.eps_x.max(0.0));
        g_chk.le(k, gap_g, pt.eps_y.max(0.0));

        let res = inst.constraint_residual(&pt.x, &pt.y);
        let scale = linalg::max_abs(vg)
            .max(linalg::max_abs(&res))
            .max(linalg::max_abs(inst.rhs()));
        c_chk.record(k, -linalg::max_abs(&linalg::sub(vg, &res)), scale);

        let split = epsilon_split_identity(&pt);
        s_chk.record(k, -split, pt.eps_hpe);

        rows.push(ErgodicRow {
            k,
            r_norm,
            r_bound: r_c / kf,
            eps_x: pt.eps_x,
            eps_y: pt.eps_y,
            eps_bound: e_c / kf,
            eps_hpe: pt.eps_hpe,
            split_residual: split,
            gap_f,
            gap_g,
        });
    }
    Ok(ErgodicCertificate {
        rows,
        checks: vec![
            r_chk.finish(),
            e_chk.finish(),
            nn_chk.finish(),
            f_chk.finish(),
            g_chk.finish(),
            c_chk.finish(),
            s_chk.finish(),
        ],
    })
}

/// Least-squares slope of `log v` against `log k` over the later half of
/// the points.
pub fn rate_estimate(points: &[(usize, f64)]) -> Result<f64> {
    if points.len() < MIN_RATE_POINTS {
        return Err(Error::Config(format!(
            "rate estimate needs at least {MIN_RATE_POINTS} points, got {}",
            points.len()
        )));
    }
    if let Some(&(k, v)) = points.iter().find(|(k, v)| *k == 0 || !(*v > 0.0)) {
        return Err(Error::Config(format!(
            "rate estimate needs positive k and values, got ({k}, {v})"
        )));
    }
    let tail = &points[points.len() / 2..];
    let n = tail.len() as f64;
    let xs: Vec<f64> = tail.iter().map(|(k, _)| (*k as f64).ln()).collect();
    let ys: Vec<f64> = tail.iter().map(|(_, v)| v.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Config("rate estimate needs distinct k".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Ok(sxy / sxx)
}

/// Pointwise and ergodic sides on a common grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundRow {
    pub k: usize,
    pub pointwise_lhs: Option<f64>,
    pub pointwise_rhs: Option<f64>,
    pub ergodic: ErgodicRow,
}

pub fn bound_rows(pointwise: Option<&PointwiseCertificate>, ergodic: &ErgodicCertificate) -> Vec<BoundRow> {
    ergodic
        .rows
        .iter()
        .map(|e| {
            let pw = pointwise.and_then(|p| p.rows.get(e.k - 1));
            BoundRow {
                k: e.k,
                pointwise_lhs: pw.map(|r| r.lhs),
                pointwise_rhs: pw.map(|r| r.rhs),
                ergodic: *e,
            }
        })
        .collect()
}

pub fn bounds_csv(rows: &[BoundRow]) -> String {
    let mut out = String::from(
        "k,pointwise_lhs,pointwise_rhs,ergodic_r_lhs,ergodic_r_rhs,ergodic_eps_lhs,ergodic_eps_rhs,eps_x,eps_y,split_residual\n",
    );
    let opt = |v: Option<f64>| v.map(fmt_real).unwrap_or_default();
    for r in rows {
        let e = &r.ergodic;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.k,
            opt(r.pointwise_lhs),
            opt(r.pointwise_rhs),
            fmt_real(e.r_norm),
            fmt_real(e.r_bound),
            fmt_real(e.eps_x + e.eps_y),
            fmt_real(e.eps_bound),
            fmt_real(e.eps_x),
            fmt_real(e.eps_y),
            fmt_real(e.split_residual),
        );
    }
    out
}
