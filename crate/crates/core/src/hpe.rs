//! The metric `M` and per-iteration certification of a recorded trajectory
//! as an HPE sequence.
//!
//! ```text
//!     ⎡ H1   0                        0              ⎤
//! M = ⎢ 0    H2 + (β/α)BᵀB            ((1−α)/α)Bᵀ    ⎥
//!     ⎣ 0    ((1−α)/α)B               (1/(αβ))I      ⎦
//! ```

use serde::Serialize;

use crate::admm::{ResolvedParams, Trajectory};
use crate::checks::{Check, CheckReport, Tolerance};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{self, DenseMatrix, PsdOperator, Vector};
use crate::problem::{kkt_gap, KktPoint, SeparableInstance, SOLUTION_TOL};

/// The block operator `M` on `ℝⁿ × ℝᵖ × ℝᵐ`.
#[derive(Clone, Debug)]
pub struct OperatorM {
    op: PsdOperator,
    n: usize,
    p: usize,
    m: usize,
}

impl OperatorM {
    pub fn build(inst: &SeparableInstance, params: &ResolvedParams) -> Result<Self> {
        Self::from_parts(
            params.h1.matrix(),
            params.h2.matrix(),
            inst.b_mat(),
            params.alpha,
            params.beta,
        )
    }

    pub fn from_parts(
        h1: &DenseMatrix,
        h2: &DenseMatrix,
        b: &DenseMatrix,
        alpha: f64,
        beta: f64,
    ) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 2.0) {
            return Err(Error::Config(format!("alpha = {alpha} outside (0, 2]")));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::Config(format!("beta = {beta} must be positive")));
        }
        let (n, p, m) = (h1.rows(), h2.rows(), b.rows());
        check_dim("H2 vs B columns", b.cols(), p)?;
        let size = n + p + m;
        let mut full = DenseMatrix::zeros(size, size);
        full.set_block(0, 0, h1);
        let yy = h2.add(&b.gram().scaled(beta / alpha))?;
        full.set_block(n, n, &yy);
        let c = (1.0 - alpha) / alpha;
        full.set_block(n, n + p, &b.transpose().scaled(c));
        full.set_block(n + p, n, &b.scaled(c));
        full.set_block(n + p, n + p, &DenseMatrix::identity(m).scaled(1.0 / (alpha * beta)));
        let op = PsdOperator::new(full)
            .map_err(|e| Error::Internal(format!("metric M failed its PSD probe: {e}")))?;
        Ok(Self { op, n, p, m })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.n, self.p, self.m)
    }

    pub fn matrix(&self) -> &DenseMatrix {
        self.op.matrix()
    }

    pub fn operator(&self) -> &PsdOperator {
        &self.op
    }

    pub fn apply(&self, v: &[f64]) -> Vector {
        self.op.apply(v)
    }

    pub fn inner(&self, v: &[f64], w: &[f64]) -> f64 {
        self.op.inner(v, w)
    }

    /// `‖v‖²_M`; `v` must have length `n + p + m`.
    pub fn norm_sq(&self, v: &[f64]) -> f64 {
        linalg::seminorm_sq(&self.op, v).expect("stacked vector matches M")
    }

    pub fn try_norm_sq(&self, v: &[f64]) -> Result<f64> {
        linalg::seminorm_sq(&self.op, v)
    }

    /// Splits a stacked vector into its `(x, y, γ)` blocks.
    pub fn split<'v>(&self, v: &'v [f64]) -> (&'v [f64], &'v [f64], &'v [f64]) {
        let (x, rest) = v.split_at(self.n);
        let (y, g) = rest.split_at(self.p);
        (x, y, g)
    }
}

/// `σ_α = 1 / (1 + α(2 − α))`.
pub fn sigma_alpha(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(Error::Config(format!("alpha = {alpha} outside (0, 2]")));
    }
    Ok(1.0 / (1.0 + alpha * (2.0 - alpha)))
}

/// Everything the verifiers need about one trajectory, computed once.
pub struct CertContext<'a> {
    pub inst: &'a SeparableInstance,
    pub traj: &'a Trajectory,
    pub metric: OperatorM,
    pub z_star: Vector,
    pub alpha: f64,
    pub beta: f64,
    pub sigma: f64,
    /// `d0 = ‖z* − z0‖²_M`.
    pub d0: f64,
    /// `η_0 = 4(2−α)σ d0/α`, `η_k = (2−α)σ‖Δy_k‖²_{H2}/α`.
    pub eta: Vec<f64>,
    z: Vec<Vector>,
    z_tilde: Vec<Vector>,
    dz: Vec<Vector>,
    /// `M(z_{k−1} − z_k)`, the HPE residual `v_k`.
    v: Vec<Vector>,
    /// `Aᵀγ̃_k + v_{k,x}` and `Bᵀγ̃_k + v_{k,y}`, the subgradients at `x_k`, `y_k`.
    u_x: Vec<Vector>,
    u_y: Vec<Vector>,
    dy_h2: Vec<f64>,
}

impl<'a> CertContext<'a> {
    pub fn new(inst: &'a SeparableInstance, traj: &'a Trajectory, z_star: &KktPoint) -> Result<Self> {
        inst.check_point(z_star)?;
        let gap = kkt_gap(inst, z_star)?;
        if !(gap <= SOLUTION_TOL) {
            return Err(Error::Config(format!(
                "reference solution has KKT gap {gap:.3e} > {SOLUTION_TOL:e}"
            )));
        }
        let params = &traj.params;
        let metric = OperatorM::build(inst, params)?;
        let (alpha, beta) = (params.alpha, params.beta);
        let sigma = sigma_alpha(alpha)?;
        let states = traj.states();
        let z: Vec<Vector> = states.iter().map(|s| s.z_stacked()).collect();
        for zk in &z {
            check_dim("trajectory iterate", metric.op.side(), zk.len())?;
        }
        let z_star = z_star.stacked();
        let d0 = metric.norm_sq(&linalg::sub(&z_star, &z[0]));
        let mut z_tilde = vec![z[0].clone()];
        let mut dz = vec![vec![0.0; z[0].len()]];
        let mut v = vec![vec![0.0; z[0].len()]];
        let mut dy_h2 = vec![0.0];
        for k in 1..states.len() {
            let zt = states[k]
                .z_tilde_stacked()
                .ok_or_else(|| Error::Internal(format!("iterate {k} lacks gamma_tilde")))?;
            let d = linalg::sub(&z[k], &z[k - 1]);
            let (_, dy, _) = metric.split(&d);
            dy_h2.push(linalg::seminorm_sq(&params.h2, dy)?);
            v.push(linalg::scale(&metric.apply(&d), -1.0));
            dz.push(d);
            z_tilde.push(zt);
        }
        let mut u_x = vec![Vec::new()];
        let mut u_y = vec![Vec::new()];
        for k in 1..states.len() {
            let (vx, vy, _) = metric.split(&v[k]);
            let (_, _, gt) = metric.split(&z_tilde[k]);
            let mut ux = inst.a().tmatvec(gt);
            linalg::axpy(&mut ux, 1.0, vx);
            let mut uy = inst.b_mat().tmatvec(gt);
            linalg::axpy(&mut uy, 1.0, vy);
            u_x.push(ux);
            u_y.push(uy);
        }
        let c = (2.0 - alpha) * sigma / alpha;
        let mut eta = vec![4.0 * c * d0];
        eta.extend(dy_h2.iter().skip(1).map(|q| c * q));
        Ok(Self {
            inst,
            traj,
            metric,
            z_star,
            alpha,
            beta,
            sigma,
            d0,
            eta,
            z,
            z_tilde,
            dz,
            v,
            u_x,
            u_y,
            dy_h2,
        })
    }

    /// Index of the last iterate.
    pub fn last_k(&self) -> usize {
        self.z.len() - 1
    }

    pub fn z(&self, k: usize) -> &[f64] {
        &self.z[k]
    }

    /// `z̃_k` for `k ≥ 1`.
    pub fn z_tilde(&self, k: usize) -> &[f64] {
        &self.z_tilde[k]
    }

    /// `Δz_k = z_k − z_{k−1}` for `k ≥ 1`.
    pub fn dz(&self, k: usize) -> &[f64] {
        &self.dz[k]
    }

    /// `v_k = M(z_{k−1} − z_k)` for `k ≥ 1`.
    pub fn v(&self, k: usize) -> &[f64] {
        &self.v[k]
    }

    /// `Aᵀγ̃_k − H1Δx_k ∈ ∂f(x_k)` for `k ≥ 1`.
    pub fn u_x(&self, k: usize) -> &[f64] {
        &self.u_x[k]
    }

    /// `Bᵀγ̃_k − (H2 + (β/α)BᵀB)Δy_k − ((1−α)/α)BᵀΔγ_k ∈ ∂g(y_k)` for `k ≥ 1`.
    pub fn u_y(&self, k: usize) -> &[f64] {
        &self.u_y[k]
    }

    /// `‖Δy_k‖²_{H2}` for `k ≥ 1`.
    pub fn dy_h2(&self, k: usize) -> f64 {
        self.dy_h2[k]
    }

    /// `‖Δz_k‖_M` for `k ≥ 1`.
    pub fn dz_norm_m(&self, k: usize) -> f64 {
        self.metric.norm_sq(&self.dz[k]).sqrt()
    }

    /// Fenchel gaps certifying `v_k ∈ T(z̃_k)` on the `x` and `y` blocks,
    /// and the residual of its linear third block.
    pub fn inclusion_residuals(&self, k: usize) -> Result<InclusionResiduals> {
        let inst = self.inst;
        let (_, _, vg) = self.metric.split(&self.v[k]);
        let (x, y, _) = self.metric.split(&self.z_tilde[k]);
        let gap_f = inst.f().fenchel_gap(&self.u_x[k], x)?;
        let gap_g = inst.g().fenchel_gap(&self.u_y[k], y)?;
        let r = inst.constraint_residual(x, y);
        let third = linalg::max_abs(&linalg::sub(vg, &r));
        let scale = linalg::max_abs(vg).max(linalg::max_abs(&r)).max(linalg::max_abs(inst.rhs()));
        Ok(InclusionResiduals {
            gap_f,
            gap_g,
            constraint: third,
            constraint_scale: scale,
        })
    }

    /// `γ̃_k − γ_{k−1} = (Δγ_k + βBΔy_k)/α`, as a max-abs residual and scale.
    pub fn multiplier_identity(&self, k: usize) -> (f64, f64) {
        let (_, _, gt) = self.metric.split(&self.z_tilde[k]);
        let (_, _, g_prev) = self.metric.split(&self.z[k - 1]);
        let (_, dy, dg) = self.metric.split(&self.dz[k]);
        let bdy = self.inst.b_mat().matvec(dy);
        let lhs = linalg::sub(gt, g_prev);
        let rhs: Vector = (0..dg.len())
            .map(|i| (dg[i] + self.beta * bdy[i]) / self.alpha)
            .collect();
        let scale = [gt, g_prev, dg, &bdy]
            .iter()
            .map(|w| linalg::max_abs(w))
            .fold(0.0, f64::max)
            * (1.0 + self.beta)
            / self.alpha;
        (linalg::max_abs(&linalg::sub(&lhs, &rhs)), scale)
    }

    /// `((1−α)/α)BΔy_k + Δγ_k/(αβ) + (Ax_k + By_k − b) = 0`.
    pub fn constraint_identity(&self, k: usize) -> (f64, f64) {
        let (x, y, _) = self.metric.split(&self.z[k]);
        let (_, dy, dg) = self.metric.split(&self.dz[k]);
        let bdy = self.inst.b_mat().matvec(dy);
        let r = self.inst.constraint_residual(x, y);
        let c = (1.0 - self.alpha) / self.alpha;
        let ab = self.alpha * self.beta;
        let res: Vector = (0..r.len()).map(|i| c * bdy[i] + dg[i] / ab + r[i]).collect();
        let scale = (c.abs() * linalg::max_abs(&bdy))
            .max(linalg::max_abs(dg) / ab)
            .max(linalg::max_abs(&r))
            .max(linalg::max_abs(self.inst.rhs()));
        (linalg::max_abs(&res), scale)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct InclusionResiduals {
    pub gap_f: f64,
    pub gap_g: f64,
    pub constraint: f64,
    pub constraint_scale: f64,
}

/// One row of the HPE certificate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HpeCertificate {
    pub k: usize,
    /// `‖z̃_k − z_k‖²_M + η_k`
    pub lhs: f64,
    /// `σ‖z̃_k − z_{k−1}‖²_M + η_{k−1}`
    pub rhs: f64,
    pub slack: f64,
    pub inclusion_gap_f: f64,
    pub inclusion_gap_g: f64,
    pub constraint_residual: f64,
    pub multiplier_identity_residual: f64,
}

#[derive(Clone, Debug)]
pub struct HpeCertification {
    pub rows: Vec<HpeCertificate>,
    pub checks: Vec<CheckReport>,
}

impl HpeCertification {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(CheckReport::passed)
    }

    pub fn ensure(&self) -> Result<()> {
        match crate::checks::first_failure(&self.checks) {
            Some((check, k)) => Err(Error::Certification {
                check: check.to_string(),
                k,
            }),
            None => Ok(()),
        }
    }
}

pub const HPE_INEQUALITY: &str = "hpe_inequality";
pub const INCLUSION_F: &str = "inclusion_f";
pub const INCLUSION_G: &str = "inclusion_g";
pub const INCLUSION_CONSTRAINT: &str = "inclusion_constraint";
pub const MULTIPLIER_IDENTITY: &str = "multiplier_identity";
pub const CONSTRAINT_IDENTITY: &str = "constraint_identity";
pub const DELTA_Y_LOWER_BOUND: &str = "delta_y_lower_bound";
pub const FEJER: &str = "fejer_monotonicity";
pub const RHO_BOUND: &str = "rho_bound";

/// Certifies, for every recorded `k ≥ 1`, the HPE error condition, the
/// inclusion `M(z_{k−1} − z_k) ∈ T(z̃_k)` and the two algebraic identities
/// tying `γ̃` to the iterates.
pub fn certify_hpe(ctx: &CertContext) -> Result<HpeCertification> {
    let mut hpe = Check::new(HPE_INEQUALITY, Tolerance::cert());
    let mut inc_f = Check::new(INCLUSION_F, Tolerance::inclusion());
    let mut inc_g = Check::new(INCLUSION_G, Tolerance::inclusion());
    let mut inc_c = Check::new(INCLUSION_CONSTRAINT, Tolerance::identity());
    let mut mult = Check::new(MULTIPLIER_IDENTITY, Tolerance::identity());
    let mut cons = Check::new(CONSTRAINT_IDENTITY, Tolerance::identity());
    let mut rows = Vec::with_capacity(ctx.last_k());
    for k in 1..=ctx.last_k() {
        let zt = ctx.z_tilde(k);
        let lhs = ctx.metric.norm_sq(&linalg::sub(zt, ctx.z(k))) + ctx.eta[k];
        let rhs = ctx.sigma * ctx.metric.norm_sq(&linalg::sub(zt, ctx.z(k - 1))) + ctx.eta[k - 1];
        hpe.le(k, lhs, rhs);
        let inc = ctx.inclusion_residuals(k)?;
        inc_f.le(k, inc.gap_f, 0.0);
        inc_g.le(k, inc.gap_g, 0.0);
        inc_c.record(k, -inc.constraint, inc.constraint_scale);
        let (mres, mscale) = ctx.multiplier_identity(k);
        mult.record(k, -mres, mscale);
        let (cres, cscale) = ctx.constraint_identity(k);
        cons.record(k, -cres, cscale);
        rows.push(HpeCertificate {
            k,
            lhs,
            rhs,
            slack: rhs - lhs,
            inclusion_gap_f: inc.gap_f,
            inclusion_gap_g: inc.gap_g,
            constraint_residual: cres,
            multiplier_identity_residual: mres,
        });
    }
    Ok(HpeCertification {
        rows,
        checks: vec![
            hpe.finish(),
            inc_f.finish(),
            inc_g.finish(),
            inc_c.finish(),
            mult.finish(),
            cons.finish(),
        ],
    })
}

/// `ρ_k = max_{i ≤ k} ‖z̃_i − z_{i−1}‖²_M`, with `ρ_0 = 0`.
pub fn rho_sequence(ctx: &CertContext) -> Vec<f64> {
    let mut rho = vec![0.0];
    let mut running: f64 = 0.0;
    for k in 1..=ctx.last_k() {
        running = running.max(ctx.metric.norm_sq(&linalg::sub(ctx.z_tilde(k), ctx.z(k - 1))));
        rho.push(running);
    }
    rho
}

/// `4(1 + 2α)[α + 4(2 − α)σ]/α³`, the multiple of `d0` bounding `ρ_k`.
pub fn rho_bound_factor(alpha: f64) -> Result<f64> {
    let sigma = sigma_alpha(alpha)?;
    Ok(4.0 * (1.0 + 2.0 * alpha) * (alpha + 4.0 * (2.0 - alpha) * sigma) / alpha.powi(3))
}

pub fn check_rho_bound(ctx: &CertContext) -> Result<CheckReport> {
    let bound = rho_bound_factor(ctx.alpha)? * ctx.d0;
    let mut c = Check::new(RHO_BOUND, Tolerance::cert());
    for (k, rho) in rho_sequence(ctx).into_iter().enumerate().skip(1) {
        c.le(k, rho, bound);
    }
    Ok(c.finish())
}

/// `2⟨BΔy_1, Δγ_1⟩ ≥ ‖Δy_1‖²_{H2} − 4d0` and, for `k ≥ 2`,
/// `2⟨BΔy_k, Δγ_k⟩ ≥ ‖Δy_k‖²_{H2} − ‖Δy_{k−1}‖²_{H2}`.
pub fn check_delta_y_lower_bound(ctx: &CertContext) -> CheckReport {
    let mut c = Check::new(DELTA_Y_LOWER_BOUND, Tolerance::cert());
    for k in 1..=ctx.last_k() {
        let (_, dy, dg) = ctx.metric.split(ctx.dz(k));
        let lhs = 2.0 * linalg::dot(&ctx.inst.b_mat().matvec(dy), dg);
        let prev = if k == 1 { 4.0 * ctx.d0 } else { ctx.dy_h2(k - 1) };
        let rhs = ctx.dy_h2(k) - prev;
        c.record(k, lhs - rhs, lhs.abs().max(ctx.dy_h2(k)).max(prev));
    }
    c.finish()
}

/// `‖z* − z_k‖²_M + η_k ≤ ‖z* − z_{k−1}‖²_M + η_{k−1}`.
pub fn check_fejer(ctx: &CertContext) -> CheckReport {
    let mut c = Check::new(FEJER, Tolerance::cert());
    let dist: Vec<f64> = (0..=ctx.last_k())
        .map(|k| ctx.metric.norm_sq(&linalg::sub(&ctx.z_star, ctx.z(k))))
        .collect();
    for k in 1..=ctx.last_k() {
        c.le(k, dist[k] + ctx.eta[k], dist[k - 1] + ctx.eta[k - 1]);
    }
    c.finish()
}
