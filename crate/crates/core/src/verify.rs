//! Full certification of a trajectory and its JSON report.

use serde::Serialize;

use crate::admm::Trajectory;
use crate::certificates::{
    bound_rows, c_alpha, c_tilde_alpha, ergodic_certificate, pointwise_certificate,
    pointwise_constant, BoundRow, ErgodicCertificate, KGrid, PointwiseCertificate,
    POINTWISE_BOUND, POINTWISE_INCLUSION,
};
use crate::checks::{first_failure, CheckReport};
use crate::error::{Error, Result};
use crate::hpe::{
    certify_hpe, check_fejer, check_delta_y_lower_bound, check_rho_bound, rho_bound_factor, CertContext,
    HpeCertificate,
};
use crate::problem::{KktPoint, SeparableInstance};

#[derive(Clone, Debug, Serialize)]
pub struct Constants {
    pub alpha: f64,
    pub beta: f64,
    pub sigma_alpha: f64,
    pub d0: f64,
    pub eta0: f64,
    pub pointwise_constant: Option<f64>,
    pub c_alpha: f64,
    pub c_tilde_alpha: f64,
    pub rho_bound_factor: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct FailureRef {
    pub check: String,
    pub k: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerificationReport {
    pub passed: bool,
    pub iterations: usize,
    pub grid: KGrid,
    pub first_failure: Option<FailureRef>,
    pub constants: Constants,
    pub checks: Vec<CheckReport>,
    pub hpe_rows: Vec<HpeCertificate>,
    #[serde(skip)]
    pub bounds: Vec<BoundRow>,
}

impl VerificationReport {
    pub fn check(&self, name: &str) -> Option<&CheckReport> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn ensure(&self) -> Result<()> {
        match &self.first_failure {
            Some(f) => Err(Error::Certification {
                check: f.check.clone(),
                k: f.k,
            }),
            None => Ok(()),
        }
    }
}

/// Runs every check. Certification failures are reported, not returned as
/// errors; `Err` means the inputs could not be checked at all.
pub fn verify(
    inst: &SeparableInstance,
    traj: &Trajectory,
    z_star: &KktPoint,
    grid: KGrid,
) -> Result<VerificationReport> {
    let ctx = CertContext::new(inst, traj, z_star)?;
    let alpha = ctx.alpha;
    let hpe = certify_hpe(&ctx)?;
    let mut checks = hpe.checks;
    checks.push(check_delta_y_lower_bound(&ctx));
    checks.push(check_fejer(&ctx));
    checks.push(check_rho_bound(&ctx)?);
    let pointwise: Option<PointwiseCertificate> = match pointwise_certificate(&ctx) {
        Ok(p) => Some(p),
        Err(Error::PointwiseUndefined(_)) => None,
        Err(e) => return Err(e),
    };
    match &pointwise {
        Some(p) => {
            checks.push(p.bound.clone());
            checks.push(p.inclusion.clone());
        }
        None => {
            let note = "sigma_alpha = 1 at alpha = 2";
            checks.push(CheckReport::not_applicable(POINTWISE_BOUND, note));
            checks.push(CheckReport::not_applicable(POINTWISE_INCLUSION, note));
        }
    }
    let ergodic: ErgodicCertificate = ergodic_certificate(&ctx, grid)?;
    checks.extend(ergodic.checks.iter().cloned());
    let first = first_failure(&checks).map(|(check, k)| FailureRef {
        check: check.to_string(),
        k,
    });
    Ok(VerificationReport {
        passed: first.is_none(),
        iterations: ctx.last_k(),
        grid,
        first_failure: first,
        constants: Constants {
            alpha,
            beta: ctx.beta,
            sigma_alpha: ctx.sigma,
            d0: ctx.d0,
            eta0: ctx.eta[0],
            pointwise_constant: pointwise_constant(alpha).ok(),
            c_alpha: c_alpha(alpha)?,
            c_tilde_alpha: c_tilde_alpha(alpha)?,
            rho_bound_factor: rho_bound_factor(alpha)?,
        },
        checks,
        hpe_rows: hpe.rows,
        bounds: bound_rows(pointwise.as_ref(), &ergodic),
    })
}
