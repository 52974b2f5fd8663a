//! Per-iteration inequality bookkeeping shared by the verifiers.

use serde::Serialize;

use crate::error::{Error, Result};

/// Relative-plus-absolute tolerance for certified inequalities:
/// `1e-7 · (1 + magnitude)`.
pub const CERT_TOL: f64 = 1e-7;
/// Per-iteration algebraic identities.
pub const IDENTITY_TOL: f64 = 1e-10;
/// Fenchel gaps certifying exact (ε = 0) inclusions.
pub const INCLUSION_TOL: f64 = 1e-8;
/// Identities that hold only after averaging (more rounding).
pub const ERGODIC_IDENTITY_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckStatus {
    Pass,
    Fail,
    NotApplicable,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
}

impl Tolerance {
    pub const fn new(abs: f64, rel: f64) -> Self {
        Self { abs, rel }
    }

    /// `abs + rel·scale`
    pub fn at(&self, scale: f64) -> f64 {
        self.abs + self.rel * scale.abs()
    }

    /// The certificate tolerance `CERT_TOL·(1 + scale)`.
    pub const fn cert() -> Self {
        Self::new(CERT_TOL, CERT_TOL)
    }

    pub const fn identity() -> Self {
        Self::new(IDENTITY_TOL, IDENTITY_TOL)
    }

    pub const fn inclusion() -> Self {
        Self::new(INCLUSION_TOL, 0.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SlackEntry {
    pub k: usize,
    /// Allowed side minus checked side; the check passes iff `slack ≥ −tol`.
    pub slack: f64,
    pub tol: f64,
}

impl SlackEntry {
    pub fn passed(&self) -> bool {
        self.slack >= -self.tol
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub status: CheckStatus,
    pub tolerance: Tolerance,
    pub worst_slack: Option<f64>,
    pub worst_k: Option<usize>,
    pub first_failure_k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub per_k: Vec<SlackEntry>,
}

impl CheckReport {
    pub fn not_applicable(name: &str, note: &str) -> Self {
        Self {
            name: name.to_string(),
            status: CheckStatus::NotApplicable,
            tolerance: Tolerance::new(0.0, 0.0),
            worst_slack: None,
            worst_k: None,
            first_failure_k: None,
            note: Some(note.to_string()),
            per_k: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.status != CheckStatus::Fail
    }

    /// `Err(Certification)` naming this check and its first failing `k`.
    pub fn ensure(&self) -> Result<()> {
        match self.first_failure_k {
            Some(k) => Err(Error::Certification {
                check: self.name.clone(),
                k,
            }),
            None => Ok(()),
        }
    }
}

/// Accumulates per-k slacks for one named inequality.
#[derive(Clone, Debug)]
pub struct Check {
    name: String,
    tolerance: Tolerance,
    entries: Vec<SlackEntry>,
}

impl Check {
    pub fn new(name: &str, tolerance: Tolerance) -> Self {
        Self {
            name: name.to_string(),
            tolerance,
            entries: Vec::new(),
        }
    }

    /// Records `allowed ≥ actual`, tolerance scaled by the larger magnitude.
    pub fn le(&mut self, k: usize, actual: f64, allowed: f64) {
        self.record(k, allowed - actual, actual.abs().max(allowed.abs()));
    }

    /// Records `slack ≥ −tol(scale)`.
    pub fn record(&mut self, k: usize, slack: f64, scale: f64) {
        let slack = if slack.is_nan() { f64::NEG_INFINITY } else { slack };
        let tol = self.tolerance.at(if scale.is_finite() { scale } else { 0.0 });
        self.entries.push(SlackEntry { k, slack, tol });
    }

    pub fn finish(self) -> CheckReport {
        let first_failure_k = self.entries.iter().find(|e| !e.passed()).map(|e| e.k);
        let worst = self
            .entries
            .iter()
            .min_by(|a, b| (a.slack + a.tol).total_cmp(&(b.slack + b.tol)));
        CheckReport {
            name: self.name,
            status: if first_failure_k.is_some() {
                CheckStatus::Fail
            } else {
                CheckStatus::Pass
            },
            tolerance: self.tolerance,
            worst_slack: worst.map(|e| e.slack),
            worst_k: worst.map(|e| e.k),
            first_failure_k,
            note: None,
            per_k: self.entries,
        }
    }
}

/// The earliest failure across reports: smallest `k`, ties broken by order.
pub fn first_failure(reports: &[CheckReport]) -> Option<(&str, usize)> {
    reports
        .iter()
        .filter_map(|r| r.first_failure_k.map(|k| (r.name.as_str(), k)))
        .min_by_key(|(_, k)| *k)
}
