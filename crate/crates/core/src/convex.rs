//! Convex block functions with value, proximal, conjugate and Fenchel-gap
//! oracles.
//!
//! Conjugates are exact for all three variants, so `fenchel_gap(F, u, x)` is
//! the smallest `ε` with `u ∈ ∂_ε F(x)`.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{
    self, dot, norm, Cholesky, DenseMatrix, PsdOperator, SymmetricEigen, Vector,
};

/// Slack allowed on the boundary of an indicator-type conjugate domain.
pub const DOMAIN_TOL: f64 = 1e-9;
/// Least-squares residual tolerance for the range test of a singular Hessian.
pub const RANGE_TOL: f64 = 1e-8;
/// Negative gaps down to `-GAP_CLAMP_TOL * scale` are rounding and clamp to 0.
pub const GAP_CLAMP_TOL: f64 = 1e-9;

/// `½ vᵀPv + qᵀv + c`
#[derive(Debug)]
pub struct QuadraticFn {
    p: PsdOperator,
    q: Vector,
    c: f64,
    factor: OnceLock<Result<QuadFactor>>,
}

#[derive(Debug)]
enum QuadFactor {
    Definite(Cholesky),
    Singular(SymmetricEigen, Vec<usize>),
}

impl Clone for QuadraticFn {
    fn clone(&self) -> Self {
        Self {
            p: self.p.clone(),
            q: self.q.clone(),
            c: self.c,
            factor: OnceLock::new(),
        }
    }
}

impl PartialEq for QuadraticFn {
    fn eq(&self, other: &Self) -> bool {
        self.p == other.p && self.q == other.q && self.c == other.c
    }
}

impl QuadraticFn {
    pub fn new(p: PsdOperator, q: Vector, c: f64) -> Result<Self> {
        check_dim("quadratic linear term", p.side(), q.len())?;
        linalg::ensure_finite("quadratic linear term", &q)?;
        if !c.is_finite() {
            return Err(Error::NonFinite("quadratic constant".into()));
        }
        Ok(Self {
            p,
            q,
            c,
            factor: OnceLock::new(),
        })
    }

    pub fn hessian(&self) -> &PsdOperator {
        &self.p
    }

    pub fn linear(&self) -> &[f64] {
        &self.q
    }

    pub fn constant(&self) -> f64 {
        self.c
    }

    pub fn gradient(&self, x: &[f64]) -> Vector {
        linalg::add(&self.p.apply(x), &self.q)
    }

    fn factor(&self) -> Result<&QuadFactor> {
        self.factor
            .get_or_init(|| match Cholesky::factor(self.p.matrix()) {
                Ok(ch) => Ok(QuadFactor::Definite(ch)),
                Err(_) => {
                    let eig = SymmetricEigen::new(self.p.matrix())?;
                    let range = eig.range_indices(1e-10);
                    Ok(QuadFactor::Singular(eig, range))
                }
            })
            .as_ref()
            .map_err(|e| Error::Internal(format!("quadratic factorization: {e}")))
    }

    /// `½ wᵀP⁺w` when `w ∈ range(P)`, `+∞` otherwise.
    fn pinv_form(&self, w: &[f64]) -> Result<f64> {
        Ok(match self.factor()? {
            QuadFactor::Definite(ch) => 0.5 * dot(w, &ch.solve(w)),
            QuadFactor::Singular(eig, range) => {
                let coords = eig.coords(w);
                let resid = (0..coords.len())
                    .filter(|i| !range.contains(i))
                    .map(|i| coords[i] * coords[i])
                    .sum::<f64>()
                    .sqrt();
                if resid > RANGE_TOL * (1.0 + norm(w)) {
                    f64::INFINITY
                } else {
                    0.5 * range
                        .iter()
                        .map(|&i| coords[i] * coords[i] / eig.values[i])
                        .sum::<f64>()
                }
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FunctionRepr", into = "FunctionRepr")]
pub enum ConvexFunctionSpec {
    Quadratic(QuadraticFn),
    /// `μ‖v‖₁`
    L1 { dim: usize, mu: f64 },
    Zero { dim: usize },
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "lowercase", deny_unknown_fields)]
enum FunctionRepr {
    Quadratic {
        #[serde(rename = "P")]
        p: Vec<f64>,
        q: Vec<f64>,
        c: f64,
    },
    L1 {
        dim: usize,
        mu: f64,
    },
    Zero {
        dim: usize,
    },
}

impl TryFrom<FunctionRepr> for ConvexFunctionSpec {
    type Error = Error;

    fn try_from(r: FunctionRepr) -> Result<Self> {
        match r {
            FunctionRepr::Quadratic { p, q, c } => {
                let n = q.len();
                let p = DenseMatrix::new(n, n, p)?;
                ConvexFunctionSpec::quadratic(PsdOperator::new(p)?, q, c)
            }
            FunctionRepr::L1 { dim, mu } => ConvexFunctionSpec::l1(dim, mu),
            FunctionRepr::Zero { dim } => ConvexFunctionSpec::zero(dim),
        }
    }
}

impl From<ConvexFunctionSpec> for FunctionRepr {
    fn from(f: ConvexFunctionSpec) -> Self {
        match f {
            ConvexFunctionSpec::Quadratic(qf) => FunctionRepr::Quadratic {
                p: qf.p.matrix().data().to_vec(),
                q: qf.q,
                c: qf.c,
            },
            ConvexFunctionSpec::L1 { dim, mu } => FunctionRepr::L1 { dim, mu },
            ConvexFunctionSpec::Zero { dim } => FunctionRepr::Zero { dim },
        }
    }
}

impl ConvexFunctionSpec {
    pub fn quadratic(p: PsdOperator, q: Vector, c: f64) -> Result<Self> {
        Ok(Self::Quadratic(QuadraticFn::new(p, q, c)?))
    }

    pub fn l1(dim: usize, mu: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("l1 dimension must be positive".into()));
        }
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::Config(format!("l1 weight must be positive, got {mu}")));
        }
        Ok(Self::L1 { dim, mu })
    }

    pub fn zero(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("zero-function dimension must be positive".into()));
        }
        Ok(Self::Zero { dim })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Quadratic(qf) => qf.q.len(),
            Self::L1 { dim, .. } | Self::Zero { dim } => *dim,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Quadratic(_) => "quadratic",
            Self::L1 { .. } => "l1",
            Self::Zero { .. } => "zero",
        }
    }

    pub fn eval(&self, v: &[f64]) -> Result<f64> {
        check_dim("function argument", self.dim(), v.len())?;
        Ok(match self {
            Self::Quadratic(qf) => 0.5 * qf.p.inner(v, v) + dot(&qf.q, v) + qf.c,
            Self::L1 { mu, .. } => mu * v.iter().map(|x| x.abs()).sum::<f64>(),
            Self::Zero { .. } => 0.0,
        })
    }

    /// `argmin_u F(u) + ‖u − v‖² / (2t)`
    pub fn prox(&self, t: f64, v: &[f64]) -> Result<Vector> {
        check_dim("prox argument", self.dim(), v.len())?;
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::Config(format!("prox step must be positive, got {t}")));
        }
        Ok(match self {
            Self::Quadratic(qf) => {
                let n = v.len();
                let k = qf.p.matrix().scaled(t).add(&DenseMatrix::identity(n))?;
                let rhs: Vector = v.iter().zip(&qf.q).map(|(vi, qi)| vi - t * qi).collect();
                linalg::solve_spd(&k, &rhs)?
            }
            Self::L1 { mu, .. } => soft_threshold(v, t * mu),
            Self::Zero { .. } => v.to_vec(),
        })
    }

    /// `F*(u) = sup_x ⟨u, x⟩ − F(x)`; `+∞` outside the conjugate's domain.
    pub fn conjugate_eval(&self, u: &[f64]) -> Result<f64> {
        check_dim("conjugate argument", self.dim(), u.len())?;
        Ok(match self {
            Self::Quadratic(qf) => {
                let w = linalg::sub(u, &qf.q);
                qf.pinv_form(&w)? - qf.c
            }
            Self::L1 { mu, .. } => {
                if in_box(u, *mu) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            Self::Zero { .. } => {
                if in_box(u, 0.0) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        })
    }

    /// `F(x) + F*(u) − ⟨u, x⟩ ≥ 0`, the least `ε` with `u ∈ ∂_ε F(x)`.
    ///
    /// The quadratic case is evaluated in the cancellation-free form
    /// `½ rᵀP⁺r` with `r = u − ∇F(x)`.
    pub fn fenchel_gap(&self, u: &[f64], x: &[f64]) -> Result<f64> {
        check_dim("fenchel gap subgradient", self.dim(), u.len())?;
        check_dim("fenchel gap point", self.dim(), x.len())?;
        match self {
            Self::Quadratic(qf) => {
                let r = linalg::sub(u, &qf.gradient(x));
                qf.pinv_form(&r)
            }
            Self::L1 { mu, .. } => {
                if !in_box(u, *mu) {
                    return Ok(f64::INFINITY);
                }
                // u within the tolerant box is evaluated at its projection
                let raw: f64 = x
                    .iter()
                    .zip(u)
                    .map(|(xi, ui)| mu * xi.abs() - ui.clamp(-mu, *mu) * xi)
                    .sum();
                let scale = 1.0 + mu * x.iter().map(|v| v.abs()).sum::<f64>();
                clamp_gap(raw, scale)
            }
            Self::Zero { .. } => Ok(if in_box(u, 0.0) { 0.0 } else { f64::INFINITY }),
        }
    }
}

fn in_box(u: &[f64], radius: f64) -> bool {
    let lim = radius + DOMAIN_TOL * radius.max(1.0);
    u.iter().all(|v| v.abs() <= lim)
}

fn clamp_gap(raw: f64, scale: f64) -> Result<f64> {
    if raw >= 0.0 {
        Ok(raw)
    } else if raw >= -GAP_CLAMP_TOL * scale {
        Ok(0.0)
    } else {
        Err(Error::Internal(format!("negative Fenchel gap {raw:e}")))
    }
}

/// Componentwise `sign(vᵢ)·max(|vᵢ| − κ, 0)`.
pub fn soft_threshold(v: &[f64], kappa: f64) -> Vector {
    v.iter()
        .map(|x| x.signum() * (x.abs() - kappa).max(0.0))
        .collect()
}
