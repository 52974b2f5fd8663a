//! Separable instances `min f(x) + g(y) s.t. Ax + By = b`, their JSON file
//! format, seeded generators, and an independent ground-truth KKT solver.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::convex::{soft_threshold, ConvexFunctionSpec};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{self, norm, DenseMatrix, PsdOperator, SymmetricEigen, Vector};

/// Largest KKT gap a stored solution may carry.
pub const SOLUTION_TOL: f64 = 1e-6;

/// A point `(x, y, γ)` of the Lagrangian system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KktPoint {
    pub x: Vector,
    pub y: Vector,
    pub gamma: Vector,
}

impl KktPoint {
    pub fn zeros(n: usize, p: usize, m: usize) -> Self {
        Self {
            x: vec![0.0; n],
            y: vec![0.0; p],
            gamma: vec![0.0; m],
        }
    }

    pub fn stacked(&self) -> Vector {
        linalg::stack(&[&self.x, &self.y, &self.gamma])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeparableInstance {
    f: ConvexFunctionSpec,
    g: ConvexFunctionSpec,
    a: DenseMatrix,
    b_mat: DenseMatrix,
    rhs: Vector,
    solution: Option<KktPoint>,
}

impl SeparableInstance {
    /// Builds an instance after checking dimensional consistency.
    pub fn new(
        f: ConvexFunctionSpec,
        g: ConvexFunctionSpec,
        a: DenseMatrix,
        b_mat: DenseMatrix,
        rhs: Vector,
    ) -> Result<Self> {
        let (m, n, p) = (a.rows(), a.cols(), b_mat.cols());
        check_dim("f dimension vs columns of A", n, f.dim())?;
        check_dim("g dimension vs columns of B", p, g.dim())?;
        check_dim("rows of B vs rows of A", m, b_mat.rows())?;
        check_dim("length of b vs rows of A", m, rhs.len())?;
        linalg::ensure_finite("b", &rhs)?;
        Ok(Self {
            f,
            g,
            a,
            b_mat,
            rhs,
            solution: None,
        })
    }

    /// Attaches a reference solution; it must pass the KKT check.
    pub fn with_solution(mut self, z: KktPoint) -> Result<Self> {
        self.check_point(&z)?;
        let gap = kkt_gap(&self, &z)?;
        if !(gap <= SOLUTION_TOL) {
            return Err(Error::Config(format!(
                "stored solution has kkt gap {gap:e} > {SOLUTION_TOL:e}"
            )));
        }
        self.solution = Some(z);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.a.cols()
    }
    pub fn p(&self) -> usize {
        self.b_mat.cols()
    }
    pub fn m(&self) -> usize {
        self.a.rows()
    }
    pub fn f(&self) -> &ConvexFunctionSpec {
        &self.f
    }
    pub fn g(&self) -> &ConvexFunctionSpec {
        &self.g
    }
    pub fn a(&self) -> &DenseMatrix {
        &self.a
    }
    pub fn b_mat(&self) -> &DenseMatrix {
        &self.b_mat
    }
    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }
    pub fn solution(&self) -> Option<&KktPoint> {
        self.solution.as_ref()
    }

    /// `Ax + By − b`
    pub fn constraint_residual(&self, x: &[f64], y: &[f64]) -> Vector {
        let mut r = self.a.matvec(x);
        linalg::axpy(&mut r, 1.0, &self.b_mat.matvec(y));
        linalg::axpy(&mut r, -1.0, &self.rhs);
        r
    }

    pub fn check_point(&self, z: &KktPoint) -> Result<()> {
        check_dim("point x", self.n(), z.x.len())?;
        check_dim("point y", self.p(), z.y.len())?;
        check_dim("point gamma", self.m(), z.gamma.len())?;
        linalg::ensure_finite("point", &z.stacked())
    }

    /// `f = ½‖Cx − d‖²`, `g = μ‖·‖₁`, `A = I`, `B = −I`, `b = 0`.
    pub fn is_lasso_split(&self) -> bool {
        let n = self.n();
        matches!(self.f, ConvexFunctionSpec::Quadratic(_))
            && matches!(self.g, ConvexFunctionSpec::L1 { .. })
            && self.m() == n
            && self.p() == n
            && self.a == DenseMatrix::identity(n)
            && self.b_mat == DenseMatrix::identity(n).scaled(-1.0)
            && self.rhs.iter().all(|v| *v == 0.0)
    }
}

/// `max(gap_f(Aᵀγ, x), gap_g(Bᵀγ, y), ‖Ax + By − b‖)`; zero iff `z` solves the
/// Lagrangian system.
pub fn kkt_gap(inst: &SeparableInstance, z: &KktPoint) -> Result<f64> {
    inst.check_point(z)?;
    let gap_f = inst.f.fenchel_gap(&inst.a.tmatvec(&z.gamma), &z.x)?;
    let gap_g = inst.g.fenchel_gap(&inst.b_mat.tmatvec(&z.gamma), &z.y)?;
    let feas = norm(&inst.constraint_residual(&z.x, &z.y));
    Ok(gap_f.max(gap_g).max(feas))
}

fn hessian_and_linear(f: &ConvexFunctionSpec) -> Option<(DenseMatrix, Vector)> {
    match f {
        ConvexFunctionSpec::Quadratic(qf) => {
            Some((qf.hessian().matrix().clone(), qf.linear().to_vec()))
        }
        ConvexFunctionSpec::Zero { dim } => Some((DenseMatrix::zeros(*dim, *dim), vec![0.0; *dim])),
        ConvexFunctionSpec::L1 { .. } => None,
    }
}

/// Reference KKT point computed without any ADMM machinery.
///
/// Quadratic/zero blocks: spectral solve of the symmetric KKT matrix
/// `[[P_f, 0, −Aᵀ], [0, P_g, −Bᵀ], [−A, −B, 0]]`; a null space touching the
/// multiplier block is rejected. Lasso splits: ISTA on the composite problem.
pub fn solve_ground_truth(inst: &SeparableInstance) -> Result<KktPoint> {
    let z = if let (Some((pf, qf)), Some((pg, qg))) =
        (hessian_and_linear(&inst.f), hessian_and_linear(&inst.g))
    {
        solve_kkt_system(inst, &pf, &qf, &pg, &qg)?
    } else if inst.is_lasso_split() {
        solve_lasso_ista(inst)?
    } else {
        return Err(Error::Config(format!(
            "no ground-truth solver for f = {}, g = {} with this constraint structure",
            inst.f.name(),
            inst.g.name()
        )));
    };
    let gap = kkt_gap(inst, &z)?;
    if !(gap <= SOLUTION_TOL) {
        return Err(Error::Internal(format!(
            "ground-truth point has kkt gap {gap:e}; instance may be infeasible"
        )));
    }
    Ok(z)
}

fn solve_kkt_system(
    inst: &SeparableInstance,
    pf: &DenseMatrix,
    qf: &[f64],
    pg: &DenseMatrix,
    qg: &[f64],
) -> Result<KktPoint> {
    let (n, p, m) = (inst.n(), inst.p(), inst.m());
    let size = n + p + m;
    let mut k = DenseMatrix::zeros(size, size);
    let neg_a = inst.a.scaled(-1.0);
    let neg_b = inst.b_mat.scaled(-1.0);
    k.set_block(0, 0, pf);
    k.set_block(n, n, pg);
    k.set_block(0, n + p, &neg_a.transpose());
    k.set_block(n, n + p, &neg_b.transpose());
    k.set_block(n + p, 0, &neg_a);
    k.set_block(n + p, n, &neg_b);
    let rhs: Vector = qf
        .iter()
        .chain(qg)
        .map(|v| -v)
        .chain(inst.rhs.iter().map(|v| -v))
        .collect();

    let eig = SymmetricEigen::new(&k)?;
    let range = eig.range_indices(1e-10);
    for i in (0..size).filter(|i| !range.contains(i)) {
        let v = eig.vector(i);
        if norm(&v[n + p..]) > 1e-6 {
            return Err(Error::NonUniqueMultiplier(
                "KKT matrix is singular in the multiplier block".into(),
            ));
        }
    }
    let coords = eig.coords(&rhs);
    let mut sol = vec![0.0; size];
    for &i in &range {
        linalg::axpy(&mut sol, coords[i] / eig.values[i], &eig.vector(i));
    }
    Ok(KktPoint {
        x: sol[..n].to_vec(),
        y: sol[n..n + p].to_vec(),
        gamma: sol[n + p..].to_vec(),
    })
}

/// Fixed-point residual at which ISTA stops.
pub const ISTA_TOL: f64 = 1e-10;
const ISTA_CAP: usize = 10_000_000;

fn solve_lasso_ista(inst: &SeparableInstance) -> Result<KktPoint> {
    let (ConvexFunctionSpec::Quadratic(qf), ConvexFunctionSpec::L1 { mu, .. }) = (&inst.f, &inst.g)
    else {
        return Err(Error::Config("lasso ground truth needs quadratic f and l1 g".into()));
    };
    let hess = qf.hessian().matrix();
    let lip = linalg::spectral_norm_sq(hess)?.sqrt();
    let n = inst.n();
    let mut x = vec![0.0; n];
    if lip > 0.0 {
        let mut converged = false;
        for _ in 0..ISTA_CAP {
            let grad = qf.gradient(&x);
            let v: Vector = x.iter().zip(&grad).map(|(xi, gi)| xi - gi / lip).collect();
            let next = soft_threshold(&v, mu / lip);
            let step = norm(&linalg::sub(&next, &x));
            x = next;
            if step <= ISTA_TOL {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::IterationCap {
                context: "ISTA ground truth".into(),
                cap: ISTA_CAP,
            });
        }
    }
    // γ = ∇f(x) projected onto the ∞-ball of radius μ, where −γ ∈ μ∂‖x‖₁
    // holds exactly.
    let gamma: Vector = qf.gradient(&x).iter().map(|v| v.clamp(-mu, *mu)).collect();
    Ok(KktPoint {
        y: x.clone(),
        x,
        gamma,
    })
}

/// The scalar instance `min ½x² + ½y² s.t. x + y = 3`, whose solution is
/// `(1.5, 1.5, 1.5)`.
pub fn scalar_instance() -> SeparableInstance {
    let half_square =
        || ConvexFunctionSpec::quadratic(PsdOperator::identity(1), vec![0.0], 0.0).expect("valid");
    SeparableInstance::new(
        half_square(),
        half_square(),
        DenseMatrix::identity(1),
        DenseMatrix::identity(1),
        vec![3.0],
    )
    .expect("consistent dimensions")
}

fn normal_vec(rng: &mut ChaCha8Rng, len: usize) -> Vector {
    (0..len).map(|_| StandardNormal.sample(rng)).collect()
}

fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::new(rows, cols, normal_vec(rng, rows * cols)).expect("finite normal samples")
}

const RIDGE: f64 = 0.1;
const RANK_RESAMPLE_CAP: usize = 100;
/// Lower bound on the smallest eigenvalue of `[A B][A B]ᵀ` for generated QPs.
pub const FULL_ROW_RANK_TOL: f64 = 1e-6;

fn random_strictly_convex(rng: &mut ChaCha8Rng, dim: usize) -> Result<ConvexFunctionSpec> {
    let gm = normal_matrix(rng, dim, dim);
    let hess = gm
        .gram()
        .scaled(1.0 / dim as f64)
        .add(&DenseMatrix::identity(dim).scaled(RIDGE))?;
    let q = normal_vec(rng, dim);
    ConvexFunctionSpec::quadratic(PsdOperator::new(hess)?, q, 0.0)
}

/// Smallest eigenvalue of `W Wᵀ` for `W = [A B]`.
pub fn min_row_gram_eigenvalue(a: &DenseMatrix, b: &DenseMatrix) -> Result<f64> {
    let w = a.hstack(b)?;
    let eig = SymmetricEigen::new(&w.transpose().gram())?;
    Ok(eig.values.iter().copied().fold(f64::INFINITY, f64::min))
}

/// Random strictly convex QP with `[A B]` of full row rank and a stored
/// ground-truth solution. Deterministic in `seed`.
pub fn generate_qp(seed: u64, n: usize, p: usize, m: usize) -> Result<SeparableInstance> {
    if n == 0 || p == 0 || m == 0 {
        return Err(Error::Config("n, p, m must be positive".into()));
    }
    if m > n + p {
        return Err(Error::Config(format!("need m <= n + p, got m = {m}, n + p = {}", n + p)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = random_strictly_convex(&mut rng, n)?;
    let g = random_strictly_convex(&mut rng, p)?;
    let mut blocks = None;
    for _ in 0..RANK_RESAMPLE_CAP {
        let a = normal_matrix(&mut rng, m, n);
        let b = normal_matrix(&mut rng, m, p);
        if min_row_gram_eigenvalue(&a, &b)? > FULL_ROW_RANK_TOL {
            blocks = Some((a, b));
            break;
        }
    }
    let (a, b_mat) = blocks.ok_or_else(|| Error::IterationCap {
        context: "full-row-rank resampling".into(),
        cap: RANK_RESAMPLE_CAP,
    })?;
    let xbar = normal_vec(&mut rng, n);
    let ybar = normal_vec(&mut rng, p);
    let mut rhs = a.matvec(&xbar);
    linalg::axpy(&mut rhs, 1.0, &b_mat.matvec(&ybar));
    let inst = SeparableInstance::new(f, g, a, b_mat, rhs)?;
    let z = solve_ground_truth(&inst)?;
    inst.with_solution(z)
}

/// Lasso `½‖Cx − d‖² + μ‖y‖₁` in consensus form `x − y = 0`.
pub fn generate_lasso(seed: u64, n: usize, m_data: usize, mu: f64) -> Result<SeparableInstance> {
    if n == 0 || m_data == 0 {
        return Err(Error::Config("n and m_data must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = normal_matrix(&mut rng, m_data, n).scaled(1.0 / (m_data as f64).sqrt());
    let d = normal_vec(&mut rng, m_data);
    let hess = PsdOperator::new(c.gram())?;
    let q = linalg::scale(&c.tmatvec(&d), -1.0);
    let f = ConvexFunctionSpec::quadratic(hess, q, 0.5 * linalg::dot(&d, &d))?;
    let g = ConvexFunctionSpec::l1(n, mu)?;
    let inst = SeparableInstance::new(
        f,
        g,
        DenseMatrix::identity(n),
        DenseMatrix::identity(n).scaled(-1.0),
        vec![0.0; n],
    )?;
    let z = solve_ground_truth(&inst)?;
    inst.with_solution(z)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceFile {
    n: usize,
    p: usize,
    m: usize,
    #[serde(rename = "A")]
    a: Vec<f64>,
    #[serde(rename = "B")]
    b_mat: Vec<f64>,
    b: Vec<f64>,
    f: ConvexFunctionSpec,
    g: ConvexFunctionSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    solution: Option<KktPoint>,
}

fn parse_err(path: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_string(),
        message: message.into(),
    }
}

fn expect_len(path: &str, expected: usize, got: usize, what: &str) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(parse_err(path, format!("expected {expected} entries ({what}), got {got}")))
    }
}

impl TryFrom<InstanceFile> for SeparableInstance {
    type Error = Error;

    fn try_from(file: InstanceFile) -> Result<Self> {
        let InstanceFile {
            n,
            p,
            m,
            a,
            b_mat,
            b,
            f,
            g,
            solution,
        } = file;
        if n == 0 || p == 0 || m == 0 {
            return Err(parse_err("n/p/m", "dimensions must be positive"));
        }
        expect_len("A", m * n, a.len(), "m*n")?;
        expect_len("B", m * p, b_mat.len(), "m*p")?;
        expect_len("b", m, b.len(), "m")?;
        expect_len("f", n, f.dim(), "function dimension n")?;
        expect_len("g", p, g.dim(), "function dimension p")?;
        let a = DenseMatrix::new(m, n, a).map_err(|e| parse_err("A", e.to_string()))?;
        let b_mat = DenseMatrix::new(m, p, b_mat).map_err(|e| parse_err("B", e.to_string()))?;
        let inst = SeparableInstance::new(f, g, a, b_mat, b).map_err(|e| parse_err("b", e.to_string()))?;
        match solution {
            Some(z) => {
                expect_len("solution.x", n, z.x.len(), "n")?;
                expect_len("solution.y", p, z.y.len(), "p")?;
                expect_len("solution.gamma", m, z.gamma.len(), "m")?;
                inst.with_solution(z).map_err(|e| parse_err("solution", e.to_string()))
            }
            None => Ok(inst),
        }
    }
}

impl From<&SeparableInstance> for InstanceFile {
    fn from(inst: &SeparableInstance) -> Self {
        Self {
            n: inst.n(),
            p: inst.p(),
            m: inst.m(),
            a: inst.a.data().to_vec(),
            b_mat: inst.b_mat.data().to_vec(),
            b: inst.rhs.clone(),
            f: inst.f.clone(),
            g: inst.g.clone(),
            solution: inst.solution.clone(),
        }
    }
}

pub fn instance_from_json(text: &str) -> Result<SeparableInstance> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: InstanceFile = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        parse_err(&path, e.into_inner().to_string())
    })?;
    SeparableInstance::try_from(file)
}

pub fn instance_to_json(inst: &SeparableInstance) -> String {
    serde_json::to_string_pretty(&InstanceFile::from(inst)).expect("instance serializes")
}

pub fn load_instance(path: impl AsRef<Path>) -> Result<SeparableInstance> {
    instance_from_json(&fs::read_to_string(path)?)
}

pub fn save_instance(inst: &SeparableInstance, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, instance_to_json(inst))?;
    Ok(())
}
