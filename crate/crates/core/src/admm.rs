//! The generalized ADMM iteration: proximal subproblems, relaxed multiplier
//! update, and the recorded trajectory.
//!
//! ```text
//! x_k = argmin f(x) − ⟨γ, Ax⟩ + β/2‖Ax + By_{k−1} − b‖² + ½‖x − x_{k−1}‖²_{H1}
//! y_k = argmin g(y) − ⟨γ, By⟩ + β/2‖α(Ax_k + By_{k−1} − b) + B(y − y_{k−1})‖² + ½‖y − y_{k−1}‖²_{H2}
//! γ_k = γ_{k−1} − β[α(Ax_k + By_{k−1} − b) + B(y_k − y_{k−1})]
//! ```

use std::fmt::Write as _;

use crate::convex::{soft_threshold, ConvexFunctionSpec};
use crate::error::{check_dim, Error, Result};
use crate::hpe::OperatorM;
use crate::linalg::{self, Cholesky, DenseMatrix, PsdOperator, Vector};
use crate::problem::{kkt_gap, KktPoint, SeparableInstance};

/// Safety factor for automatically chosen linearization constants.
pub const AUTO_TAU_FACTOR: f64 = 1.01;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Tau {
    Auto,
    Value(f64),
}

/// Choice of the proximal matrix `H` for one block.
#[derive(Clone, Debug, PartialEq)]
pub enum ProximalMode {
    Zero,
    Explicit(DenseMatrix),
    /// `H = τI − βMᵀM` for the block's constraint matrix `M`.
    Linearized(Tau),
}

#[derive(Clone, Debug)]
pub struct GadmmParams {
    pub beta: f64,
    pub alpha: f64,
    pub h1: ProximalMode,
    pub h2: ProximalMode,
    pub max_iter: usize,
    pub stop_tol: f64,
    /// Starting point; zeros when absent.
    pub initial: Option<KktPoint>,
}

impl GadmmParams {
    pub fn new(beta: f64, alpha: f64) -> Self {
        Self {
            beta,
            alpha,
            h1: ProximalMode::Zero,
            h2: ProximalMode::Zero,
            max_iter: 1000,
            stop_tol: 1e-10,
            initial: None,
        }
    }

    pub fn with_modes(mut self, h1: ProximalMode, h2: ProximalMode) -> Self {
        self.h1 = h1;
        self.h2 = h2;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_stop_tol(mut self, stop_tol: f64) -> Self {
        self.stop_tol = stop_tol;
        self
    }

    pub fn with_initial(mut self, z0: KktPoint) -> Self {
        self.initial = Some(z0);
        self
    }

    /// Validates ranges and turns every proximal mode into an explicit PSD
    /// matrix.
    pub fn resolve(&self, inst: &SeparableInstance) -> Result<ResolvedParams> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.alpha > 0.0 && self.alpha <= 2.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 2], got {}", self.alpha)));
        }
        if !(self.stop_tol >= 0.0 && self.stop_tol.is_finite()) {
            return Err(Error::Config(format!(
                "stop_tol must be nonnegative, got {}",
                self.stop_tol
            )));
        }
        let (h1, x_rule) = resolve_block("h1", &self.h1, inst.a(), self.beta)?;
        let (h2, y_rule) = resolve_block("h2", &self.h2, inst.b_mat(), self.beta)?;
        let initial = match &self.initial {
            Some(z) => {
                inst.check_point(z)?;
                z.clone()
            }
            None => KktPoint::zeros(inst.n(), inst.p(), inst.m()),
        };
        Ok(ResolvedParams {
            beta: self.beta,
            alpha: self.alpha,
            h1,
            h2,
            x_rule,
            y_rule,
            max_iter: self.max_iter,
            stop_tol: self.stop_tol,
            initial,
        })
    }
}

fn resolve_block(
    name: &str,
    mode: &ProximalMode,
    constraint: &DenseMatrix,
    beta: f64,
) -> Result<(PsdOperator, BlockRule)> {
    let dim = constraint.cols();
    match mode {
        ProximalMode::Zero => Ok((PsdOperator::zeros(dim), BlockRule::Exact)),
        ProximalMode::Explicit(h) => {
            if h.rows() != dim || h.cols() != dim {
                return Err(Error::Config(format!(
                    "{name} must be {dim}x{dim}, got {}x{}",
                    h.rows(),
                    h.cols()
                )));
            }
            let op = PsdOperator::new(h.clone())
                .map_err(|e| Error::Config(format!("{name}: {e}")))?;
            Ok((op, BlockRule::Exact))
        }
        ProximalMode::Linearized(tau) => {
            let norm_sq = linalg::spectral_norm_sq(constraint)?;
            let floor = beta * norm_sq;
            let tau = match *tau {
                Tau::Auto if floor > 0.0 => AUTO_TAU_FACTOR * floor,
                Tau::Auto => beta,
                Tau::Value(t) => {
                    if !(t > 0.0 && t.is_finite() && t >= floor * (1.0 - 1e-12)) {
                        return Err(Error::Config(format!(
                            "{name}: linearization constant {t} below beta*||M||^2 = {floor}"
                        )));
                    }
                    t
                }
            };
            let h = DenseMatrix::identity(dim)
                .scaled(tau)
                .add(&constraint.gram().scaled(-beta))?;
            let op = PsdOperator::new(h).map_err(|e| Error::Config(format!("{name}: {e}")))?;
            Ok((op, BlockRule::Linearized { tau }))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BlockRule {
    /// Solve the subproblem with the explicit `H` via a linear system.
    Exact,
    /// Solve via `prox(·, 1/τ, ·)`; `H = τI − βMᵀM`.
    Linearized { tau: f64 },
}

#[derive(Clone, Debug)]
pub struct ResolvedParams {
    pub beta: f64,
    pub alpha: f64,
    pub h1: PsdOperator,
    pub h2: PsdOperator,
    pub x_rule: BlockRule,
    pub y_rule: BlockRule,
    pub max_iter: usize,
    pub stop_tol: f64,
    pub initial: KktPoint,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Deltas {
    pub dx: Vector,
    pub dy: Vector,
    pub dgamma: Vector,
}

impl Deltas {
    pub fn stacked(&self) -> Vector {
        linalg::stack(&[&self.dx, &self.dy, &self.dgamma])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterateState {
    pub k: usize,
    pub x: Vector,
    pub y: Vector,
    pub gamma: Vector,
    /// `γ̃_k = γ_{k−1} − β(Ax_k + By_{k−1} − b)`; absent at `k = 0`.
    pub gamma_tilde: Option<Vector>,
    pub deltas: Option<Deltas>,
    /// `‖Δz_k‖_M`; absent at `k = 0`.
    pub dz_norm_m: Option<f64>,
    /// KKT gap at `(x_k, y_k, γ̃_k)` (at `z_0` for `k = 0`).
    pub kkt_gap: f64,
}

impl IterateState {
    pub fn z(&self) -> KktPoint {
        KktPoint {
            x: self.x.clone(),
            y: self.y.clone(),
            gamma: self.gamma.clone(),
        }
    }

    pub fn z_stacked(&self) -> Vector {
        linalg::stack(&[&self.x, &self.y, &self.gamma])
    }

    /// `z̃_k = (x_k, y_k, γ̃_k)`.
    pub fn z_tilde_stacked(&self) -> Option<Vector> {
        self.gamma_tilde
            .as_ref()
            .map(|gt| linalg::stack(&[&self.x, &self.y, gt]))
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub params: ResolvedParams,
    states: Vec<IterateState>,
    converged: bool,
}

impl Trajectory {
    pub fn states(&self) -> &[IterateState] {
        &self.states
    }

    pub fn state(&self, k: usize) -> &IterateState {
        &self.states[k]
    }

    pub fn last(&self) -> &IterateState {
        self.states.last().expect("trajectory always holds z0")
    }

    /// Index of the final iterate.
    pub fn iterations(&self) -> usize {
        self.states.len() - 1
    }

    /// Whether the stopping rule fired before `max_iter`.
    pub fn converged(&self) -> bool {
        self.converged
    }

    /// Trajectory export: `k, x…, y…, gamma…, gamma_tilde…, dxM, kkt_gap`.
    pub fn to_csv(&self) -> String {
        let s0 = &self.states[0];
        let (n, p, m) = (s0.x.len(), s0.y.len(), s0.gamma.len());
        let mut out = String::new();
        let mut header = vec!["k".to_string()];
        header.extend((0..n).map(|i| format!("x{i}")));
        header.extend((0..p).map(|i| format!("y{i}")));
        header.extend((0..m).map(|i| format!("gamma{i}")));
        header.extend((0..m).map(|i| format!("gamma_tilde{i}")));
        header.push("dxM".into());
        header.push("kkt_gap".into());
        out.push_str(&header.join(","));
        out.push('\n');
        for s in &self.states {
            let mut row = vec![s.k.to_string()];
            row.extend(s.x.iter().chain(&s.y).chain(&s.gamma).map(|v| fmt_real(*v)));
            match &s.gamma_tilde {
                Some(gt) => row.extend(gt.iter().map(|v| fmt_real(*v))),
                None => row.extend(std::iter::repeat_n(String::new(), m)),
            }
            row.push(s.dz_norm_m.map(fmt_real).unwrap_or_default());
            row.push(fmt_real(s.kkt_gap));
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }

    /// Rebuilds a trajectory from its CSV export. Differences are recomputed
    /// from the iterates; nothing is re-solved.
    pub fn from_csv(text: &str, inst: &SeparableInstance, params: ResolvedParams) -> Result<Self> {
        let (n, p, m) = (inst.n(), inst.p(), inst.m());
        let width = 1 + n + p + 2 * m + 2;
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| parse_csv(0, "empty trajectory file"))?;
        check_dim("trajectory columns", width, header.split(',').count())?;
        let mut states: Vec<IterateState> = Vec::new();
        for (row_idx, line) in lines.enumerate() {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != width {
                return Err(parse_csv(row_idx + 1, "wrong number of columns"));
            }
            let k: usize = cells[0]
                .trim()
                .parse()
                .map_err(|_| parse_csv(row_idx + 1, "bad k"))?;
            if k != row_idx {
                return Err(parse_csv(row_idx + 1, "iteration indices must be contiguous from 0"));
            }
            let num = |c: &str| -> Result<f64> {
                let v: f64 = c.trim().parse().map_err(|_| parse_csv(row_idx + 1, "bad number"))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(parse_csv(row_idx + 1, "non-finite number"))
                }
            };
            let vec_of = |range: std::ops::Range<usize>| -> Result<Vector> {
                cells[range].iter().map(|c| num(c)).collect()
            };
            let x = vec_of(1..1 + n)?;
            let y = vec_of(1 + n..1 + n + p)?;
            let gamma = vec_of(1 + n + p..1 + n + p + m)?;
            let gt_cells = &cells[1 + n + p + m..1 + n + p + 2 * m];
            let (gamma_tilde, deltas) = if k == 0 {
                (None, None)
            } else {
                let gt = gt_cells.iter().map(|c| num(c)).collect::<Result<Vector>>()?;
                let prev = &states[k - 1];
                let d = Deltas {
                    dx: linalg::sub(&x, &prev.x),
                    dy: linalg::sub(&y, &prev.y),
                    dgamma: linalg::sub(&gamma, &prev.gamma),
                };
                (Some(gt), Some(d))
            };
            let dz_cell = cells[width - 2].trim();
            let dz_norm_m = if dz_cell.is_empty() { None } else { Some(num(dz_cell)?) };
            let kkt = num(cells[width - 1])?;
            states.push(IterateState {
                k,
                x,
                y,
                gamma,
                gamma_tilde,
                deltas,
                dz_norm_m,
                kkt_gap: kkt,
            });
        }
        if states.is_empty() {
            return Err(parse_csv(1, "trajectory has no iterates"));
        }
        let last = states.last().expect("nonempty");
        let converged = last.k < params.max_iter
            && last.dz_norm_m.is_some_and(|d| d.max(last.kkt_gap) <= params.stop_tol);
        Ok(Self {
            params,
            states,
            converged,
        })
    }
}

fn parse_csv(row: usize, msg: &str) -> Error {
    Error::Parse {
        path: format!("trajectory row {row}"),
        message: msg.to_string(),
    }
}

/// 17 significant digits.
pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

enum SubSolver {
    /// `(P + βMᵀM + H) u = rhs`
    Exact { chol: Cholesky, q: Vector },
    Prox { tau: f64, prox: ProxKind },
}

enum ProxKind {
    /// Factor of `P/τ + I` and the linear term.
    Quadratic { chol: Cholesky, q: Vector },
    L1 { mu: f64 },
    Zero,
}

fn build_subsolver(
    block: &str,
    func: &ConvexFunctionSpec,
    constraint: &DenseMatrix,
    h: &PsdOperator,
    rule: BlockRule,
    beta: f64,
) -> Result<SubSolver> {
    let dim = constraint.cols();
    match rule {
        BlockRule::Exact => {
            let (hess, q) = match func {
                ConvexFunctionSpec::Quadratic(qf) => {
                    (qf.hessian().matrix().clone(), qf.linear().to_vec())
                }
                ConvexFunctionSpec::Zero { .. } => (DenseMatrix::zeros(dim, dim), vec![0.0; dim]),
                ConvexFunctionSpec::L1 { .. } => {
                    return Err(Error::Config(format!(
                        "{block}-subproblem: l1 block needs linearized mode"
                    )))
                }
            };
            let k = hess
                .add(&constraint.gram().scaled(beta))?
                .add(h.matrix())?;
            let chol = Cholesky::factor(&k).map_err(|e| {
                Error::NotPositiveDefinite(format!("{block}-subproblem: {e}"))
            })?;
            Ok(SubSolver::Exact { chol, q })
        }
        BlockRule::Linearized { tau } => {
            let prox = match func {
                ConvexFunctionSpec::Quadratic(qf) => {
                    let k = qf
                        .hessian()
                        .matrix()
                        .scaled(1.0 / tau)
                        .add(&DenseMatrix::identity(dim))?;
                    ProxKind::Quadratic {
                        chol: Cholesky::factor(&k)?,
                        q: qf.linear().to_vec(),
                    }
                }
                ConvexFunctionSpec::L1 { mu, .. } => ProxKind::L1 { mu: *mu },
                ConvexFunctionSpec::Zero { .. } => ProxKind::Zero,
            };
            Ok(SubSolver::Prox { tau, prox })
        }
    }
}

impl SubSolver {
    /// Exact rule: solve with `rhs`. Prox rule: `prox(·, 1/τ, point)`.
    fn prox_point(&self, point: &[f64]) -> Vector {
        match self {
            SubSolver::Prox { tau, prox } => match prox {
                ProxKind::Quadratic { chol, q } => {
                    let rhs: Vector = point.iter().zip(q).map(|(v, qi)| v - qi / tau).collect();
                    chol.solve(&rhs)
                }
                ProxKind::L1 { mu } => soft_threshold(point, mu / tau),
                ProxKind::Zero => point.to_vec(),
            },
            SubSolver::Exact { .. } => unreachable!("prox_point on exact solver"),
        }
    }
}

/// A prepared G-ADMM instance: parameters resolved, subproblem systems
/// factored once.
pub struct Gadmm<'a> {
    inst: &'a SeparableInstance,
    params: ResolvedParams,
    x_solver: SubSolver,
    y_solver: SubSolver,
    metric: OperatorM,
}

impl<'a> Gadmm<'a> {
    pub fn new(inst: &'a SeparableInstance, params: &GadmmParams) -> Result<Self> {
        Self::from_resolved(inst, params.resolve(inst)?)
    }

    pub fn from_resolved(inst: &'a SeparableInstance, params: ResolvedParams) -> Result<Self> {
        let x_solver = build_subsolver("x", inst.f(), inst.a(), &params.h1, params.x_rule, params.beta)?;
        let y_solver = build_subsolver("y", inst.g(), inst.b_mat(), &params.h2, params.y_rule, params.beta)?;
        let metric = OperatorM::build(inst, &params)?;
        Ok(Self {
            inst,
            params,
            x_solver,
            y_solver,
            metric,
        })
    }

    pub fn params(&self) -> &ResolvedParams {
        &self.params
    }

    pub fn metric(&self) -> &OperatorM {
        &self.metric
    }

    pub fn solve_x(&self, x_prev: &[f64], y_prev: &[f64], gamma_prev: &[f64]) -> Vector {
        let inst = self.inst;
        let beta = self.params.beta;
        let a = inst.a();
        match &self.x_solver {
            SubSolver::Exact { chol, q } => {
                // Aᵀγ − q − βAᵀ(By − b) + H1 x_prev
                let mut s = inst.b_mat().matvec(y_prev);
                linalg::axpy(&mut s, -1.0, inst.rhs());
                let mut w = gamma_prev.to_vec();
                linalg::axpy(&mut w, -beta, &s);
                let mut rhs = a.tmatvec(&w);
                linalg::axpy(&mut rhs, -1.0, q);
                linalg::axpy(&mut rhs, 1.0, &self.params.h1.apply(x_prev));
                chol.solve(&rhs)
            }
            SubSolver::Prox { tau, .. } => {
                // x_prev − (1/τ)Aᵀ(β(Ax_prev + By_prev − b) − γ)
                let mut w = inst.constraint_residual(x_prev, y_prev);
                w.iter_mut().zip(gamma_prev).for_each(|(wi, gi)| *wi = beta * *wi - gi);
                let mut point = x_prev.to_vec();
                linalg::axpy(&mut point, -1.0 / tau, &a.tmatvec(&w));
                self.x_solver.prox_point(&point)
            }
        }
    }

    pub fn solve_y(&self, x_new: &[f64], y_prev: &[f64], gamma_prev: &[f64]) -> Vector {
        let inst = self.inst;
        let (beta, alpha) = (self.params.beta, self.params.alpha);
        let bm = inst.b_mat();
        let r = inst.constraint_residual(x_new, y_prev);
        match &self.y_solver {
            SubSolver::Exact { chol, q } => {
                // Bᵀγ − q − βBᵀ(α r − B y_prev) + H2 y_prev
                let by = bm.matvec(y_prev);
                let mut w = gamma_prev.to_vec();
                for i in 0..w.len() {
                    w[i] -= beta * (alpha * r[i] - by[i]);
                }
                let mut rhs = bm.tmatvec(&w);
                linalg::axpy(&mut rhs, -1.0, q);
                linalg::axpy(&mut rhs, 1.0, &self.params.h2.apply(y_prev));
                chol.solve(&rhs)
            }
            SubSolver::Prox { tau, .. } => {
                // y_prev + (1/τ)Bᵀ(γ − αβ r)
                let mut w = gamma_prev.to_vec();
                linalg::axpy(&mut w, -alpha * beta, &r);
                let mut point = y_prev.to_vec();
                linalg::axpy(&mut point, 1.0 / tau, &bm.tmatvec(&w));
                self.y_solver.prox_point(&point)
            }
        }
    }

    fn initial_state(&self) -> Result<IterateState> {
        let z0 = &self.params.initial;
        Ok(IterateState {
            k: 0,
            x: z0.x.clone(),
            y: z0.y.clone(),
            gamma: z0.gamma.clone(),
            gamma_tilde: None,
            deltas: None,
            dz_norm_m: None,
            kkt_gap: kkt_gap(self.inst, z0)?,
        })
    }

    /// One G-ADMM iteration from `prev`.
    pub fn step(&self, prev: &IterateState) -> Result<IterateState> {
        let inst = self.inst;
        let (beta, alpha) = (self.params.beta, self.params.alpha);
        let x = self.solve_x(&prev.x, &prev.y, &prev.gamma);
        let y = self.solve_y(&x, &prev.y, &prev.gamma);
        linalg::ensure_finite("iterate", &x)?;
        linalg::ensure_finite("iterate", &y)?;
        let r = inst.constraint_residual(&x, &prev.y);
        let dy = linalg::sub(&y, &prev.y);
        let bdy = inst.b_mat().matvec(&dy);
        let gamma: Vector = (0..r.len())
            .map(|i| prev.gamma[i] - beta * (alpha * r[i] + bdy[i]))
            .collect();
        let gamma_tilde: Vector = (0..r.len()).map(|i| prev.gamma[i] - beta * r[i]).collect();
        let deltas = Deltas {
            dx: linalg::sub(&x, &prev.x),
            dy,
            dgamma: linalg::sub(&gamma, &prev.gamma),
        };
        let dz_norm_m = self.metric.norm_sq(&deltas.stacked()).max(0.0).sqrt();
        let gap = kkt_gap(
            inst,
            &KktPoint {
                x: x.clone(),
                y: y.clone(),
                gamma: gamma_tilde.clone(),
            },
        )?;
        Ok(IterateState {
            k: prev.k + 1,
            x,
            y,
            gamma,
            gamma_tilde: Some(gamma_tilde),
            deltas: Some(deltas),
            dz_norm_m: Some(dz_norm_m),
            kkt_gap: gap,
        })
    }

    /// Iterates until `max_iter` or until `max(‖Δz_k‖_M, kkt_gap(x_k, y_k, γ̃_k)) ≤ stop_tol`.
    pub fn run(&self) -> Result<Trajectory> {
        let mut states = vec![self.initial_state()?];
        let mut converged = false;
        while states.len() <= self.params.max_iter {
            let next = self.step(states.last().expect("nonempty"))?;
            let done = next
                .dz_norm_m
                .is_some_and(|d| d.max(next.kkt_gap) <= self.params.stop_tol);
            states.push(next);
            if done {
                converged = true;
                break;
            }
        }
        Ok(Trajectory {
            params: self.params.clone(),
            states,
            converged,
        })
    }
}

/// Resolve, prepare and run in one call.
pub fn run(inst: &SeparableInstance, params: &GadmmParams) -> Result<Trajectory> {
    Gadmm::new(inst, params)?.run()
}
