//! Command-line front end. Exit codes: 0 success, 1 config or I/O error,
//! 2 solver error, 3 certification failure.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::admm::{fmt_real, Gadmm, GadmmParams, ProximalMode, Tau, Trajectory};
use crate::certificates::{KGrid, POINTWISE_BOUND};
use crate::checks::{CheckReport, CheckStatus};
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::problem::{
    generate_lasso, generate_qp, load_instance, save_instance, scalar_instance, solve_ground_truth,
    KktPoint, SeparableInstance,
};
use crate::verify::{verify, VerificationReport};

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_SOLVER: u8 = 2;
pub const EXIT_CERTIFICATION: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "gadmm", version, about = "Generalized ADMM solver and certificate verifier")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a random instance (with its solution) to DIR/instance.json.
    Generate(GenerateArgs),
    /// Run the solver; writes DIR/trajectory.csv and DIR/summary.json.
    Run(RunArgs),
    /// Certify a recorded trajectory; writes DIR/verification.json and DIR/bounds.csv.
    Verify(VerifyArgs),
    /// Sweep alpha at fixed beta; writes DIR/bench.csv.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum InstanceKind {
    Qp,
    Lasso,
    /// The 1-D instance `min ½x² + ½y²  s.t.  x + y = 3`.
    Scalar,
}

#[derive(Debug, Args)]
pub struct GeneratorArgs {
    #[arg(long, value_enum, default_value = "qp")]
    pub kind: InstanceKind,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 5)]
    pub n: usize,
    /// Ignored for lasso (p = n).
    #[arg(long, default_value_t = 5)]
    pub p: usize,
    /// Constraint rows for qp.
    #[arg(long, default_value_t = 3)]
    pub m: usize,
    /// Data rows for lasso.
    #[arg(long, default_value_t = 20)]
    pub m_data: usize,
    #[arg(long, default_value_t = 0.1)]
    pub mu: f64,
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    /// zero | linearized[:tau] | file:PATH
    #[arg(long, default_value = "zero")]
    pub h1: String,
    #[arg(long, default_value = "zero")]
    pub h2: String,
    #[arg(long, default_value_t = 1000)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-10)]
    pub stop_tol: f64,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub generator: GeneratorArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub instance: PathBuf,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub instance: PathBuf,
    /// Defaults to DIR/trajectory.csv.
    #[arg(long)]
    pub trajectory: Option<PathBuf>,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Check the ergodic bounds at every k instead of a doubling grid.
    #[arg(long)]
    pub verify_full: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Instance file; when absent one is generated from the generator flags.
    #[arg(long)]
    pub instance: Option<PathBuf>,
    #[command(flatten)]
    pub generator: GeneratorArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Comma-separated alpha values.
    #[arg(long)]
    pub alpha_grid: String,
    #[arg(long)]
    pub verify_full: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct RunSummary {
    pub iterations: usize,
    pub converged: bool,
    pub final_kkt_gap: f64,
    pub final_dz_m: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MatrixFile {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_)
        | Error::Parse { .. }
        | Error::Io(_)
        | Error::DimensionMismatch { .. } => EXIT_CONFIG,
        Error::Certification { .. } => EXIT_CERTIFICATION,
        _ => EXIT_SOLVER,
    }
}

/// Parses `zero`, `linearized`, `linearized:TAU` or `file:PATH`.
pub fn parse_mode(spec: &str) -> Result<ProximalMode> {
    let spec = spec.trim();
    if spec == "zero" {
        return Ok(ProximalMode::Zero);
    }
    if spec == "linearized" {
        return Ok(ProximalMode::Linearized(Tau::Auto));
    }
    if let Some(t) = spec.strip_prefix("linearized:") {
        let tau: f64 = t
            .parse()
            .map_err(|_| Error::Config(format!("bad linearization constant `{t}`")))?;
        return Ok(ProximalMode::Linearized(Tau::Value(tau)));
    }
    if let Some(path) = spec.strip_prefix("file:") {
        let text = fs::read_to_string(path)?;
        let mf: MatrixFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_string(),
            message: e.to_string(),
        })?;
        let h = DenseMatrix::new(mf.rows, mf.cols, mf.data)
            .map_err(|e| Error::Config(format!("{path}: {e}")))?;
        return Ok(ProximalMode::Explicit(h));
    }
    Err(Error::Config(format!(
        "proximal mode `{spec}` is not zero, linearized[:tau] or file:PATH"
    )))
}

pub fn parse_alpha_grid(text: &str) -> Result<Vec<f64>> {
    let grid: Vec<f64> = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| Error::Config(format!("bad alpha `{s}`"))))
        .collect::<Result<_>>()?;
    if grid.is_empty() {
        return Err(Error::Config("alpha grid is empty".into()));
    }
    Ok(grid)
}

impl SolverArgs {
    pub fn params(&self) -> Result<GadmmParams> {
        Ok(GadmmParams::new(self.beta, self.alpha)
            .with_modes(parse_mode(&self.h1)?, parse_mode(&self.h2)?)
            .with_max_iter(self.max_iter)
            .with_stop_tol(self.stop_tol))
    }
}

impl GeneratorArgs {
    pub fn generate(&self) -> Result<SeparableInstance> {
        match self.kind {
            InstanceKind::Qp => generate_qp(self.seed, self.n, self.p, self.m),
            InstanceKind::Lasso => generate_lasso(self.seed, self.n, self.m_data, self.mu),
            InstanceKind::Scalar => {
                let inst = scalar_instance();
                let z = solve_ground_truth(&inst)?;
                inst.with_solution(z)
            }
        }
    }
}

/// Writes via a temporary file and rename, so readers never see a partial file.
fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn reference_solution(inst: &SeparableInstance) -> Result<KktPoint> {
    match inst.solution() {
        Some(z) => Ok(z.clone()),
        None => solve_ground_truth(inst),
    }
}

pub fn summary(traj: &Trajectory) -> RunSummary {
    let last = traj.last();
    RunSummary {
        iterations: traj.iterations(),
        converged: traj.converged(),
        final_kkt_gap: last.kkt_gap,
        final_dz_m: last.dz_norm_m,
    }
}

pub fn cmd_generate(args: &GenerateArgs) -> Result<()> {
    let inst = args.generator.generate()?;
    fs::create_dir_all(&args.out)?;
    save_instance(&inst, args.out.join("instance.json"))
}

pub fn cmd_run(args: &RunArgs) -> Result<RunSummary> {
    let inst = load_instance(&args.instance)?;
    let params = args.solver.params()?;
    let resolved = params.resolve(&inst)?;
    let traj = Gadmm::from_resolved(&inst, resolved)?.run()?;
    fs::create_dir_all(&args.out)?;
    write_atomic(&args.out.join("trajectory.csv"), &traj.to_csv())?;
    let s = summary(&traj);
    let json = serde_json::to_string_pretty(&s).expect("summary serializes");
    write_atomic(&args.out.join("summary.json"), &json)?;
    Ok(s)
}

fn grid_of(full: bool) -> KGrid {
    if full {
        KGrid::Full
    } else {
        KGrid::Log
    }
}

/// Writes the report even when certification fails; the returned error then
/// names the first failing check.
pub fn cmd_verify(args: &VerifyArgs) -> Result<VerificationReport> {
    let inst = load_instance(&args.instance)?;
    let resolved = args.solver.params()?.resolve(&inst)?;
    let traj_path = args
        .trajectory
        .clone()
        .unwrap_or_else(|| args.out.join("trajectory.csv"));
    let text = fs::read_to_string(&traj_path)?;
    let traj = Trajectory::from_csv(&text, &inst, resolved)?;
    let z_star = reference_solution(&inst)?;
    let report = verify(&inst, &traj, &z_star, grid_of(args.verify_full))?;
    fs::create_dir_all(&args.out)?;
    write_atomic(&args.out.join("verification.json"), &report.to_json())?;
    write_atomic(
        &args.out.join("bounds.csv"),
        &crate::certificates::bounds_csv(&report.bounds),
    )?;
    report.ensure()?;
    Ok(report)
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchRow {
    pub alpha: f64,
    pub iterations: usize,
    pub converged: bool,
    pub final_kkt_gap: f64,
    pub pointwise_ratio: Option<f64>,
    pub ergodic_r_ratio: Option<f64>,
    pub ergodic_eps_ratio: Option<f64>,
    pub hpe: CheckStatus,
    pub pointwise: CheckStatus,
    pub ergodic: CheckStatus,
    pub rho: CheckStatus,
    pub fejer: CheckStatus,
}

fn combine(reports: &[&CheckReport]) -> CheckStatus {
    if reports.iter().any(|r| r.status == CheckStatus::Fail) {
        CheckStatus::Fail
    } else if !reports.is_empty() && reports.iter().all(|r| r.status == CheckStatus::NotApplicable) {
        CheckStatus::NotApplicable
    } else {
        CheckStatus::Pass
    }
}

fn status_of(report: &VerificationReport, pred: impl Fn(&str) -> bool) -> CheckStatus {
    let picked: Vec<&CheckReport> = report.checks.iter().filter(|c| pred(&c.name)).collect();
    combine(&picked)
}

fn ratio(lhs: f64, rhs: f64) -> Option<f64> {
    let r = lhs / rhs;
    r.is_finite().then_some(r)
}

fn bench_cell(inst: &SeparableInstance, z_star: &KktPoint, base: &SolverArgs, alpha: f64, grid: KGrid) -> Result<BenchRow> {
    let mut params = base.params()?;
    params.alpha = alpha;
    let traj = Gadmm::new(inst, &params)?.run()?;
    let report = verify(inst, &traj, z_star, grid)?;
    let last = report.bounds.last();
    let pw = report.check(POINTWISE_BOUND).map(|c| c.status);
    Ok(BenchRow {
        alpha,
        iterations: traj.iterations(),
        converged: traj.converged(),
        final_kkt_gap: traj.last().kkt_gap,
        pointwise_ratio: last.and_then(|b| Some(ratio(b.pointwise_lhs?, b.pointwise_rhs?)).flatten()),
        ergodic_r_ratio: last.and_then(|b| ratio(b.ergodic.r_norm, b.ergodic.r_bound)),
        ergodic_eps_ratio: last
            .and_then(|b| ratio(b.ergodic.eps_x + b.ergodic.eps_y, b.ergodic.eps_bound)),
        hpe: status_of(&report, |n| {
            matches!(
                n,
                "hpe_inequality"
                    | "inclusion_f"
                    | "inclusion_g"
                    | "inclusion_constraint"
                    | "multiplier_identity"
                    | "constraint_identity"
                    | "delta_y_lower_bound"
            )
        }),
        pointwise: match pw {
            Some(CheckStatus::NotApplicable) => CheckStatus::NotApplicable,
            _ => status_of(&report, |n| n.starts_with("pointwise_")),
        },
        ergodic: status_of(&report, |n| n.starts_with("ergodic_") || n == "epsilon_split_identity"),
        rho: status_of(&report, |n| n == "rho_bound"),
        fejer: status_of(&report, |n| n == "fejer_monotonicity"),
    })
}

fn status_str(s: CheckStatus) -> &'static str {
    match s {
        CheckStatus::Pass => "pass",
        CheckStatus::Fail => "fail",
        CheckStatus::NotApplicable => "not-applicable",
    }
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from(
        "alpha,iterations,converged,final_kkt_gap,pointwise_ratio,ergodic_r_ratio,ergodic_eps_ratio,hpe,pointwise,ergodic,rho,fejer\n",
    );
    let opt = |v: Option<f64>| v.map(fmt_real).unwrap_or_default();
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.alpha,
            r.iterations,
            r.converged,
            fmt_real(r.final_kkt_gap),
            opt(r.pointwise_ratio),
            opt(r.ergodic_r_ratio),
            opt(r.ergodic_eps_ratio),
            status_str(r.hpe),
            status_str(r.pointwise),
            status_str(r.ergodic),
            status_str(r.rho),
            status_str(r.fejer),
        ));
    }
    out
}

/// One row per alpha, in grid order. Cells run in parallel.
pub fn cmd_bench(args: &BenchArgs) -> Result<Vec<BenchRow>> {
    let grid = parse_alpha_grid(&args.alpha_grid)?;
    let inst = match &args.instance {
        Some(p) => load_instance(p)?,
        None => args.generator.generate()?,
    };
    let z_star = reference_solution(&inst)?;
    args.solver.params()?.resolve(&inst)?;
    let kgrid = grid_of(args.verify_full);
    let rows: Vec<BenchRow> = grid
        .par_iter()
        .map(|&a| bench_cell(&inst, &z_star, &args.solver, a, kgrid))
        .collect::<Result<_>>()?;
    fs::create_dir_all(&args.out)?;
    write_atomic(&args.out.join("bench.csv"), &bench_csv(&rows))?;
    if let Some(r) = rows.iter().find(|r| {
        [r.hpe, r.pointwise, r.ergodic, r.rho, r.fejer].contains(&CheckStatus::Fail)
    }) {
        return Err(Error::Certification {
            check: format!("bench cell alpha = {}", r.alpha),
            k: r.iterations,
        });
    }
    Ok(rows)
}

pub fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Run(a) => cmd_run(a).map(|_| ()),
        Command::Verify(a) => cmd_verify(a).map(|_| ()),
        Command::Bench(a) => cmd_bench(a).map(|_| ()),
    }
}

/// Parses `std::env::args`, runs, and returns the process exit code.
pub fn main_from_env() -> u8 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match dispatch(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
